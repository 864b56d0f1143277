"""
Experiment configuration, orchestration and result files.

An experiment runs the Ising magnetization of one lattice site through the
echo verification pipeline at every Trotter step 1..K. Each step is run for
several independent noise realizations (emulating circuit tiling on a
device); each (step, realization) job builds the echo circuit, reduces it to
the light cone, measures the ancilla tomogram on the noisy backend, trains
the Clifford regression when requested and evaluates every configured
estimator. Jobs are dispatched with dask and merged in (step, realization)
order, so the output depends only on the configuration and its seed.

Usage:

.. code-block:: python

    from evcdr.experiment import ExperimentConfig, run_experiment, emit_results

    config = ExperimentConfig.from_yaml("configs/ring6_exact.yaml")
    rows = run_experiment(config)
    emit_results(rows, "ring6.csv", "csv")
"""

# pylint: disable=C0103,R0902,R0913,R0914,R0912,R0915,W0718,C0301
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple
import copy
import logging
import math
import os
import warnings
import dask
import numpy as np
import pandas as pd
import yaml

from evcdr.cdr import ROUNDINGS, ExactBackend, SampledBackend, train
from evcdr.circuit import SINGLE_QUBIT_KINDS, TWO_QUBIT_KINDS
from evcdr.echo_verification import (
    ESTIMATOR_VARIANTS,
    EstimatorContext,
    PostselectionRule,
    build_ev_circuit,
    estimate,
    estimate_depolarization_rate,
    lightcone_reduce,
)
from evcdr.exceptions import ConfigError, NumericalError, PostselectionError
from evcdr.ising import (
    LATTICE_KINDS,
    IsingModel,
    TrotterPlan,
    build_lattice,
    exact_magnetization,
    trotter_circuit,
    trotter_magnetization,
)
from evcdr.pauli import PauliString
from evcdr.statevector import (
    MAX_DENSE_QUBITS,
    NUM_THREADS,
    NoiseModel,
    PauliChannel,
    depolarizing_channel,
    pauli_channel,
)
from evcdr.streams import child_seed, stream

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ["t", "variant", "estimate", "variance", "error", "p0", "purity", "realization"]
RESULT_FORMATS = ("csv", "json")
REFERENCES = ("trotter", "exact")

DEFAULTS: Dict[str, Any] = {
    "model": {"lattice": "ring", "size": 12, "j_coupling": 1.0, "h_field": 1.0},
    "plan": {"steps": 10, "tau": 0.1, "site": 0},
    "noise": {
        "p1": 0.0,
        "p2": 0.0,
        "gates": None,
        "readout": None,
        "global_depolarizing": 0.0,
        "inhomogeneity": 0.0,
    },
    "backend": {
        "mode": "sampled",
        "shots": 80000,
        "bases": ["X", "Z"],
        "shots_per_trajectory": 1,
        "batch_size": 256,
    },
    "postselection": {"neighborhood": "lattice", "max_hamming": 1},
    "cdr": {
        "L": 6,
        "training_circuits": 30,
        "training_shots": None,
        "weighting": "wls",
        "rounding": "nearest",
        "rounding_sigma": 0.5,
        "zero_z_intercept": False,
        "normalize_purity": False,
        "clip": True,
        "n_resamples": 200,
    },
    "estimators": ["standard", "z_bias_squared", "purity_normalized", "spectral_purified", "evcdr"],
    "reference": "trotter",
    "realizations": 1,
    "seed": 0,
}


def _merge(defaults: Dict[str, Any], given: Dict[str, Any], path: str) -> Dict[str, Any]:
    """Overlay given on defaults, rejecting keys the schema does not know."""
    if not isinstance(given, dict):
        raise ConfigError(f"Configuration section '{path or 'root'}' must be a mapping.")
    merged = copy.deepcopy(defaults)
    for key, value in given.items():
        dotted = f"{path}.{key}" if path else str(key)
        if key not in defaults:
            raise ConfigError(f"Unknown configuration key '{dotted}'.")
        if isinstance(defaults[key], dict):
            merged[key] = _merge(defaults[key], value, dotted)
        else:
            merged[key] = value
    return merged


def _number(value: Any, path: str, low: float = None, high: float = None, integer: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"Configuration key '{path}' must be a number, got {value!r}.")
    if integer and int(value) != value:
        raise ConfigError(f"Configuration key '{path}' must be an integer, got {value!r}.")
    if not math.isfinite(value):
        raise ConfigError(f"Configuration key '{path}' must be finite, got {value!r}.")
    if low is not None and value < low:
        raise ConfigError(f"Configuration key '{path}' must be >= {low}, got {value!r}.")
    if high is not None and value > high:
        raise ConfigError(f"Configuration key '{path}' must be <= {high}, got {value!r}.")
    return int(value) if integer else float(value)


def _choice(value: Any, path: str, options) -> Any:
    if value not in options:
        raise ConfigError(f"Configuration key '{path}' must be one of {list(options)}, got {value!r}.")
    return value


def _flag(value: Any, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"Configuration key '{path}' must be true or false, got {value!r}.")
    return value


def _channel(value: Any, path: str, n_qubits: int) -> PauliChannel:
    """A depolarizing rate or a mapping of Pauli literals to rates on n_qubits."""
    if isinstance(value, dict):
        for label, rate in value.items():
            if not isinstance(label, str) or len(label) != n_qubits or set(label) - set("IXYZ"):
                raise ConfigError(f"Configuration key '{path}' needs {n_qubits}-letter Pauli labels, got {label!r}.")
            _number(rate, f"{path}.{label}", 0, 1)
        try:
            return pauli_channel({label: float(rate) for label, rate in value.items()}, n_qubits)
        except ValueError as e:
            raise ConfigError(f"Configuration key '{path}': {e}") from e
    return depolarizing_channel(n_qubits, _number(value, path, 0, 1))


def _gate_channels(value: Any, path: str) -> Tuple[Tuple[str, PauliChannel], ...]:
    if value is None:
        return ()
    if not isinstance(value, dict):
        raise ConfigError(f"Configuration key '{path}' must map gate kinds to rates, got {value!r}.")
    channels = []
    for kind, spec in value.items():
        _choice(kind, path, SINGLE_QUBIT_KINDS + TWO_QUBIT_KINDS)
        channels.append((kind, _channel(spec, f"{path}.{kind}", 2 if kind in TWO_QUBIT_KINDS else 1)))
    return tuple(channels)


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Validated experiment configuration.

    Sections mirror the YAML document: model, plan, noise, backend,
    postselection, cdr, plus the estimator list, reference kind,
    realization count and seed. Every key has a default.
    """

    lattice: str = "ring"
    size: int = 12
    j_coupling: float = 1.0
    h_field: float = 1.0
    steps: int = 10
    tau: float = 0.1
    site: int = 0
    p1: float = 0.0
    p2: float = 0.0
    gate_channels: Tuple[Tuple[str, PauliChannel], ...] = ()
    readout_channel: Optional[PauliChannel] = None
    global_depolarizing: float = 0.0
    inhomogeneity: float = 0.0
    mode: str = "sampled"
    shots: int = 80000
    bases: Tuple[str, ...] = ("X", "Z")
    shots_per_trajectory: int = 1
    batch_size: int = 256
    neighborhood: Any = "lattice"
    max_hamming: int = 1
    cdr: Dict[str, Any] = field(default_factory=lambda: dict(DEFAULTS["cdr"]))
    estimators: Tuple[str, ...] = tuple(DEFAULTS["estimators"])
    reference: str = "trotter"
    realizations: int = 1
    seed: int = 0

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> "ExperimentConfig":
        """
        Validate a configuration mapping.

        Raises:
            ConfigError:  Naming the dotted key of the first invalid value.
        """
        c = _merge(DEFAULTS, document or {}, "")
        model, plan, noise, backend = c["model"], c["plan"], c["noise"], c["backend"]
        post, cdr = c["postselection"], c["cdr"]
        lattice = _choice(model["lattice"], "model.lattice", LATTICE_KINDS)
        size = _number(model["size"], "model.size", 1, integer=True)
        try:
            n_sites = build_lattice(lattice, size).n_nodes
        except ValueError as e:
            raise ConfigError(f"Configuration key 'model.size': {e}") from e
        bases = backend["bases"]
        if not isinstance(bases, list) or not bases:
            raise ConfigError("Configuration key 'backend.bases' must be a non-empty list.")
        for basis in bases:
            _choice(basis, "backend.bases", ("X", "Y", "Z"))
        estimators = c["estimators"]
        if not isinstance(estimators, list) or not estimators:
            raise ConfigError("Configuration key 'estimators' must be a non-empty list.")
        for variant in estimators:
            _choice(variant, "estimators", ESTIMATOR_VARIANTS)
        needed = {"Z"} if set(estimators) <= {"z_bias", "z_bias_squared"} else {"X", "Z"}
        if not needed <= set(bases):
            raise ConfigError(
                f"Configuration key 'backend.bases' must include {sorted(needed)} for the estimators {estimators}."
            )
        neighborhood = post["neighborhood"]
        if isinstance(neighborhood, list):
            for j, label in enumerate(neighborhood):
                _number(label, f"postselection.neighborhood[{j}]", 0, n_sites - 1, integer=True)
            neighborhood = tuple(int(label) for label in neighborhood)
        else:
            _choice(neighborhood, "postselection.neighborhood", ("lattice", "none"))
        mode = _choice(backend["mode"], "backend.mode", ("sampled", "exact"))
        realizations = _number(c["realizations"], "realizations", 1, integer=True)
        shots = _number(backend["shots"], "backend.shots", 1, integer=True)
        if mode == "sampled" and shots < len(bases) * realizations:
            raise ConfigError("Configuration key 'backend.shots' is too small to split over bases and realizations.")
        training_shots = cdr["training_shots"]
        if training_shots is not None:
            _number(training_shots, "cdr.training_shots", 1, integer=True)
        cdr_checked = {
            "L": _number(cdr["L"], "cdr.L", 0, integer=True),
            "training_circuits": _number(cdr["training_circuits"], "cdr.training_circuits", 2, integer=True),
            "training_shots": training_shots,
            "weighting": _choice(cdr["weighting"], "cdr.weighting", ("ols", "wls")),
            "rounding": _choice(cdr["rounding"], "cdr.rounding", ROUNDINGS),
            "rounding_sigma": _number(cdr["rounding_sigma"], "cdr.rounding_sigma", 1e-6),
            "zero_z_intercept": _flag(cdr["zero_z_intercept"], "cdr.zero_z_intercept"),
            "normalize_purity": _flag(cdr["normalize_purity"], "cdr.normalize_purity"),
            "clip": _flag(cdr["clip"], "cdr.clip"),
            "n_resamples": _number(cdr["n_resamples"], "cdr.n_resamples", 2, integer=True),
        }
        return cls(
            lattice=lattice,
            size=size,
            j_coupling=_number(model["j_coupling"], "model.j_coupling"),
            h_field=_number(model["h_field"], "model.h_field"),
            steps=_number(plan["steps"], "plan.steps", 1, integer=True),
            tau=_number(plan["tau"], "plan.tau"),
            site=_number(plan["site"], "plan.site", 0, n_sites - 1, integer=True),
            p1=_number(noise["p1"], "noise.p1", 0, 1),
            p2=_number(noise["p2"], "noise.p2", 0, 1),
            gate_channels=_gate_channels(noise["gates"], "noise.gates"),
            readout_channel=None if noise["readout"] is None else _channel(noise["readout"], "noise.readout", 1),
            global_depolarizing=_number(noise["global_depolarizing"], "noise.global_depolarizing", 0, 1),
            inhomogeneity=_number(noise["inhomogeneity"], "noise.inhomogeneity", 0, 1),
            mode=mode,
            shots=shots,
            bases=tuple(bases),
            shots_per_trajectory=_number(backend["shots_per_trajectory"], "backend.shots_per_trajectory", 1, integer=True),
            batch_size=_number(backend["batch_size"], "backend.batch_size", 1, integer=True),
            neighborhood=neighborhood,
            max_hamming=_number(post["max_hamming"], "postselection.max_hamming", 0, integer=True),
            cdr=cdr_checked,
            estimators=tuple(estimators),
            reference=_choice(c["reference"], "reference", REFERENCES),
            realizations=realizations,
            seed=_number(c["seed"], "seed", 0, integer=True),
        )

    @classmethod
    def from_yaml(cls, path: str) -> "ExperimentConfig":
        """Load and validate a YAML configuration file."""
        if not os.path.exists(path):
            raise ConfigError(f"Configuration file '{path}' does not exist.")
        with open(path, "r", encoding="utf-8") as fp:
            try:
                document = yaml.safe_load(fp)
            except yaml.YAMLError as e:
                raise ConfigError(f"Configuration file '{path}' is not valid YAML: {e}") from e
        return cls.from_dict(document or {})

    @property
    def shots_per_basis(self) -> int:
        """Shot budget per step split evenly over bases and realizations."""
        return max(1, self.shots // (len(self.bases) * self.realizations))

    def model(self) -> IsingModel:
        """The Ising model on the configured lattice."""
        return IsingModel(build_lattice(self.lattice, self.size), self.j_coupling, self.h_field)

    def rule(self, model: IsingModel) -> PostselectionRule:
        """Postselection rule; "lattice" forces the measured site and its neighbours to zero."""
        if self.neighborhood == "lattice":
            labels = (self.site,) + tuple(model.lattice.neighbors(self.site))
        elif self.neighborhood == "none":
            labels = ()
        else:
            labels = tuple(self.neighborhood)
        return PostselectionRule(tuple(sorted(labels)), self.max_hamming)


@dataclass(frozen=True)
class ResultRow:
    """One estimate of M(t) for a step, estimator variant and realization."""

    t: float
    step: int
    variant: str
    estimate: float
    variance: float
    exact: float
    p0: float
    purity: float
    realization: int
    flags: Tuple[str, ...] = field(default=())

    @property
    def error(self) -> float:
        """|estimate - exact|."""
        return abs(self.estimate - self.exact)


def _realization_noise(config: ExperimentConfig, step: int, realization: int, n_qubits: int) -> NoiseModel:
    factor = 1.0
    if config.inhomogeneity > 0:
        factor = 1.0 + config.inhomogeneity * float(stream(config.seed, 5, step, realization).uniform(-1, 1))
    channel = None
    if config.global_depolarizing > 0:
        channel = depolarizing_channel(n_qubits, config.global_depolarizing)
    return NoiseModel(config.p1, config.p2, channel, config.gate_channels, config.readout_channel).scaled(factor)


def reference_value(config: ExperimentConfig, model: IsingModel, step: int) -> float:
    """Noiseless Trotter value, or the continuous-time magnetization on the light cone of step."""
    if config.reference == "exact":
        return exact_magnetization(model, step * config.tau, config.site, steps=step)
    return trotter_magnetization(model, TrotterPlan(step, config.tau, config.site))


def _run_job(config: ExperimentConfig, step: int, realization: int, exact: float) -> List[ResultRow]:
    """Echo verification of one step under one noise realization."""
    model = config.model()
    t = step * config.tau
    u = trotter_circuit(model, TrotterPlan(step, config.tau, config.site))
    v = PauliString.single(model.lattice.n_nodes, config.site, "Z")
    ev = lightcone_reduce(build_ev_circuit(u, v))
    if ev.circuit.n_qubits > MAX_DENSE_QUBITS:
        raise NumericalError(
            f"Step {step} needs {ev.circuit.n_qubits} qubits after light-cone reduction."
        )
    noise = _realization_noise(config, step, realization, ev.circuit.n_qubits)
    rule = config.rule(model)
    if config.mode == "exact":
        backend = ExactBackend(noise, rule)
        training_backend = backend
    else:
        backend = SampledBackend(noise, config.shots_per_basis, rule, config.shots_per_trajectory)
        training_backend = SampledBackend(
            noise, config.cdr["training_shots"] or config.shots_per_basis, rule, config.shots_per_trajectory
        )
    job_seed = child_seed(config.seed, 6, step, realization)
    try:
        tomogram = backend(ev, job_seed)
    except PostselectionError as e:
        warnings.warn(f"Step {step} realization {realization} skipped: {e}")
        return [
            ResultRow(t, step, variant, math.nan, math.nan, exact, 0.0, math.nan, realization, ("postselection",))
            for variant in config.estimators
        ]
    context_args = {"n_resamples": config.cdr["n_resamples"], "seed": job_seed}
    if "depolarization_tolerant" in config.estimators:
        try:
            context_args["delta"] = estimate_depolarization_rate(tomogram, ev.dimension)
        except NumericalError:
            context_args["delta"] = None
        context_args["dimension"] = ev.dimension
    if "evcdr" in config.estimators:
        try:
            L = min(config.cdr["L"], len(ev.parameter_indices()))
            fit_x, fit_z, _ = train(
                ev,
                L,
                config.cdr["training_circuits"],
                training_backend,
                child_seed(config.seed, 7, step, realization),
                weighting=config.cdr["weighting"],
                zero_intercept=config.cdr["zero_z_intercept"],
                normalize_purity=config.cdr["normalize_purity"],
                n_resamples=config.cdr["n_resamples"],
                rounding=config.cdr["rounding"],
                sigma=config.cdr["rounding_sigma"],
            )
            context_args.update(
                fit_x=fit_x,
                fit_z=fit_z,
                clip=config.cdr["clip"],
                normalize_purity=config.cdr["normalize_purity"],
            )
        except NumericalError as e:
            logger.info("Step %d realization %d: regression failed (%s)", step, realization, e)
    context = EstimatorContext(**context_args)
    rows = []
    for variant in config.estimators:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                result = estimate(tomogram, variant, context)
            rows.append(
                ResultRow(t, step, variant, result.value, result.variance, exact, tomogram.p0_hat, tomogram.purity, realization, result.flags)
            )
        except (NumericalError, ValueError) as e:
            logger.info("Step %d realization %d: %s undefined (%s)", step, realization, variant, e)
            rows.append(
                ResultRow(t, step, variant, math.nan, math.nan, exact, tomogram.p0_hat, tomogram.purity, realization, ("undefined",))
            )
    logger.info("Finished step %d realization %d on %d qubits", step, realization, ev.circuit.n_qubits)
    return rows


def _collect(items):
    """Gather the results of the delayed jobs in submission order."""
    return list(items)


def run_experiment(config: ExperimentConfig) -> List[ResultRow]:
    """
    Run every (step, realization) job and return the merged result rows.

    Rows are ordered by step, then realization, then estimator as configured.
    """
    model = config.model()
    references = {step: reference_value(config, model, step) for step in range(1, config.steps + 1)}
    jobs = [
        dask.delayed(_run_job)(config, step, realization, references[step])
        for step in range(1, config.steps + 1)
        for realization in range(config.realizations)
    ]
    logger.info("Running %d jobs on %d threads", len(jobs), NUM_THREADS)
    results = dask.delayed(_collect)(jobs).compute(scheduler="threads", num_workers=max(NUM_THREADS, 1))
    return [row for rows in results for row in rows]


def oracle(config: ExperimentConfig) -> List[ResultRow]:
    """Reference-only rows: the noiseless Trotter value scored against the continuous-time magnetization."""
    model = config.model()
    rows = []
    for step in range(1, config.steps + 1):
        t = step * config.tau
        trotter = trotter_magnetization(model, TrotterPlan(step, config.tau, config.site))
        try:
            exact = exact_magnetization(model, t, config.site, steps=step)
        except ValueError:
            exact = math.nan
        rows.append(ResultRow(t, step, "trotter", trotter, 0.0, exact, 1.0, 1.0, 0))
    return rows


def results_frame(rows: List[ResultRow]) -> pd.DataFrame:
    """Tabular results with the fixed column order."""
    return pd.DataFrame(
        [
            {
                "t": row.t,
                "variant": row.variant,
                "estimate": row.estimate,
                "variance": row.variance,
                "error": row.error,
                "p0": row.p0,
                "purity": row.purity,
                "realization": row.realization,
            }
            for row in rows
        ],
        columns=RESULT_COLUMNS,
    )


def emit_results(rows: List[ResultRow], path: str, fmt: str = "csv"):
    """
    Write result rows as CSV or JSON records.

    Raises:
        ValueError:  If rows is empty or the format is unknown.
    """
    if fmt not in RESULT_FORMATS:
        raise ValueError(f"Unknown result format '{fmt}'. Use one of {RESULT_FORMATS}.")
    if not rows:
        raise ValueError("No result rows to write.")
    frame = results_frame(rows)
    directory = os.path.dirname(path)
    if directory and not os.path.exists(directory):
        os.makedirs(directory, exist_ok=True)
    if fmt == "csv":
        frame.to_csv(path, index=False, float_format="%.17g")
    else:
        frame.to_json(path, orient="records", double_precision=15)


def read_results(path: str, fmt: Optional[str] = None) -> pd.DataFrame:
    """Read a file written by emit_results (format from the extension by default)."""
    fmt = fmt or ("json" if path.endswith(".json") else "csv")
    if fmt == "csv":
        frame = pd.read_csv(path)
    elif fmt == "json":
        frame = pd.read_json(path, orient="records")
    else:
        raise ValueError(f"Unknown result format '{fmt}'. Use one of {RESULT_FORMATS}.")
    return frame[RESULT_COLUMNS]


def summarize(rows: List[ResultRow]) -> pd.DataFrame:
    """Mean estimate and error per (t, variant) over realizations."""
    frame = results_frame(rows)
    grouped = frame.groupby(["t", "variant"], sort=True)
    return grouped.agg(estimate=("estimate", "mean"), error=("error", "mean"), p0=("p0", "mean")).reset_index()


def median_errors(rows: List[ResultRow]) -> Dict[str, float]:
    """Median absolute error per estimator variant, ignoring undefined estimates."""
    frame = results_frame(rows)
    return {
        variant: float(np.nanmedian(group["error"])) for variant, group in frame.groupby("variant")
    }
