"""
Clifford data regression for echo verification.

Training circuits round every rotation of U to the nearest multiple of pi/2
(or to a nearby multiple drawn at random) except L randomly chosen "free"
rotations inside the light cone. Their ideal <V> comes from the near-Clifford
stabilizer simulator and their noisy ancilla expectations from the same
noisy pipeline as the target circuit. The noisy X and Z expectations are
then fitted against the noiseless ones,

    noisy_x = beta_x (1 - C^2)/(1 + C^2) + alpha_x
    noisy_z = beta_z 2C/(1 + C^2) + alpha_z,

and the evcdr estimator inverts both fits before applying the standard
echo verification formula.

Usage:

.. code-block:: python

    from evcdr.cdr import ExactBackend, sample_training_set, evaluate_training, fit

    specs = sample_training_set(ev, 6, 20, seed=1)
    data = [evaluate_training(ev, spec, ExactBackend(noise)) for spec in specs]
    fit_x, fit_z = fit(data, "X"), fit(data, "Z")
"""

# pylint: disable=C0103,R0902,R0913,R0914,C0301
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union
import logging
import math
import warnings
import numpy as np
import pandas as pd
import statsmodels.api as sm

from evcdr.echo_verification import (
    AncillaTomogram,
    EstimatorContext,
    EstimatorResult,
    EvCircuit,
    PostselectionRule,
    estimate,
    exact_tomogram,
    sampled_tomogram,
)
from evcdr.exceptions import NumericalError
from evcdr.stabilizer import BRANCH_BUDGET, expand_non_clifford, near_clifford_expectation
from evcdr.statevector import NoiseModel
from evcdr.streams import child_seed, stream

logger = logging.getLogger(__name__)

WEIGHTINGS = ("ols", "wls")
ROUNDINGS = ("nearest", "sampled")
STD_FLOOR = 1e-10
TIE_TOLERANCE = 1e-12
TRAINING_COLUMNS = [
    "free_indices",
    "ideal_value",
    "noisy_x",
    "noisy_z",
    "var_x",
    "var_z",
    "p0_hat",
    "bloch_norm",
]


def round_to_clifford(theta: float) -> float:
    """
    Nearest integer multiple of pi/2, ties rounded away from zero.

    Example:

    .. code-block:: python

        round_to_clifford(0.7 * math.pi)   # pi / 2
    """
    if not math.isfinite(theta):
        raise ValueError(f"Cannot round the non-finite angle {theta}.")
    ratio = theta * 2 / math.pi
    k = math.floor(abs(ratio) + 0.5 + TIE_TOLERANCE)
    return math.copysign(k, ratio) * math.pi / 2


@dataclass(frozen=True)
class TrainingCircuitSpec:
    """
    Base angles theta, the free (unrounded) parameter indices and the seed they came from.

    clifford_angles optionally fixes the replacement of rounded indices;
    indices missing from it are rounded to the nearest multiple of pi/2.
    """

    base_angles: Mapping[int, float]
    free_indices: Tuple[int, ...]
    seed: int = 0
    clifford_angles: Mapping[int, float] = field(default_factory=dict)

    @property
    def L(self) -> int:
        """Number of unrounded angles."""
        return len(self.free_indices)

    def angles(self) -> Dict[int, float]:
        """Training angles: free indices keep theta, every other angle is rounded."""
        free = set(self.free_indices)
        return {
            index: (theta if index in free else self.clifford_angles.get(index, round_to_clifford(theta)))
            for index, theta in self.base_angles.items()
        }


def sample_clifford_angle(theta: float, dimension: int, sigma: float, generator: np.random.Generator) -> float:
    """
    Draw a multiple of pi/2 near theta with probability exp(-d^2 / sigma^2).

    d is the Frobenius distance between the rotations exp(-i theta P / 2)
    and exp(-i phi P / 2) on a dimension x dimension Pauli generator P, so
    the nearest multiple is the most likely and larger sigma spreads the
    draws over the neighbouring multiples.
    """
    if sigma <= 0:
        raise ValueError(f"Replacement width sigma must be positive, got {sigma}.")
    nearest = round_to_clifford(theta) * 2 / math.pi
    candidates = (nearest + np.arange(-2, 3)) * math.pi / 2
    distance_sq = 4 * dimension * np.sin((theta - candidates) / 4) ** 2
    weights = np.exp(-distance_sq / sigma**2)
    return float(candidates[generator.choice(len(candidates), p=weights / weights.sum())])


def sample_training_set(base: EvCircuit, L: int, m_count: int, seed: int, budget: int = None, rounding: str = "nearest", sigma: float = 0.5) -> List[TrainingCircuitSpec]:
    """
    Draw m_count training specs with L free light-cone parameters each.

    Index subsets are drawn uniformly without replacement and duplicates
    are redrawn while distinct subsets remain. With rounding="sampled" every
    rounded angle is replaced by a multiple of pi/2 drawn with
    sample_clifford_angle instead of the nearest one, which spreads the
    ideal values of the training circuits when the angles of U are small.

    Args:
        base:       Light-cone reduced echo circuit; its parameters form the light-cone set.
        L:          Free rotations per training circuit.
        m_count:    Number of training circuits.
        seed:       Stream seed.
        budget:     Maximum L (default EVCDR_BRANCH_BUDGET).
        rounding:   "nearest" or "sampled".
        sigma:      Width of the sampled replacement distribution.
    Returns:
        A list of TrainingCircuitSpec.
    Raises:
        ValueError:  If L exceeds the parameter count or the budget, or rounding is unknown.
    """
    budget = BRANCH_BUDGET if budget is None else budget
    if rounding not in ROUNDINGS:
        raise ValueError(f"Unknown rounding '{rounding}'. Use one of {ROUNDINGS}.")
    angles = base.unitary.parameters()
    dimensions = {
        gate.param_index: 1 << len(gate.qubits)
        for gate in base.unitary.gates
        if gate.param_index is not None
    }
    indices = sorted(angles)
    if m_count < 1:
        raise ValueError(f"Number of training circuits must be positive, got {m_count}.")
    if L < 0 or L > len(indices):
        raise ValueError(f"Cannot free {L} of {len(indices)} light-cone parameters.")
    if L > budget:
        raise ValueError(f"L = {L} exceeds the branch budget of {budget}.")
    possible = math.comb(len(indices), L)
    if L > 0 and m_count > possible:
        warnings.warn(
            f"Only {possible} distinct training selections exist; {m_count} requested, duplicates kept."
        )
    generator = stream(seed, 3)
    seen = set()
    specs = []
    for m in range(m_count):
        for _ in range(100):
            chosen = tuple(sorted(int(i) for i in generator.choice(indices, size=L, replace=False)))
            if chosen not in seen or len(seen) >= possible:
                break
        seen.add(chosen)
        replacements = {}
        if rounding == "sampled":
            draws = stream(seed, 8, m)
            replacements = {
                index: sample_clifford_angle(angles[index], dimensions.get(index, 2), sigma, draws)
                for index in indices
                if index not in chosen
            }
        specs.append(TrainingCircuitSpec(dict(angles), chosen, child_seed(seed, 3, m), replacements))
    return specs


def training_circuit(base: EvCircuit, spec: TrainingCircuitSpec) -> EvCircuit:
    """The base echo circuit re-bound to the training angles."""
    return base.bind(spec.angles())


@dataclass(frozen=True)
class ExactBackend:
    """Noisy backend evaluated exactly on the density matrix."""

    noise: NoiseModel = field(default_factory=NoiseModel)
    rule: Optional[PostselectionRule] = None

    def __call__(self, ev: EvCircuit, seed: int = 0) -> AncillaTomogram:
        return exact_tomogram(ev, self.noise, self.rule)


@dataclass(frozen=True)
class SampledBackend:
    """Noisy backend sampled by Pauli trajectories."""

    noise: NoiseModel
    shots_per_basis: int
    rule: Optional[PostselectionRule] = None
    shots_per_trajectory: int = 1

    def __call__(self, ev: EvCircuit, seed: int = 0) -> AncillaTomogram:
        return sampled_tomogram(
            ev, self.noise, self.shots_per_basis, seed, self.rule, ("X", "Z"), self.shots_per_trajectory
        )


NoisyBackend = Callable[[EvCircuit, int], AncillaTomogram]


@dataclass(frozen=True)
class TrainingDatum:
    """Ideal <V> of a training circuit with its noisy ancilla expectations and variances."""

    ideal_value: float
    noisy_x: float
    noisy_z: float
    var_x: float = 0.0
    var_z: float = 0.0
    p0_hat: float = 1.0
    bloch_norm: float = 1.0
    free_indices: Tuple[int, ...] = field(default=())

    def abscissa(self, axis: str) -> float:
        """Noiseless ancilla expectation implied by the ideal value."""
        c = self.ideal_value
        if axis == "X":
            return (1 - c * c) / (1 + c * c)
        if axis == "Z":
            return 2 * c / (1 + c * c)
        raise ValueError(f"Unknown fit axis '{axis}'. Use X or Z.")

    def ordinate(self, axis: str, normalize_purity: bool = False) -> float:
        """Noisy ancilla expectation, optionally divided by the Bloch norm."""
        value = {"X": self.noisy_x, "Z": self.noisy_z}[axis]
        if normalize_purity and self.bloch_norm > 0:
            value /= self.bloch_norm
        return value

    def variance(self, axis: str) -> float:
        """Bootstrap variance of the ordinate."""
        return {"X": self.var_x, "Z": self.var_z}[axis]


def bootstrap_variance(records: Sequence[float], n_resamples: int, seed: int) -> float:
    """
    Variance of the mean of records estimated by multinomial resampling.

    Raises:
        ValueError:  If records is empty or n_resamples < 2.
    """
    values = np.asarray(records, dtype=float)
    if values.size == 0:
        raise ValueError("Cannot bootstrap an empty set of records.")
    if n_resamples < 2:
        raise ValueError(f"Bootstrap needs at least 2 resamples, got {n_resamples}.")
    outcomes, counts = np.unique(values, return_counts=True)
    generator = stream(seed, 4)
    resampled = generator.multinomial(values.size, counts / values.size, size=n_resamples)
    means = resampled @ outcomes / values.size
    return float(np.var(means, ddof=1))


def _tomogram_variance(t: AncillaTomogram, basis: str, n_resamples: int, seed: int) -> float:
    if t.exact or basis not in t.kept_counts:
        return 0.0
    kept = t.kept_counts[basis]
    plus = t.plus_counts[basis]
    outcomes = np.concatenate([np.ones(plus), -np.ones(kept - plus)])
    return bootstrap_variance(outcomes, n_resamples, seed)


def evaluate_training(base: EvCircuit, spec: TrainingCircuitSpec, noisy_backend: NoisyBackend, n_resamples: int = 200) -> TrainingDatum:
    """
    Ideal and noisy values of one training circuit.

    The ideal value comes from the near-Clifford branch expansion of U with
    the free rotations kept; the noisy values from noisy_backend run on the
    full training echo circuit.

    Raises:
        PostselectionError:  If the noisy backend keeps no shots.
    """
    training = training_circuit(base, spec)
    state = expand_non_clifford(training.unitary, spec.free_indices)
    ideal = near_clifford_expectation(state, training.observable)
    tomogram = noisy_backend(training, spec.seed)
    return TrainingDatum(
        ideal,
        tomogram.e_x,
        tomogram.e_z,
        _tomogram_variance(tomogram, "X", n_resamples, child_seed(spec.seed, 0)),
        _tomogram_variance(tomogram, "Z", n_resamples, child_seed(spec.seed, 2)),
        tomogram.p0_hat,
        tomogram.bloch_norm,
        spec.free_indices,
    )


@dataclass(frozen=True)
class RegressionFit:
    """Affine map noisy = slope * ideal + intercept fitted on one ancilla axis."""

    slope: float
    intercept: float
    weighting: str
    residual_sum: float
    axis: str = "Z"
    n_points: int = 0

    def __call__(self, x: float) -> float:
        return self.slope * x + self.intercept

    def inverse(self, y: float) -> float:
        """(y - intercept) / slope."""
        if abs(self.slope) <= 1e-15:
            raise NumericalError(f"Fit on axis {self.axis} has zero slope.")
        return (y - self.intercept) / self.slope


def fit(data: Sequence[TrainingDatum], axis: str, weighting: str = "wls", zero_intercept: bool = False, normalize_purity: bool = False) -> RegressionFit:
    """
    Least-squares fit of the noisy against the noiseless ancilla expectation.

    wls weights each point by 1 / variance with the standard deviation
    floored at 1e-10; ols uses unit weights.

    Args:
        data:               Training data.
        axis:               "X" or "Z".
        weighting:          "wls" or "ols".
        zero_intercept:     Fix the intercept at 0.
        normalize_purity:   Divide the noisy values by their Bloch norm first.
    Returns:
        A RegressionFit.
    Raises:
        ValueError:      If the weighting or axis is unknown.
        NumericalError:  If there are fewer than two distinct abscissae.
    """
    if weighting not in WEIGHTINGS:
        raise ValueError(f"Unknown weighting '{weighting}'. Use one of {WEIGHTINGS}.")
    if len(data) < 2:
        raise NumericalError(f"A fit needs at least 2 training points, got {len(data)}.")
    x = np.array([datum.abscissa(axis) for datum in data])
    y = np.array([datum.ordinate(axis, normalize_purity) for datum in data])
    if np.ptp(x) <= 1e-12 and not zero_intercept:
        raise NumericalError(f"Training abscissae on axis {axis} are all equal; the fit is rank deficient.")
    if zero_intercept and np.all(np.abs(x) <= 1e-12):
        raise NumericalError(f"Training abscissae on axis {axis} are all zero.")
    if weighting == "wls":
        deviations = np.sqrt(np.array([datum.variance(axis) for datum in data]))
        deviations[np.abs(deviations) < STD_FLOOR] = STD_FLOOR
        weights = 1 / np.square(deviations)
    else:
        weights = np.ones(len(data))
    exog = x[:, None] if zero_intercept else sm.add_constant(x, has_constant="add")
    if weighting == "wls":
        result = sm.WLS(endog=y, exog=exog, weights=weights).fit()
    else:
        result = sm.OLS(endog=y, exog=exog).fit()
    if zero_intercept:
        intercept, slope = 0.0, float(result.params[0])
    else:
        intercept, slope = (float(p) for p in result.params)
    residuals = y - (slope * x + intercept)
    residual_sum = float(np.sum(weights * residuals**2))
    logger.debug("Fitted %s axis: slope=%g intercept=%g", axis, slope, intercept)
    return RegressionFit(slope, intercept, weighting, residual_sum, axis, len(data))


def evcdr_estimate(tomogram: AncillaTomogram, fit_x: RegressionFit, fit_z: RegressionFit, clip: bool = False, normalize_purity: bool = False, n_resamples: int = 200, seed: int = 0) -> EstimatorResult:
    """
    Invert both fits on the measured expectations and apply the standard estimator.

    Raises:
        NumericalError:  If a slope is zero or the inverted X value is -1.
    """
    context = EstimatorContext(
        fit_x=fit_x,
        fit_z=fit_z,
        clip=clip,
        normalize_purity=normalize_purity,
        n_resamples=n_resamples,
        seed=seed,
    )
    return estimate(tomogram, "evcdr", context)


def train(base: EvCircuit, L: int, m_count: int, noisy_backend: NoisyBackend, seed: int, weighting: str = "wls", zero_intercept: bool = False, normalize_purity: bool = False, n_resamples: int = 200, rounding: str = "nearest", sigma: float = 0.5) -> Tuple[RegressionFit, RegressionFit, List[TrainingDatum]]:
    """Sample, evaluate and fit a training set; returns (fit_x, fit_z, data)."""
    specs = sample_training_set(base, L, m_count, seed, rounding=rounding, sigma=sigma)
    data = [evaluate_training(base, spec, noisy_backend, n_resamples) for spec in specs]
    fit_x = fit(data, "X", weighting, normalize_purity=normalize_purity)
    fit_z = fit(data, "Z", weighting, zero_intercept=zero_intercept, normalize_purity=normalize_purity)
    return fit_x, fit_z, data


def training_frame(data: Sequence[TrainingDatum]) -> pd.DataFrame:
    """One row per training circuit; free indices are joined with ';'."""
    rows = [
        {
            "free_indices": ";".join(str(i) for i in datum.free_indices),
            "ideal_value": datum.ideal_value,
            "noisy_x": datum.noisy_x,
            "noisy_z": datum.noisy_z,
            "var_x": datum.var_x,
            "var_z": datum.var_z,
            "p0_hat": datum.p0_hat,
            "bloch_norm": datum.bloch_norm,
        }
        for datum in data
    ]
    return pd.DataFrame(rows, columns=TRAINING_COLUMNS)


def read_training_data(source: Union[str, pd.DataFrame]) -> List[TrainingDatum]:
    """
    Load training data from a CSV path or a DataFrame.

    Hardware-measured data can replace simulated noisy values this way.

    Raises:
        ValueError:  If a required column is missing.
    """
    frame = pd.read_csv(source, keep_default_na=False) if isinstance(source, str) else source
    required = ["ideal_value", "noisy_x", "noisy_z"]
    missing = [column for column in required if column not in frame.columns]
    if missing:
        raise ValueError(f"Training data is missing the columns {missing}.")
    data = []
    for _, row in frame.iterrows():
        indices = str(row.get("free_indices", "") or "")
        data.append(
            TrainingDatum(
                float(row["ideal_value"]),
                float(row["noisy_x"]),
                float(row["noisy_z"]),
                float(row.get("var_x", 0.0)),
                float(row.get("var_z", 0.0)),
                float(row.get("p0_hat", 1.0)),
                float(row.get("bloch_norm", 1.0)),
                tuple(int(i) for i in indices.split(";") if i != ""),
            )
        )
    return data
