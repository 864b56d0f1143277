"""
Echo verification: circuit construction, light-cone reduction, postselection,
ancilla tomography and the estimator family.

The echo circuit prepares the ancilla in |+>, runs U on the system, applies
V controlled by the ancilla, undoes U and closes with a Hadamard on the
ancilla. Postselecting the system on |0...0> leaves the ancilla in

    (1 + <V>) |0> + (1 - <V>) |1>   (unnormalized)

so that <Z> = 2<V>/(1+<V>^2), <X> = (1-<V>^2)/(1+<V>^2) and the
postselection probability is p0 = (1+<V>^2)/2.

Usage:

.. code-block:: python

    from evcdr.echo_verification import build_ev_circuit, exact_tomogram, estimate

    ev = build_ev_circuit(u, PauliString.from_label("ZII"))
    tomogram = exact_tomogram(ev)
    estimate(tomogram, "standard").value
"""

# pylint: disable=C0103,R0902,R0913,R0914,R0911,R0912,C0301
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union
import logging
import math
import warnings
import numpy as np

from evcdr.circuit import Circuit, GateOp, controlled_pauli_gates
from evcdr.exceptions import NumericalError, PostselectionError
from evcdr.pauli import PauliString
from evcdr.statevector import (
    NoiseModel,
    ShotRecord,
    ShotTable,
    Statevector,
    postselected_block,
    run_density_matrix,
    sample_shots,
)
from evcdr.streams import child_seed, stream

logger = logging.getLogger(__name__)

ESTIMATOR_VARIANTS = (
    "standard",
    "z_bias",
    "z_bias_squared",
    "x_bias",
    "purity_normalized",
    "spectral_purified",
    "depolarization_tolerant",
    "evcdr",
)
BASIS_KEYS = {"X": 0, "Y": 1, "Z": 2}
DENOMINATOR_TOLERANCE = 1e-15


@dataclass(frozen=True)
class EvCircuit:
    """
    An echo verification circuit.

    The system register holds qubits 0..n-1 and the ancilla is qubit n.
    system_indices gives the original (lattice) label of each system qubit,
    which changes after light-cone reduction. unitary is U on the system
    register and observable is V on the same register.
    """

    circuit: Circuit
    unitary: Circuit
    observable: PauliString
    ancilla_index: int
    system_indices: Tuple[int, ...]

    @property
    def n_system(self) -> int:
        """Number of system qubits."""
        return self.unitary.n_qubits

    @property
    def dimension(self) -> int:
        """Hilbert-space dimension of system plus ancilla."""
        return 1 << (self.n_system + 1)

    def parameter_indices(self) -> List[int]:
        """Sorted parameter indices of the rotations in U."""
        return sorted({g.param_index for g in self.unitary.gates if g.param_index is not None})

    def bind(self, angles: Mapping[int, float]) -> "EvCircuit":
        """Re-bind rotation angles in U and U^dagger together."""
        return EvCircuit(
            self.circuit.bind(angles),
            self.unitary.bind(angles),
            self.observable,
            self.ancilla_index,
            self.system_indices,
        )


def build_ev_circuit(u: Circuit, v: PauliString, system_indices: Sequence[int] = None) -> EvCircuit:
    """
    Build the echo circuit H(anc), U, controlled-V, U^dagger, H(anc).

    Args:
        u:              State preparation on the system register.
        v:              Hermitian Pauli observable with phase +1 on the same register.
        system_indices: Original labels of the system qubits (default 0..n-1).
    Returns:
        An EvCircuit with the ancilla as the last qubit.
    Raises:
        ValueError:  If the register sizes differ or V carries a non-trivial phase.
    """
    if v.n_qubits != u.n_qubits:
        raise ValueError(
            f"Observable on {v.n_qubits} qubits does not match a {u.n_qubits}-qubit circuit."
        )
    if v.phase_exp != 0:
        raise ValueError(f"Observable {v.to_label()} must carry phase +1.")
    n = u.n_qubits
    labels = tuple(system_indices) if system_indices is not None else tuple(range(n))
    if len(labels) != n:
        raise ValueError(f"Expected {n} system labels, got {len(labels)}.")
    ancilla = n
    circuit = Circuit(n + 1)
    circuit.append(GateOp("H", (ancilla,)))
    circuit.extend(u.gates)
    circuit.extend(controlled_pauli_gates(ancilla, {q: v.factor(q) for q in v.support()}))
    circuit.extend(u.inverse().gates)
    circuit.append(GateOp("H", (ancilla,)))
    return EvCircuit(circuit, u.copy(), v, ancilla, labels)


def lightcone_reduce(ev: EvCircuit, compact: bool = True) -> EvCircuit:
    """
    Drop every gate of U outside the backward light cone of V, with its partner in U^dagger.

    Args:
        ev:         The echo circuit.
        compact:    Also drop the system qubits outside the light cone and relabel
                    the rest; system_indices keeps their original labels.
    Returns:
        The reduced EvCircuit. Noiseless expectations are unchanged.
    """
    kept, support = ev.unitary.lightcone(ev.observable.support())
    gates = [ev.unitary.gates[p] for p in kept]
    if not compact:
        return build_ev_circuit(Circuit(ev.n_system, gates), ev.observable, ev.system_indices)
    if not support:
        support = (0,)
    mapping = {q: i for i, q in enumerate(support)}
    reduced_u = Circuit(len(support), [gate.relabel(mapping) for gate in gates])
    reduced_v = ev.observable.restrict(support)
    labels = tuple(ev.system_indices[q] for q in support)
    logger.debug(
        "Light cone keeps %d of %d gates on %d of %d qubits",
        len(gates), len(ev.unitary), len(support), ev.n_system,
    )
    return build_ev_circuit(reduced_u, reduced_v, labels)


@dataclass(frozen=True)
class PostselectionRule:
    """
    Accept a shot when every neighborhood qubit reads 0 and at most max_hamming
    of the other system qubits read 1.

    Neighborhood entries are system labels. Labels that are not in a register
    (qubits removed by light-cone reduction) are ignored for that register.
    An empty neighborhood with max_hamming 0 is exact zero-state postselection.
    """

    neighborhood: Tuple[int, ...] = field(default=())
    max_hamming: int = 0

    def __post_init__(self):
        if self.max_hamming < 0:
            raise ValueError(f"max_hamming must be >= 0, got {self.max_hamming}.")

    def _columns(self, system_labels: Sequence[int]) -> np.ndarray:
        labels = list(system_labels)
        neighborhood = set(self.neighborhood)
        return np.array([label in neighborhood for label in labels], dtype=bool)

    def accepts(self, system_bits: np.ndarray, system_labels: Sequence[int]) -> np.ndarray:
        """Boolean mask over the rows of a (shots, n_system) bit array."""
        bits = np.asarray(system_bits, dtype=np.int64)
        in_neighborhood = self._columns(system_labels)
        forced_zero = ~bits[:, in_neighborhood].any(axis=1)
        flips = bits[:, ~in_neighborhood].sum(axis=1)
        return forced_zero & (flips <= self.max_hamming)

    def accepted_strings(self, system_labels: Sequence[int]) -> np.ndarray:
        """Mask over all 2**n system strings (bit j is system column j)."""
        n = len(system_labels)
        strings = np.arange(1 << n, dtype=np.int64)
        bits = (strings[:, None] >> np.arange(n)[None, :]) & 1
        return self.accepts(bits, system_labels)


class PostselectionResult(NamedTuple):
    """Shots surviving postselection and the success fraction."""

    kept: ShotTable
    p0_hat: float
    n_total: int


def postselect(records: Union[ShotTable, Sequence[ShotRecord]], rule: PostselectionRule, system_labels: Sequence[int] = None) -> PostselectionResult:
    """
    Keep the shots accepted by rule.

    Args:
        records:        A ShotTable or a sequence of ShotRecord values of one basis.
        rule:           The postselection rule.
        system_labels:  Labels of the system columns when records is a sequence.
    Returns:
        PostselectionResult(kept, p0_hat, n_total) with p0_hat = kept / total.
    Raises:
        PostselectionError:  If no records are supplied.
    """
    if not isinstance(records, ShotTable):
        records = list(records)
        if not records:
            raise PostselectionError("Cannot postselect an empty set of shots.")
        records = ShotTable.from_records(records, system_labels)
    if len(records) == 0:
        raise PostselectionError("Cannot postselect an empty set of shots.")
    mask = rule.accepts(records.system_bits, records.system_labels)
    kept = records.subset(mask)
    return PostselectionResult(kept, len(kept) / len(records), len(records))


@dataclass(frozen=True)
class AncillaTomogram:
    """
    Ancilla Pauli expectations after postselection.

    Sampled tomograms record the kept shot count and the number of +1
    outcomes per basis so that estimators can be bootstrapped. Exact
    tomograms have n_total == 0 and empty counts.
    """

    e_x: Optional[float]
    e_y: Optional[float]
    e_z: Optional[float]
    p0_hat: float
    n_total: int = 0
    n_kept: int = 0
    kept_counts: Mapping[str, int] = field(default_factory=dict)
    plus_counts: Mapping[str, int] = field(default_factory=dict)

    @property
    def exact(self) -> bool:
        """True for tomograms computed from a density matrix."""
        return self.n_total == 0

    def expectation(self, basis: str) -> Optional[float]:
        """The expectation in basis X, Y or Z (None if not measured)."""
        return (self.e_x, self.e_y, self.e_z)[BASIS_KEYS[basis]]

    @property
    def bloch_norm(self) -> float:
        """sqrt(e_x^2 + e_y^2 + e_z^2) over the measured bases."""
        return math.sqrt(sum(e * e for e in (self.e_x, self.e_y, self.e_z) if e is not None))

    @property
    def purity(self) -> float:
        """Tr(rho^2) = (1 + e_x^2 + e_y^2 + e_z^2) / 2."""
        return (1 + self.bloch_norm**2) / 2


def tomograph(kept: Mapping[str, PostselectionResult]) -> AncillaTomogram:
    """
    Average the +/-1 ancilla outcomes of the kept shots in each basis.

    Args:
        kept:   Postselection result per measured basis (X, Y and/or Z).
    Returns:
        An AncillaTomogram; p0_hat pools every basis.
    Raises:
        PostselectionError:  If a basis has no kept shots.
    """
    values: Dict[str, Optional[float]] = {"X": None, "Y": None, "Z": None}
    kept_counts = {}
    plus_counts = {}
    n_total = 0
    n_kept = 0
    for basis, result in sorted(kept.items()):
        if basis not in BASIS_KEYS:
            raise ValueError(f"Unknown ancilla basis '{basis}'.")
        outcomes = result.kept.ancilla_outcomes
        if len(outcomes) == 0:
            raise PostselectionError(f"No shots survived postselection in basis {basis}.")
        values[basis] = float(np.mean(outcomes))
        kept_counts[basis] = int(len(outcomes))
        plus_counts[basis] = int(np.count_nonzero(outcomes > 0))
        n_total += result.n_total
        n_kept += len(outcomes)
    if n_total == 0:
        raise PostselectionError("No shots were measured.")
    return AncillaTomogram(
        values["X"], values["Y"], values["Z"], n_kept / n_total, n_total, n_kept, kept_counts, plus_counts
    )


def exact_tomogram(ev: EvCircuit, noise: NoiseModel = None, rule: PostselectionRule = None) -> AncillaTomogram:
    """
    Tomogram of the postselected ancilla state from exact simulation.

    Noiseless circuits use the statevector, noisy ones the density matrix.

    Raises:
        PostselectionError:  If the accepted system strings have zero probability.
    """
    if noise is None or noise.is_noiseless():
        state = Statevector.zero(ev.circuit.n_qubits).evolve(ev.circuit)
    else:
        state = run_density_matrix(ev.circuit, noise)
    accepted = None if rule is None else rule.accepted_strings(ev.system_indices)
    block = postselected_block(state, [ev.ancilla_index], accepted)
    p0 = float(np.trace(block).real)
    if p0 <= DENOMINATOR_TOLERANCE:
        raise PostselectionError("Postselection probability is zero.")
    rho = block / p0
    return AncillaTomogram(
        float(2 * rho[0, 1].real),
        float(-2 * rho[0, 1].imag),
        float((rho[0, 0] - rho[1, 1]).real),
        p0,
    )


def sampled_tomogram(ev: EvCircuit, noise: NoiseModel, shots_per_basis: int, seed: int, rule: PostselectionRule = None, bases: Sequence[str] = ("X", "Z"), shots_per_trajectory: int = 1) -> AncillaTomogram:
    """
    Sample shots in each basis, postselect and tomograph.

    Each basis uses its own seed derived from seed and the basis.
    """
    rule = rule or PostselectionRule()
    results = {}
    for basis in bases:
        table = sample_shots(
            ev.circuit,
            noise or NoiseModel(),
            shots_per_basis,
            child_seed(seed, BASIS_KEYS[basis]),
            ancilla_basis=basis,
            ancilla_index=ev.ancilla_index,
            shots_per_trajectory=shots_per_trajectory,
            system_labels=ev.system_indices,
        )
        results[basis] = postselect(table, rule)
    return tomograph(results)


@dataclass(frozen=True)
class EstimatorContext:
    """
    Extra inputs some estimators need.

    delta and dimension feed the depolarization-tolerant estimator.
    fit_x and fit_z are affine fits with slope, intercept and inverse(y)
    for the evcdr estimator; clip limits the inverted values to their
    physical ranges and normalize_purity divides e_x, e_z by the Bloch norm
    before inversion.
    """

    delta: Optional[float] = None
    dimension: Optional[int] = None
    fit_x: Any = None
    fit_z: Any = None
    clip: bool = False
    normalize_purity: bool = False
    n_resamples: int = 200
    seed: int = 0


@dataclass(frozen=True)
class EstimatorResult:
    """An estimate with its bootstrap variance and diagnostic flags."""

    value: float
    variance: float
    variant: str
    flags: Tuple[str, ...] = field(default=())


def _clamp(value: float, flags: List[str]) -> float:
    if value > 1.0 or value < -1.0:
        flags.append("clamped")
        return min(max(value, -1.0), 1.0)
    return value


def _standard(e_x: float, e_z: float) -> float:
    denominator = 1.0 + e_x
    if denominator <= DENOMINATOR_TOLERANCE:
        raise NumericalError("Standard estimator is undefined at e_x = -1.")
    return e_z / denominator


def _require(value: Optional[float], basis: str, variant: str) -> float:
    if value is None:
        raise ValueError(f"Estimator {variant} needs the {basis}-basis expectation.")
    return value


def _point(variant: str, e_x: Optional[float], e_y: Optional[float], e_z: Optional[float], context: EstimatorContext, flags: List[str]) -> float:
    """Evaluate one estimator on (possibly missing) ancilla expectations."""
    if variant == "standard":
        return _standard(_require(e_x, "X", variant), _require(e_z, "Z", variant))
    if variant == "z_bias":
        e_z = _require(e_z, "Z", variant)
        return e_z / (1.0 + math.sqrt(1.0 - e_z))
    if variant == "z_bias_squared":
        e_z = _require(e_z, "Z", variant)
        return e_z / (1.0 + math.sqrt(1.0 - e_z * e_z))
    if variant == "x_bias":
        e_x = _require(e_x, "X", variant)
        e_z = _require(e_z, "Z", variant)
        if 1.0 + e_x <= DENOMINATOR_TOLERANCE:
            raise NumericalError("x_bias estimator is undefined at e_x = -1.")
        return float(np.sign(e_z)) * math.sqrt((1.0 - e_x) / (1.0 + e_x))
    if variant == "purity_normalized":
        e_x = _require(e_x, "X", variant)
        e_z = _require(e_z, "Z", variant)
        norm = math.sqrt(e_x**2 + (e_y or 0.0) ** 2 + e_z**2)
        if norm <= DENOMINATOR_TOLERANCE:
            raise NumericalError("Purity normalization of a maximally mixed ancilla.")
        return _standard(e_x / norm, e_z / norm)
    if variant == "spectral_purified":
        e_x = _require(e_x, "X", variant)
        e_z = _require(e_z, "Z", variant)
        e_y = e_y or 0.0
        rho = 0.5 * np.array([[1 + e_z, e_x - 1j * e_y], [e_x + 1j * e_y, 1 - e_z]])
        eigenvalues, eigenvectors = np.linalg.eigh(rho)
        if abs(eigenvalues[1] - eigenvalues[0]) <= 1e-12:
            flags.append("degenerate")
            return _standard(e_x, e_z)
        dominant = eigenvectors[:, 1]
        pure_x = float(2 * (dominant[0].conjugate() * dominant[1]).real)
        pure_z = float(abs(dominant[0]) ** 2 - abs(dominant[1]) ** 2)
        return _standard(pure_x, pure_z)
    if variant == "depolarization_tolerant":
        if context.delta is None or context.dimension is None:
            raise ValueError("The depolarization-tolerant estimator needs delta and dimension.")
        if context.delta >= 1.0:
            raise NumericalError("The depolarization-tolerant estimator is undefined at delta = 1.")
        standard = _standard(_require(e_x, "X", variant), _require(e_z, "Z", variant))
        return standard * (1 + 2 * context.delta / (context.dimension * (1 - context.delta)))
    if variant == "evcdr":
        if context.fit_x is None or context.fit_z is None:
            raise ValueError("The evcdr estimator needs fit_x and fit_z.")
        e_x = _require(e_x, "X", variant)
        e_z = _require(e_z, "Z", variant)
        if context.normalize_purity:
            norm = math.sqrt(e_x**2 + (e_y or 0.0) ** 2 + e_z**2)
            if norm <= DENOMINATOR_TOLERANCE:
                raise NumericalError("Purity normalization of a maximally mixed ancilla.")
            e_x, e_z = e_x / norm, e_z / norm
        inv_x = context.fit_x.inverse(e_x)
        inv_z = context.fit_z.inverse(e_z)
        if context.clip:
            clipped_x = min(max(inv_x, 0.0), 1.0)
            clipped_z = min(max(inv_z, -1.0), 1.0)
            if (clipped_x, clipped_z) != (inv_x, inv_z):
                flags.append("clipped")
            inv_x, inv_z = clipped_x, clipped_z
        return _standard(inv_x, inv_z)
    raise ValueError(f"Unknown estimator variant '{variant}'. Use one of {ESTIMATOR_VARIANTS}.")


def estimate(t: AncillaTomogram, variant: str, context: EstimatorContext = None) -> EstimatorResult:
    """
    Evaluate an estimator of <V> from an ancilla tomogram.

    Expectations outside [-1, 1] are clamped first and flagged. Sampled
    tomograms get a bootstrap variance from binomial resampling of the
    per-basis +1 counts; exact tomograms have variance 0.

    Args:
        t:          The tomogram.
        variant:    One of ESTIMATOR_VARIANTS.
        context:    Extra inputs (delta, dimension, fits, bootstrap settings).
    Returns:
        An EstimatorResult.
    Raises:
        ValueError:      If the variant is unknown or its inputs are missing.
        NumericalError:  If the estimator is undefined at the tomogram.

    Example:

    .. code-block:: python

        estimate(AncillaTomogram(0.6, 0.0, 0.8, 0.625), "standard").value   # 0.5
    """
    context = context or EstimatorContext()
    flags: List[str] = []
    values = [None if e is None else _clamp(e, flags) for e in (t.e_x, t.e_y, t.e_z)]
    value = _point(variant, *values, context, flags)
    for flag in sorted(set(flags)):
        warnings.warn(f"Estimator {variant}: ancilla expectations were {flag}.")
    variance = 0.0
    if not t.exact and t.kept_counts:
        variance = _bootstrap(t, variant, context)
    return EstimatorResult(float(value), variance, variant, tuple(sorted(set(flags))))


def _bootstrap(t: AncillaTomogram, variant: str, context: EstimatorContext) -> float:
    generator = stream(context.seed, 2, ESTIMATOR_VARIANTS.index(variant))
    n_resamples = max(int(context.n_resamples), 2)
    resampled: Dict[str, np.ndarray] = {}
    for basis, kept in t.kept_counts.items():
        plus = generator.binomial(kept, t.plus_counts[basis] / kept, size=n_resamples)
        resampled[basis] = (2 * plus - kept) / kept
    samples = []
    for r in range(n_resamples):
        values = [
            None if basis not in resampled else float(resampled[basis][r])
            for basis in ("X", "Y", "Z")
        ]
        try:
            samples.append(_point(variant, *values, context, []))
        except NumericalError:
            continue
    if len(samples) < 2:
        return float("nan")
    return float(np.var(samples, ddof=1))


def estimate_depolarization_rate(t: AncillaTomogram, d: int) -> float:
    """
    Depolarization rate from the ancilla purity and the postselection probability.

    delta = d p0 (1 - gamma) / (1 + sqrt(2 gamma - 1)) with gamma = Tr(rho^2).

    Raises:
        NumericalError:  If gamma <= 1/2.
    """
    gamma = min(t.purity, 1.0)
    if gamma <= 0.5:
        raise NumericalError(f"Ancilla purity {gamma} is too low to infer a depolarization rate.")
    return d * t.p0_hat * (1 - gamma) / (1 + math.sqrt(2 * gamma - 1))


def noiseless_relations(v: float) -> Tuple[float, float, float]:
    """(p0, e_x, e_z) of a noiseless echo circuit with <V> = v."""
    denominator = 1 + v * v
    return denominator / 2, (1 - v * v) / denominator, 2 * v / denominator


def depolarized_p0(p0: float, delta: float, d: int) -> float:
    """Postselection probability p0 (1 - delta) + 2 delta / d under global depolarizing noise."""
    return p0 * (1 - delta) + 2 * delta / d


def expected_standard_under_depolarizing(v: float, delta: float, d: int) -> float:
    """Standard estimator under global depolarizing noise: v (1 - delta) / (1 - delta (1 - 2/d))."""
    return v * (1 - delta) / (1 - delta * (1 - 2 / d))
