"""
Echo verification of several Pauli observables at once with extra ancillas.

tensor_control uses one ancilla per observable: ancilla m controls P_m and
the single-ancilla circuit is recovered for M = 1. With g_b = <prod_{m in b} P_m>
the postselected ancilla state is the Hadamard transform of g, so

    <P_m> = sum_c <Z_m X_c> / sum_a <X_a>,
    1 - <P_m>^2 = 2 sum_{a: a_m = 1} <X_a> / sum_a <X_a>,

where a runs over all ancilla X-strings and c over the X-strings on the
other ancillas. Each observable uses 2**(M-1) strings in either sum.

multicontrol encodes labels 0..M in ceil(log2(M+1)) ancillas; label m
applies P_m and every other label applies nothing. Undoing the final
Hadamards leaves the ancilla proportional to |0> + sum_m <P_m>|m> (plus
unit amplitude on unused labels), so <P_m> is a ratio of coherences.
"""

# pylint: disable=C0103,R0914,C0301
from dataclasses import dataclass
from typing import Dict, List, Mapping, NamedTuple, Sequence, Tuple
import itertools
import logging
import math
import numpy as np

from evcdr.circuit import Circuit, GateOp, controlled_pauli_gates
from evcdr.exceptions import NumericalError, PostselectionError
from evcdr.pauli import PauliString
from evcdr.statevector import NoiseModel, Statevector, postselected_block, run_density_matrix

logger = logging.getLogger(__name__)

VARIANTS = ("tensor_control", "multicontrol")
MAX_OBSERVABLES = 4


@dataclass(frozen=True)
class MultiAncillaPlan:
    """Observables P_1..P_M on the system register and the circuit variant."""

    observables: Tuple[PauliString, ...]
    variant: str = "tensor_control"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"Unknown multi-ancilla variant '{self.variant}'. Use one of {VARIANTS}.")
        if not self.observables:
            raise ValueError("A multi-ancilla plan needs at least one observable.")
        if len(self.observables) > MAX_OBSERVABLES:
            raise ValueError(f"At most {MAX_OBSERVABLES} observables are supported, got {len(self.observables)}.")
        sizes = {p.n_qubits for p in self.observables}
        if len(sizes) != 1:
            raise ValueError(f"Observables act on different register sizes {sorted(sizes)}.")
        for p in self.observables:
            if p.phase_exp != 0:
                raise ValueError(f"Observable {p.to_label()} must carry phase +1.")

    @property
    def M(self) -> int:
        """Number of observables."""
        return len(self.observables)

    @property
    def n_ancillas(self) -> int:
        """Ancilla qubits used by the variant."""
        if self.variant == "tensor_control":
            return self.M
        return max(1, math.ceil(math.log2(self.M + 1)))


def build_circuit(u: Circuit, plan: MultiAncillaPlan) -> Circuit:
    """
    Build the multi-ancilla echo circuit; ancillas follow the system qubits.

    Raises:
        ValueError:  If the observables do not act on u's register.
    """
    n = u.n_qubits
    if plan.observables[0].n_qubits != n:
        raise ValueError(
            f"Observables on {plan.observables[0].n_qubits} qubits do not match a {n}-qubit circuit."
        )
    ancillas = list(range(n, n + plan.n_ancillas))
    circuit = Circuit(n + plan.n_ancillas)
    circuit.extend(GateOp("H", (a,)) for a in ancillas)
    circuit.extend(u.gates)
    for m, p in enumerate(plan.observables):
        letters = {q: p.factor(q) for q in p.support()}
        if plan.variant == "tensor_control":
            circuit.extend(controlled_pauli_gates(ancillas[m], letters))
            continue
        label = m + 1
        values = tuple((label >> k) & 1 for k in range(len(ancillas)))
        for q, letter in sorted(letters.items()):
            circuit.append(
                GateOp("MCPAULI", (q,), pauli=letter, controls=tuple(ancillas), control_values=values)
            )
    circuit.extend(u.inverse().gates)
    circuit.extend(GateOp("H", (a,)) for a in ancillas)
    return circuit


def ancilla_state(u: Circuit, plan: MultiAncillaPlan, noise: NoiseModel = None) -> np.ndarray:
    """
    Normalized ancilla density matrix after zero postselection of the system.

    Raises:
        PostselectionError:  If the postselection probability vanishes.
    """
    circuit = build_circuit(u, plan)
    if noise is None or noise.is_noiseless():
        state = Statevector.zero(circuit.n_qubits).evolve(circuit)
    else:
        state = run_density_matrix(circuit, noise)
    ancillas = list(range(u.n_qubits, circuit.n_qubits))
    block = postselected_block(state, ancillas)
    p0 = float(np.trace(block).real)
    if p0 <= 1e-15:
        raise PostselectionError("Postselection probability is zero.")
    return block / p0


def pauli_string_expectations(rho: np.ndarray, labels: Sequence[str]) -> Dict[str, float]:
    """Real expectations Tr(P rho) of ancilla Pauli literals (ancilla 0 first)."""
    return {
        label: float(np.trace(PauliString.from_label(label).to_matrix() @ rho).real)
        for label in labels
    }


def tensor_labels(M: int) -> List[str]:
    """Every ancilla literal recover_tensor needs: all X-strings and each Z_m times X-strings."""
    labels = ["".join(s) for s in itertools.product("IX", repeat=M)]
    for m in range(M):
        for rest in itertools.product("IX", repeat=M - 1):
            letters = list(rest)
            letters.insert(m, "Z")
            labels.append("".join(letters))
    return labels


class TensorRecovery(NamedTuple):
    """Recovered <P_m>, the X-string estimate of <P_m>^2 and the strings summed per observable."""

    values: List[float]
    squares: List[float]
    terms_per_observable: int


def recover_tensor(ancilla_stats: Mapping[str, float], plan: MultiAncillaPlan) -> TensorRecovery:
    """
    Recover <P_m> from ancilla Pauli-string expectations of the tensor variant.

    Args:
        ancilla_stats:  Expectations keyed by ancilla literal (see tensor_labels).
        plan:           The plan the statistics were measured for.
    Returns:
        TensorRecovery with one value per observable.
    Raises:
        ValueError:      If a required expectation is missing.
        NumericalError:  If the X-string normalization vanishes.
    """
    M = plan.M
    missing = [label for label in tensor_labels(M) if label not in ancilla_stats and set(label) != {"I"}]
    if missing:
        raise ValueError(f"Missing ancilla expectations {missing[:4]}.")

    def value(label: str) -> float:
        return 1.0 if set(label) == {"I"} else float(ancilla_stats[label])

    x_strings = ["".join(s) for s in itertools.product("IX", repeat=M)]
    normalization = sum(value(label) for label in x_strings)
    if abs(normalization) <= 1e-15:
        raise NumericalError("X-string normalization of the ancilla state is zero.")
    values = []
    squares = []
    terms = 2 ** (M - 1)
    for m in range(M):
        with_m = [label for label in x_strings if label[m] == "X"]
        squares.append(1 - 2 * sum(value(label) for label in with_m) / normalization)
        z_strings = [label[:m] + "Z" + label[m + 1 :] for label in x_strings if label[m] == "I"]
        values.append(sum(value(label) for label in z_strings) / normalization)
        if len(with_m) != terms or len(z_strings) != terms:
            raise NumericalError("Unexpected tensor-variant term count.")
    return TensorRecovery(values, squares, terms)


def recover_multicontrol(ancilla_stats: np.ndarray, plan: MultiAncillaPlan) -> List[float]:
    """
    Recover <P_m> from the measured ancilla density matrix of the multicontrol variant.

    The final Hadamards are undone and <P_m> is Re(sigma[m, 0]) / sigma[0, 0].

    Raises:
        NumericalError:  If the |0> population vanishes.
    """
    rho = np.asarray(ancilla_stats, dtype=complex)
    k = plan.n_ancillas
    if rho.shape != (1 << k, 1 << k):
        raise ValueError(f"Expected a {1 << k}x{1 << k} ancilla state, got {rho.shape}.")
    hadamard = np.array([[1.0]])
    for _ in range(k):
        hadamard = np.kron(np.array([[1, 1], [1, -1]]) / math.sqrt(2), hadamard)
    sigma = hadamard @ rho @ hadamard
    reference = float(sigma[0, 0].real)
    if reference <= 1e-15:
        raise NumericalError("The |0> ancilla component vanishes.")
    return [float(sigma[m, 0].real / reference) for m in range(1, plan.M + 1)]


def estimate_observables(u: Circuit, plan: MultiAncillaPlan, noise: NoiseModel = None) -> List[float]:
    """Exact multi-ancilla estimates of every <P_m> for either variant."""
    rho = ancilla_state(u, plan, noise)
    if plan.variant == "tensor_control":
        stats = pauli_string_expectations(rho, tensor_labels(plan.M))
        return recover_tensor(stats, plan).values
    return recover_multicontrol(rho, plan)
