"""
Stabilizer tableau simulation and its near-Clifford extension.

A StabilizerTableau holds 2n signed Pauli rows: n destabilizers D_i followed
by n stabilizers S_i, with D_i anticommuting only with S_i. Clifford gates
act by conjugating every row.

A near-Clifford circuit has rotations at multiples of pi/2 except for L free
rotations R_P(t) = cos(t/2) I - i sin(t/2) P. Each free rotation splits the
state into an identity branch and a P-inserted branch. Pushing the inserted
Paulis through the remaining Clifford gates leaves every branch as a Pauli
frame Q_k applied to one shared skeleton state C|0>. Any Pauli frame reduces
on that skeleton to a phase times a destabilizer product D^a|s>, and distinct
a give orthogonal states, so cross terms between branches need only this
canonical form and its phase.

Usage:

.. code-block:: python

    state = expand_non_clifford(circuit, free_indices=[3, 7])
    value = near_clifford_expectation(state, PauliString.from_label("ZII"))
"""

# pylint: disable=C0103,R0914,R0912,C0301
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Tuple
import logging
import math
import os

from evcdr.circuit import Circuit, GateOp
from evcdr.pauli import PauliString, multiply, symplectic_product

logger = logging.getLogger(__name__)

BRANCH_BUDGET = int(os.getenv("EVCDR_BRANCH_BUDGET", "15"))
PRUNE_TOLERANCE = 1e-14

_SINGLE_IMAGES = {
    "H": (("Z", 0), ("X", 0)),
    "S": (("Y", 0), ("Z", 0)),
    "SDG": (("Y", 2), ("Z", 0)),
    "X": (("X", 0), ("Z", 2)),
    "Y": (("X", 2), ("Z", 2)),
    "Z": (("X", 2), ("Z", 0)),
}


def _rotation_generator(gate: GateOp, n_qubits: int) -> PauliString:
    if gate.kind == "RX":
        return PauliString.single(n_qubits, gate.targets[0], "X")
    if gate.kind == "RZ":
        return PauliString.single(n_qubits, gate.targets[0], "Z")
    a, b = gate.targets
    return multiply(PauliString.single(n_qubits, a, "Z"), PauliString.single(n_qubits, b, "Z"))


def _conjugate_by_rotation(generator: PauliString, k: int, pauli: PauliString) -> PauliString:
    """exp(-i k pi/4 G) P exp(+i k pi/4 G) for a Pauli generator G."""
    if k == 0 or symplectic_product(generator, pauli) == 0:
        return pauli
    if k == 2:
        return pauli.with_phase(pauli.phase_exp + 2)
    return multiply(generator.with_phase(3 if k == 1 else 1), pauli)


def _generator_images(gate: GateOp, n_qubits: int) -> Dict[int, Tuple[PauliString, PauliString]]:
    """Images of X_q and Z_q under conjugation by gate, for each gate qubit q."""
    if gate.kind in _SINGLE_IMAGES or (gate.kind == "MCPAULI" and not gate.controls):
        kind = gate.pauli if gate.kind == "MCPAULI" else gate.kind
        q = gate.targets[0]
        (x_letter, x_phase), (z_letter, z_phase) = _SINGLE_IMAGES[kind]
        return {
            q: (
                PauliString.single(n_qubits, q, x_letter).with_phase(x_phase),
                PauliString.single(n_qubits, q, z_letter).with_phase(z_phase),
            )
        }
    if gate.kind in ("CNOT", "CZ", "CPAULI"):
        control, target = gate.targets
        letter = {"CNOT": "X", "CZ": "Z"}.get(gate.kind, gate.pauli)
        sigma = PauliString.single(n_qubits, target, letter)
        z_control = PauliString.single(n_qubits, control, "Z")
        images = {
            control: (
                multiply(PauliString.single(n_qubits, control, "X"), sigma),
                z_control,
            )
        }
        target_images = []
        for generator in ("X", "Z"):
            image = PauliString.single(n_qubits, target, generator)
            if symplectic_product(image, sigma):
                image = multiply(z_control, image)
            target_images.append(image)
        images[target] = tuple(target_images)
        return images
    raise ValueError(f"Gate {gate.kind} is not a Clifford gate.")


def conjugate(gate: GateOp, pauli: PauliString) -> PauliString:
    """
    Return G P G^dagger for a Clifford gate G.

    Raises:
        ValueError:  If the gate is not Clifford.
    """
    if not gate.is_clifford():
        raise ValueError(f"Gate {gate.kind}({gate.angle}) is not Clifford.")
    if gate.is_rotation():
        generator = _rotation_generator(gate, pauli.n_qubits)
        return _conjugate_by_rotation(generator, gate.clifford_multiple(), pauli)
    qubits = gate.qubits
    if not any(((pauli.x_bits | pauli.z_bits) >> q) & 1 for q in qubits):
        return pauli
    images = _generator_images(gate, pauli.n_qubits)
    mask = 0
    for q in qubits:
        mask |= 1 << q
    result = PauliString(
        pauli.n_qubits, pauli.x_bits & ~mask, pauli.z_bits & ~mask, pauli.phase_exp
    )
    for q in qubits:
        x = (pauli.x_bits >> q) & 1
        z = (pauli.z_bits >> q) & 1
        if x and z:
            result = result.with_phase(result.phase_exp + 1)
        if x:
            result = multiply(result, images[q][0])
        if z:
            result = multiply(result, images[q][1])
    return result


@dataclass(frozen=True)
class StabilizerTableau:
    """Destabilizer and stabilizer rows of a stabilizer state (rows[:n] and rows[n:])."""

    n_qubits: int
    rows: Tuple[PauliString, ...]

    @classmethod
    def zero(cls, n_qubits: int) -> "StabilizerTableau":
        """Tableau of |0...0>: destabilizers X_i, stabilizers Z_i."""
        destabilizers = tuple(PauliString.single(n_qubits, q, "X") for q in range(n_qubits))
        stabilizers = tuple(PauliString.single(n_qubits, q, "Z") for q in range(n_qubits))
        return cls(n_qubits, destabilizers + stabilizers)

    @property
    def destabilizers(self) -> Tuple[PauliString, ...]:
        """The n destabilizer rows."""
        return self.rows[: self.n_qubits]

    @property
    def stabilizers(self) -> Tuple[PauliString, ...]:
        """The n stabilizer rows."""
        return self.rows[self.n_qubits :]

    def check(self) -> bool:
        """True when the rows satisfy the symplectic pairing and stabilizers commute."""
        n = self.n_qubits
        for i in range(n):
            for j in range(n):
                if symplectic_product(self.rows[i], self.rows[n + j]) != (1 if i == j else 0):
                    return False
                if symplectic_product(self.rows[n + i], self.rows[n + j]):
                    return False
                if symplectic_product(self.rows[i], self.rows[j]):
                    return False
        return all(row.is_hermitian() for row in self.rows)

    def conjugated(self, pauli: PauliString) -> "StabilizerTableau":
        """Tableau of P|s> for a Pauli P (rows conjugated by P)."""
        rows = tuple(
            row.with_phase(row.phase_exp + 2) if symplectic_product(row, pauli) else row
            for row in self.rows
        )
        return StabilizerTableau(self.n_qubits, rows)

    def destabilizer_product(self, a_mask: int) -> PauliString:
        """Ordered product of destabilizers D_i with bit i set in a_mask (increasing i)."""
        result = PauliString.identity(self.n_qubits)
        for i in range(self.n_qubits):
            if (a_mask >> i) & 1:
                result = multiply(result, self.rows[i])
        return result

    def decompose(self, pauli: PauliString) -> Tuple[int, int]:
        """
        Canonical form of P on this state.

        Returns (c, a) with P|s> = i**c D^a |s>, where a has bit i set when P
        anticommutes with stabilizer i and D^a is destabilizer_product(a).
        """
        if pauli.n_qubits != self.n_qubits:
            raise ValueError(
                f"Pauli on {pauli.n_qubits} qubits does not match a {self.n_qubits}-qubit tableau."
            )
        n = self.n_qubits
        a_mask = 0
        b_mask = 0
        for i in range(n):
            if symplectic_product(pauli, self.rows[n + i]):
                a_mask |= 1 << i
            if symplectic_product(pauli, self.rows[i]):
                b_mask |= 1 << i
        reference = self.destabilizer_product(a_mask)
        for i in range(n):
            if (b_mask >> i) & 1:
                reference = multiply(reference, self.rows[n + i])
        return (pauli.phase_exp - reference.phase_exp) % 4, a_mask


def apply_clifford(t: StabilizerTableau, gate: GateOp) -> StabilizerTableau:
    """
    Apply a Clifford gate to a tableau.

    Raises:
        ValueError:  If the gate is not Clifford or touches a qubit out of range.

    Example:

    .. code-block:: python

        plus = apply_clifford(StabilizerTableau.zero(1), GateOp("H", (0,)))
        plus.stabilizers[0].to_label()   # "X"
    """
    for qubit in gate.qubits:
        if not 0 <= qubit < t.n_qubits:
            raise ValueError(f"Gate {gate.kind} on qubit {qubit} out of range for {t.n_qubits} qubits.")
    return StabilizerTableau(t.n_qubits, tuple(conjugate(gate, row) for row in t.rows))


def stabilizer_expectation(t: StabilizerTableau, p: PauliString) -> int:
    """
    Expectation of a Hermitian Pauli on a stabilizer state, one of -1, 0, +1.

    Raises:
        ValueError:  If the qubit counts differ.
    """
    c, a_mask = t.decompose(p)
    if a_mask:
        return 0
    return 1 if c == 0 else -1


@dataclass
class NearCliffordState:
    """
    Branch expansion of a near-Clifford circuit applied to |0...0>.

    frames holds (amplitude, Q_k) with the full state sum_k amplitude_k Q_k |s>
    where |s> is the skeleton stabilizer state.
    """

    skeleton: StabilizerTableau
    frames: List[Tuple[complex, PauliString]]
    source_angles: Tuple[float, ...] = field(default=())

    @property
    def branches(self) -> List[Tuple[complex, StabilizerTableau]]:
        """Branches as (amplitude, tableau); phases of Q_k are folded into the amplitude."""
        return [
            (amplitude * frame.phase, self.skeleton.conjugated(frame))
            for amplitude, frame in self.frames
        ]

    def grouped_amplitudes(self) -> Dict[int, complex]:
        """Coefficients beta_a of the orthonormal states D^a|s> (sorted by a)."""
        beta: Dict[int, complex] = {}
        for amplitude, frame in self.frames:
            c, a_mask = self.skeleton.decompose(frame)
            beta[a_mask] = beta.get(a_mask, 0j) + amplitude * (1j**c)
        return dict(sorted(beta.items()))

    def norm(self) -> float:
        """Squared norm sum_jk conj(a_j) a_k <t_j|t_k>; one for a valid expansion."""
        return float(sum(abs(value) ** 2 for value in self.grouped_amplitudes().values()))


def expand_non_clifford(circuit: Circuit, free_indices: Iterable[int], budget: int = None) -> NearCliffordState:
    """
    Expand a near-Clifford circuit into stabilizer branches.

    Args:
        circuit:        Circuit whose rotations are Clifford except those with a free parameter index.
        free_indices:   Parameter indices of the rotations kept at their unrounded angle.
        budget:         Maximum number of free rotations (default EVCDR_BRANCH_BUDGET, 15).
    Returns:
        A NearCliffordState with at most 2**L frames.
    Raises:
        ValueError:  If the budget is exceeded, a free index matches no rotation,
                     or a non-free gate is not Clifford.
    """
    budget = BRANCH_BUDGET if budget is None else budget
    free = set(free_indices)
    n = circuit.n_qubits
    free_gates = [gate for gate in circuit.gates if gate.param_index in free]
    found = {gate.param_index for gate in free_gates}
    missing = free - found
    if missing:
        raise ValueError(f"Free parameter indices {sorted(missing)} match no rotation gate.")
    if any(not gate.is_rotation() for gate in free_gates):
        raise ValueError("Free parameter indices must refer to rotation gates.")
    if len(free_gates) > budget:
        raise ValueError(
            f"{len(free_gates)} non-Clifford rotations exceed the branch budget of {budget}."
        )

    tableau = StabilizerTableau.zero(n)
    insertions: List[Tuple[PauliString, complex, complex]] = []
    for gate in circuit.gates:
        if gate.param_index in free:
            generator = _rotation_generator(gate, n)
            insertions.append(
                (generator, math.cos(gate.angle / 2), -1j * math.sin(gate.angle / 2))
            )
            continue
        if not gate.is_clifford():
            raise ValueError(
                f"Gate {gate.kind} with angle {gate.angle} is neither Clifford nor free."
            )
        tableau = apply_clifford(tableau, gate)
        insertions = [
            (conjugate(gate, generator), keep, flip) for generator, keep, flip in insertions
        ]

    frames: List[Tuple[complex, PauliString]] = [(1.0 + 0j, PauliString.identity(n))]
    for generator, keep, flip in insertions:
        expanded = []
        for amplitude, frame in frames:
            if abs(amplitude * keep) >= PRUNE_TOLERANCE:
                expanded.append((amplitude * keep, frame))
            if abs(amplitude * flip) >= PRUNE_TOLERANCE:
                expanded.append((amplitude * flip, multiply(generator, frame)))
        frames = expanded
    logger.debug("Expanded %d free rotations into %d branches", len(insertions), len(frames))
    return NearCliffordState(tableau, frames, tuple(gate.angle for gate in free_gates))


def near_clifford_expectation(s: NearCliffordState, p: PauliString) -> float:
    """
    Expectation of a Hermitian Pauli on a near-Clifford state.

    Evaluates sum_jk conj(a_j) a_k <t_j|P|t_k> by reducing every branch to
    its canonical destabilizer form on the shared skeleton.

    Returns:
        The real expectation clamped to [-1, 1].
    """
    skeleton = s.skeleton
    beta = s.grouped_amplitudes()
    total = 0j
    for a_mask, amplitude in beta.items():
        moved = multiply(p, skeleton.destabilizer_product(a_mask))
        c, target = skeleton.decompose(moved)
        partner = beta.get(target)
        if partner is not None:
            total += partner.conjugate() * amplitude * (1j**c)
    if abs(total.imag) > 1e-8:
        logger.warning("Near-Clifford expectation has imaginary residue %g", total.imag)
    return float(min(max(total.real, -1.0), 1.0))


def clifford_expectation(circuit: Circuit, p: PauliString) -> int:
    """Expectation of P after a fully Clifford circuit on |0...0>."""
    tableau = StabilizerTableau.zero(circuit.n_qubits)
    for gate in circuit.gates:
        tableau = apply_clifford(tableau, gate)
    return stabilizer_expectation(tableau, p)

