"""
Gate and circuit containers shared by the simulators.

Rotation convention: RX(t) = exp(-i t X / 2), RZ(t) = exp(-i t Z / 2) and
RZZ(t) = exp(-i t ZZ / 2). Rotations may carry a parameter index so that
a circuit can be re-bound to a new parameter vector; the inverse of a
parameterized gate keeps the index with a negated sign.

Two-qubit gate matrices are written in the local basis |b_a b_b> where a is
the first target (most significant local bit).
"""

# pylint: disable=C0103,R0902,R0913,C0301
from dataclasses import dataclass, replace, field
from typing import Dict, Iterable, List, Mapping, Optional, Tuple
import math
import threading
import numpy as np
import networkx as nx

THREAD_LOCK = threading.Lock()
_FIXED_MATRICES: Dict[str, np.ndarray] = {}

ROTATION_KINDS = ("RX", "RZ", "RZZ")
SINGLE_QUBIT_KINDS = ("H", "S", "SDG", "X", "Y", "Z", "RX", "RZ")
TWO_QUBIT_KINDS = ("CNOT", "CZ", "RZZ", "CPAULI")
GATE_KINDS = SINGLE_QUBIT_KINDS + TWO_QUBIT_KINDS + ("MCPAULI",)
CLIFFORD_TOLERANCE = 1e-9


@dataclass(frozen=True)
class GateOp:
    """
    One gate of a circuit.

    kind is one of H, S, SDG, X, Y, Z, CNOT, CZ, RX, RZ, RZZ, CPAULI, MCPAULI.
    CPAULI applies the Pauli letter `pauli` to targets[1] when targets[0] is 1.
    MCPAULI applies `pauli` to targets[0] when every control qubit equals the
    matching entry of control_values.
    """

    kind: str
    targets: Tuple[int, ...]
    angle: Optional[float] = None
    param_index: Optional[int] = None
    param_sign: int = 1
    pauli: Optional[str] = None
    controls: Tuple[int, ...] = field(default=())
    control_values: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"Unknown gate kind '{self.kind}'.")
        expected = 2 if self.kind in TWO_QUBIT_KINDS else 1
        if len(self.targets) != expected:
            raise ValueError(
                f"Gate {self.kind} needs {expected} target(s), got {self.targets}."
            )
        if len(set(self.targets) | set(self.controls)) != len(self.targets) + len(
            self.controls
        ):
            raise ValueError(f"Gate {self.kind} has repeated qubits.")
        if self.kind in ROTATION_KINDS and self.angle is None:
            raise ValueError(f"Rotation gate {self.kind} needs an angle.")
        if self.kind in ("CPAULI", "MCPAULI") and self.pauli not in ("X", "Y", "Z"):
            raise ValueError(f"Controlled-Pauli gate needs a Pauli letter, got {self.pauli}.")
        if len(self.controls) != len(self.control_values):
            raise ValueError("Each control qubit needs a control value.")

    @property
    def qubits(self) -> Tuple[int, ...]:
        """Every qubit the gate touches."""
        return tuple(self.controls) + tuple(self.targets)

    def is_rotation(self) -> bool:
        """True for RX, RZ and RZZ."""
        return self.kind in ROTATION_KINDS

    def clifford_multiple(self) -> Optional[int]:
        """For a rotation at an angle k*pi/2 return k mod 4, otherwise None."""
        ratio = self.angle / (math.pi / 2)
        k = round(ratio)
        if abs(ratio - k) > CLIFFORD_TOLERANCE:
            return None
        return k % 4

    def is_clifford(self) -> bool:
        """True when the stabilizer simulator can apply the gate."""
        if self.kind == "MCPAULI":
            return len(self.controls) == 0
        if self.is_rotation():
            return self.clifford_multiple() is not None
        return True

    def inverse(self) -> "GateOp":
        """The inverse gate."""
        if self.is_rotation():
            return replace(self, angle=-self.angle, param_sign=-self.param_sign)
        if self.kind == "S":
            return replace(self, kind="SDG")
        if self.kind == "SDG":
            return replace(self, kind="S")
        return self

    def relabel(self, mapping: Mapping[int, int]) -> "GateOp":
        """Return the gate acting on mapping[q] for each of its qubits."""
        return replace(
            self,
            targets=tuple(mapping[q] for q in self.targets),
            controls=tuple(mapping[q] for q in self.controls),
        )

    def matrix(self) -> np.ndarray:
        """Unitary matrix on the gate's targets (controls of MCPAULI excluded)."""
        if self.kind == "RX":
            c, s = math.cos(self.angle / 2), math.sin(self.angle / 2)
            return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
        if self.kind == "RZ":
            phase = np.exp(-0.5j * self.angle)
            return np.diag([phase, np.conj(phase)])
        if self.kind == "RZZ":
            phase = np.exp(-0.5j * self.angle)
            return np.diag([phase, np.conj(phase), np.conj(phase), phase])
        if self.kind == "CPAULI":
            matrix = np.eye(4, dtype=complex)
            matrix[2:, 2:] = fixed_matrix(self.pauli)
            return matrix
        if self.kind == "MCPAULI":
            return fixed_matrix(self.pauli)
        return fixed_matrix(self.kind)


def fixed_matrix(kind: str) -> np.ndarray:
    """Matrix of a parameter-free gate kind or a Pauli letter."""
    with THREAD_LOCK:
        if not _FIXED_MATRICES:
            s2 = 1 / math.sqrt(2)
            _FIXED_MATRICES["H"] = np.array([[s2, s2], [s2, -s2]], dtype=complex)
            _FIXED_MATRICES["S"] = np.diag([1, 1j]).astype(complex)
            _FIXED_MATRICES["SDG"] = np.diag([1, -1j]).astype(complex)
            _FIXED_MATRICES["X"] = np.array([[0, 1], [1, 0]], dtype=complex)
            _FIXED_MATRICES["Y"] = np.array([[0, -1j], [1j, 0]], dtype=complex)
            _FIXED_MATRICES["Z"] = np.diag([1, -1]).astype(complex)
            cnot = np.eye(4, dtype=complex)
            cnot[2:, 2:] = _FIXED_MATRICES["X"]
            _FIXED_MATRICES["CNOT"] = cnot
            _FIXED_MATRICES["CZ"] = np.diag([1, 1, 1, -1]).astype(complex)
        return _FIXED_MATRICES[kind]


class Circuit:
    """An ordered gate sequence on n_qubits."""

    def __init__(self, n_qubits: int, gates: Iterable[GateOp] = None):
        """Constructor"""
        if n_qubits < 1:
            raise ValueError(f"A circuit needs at least one qubit, got {n_qubits}.")
        self.n_qubits = n_qubits
        self.gates: List[GateOp] = []
        for gate in gates or []:
            self.append(gate)

    def append(self, gate: GateOp) -> "Circuit":
        """Append a gate after checking its qubits are in range."""
        for qubit in gate.qubits:
            if not 0 <= qubit < self.n_qubits:
                raise ValueError(
                    f"Gate {gate.kind} on qubit {qubit} is out of range for {self.n_qubits} qubits."
                )
        self.gates.append(gate)
        return self

    def extend(self, gates: Iterable[GateOp]) -> "Circuit":
        """Append several gates."""
        for gate in gates:
            self.append(gate)
        return self

    def copy(self) -> "Circuit":
        """Shallow copy (gates are immutable)."""
        return Circuit(self.n_qubits, self.gates)

    def __len__(self):
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    def inverse(self) -> "Circuit":
        """The adjoint circuit: reversed order, each gate inverted."""
        return Circuit(self.n_qubits, [gate.inverse() for gate in reversed(self.gates)])

    def parameters(self) -> Dict[int, float]:
        """Map of parameter index to the (unsigned) bound angle."""
        result = {}
        for gate in self.gates:
            if gate.param_index is not None:
                result[gate.param_index] = gate.param_sign * gate.angle
        return result

    def bind(self, angles: Mapping[int, float]) -> "Circuit":
        """
        Return a copy with every gate whose parameter index is in angles re-bound.

        Gates that came from an inverse keep their negated sign.
        """
        gates = []
        for gate in self.gates:
            if gate.param_index is not None and gate.param_index in angles:
                gate = replace(gate, angle=gate.param_sign * float(angles[gate.param_index]))
            gates.append(gate)
        return Circuit(self.n_qubits, gates)

    def relabel(self, mapping: Mapping[int, int], n_qubits: int) -> "Circuit":
        """Move every gate onto mapped qubits of a register of n_qubits."""
        return Circuit(n_qubits, [gate.relabel(mapping) for gate in self.gates])

    def is_clifford(self) -> bool:
        """True when every gate is Clifford."""
        return all(gate.is_clifford() for gate in self.gates)

    def qubit_graph(self) -> nx.Graph:
        """Graph of qubits with an edge for each pair coupled by a multi-qubit gate."""
        graph = nx.Graph()
        graph.add_nodes_from(range(self.n_qubits))
        for gate in self.gates:
            qubits = gate.qubits
            for i, a in enumerate(qubits):
                for b in qubits[i + 1 :]:
                    graph.add_edge(a, b)
        return graph

    def active_qubits(self) -> Tuple[int, ...]:
        """Sorted qubits touched by at least one gate."""
        return tuple(sorted({q for gate in self.gates for q in gate.qubits}))

    def lightcone(self, support: Iterable[int]) -> Tuple[List[int], Tuple[int, ...]]:
        """
        Backward light cone of an observable supported on support.

        Walks the gates from last to first; a gate is kept when it touches the
        current support, which then grows by the gate's qubits. Gates not kept
        commute with everything after them that matters and cancel in U^dagger O U.

        Returns:
            (positions of kept gates in circuit order, sorted final support)
        """
        current = set(support)
        kept = []
        for position in range(len(self.gates) - 1, -1, -1):
            qubits = self.gates[position].qubits
            if current.intersection(qubits):
                kept.append(position)
                current.update(qubits)
        return sorted(kept), tuple(sorted(current))

    def gate_counts(self) -> Dict[str, int]:
        """Number of gates of each kind."""
        counts: Dict[str, int] = {}
        for gate in self.gates:
            counts[gate.kind] = counts.get(gate.kind, 0) + 1
        return counts

    def depth(self) -> int:
        """Circuit depth with gates scheduled as early as their qubits allow."""
        level = [0] * self.n_qubits
        for gate in self.gates:
            start = max(level[q] for q in gate.qubits) + 1
            for q in gate.qubits:
                level[q] = start
        return max(level) if level else 0

    def __repr__(self):
        return f"Circuit(n_qubits={self.n_qubits}, gates={len(self.gates)})"


def lower_rzz(circuit: Circuit) -> Circuit:
    """
    Replace every RZZ(t) by CNOT, RZ(t) on the second qubit, CNOT.

    The lowered circuit implements the same unitary and is used for gate-count
    reporting only.
    """
    gates = []
    for gate in circuit.gates:
        if gate.kind == "RZZ":
            a, b = gate.targets
            gates.append(GateOp("CNOT", (a, b)))
            gates.append(
                GateOp(
                    "RZ",
                    (b,),
                    angle=gate.angle,
                    param_index=gate.param_index,
                    param_sign=gate.param_sign,
                )
            )
            gates.append(GateOp("CNOT", (a, b)))
        else:
            gates.append(gate)
    return Circuit(circuit.n_qubits, gates)


def controlled_pauli_gates(
    control: int, pauli_letters: Mapping[int, str]
) -> List[GateOp]:
    """Controlled single-qubit Paulis implementing a controlled Pauli string (phase +1)."""
    return [
        GateOp("CPAULI", (control, target), pauli=letter)
        for target, letter in sorted(pauli_letters.items())
        if letter != "I"
    ]
