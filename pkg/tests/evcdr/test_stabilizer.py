"""
Unit test for the stabilizer.py module
"""

# pylint: disable=C0301,C0103,W0632,W0702,W0101,C0302,W0105,E0401,C0413,R0903,W0613,R0912
import sys
import os
import math
import pytest
import numpy as np

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "../../src")))

from evcdr.circuit import Circuit, GateOp
from evcdr.pauli import PauliString, all_paulis
from evcdr.stabilizer import (
    StabilizerTableau,
    apply_clifford,
    clifford_expectation,
    conjugate,
    expand_non_clifford,
    near_clifford_expectation,
    stabilizer_expectation,
)
from evcdr.statevector import Statevector, expectation

CLIFFORD_KINDS = ["H", "S", "SDG", "X", "Y", "Z", "CNOT", "CZ", "CPAULI", "RX", "RZ", "RZZ"]


def gate_unitary(gate: GateOp, n_qubits: int) -> np.ndarray:
    """Dense unitary of one gate on n_qubits."""
    circuit = Circuit(n_qubits, [gate])
    dimension = 1 << n_qubits
    columns = []
    for k in range(dimension):
        basis = np.zeros(dimension, dtype=complex)
        basis[k] = 1.0
        columns.append(Statevector(basis, n_qubits).evolve(circuit).amplitudes)
    return np.array(columns).T


def random_gate(rng: np.random.Generator, n_qubits: int, kind: str) -> GateOp:
    """A random Clifford gate of the given kind."""
    qubits = [int(q) for q in rng.permutation(n_qubits)[:2]]
    if kind in ("CNOT", "CZ"):
        return GateOp(kind, tuple(qubits))
    if kind == "CPAULI":
        return GateOp(kind, tuple(qubits), pauli=str(rng.choice(["X", "Y", "Z"])))
    if kind == "RZZ":
        return GateOp(kind, tuple(qubits), angle=int(rng.integers(-4, 5)) * math.pi / 2)
    if kind in ("RX", "RZ"):
        return GateOp(kind, (qubits[0],), angle=int(rng.integers(-4, 5)) * math.pi / 2)
    return GateOp(kind, (qubits[0],))


def random_near_clifford(rng: np.random.Generator, n_qubits: int, n_gates: int, n_free: int) -> Circuit:
    """A random circuit with n_free parameterized non-Clifford rotations."""
    kinds = CLIFFORD_KINDS if n_qubits > 1 else ["H", "S", "SDG", "X", "Y", "Z", "RX", "RZ"]
    circuit = Circuit(n_qubits)
    free_positions = set(int(p) for p in rng.choice(n_gates, size=n_free, replace=False))
    index = 0
    for position in range(n_gates):
        if position in free_positions:
            kind = str(rng.choice(["RX", "RZ", "RZZ"] if n_qubits > 1 else ["RX", "RZ"]))
            qubits = tuple(int(q) for q in rng.permutation(n_qubits)[: 2 if kind == "RZZ" else 1])
            circuit.append(GateOp(kind, qubits, angle=float(rng.uniform(-math.pi, math.pi)), param_index=index))
            index += 1
        else:
            circuit.append(random_gate(rng, n_qubits, str(rng.choice(kinds))))
    return circuit


def test_zero_tableau():
    """Test the tableau of |0...0>."""

    tableau = StabilizerTableau.zero(3)
    assert tableau.check()
    assert [row.to_label() for row in tableau.stabilizers] == ["ZII", "IZI", "IIZ"]
    assert stabilizer_expectation(tableau, PauliString.from_label("ZZI")) == 1
    assert stabilizer_expectation(tableau, PauliString.from_label("-IZI")) == -1
    assert stabilizer_expectation(tableau, PauliString.from_label("XII")) == 0


def test_apply_clifford():
    """Test single gates on the tableau."""

    plus = apply_clifford(StabilizerTableau.zero(1), GateOp("H", (0,)))
    assert plus.stabilizers[0].to_label() == "X"
    bell = apply_clifford(apply_clifford(StabilizerTableau.zero(2), GateOp("H", (0,))), GateOp("CNOT", (0, 1)))
    assert bell.check()
    assert stabilizer_expectation(bell, PauliString.from_label("XX")) == 1
    assert stabilizer_expectation(bell, PauliString.from_label("YY")) == -1
    with pytest.raises(ValueError):
        apply_clifford(StabilizerTableau.zero(1), GateOp("RX", (0,), angle=0.3))
    with pytest.raises(ValueError):
        apply_clifford(StabilizerTableau.zero(1), GateOp("CNOT", (0, 1)))


def test_conjugate_matches_matrices():
    """Test G P G^dagger against dense matrices for every Clifford kind."""

    rng = np.random.default_rng(17)
    for kind in CLIFFORD_KINDS:
        for _ in range(4):
            gate = random_gate(rng, 2, kind)
            g = gate_unitary(gate, 2)
            for p in all_paulis(2):
                image = conjugate(gate, p)
                assert np.allclose(image.to_matrix(), g @ p.to_matrix() @ g.conj().T, atol=1e-12)


def test_clifford_expectations():
    """Test pure Clifford circuits give exactly -1, 0 or +1 matching the statevector."""

    rng = np.random.default_rng(3)
    for _ in range(30):
        n = int(rng.integers(1, 5))
        circuit = random_near_clifford(rng, n, 12, 0)
        state = Statevector.zero(n).evolve(circuit)
        for _ in range(3):
            p = PauliString(n, int(rng.integers(0, 1 << n)), int(rng.integers(0, 1 << n)))
            if not p.is_hermitian():
                continue
            value = clifford_expectation(circuit, p)
            assert value in (-1, 0, 1)
            assert value == pytest.approx(expectation(state, p), abs=1e-9)


def test_near_clifford_matches_statevector():
    """Test the branch expansion against dense simulation on random circuits."""

    rng = np.random.default_rng(42)
    for _ in range(40):
        n = int(rng.integers(1, 6))
        n_free = int(rng.integers(0, 5))
        circuit = random_near_clifford(rng, n, 14, n_free)
        state = Statevector.zero(n).evolve(circuit)
        near = expand_non_clifford(circuit, range(n_free))
        assert len(near.frames) <= 2**n_free
        assert near.norm() == pytest.approx(1.0, abs=1e-9)
        for _ in range(3):
            p = PauliString(n, int(rng.integers(0, 1 << n)), int(rng.integers(0, 1 << n)))
            assert near_clifford_expectation(near, p) == pytest.approx(expectation(state, p), abs=1e-9)


def test_expand_errors():
    """Test budget and consistency checks of the branch expansion."""

    circuit = Circuit(
        1,
        [GateOp("RX", (0,), angle=0.2, param_index=0), GateOp("RZ", (0,), angle=0.4, param_index=1)],
    )
    with pytest.raises(ValueError):
        expand_non_clifford(circuit, [0, 1], budget=1)
    with pytest.raises(ValueError):
        expand_non_clifford(circuit, [0, 5])
    with pytest.raises(ValueError):
        expand_non_clifford(circuit, [0])
    state = expand_non_clifford(circuit, [0, 1])
    assert len(state.branches) == 4
    assert state.source_angles == (0.2, 0.4)


if __name__ == "__main__":
    pytest.main([__file__])
