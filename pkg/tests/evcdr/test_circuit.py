"""
Unit test for the circuit.py module
"""

# pylint: disable=C0301,C0103,W0632,W0702,W0101,C0302,W0105,E0401,C0413,R0903,W0613,R0912
import sys
import os
import math
import pytest
import numpy as np

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "../../src")))

from evcdr.circuit import Circuit, GateOp, controlled_pauli_gates, lower_rzz
from evcdr.statevector import Statevector


def unitary(circuit: Circuit) -> np.ndarray:
    """Dense unitary of a circuit built column by column."""
    dimension = 1 << circuit.n_qubits
    columns = []
    for k in range(dimension):
        basis = np.zeros(dimension, dtype=complex)
        basis[k] = 1.0
        columns.append(Statevector(basis, circuit.n_qubits).evolve(circuit).amplitudes)
    return np.array(columns).T


def sample_circuit() -> Circuit:
    """A small parameterized circuit."""
    return Circuit(
        3,
        [
            GateOp("H", (0,)),
            GateOp("RX", (1,), angle=0.3, param_index=0),
            GateOp("RZZ", (0, 1), angle=0.7, param_index=1),
            GateOp("S", (2,)),
            GateOp("CNOT", (1, 2)),
            GateOp("RZ", (2,), angle=-1.1, param_index=2),
        ],
    )


def test_gate_validation():
    """Test that malformed gates are rejected."""

    with pytest.raises(ValueError):
        GateOp("FOO", (0,))
    with pytest.raises(ValueError):
        GateOp("CNOT", (0,))
    with pytest.raises(ValueError):
        GateOp("CNOT", (1, 1))
    with pytest.raises(ValueError):
        GateOp("RX", (0,))
    with pytest.raises(ValueError):
        GateOp("CPAULI", (0, 1), pauli="Q")
    with pytest.raises(ValueError):
        Circuit(2).append(GateOp("H", (2,)))


def test_clifford_detection():
    """Test rotations at multiples of pi/2 count as Clifford."""

    assert GateOp("RX", (0,), angle=math.pi / 2).is_clifford()
    assert GateOp("RZZ", (0, 1), angle=-3 * math.pi / 2).clifford_multiple() == 1
    assert not GateOp("RZ", (0,), angle=0.4).is_clifford()
    assert GateOp("CPAULI", (0, 1), pauli="Y").is_clifford()
    assert not GateOp("MCPAULI", (0,), pauli="X", controls=(1,), control_values=(1,)).is_clifford()


def test_inverse():
    """Test that a circuit followed by its inverse is the identity."""

    circuit = sample_circuit()
    combined = circuit.copy().extend(circuit.inverse().gates)
    assert np.allclose(unitary(combined), np.eye(8), atol=1e-12)
    inverse = circuit.inverse()
    assert inverse.gates[0].param_sign == -1
    assert inverse.parameters() == pytest.approx(circuit.parameters())


def test_bind():
    """Test re-binding parameters in a circuit and its inverse."""

    circuit = sample_circuit()
    angles = {0: 0.9, 2: 0.25}
    bound = circuit.bind(angles)
    assert bound.parameters()[0] == pytest.approx(0.9)
    assert bound.parameters()[1] == pytest.approx(0.7)
    inverse = circuit.inverse().bind(angles)
    assert np.allclose(unitary(inverse), unitary(bound).conj().T, atol=1e-12)


def test_lower_rzz():
    """Test that the CNOT-RZ-CNOT lowering keeps the unitary."""

    circuit = sample_circuit()
    lowered = lower_rzz(circuit)
    assert "RZZ" not in lowered.gate_counts()
    assert lowered.gate_counts()["CNOT"] == 3
    assert np.allclose(unitary(lowered), unitary(circuit), atol=1e-12)


def test_rzz_matrix():
    """Test RZZ(t) = exp(-i t ZZ / 2)."""

    theta = 0.37
    circuit = Circuit(2, [GateOp("RZZ", (0, 1), angle=theta)])
    expected = np.diag(np.exp(-0.5j * theta * np.array([1, -1, -1, 1])))
    assert np.allclose(unitary(circuit), expected, atol=1e-12)


def test_lightcone():
    """Test the backward light cone of a chain of gates."""

    circuit = Circuit(
        4,
        [
            GateOp("H", (3,)),
            GateOp("CNOT", (2, 3)),
            GateOp("CNOT", (1, 2)),
            GateOp("RX", (0,), angle=0.1),
            GateOp("CNOT", (0, 1)),
        ],
    )
    kept, support = circuit.lightcone([1])
    assert kept == [0, 1, 2, 3, 4]
    assert support == (0, 1, 2, 3)
    kept, support = circuit.lightcone([3])
    assert kept == [0, 1]
    assert support == (2, 3)


def test_depth_and_graph():
    """Test depth, active qubits and the coupling graph."""

    circuit = sample_circuit()
    assert circuit.depth() == 4
    assert circuit.active_qubits() == (0, 1, 2)
    graph = circuit.qubit_graph()
    assert sorted(graph.edges()) == [(0, 1), (1, 2)]


def test_controlled_pauli_gates():
    """Test the controlled Pauli-string decomposition skips identities."""

    gates = controlled_pauli_gates(3, {0: "Z", 1: "I", 2: "X"})
    assert [(g.targets, g.pauli) for g in gates] == [((3, 0), "Z"), ((3, 2), "X")]


if __name__ == "__main__":
    pytest.main([__file__])
