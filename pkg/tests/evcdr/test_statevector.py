"""
Unit test for the statevector.py module
"""

# pylint: disable=C0301,C0103,W0632,W0702,W0101,C0302,W0105,E0401,C0413,R0903,W0613,R0912
import sys
import os
import math
import pytest
import numpy as np

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "../../src")))

from evcdr.circuit import Circuit, GateOp
from evcdr.pauli import PauliString
from evcdr.statevector import (
    DensityMatrix,
    NoiseModel,
    ShotRecord,
    ShotTable,
    Statevector,
    apply_gate,
    depolarizing_channel,
    evolve_channel_exact,
    expectation,
    measure_shots,
    pauli_channel,
    postselected_block,
    run_density_matrix,
    sample_shots,
    sample_trajectory,
    scale_channel,
)


def bell_circuit() -> Circuit:
    """H then CNOT on two qubits."""
    return Circuit(2, [GateOp("H", (0,)), GateOp("CNOT", (0, 1))])


def test_statevector_basics():
    """Test zero state, single gates and expectations."""

    plus = apply_gate(Statevector.zero(1), GateOp("H", (0,)))
    assert np.allclose(plus.amplitudes, [1 / math.sqrt(2), 1 / math.sqrt(2)])
    assert expectation(plus, PauliString.from_label("X")) == pytest.approx(1.0)
    theta = 0.83
    rotated = Statevector.zero(1).evolve(Circuit(1, [GateOp("RX", (0,), angle=theta)]))
    assert expectation(rotated, PauliString.from_label("Z")) == pytest.approx(math.cos(theta))
    assert expectation(rotated, PauliString.from_label("Y")) == pytest.approx(-math.sin(theta))
    assert rotated.norm() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        expectation(rotated, PauliString.from_label("iX"))
    with pytest.raises(ValueError):
        Statevector(np.ones(3))


def test_little_endian_order():
    """Test that qubit q is bit q of the amplitude index."""

    state = Statevector.zero(3).evolve(Circuit(3, [GateOp("X", (1,))]))
    assert abs(state.amplitudes[2]) == pytest.approx(1.0)
    bell = Statevector.zero(2).evolve(bell_circuit())
    assert np.allclose(np.abs(bell.amplitudes) ** 2, [0.5, 0, 0, 0.5])
    assert expectation(bell, PauliString.from_label("ZZ")) == pytest.approx(1.0)
    assert expectation(bell, PauliString.from_label("YY")) == pytest.approx(-1.0)


def test_density_matrix_matches_statevector():
    """Test noiseless density-matrix evolution against the statevector."""

    circuit = Circuit(
        3,
        [
            GateOp("H", (0,)),
            GateOp("RZZ", (0, 2), angle=0.4),
            GateOp("RX", (1,), angle=1.3),
            GateOp("CPAULI", (1, 2), pauli="Y"),
            GateOp("SDG", (0,)),
        ],
    )
    state = Statevector.zero(3).evolve(circuit)
    rho = run_density_matrix(circuit)
    assert np.allclose(rho.entries, state.to_density_matrix().entries, atol=1e-12)
    assert rho.check()
    for label in ("ZII", "XYZ", "IZY"):
        p = PauliString.from_label(label)
        assert rho.expectation(p) == pytest.approx(expectation(state, p), abs=1e-12)


def test_depolarizing_channel():
    """Test (1 - delta) rho + delta I / d on the whole register."""

    state = Statevector.zero(2).evolve(bell_circuit()).to_density_matrix()
    delta = 0.3
    noisy = evolve_channel_exact(state, depolarizing_channel(2, delta))
    expected = (1 - delta) * state.entries + delta * np.eye(4) / 4
    assert np.allclose(noisy.entries, expected, atol=1e-12)
    partial = evolve_channel_exact(state, depolarizing_channel(1, 1.0), [1])
    assert partial.expectation(PauliString.from_label("ZZ")) == pytest.approx(0.0, abs=1e-12)
    assert partial.trace() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        depolarizing_channel(2, 1.5)


def test_pauli_channel():
    """Test the sparse channel builder and exact application."""

    channel = pauli_channel({"XI": 0.1, "ZZ": 0.2})
    assert channel.errors[0][0].is_identity()
    assert channel.errors[0][1] == pytest.approx(0.7)
    assert not channel.is_identity()
    assert pauli_channel({"II": 0.4}).is_identity()
    rho = DensityMatrix.zero(2)
    out = evolve_channel_exact(rho, channel)
    assert out.entries[1, 1].real == pytest.approx(0.1)
    assert out.entries[0, 0].real == pytest.approx(0.9)
    with pytest.raises(ValueError):
        pauli_channel({"XI": 0.7, "ZZ": 0.6})
    with pytest.raises(ValueError):
        pauli_channel({"XI": -0.1})
    with pytest.raises(ValueError):
        pauli_channel({"XI": 0.1, "Z": 0.1})


def test_noise_locations():
    """Test per-gate noise placement and scaling."""

    circuit = bell_circuit()
    noise = NoiseModel(p1=0.01, p2=0.02)
    locations = noise.locations(circuit)
    assert [location.qubits for location in locations] == [(0,), (0, 1)]
    assert NoiseModel().is_noiseless()
    scaled = noise.scaled(2.0)
    assert scaled.p1 == pytest.approx(0.02)
    assert NoiseModel(p1=0.6).scaled(3.0).p1 == 1.0
    glob = NoiseModel(global_channel=depolarizing_channel(2, 0.1))
    assert glob.locations(circuit)[-1].position == len(circuit)
    with pytest.raises(ValueError):
        NoiseModel(global_channel=depolarizing_channel(3, 0.1)).locations(circuit)
    with pytest.raises(ValueError):
        NoiseModel(p2=1.2)


def test_gate_and_readout_channels():
    """Test Pauli channels attached to gate kinds and at readout."""

    circuit = Circuit(2, [GateOp("H", (0,)), GateOp("CNOT", (0, 1)), GateOp("RX", (1,), angle=0.3)])
    after_cnot = pauli_channel({"ZI": 0.2})
    readout = pauli_channel({"X": 0.1})
    noise = NoiseModel(p1=0.01, gate_channels=(("CNOT", after_cnot),), readout_channel=readout)
    locations = noise.locations(circuit)
    assert [(location.position, location.qubits) for location in locations] == [(0, (0,)), (1, (0, 1)), (2, (1,)), (3, (0,)), (3, (1,))]
    assert locations[1].channel == after_cnot
    assert locations[3].channel == readout
    assert not noise.is_noiseless()
    assert NoiseModel(gate_channels=(("H", pauli_channel({"Z": 0.0})),)).is_noiseless()

    bell = bell_circuit()
    dephased = run_density_matrix(bell, NoiseModel(gate_channels=(("CNOT", after_cnot),)))
    assert dephased.expectation(PauliString.from_label("XX")) == pytest.approx(0.6, abs=1e-12)
    assert dephased.expectation(PauliString.from_label("ZZ")) == pytest.approx(1.0, abs=1e-12)
    flipped = run_density_matrix(bell, NoiseModel(readout_channel=readout))
    assert flipped.expectation(PauliString.from_label("ZZ")) == pytest.approx(0.64, abs=1e-12)
    assert flipped.expectation(PauliString.from_label("XX")) == pytest.approx(1.0, abs=1e-12)

    scaled = noise.scaled(2.0)
    assert dict((p.to_label(), rate) for p, rate in scaled.gate_channels[0][1].errors) == pytest.approx({"II": 0.6, "ZI": 0.4})
    assert dict((p.to_label(), rate) for p, rate in scaled.readout_channel.errors) == pytest.approx({"I": 0.8, "X": 0.2})
    saturated = scale_channel(depolarizing_channel(1, 0.4), 3.0)
    assert saturated.uniform == pytest.approx(1.0)
    assert saturated.errors[0][1] == pytest.approx(0.0)

    with pytest.raises(ValueError):
        NoiseModel(gate_channels=(("CNOT", depolarizing_channel(1, 0.1)),))
    with pytest.raises(ValueError):
        NoiseModel(gate_channels=(("SWAP", depolarizing_channel(2, 0.1)),))
    with pytest.raises(ValueError):
        NoiseModel(gate_channels=(("H", readout), ("H", readout)))
    with pytest.raises(ValueError):
        NoiseModel(readout_channel=depolarizing_channel(2, 0.1))


def test_postselected_block():
    """Test the ancilla block of a Bell state."""

    state = Statevector.zero(2).evolve(bell_circuit())
    block = postselected_block(state, [1])
    assert np.trace(block).real == pytest.approx(0.5)
    assert block[0, 0].real == pytest.approx(0.5)
    everything = postselected_block(state, [1], np.array([True, True]))
    assert np.trace(everything).real == pytest.approx(1.0)
    dense = postselected_block(state.to_density_matrix(), [1], np.array([True, True]))
    assert np.allclose(dense, everything)


def test_measure_shots():
    """Test noiseless shot sampling in each ancilla basis."""

    plus = Circuit(2, [GateOp("H", (1,))])
    state = Statevector.zero(2).evolve(plus)
    x_table = measure_shots(state, "X", 200, seed=3)
    assert np.all(x_table.ancilla_outcomes == 1)
    assert np.all(x_table.system_bits == 0)
    z_table = measure_shots(state, "Z", 4000, seed=3)
    assert abs(np.mean(z_table.ancilla_outcomes)) < 0.1
    y_state = Statevector.zero(1).evolve(Circuit(1, [GateOp("H", (0,)), GateOp("S", (0,))]))
    y_table = measure_shots(y_state, "Y", 100, seed=1)
    assert np.all(y_table.ancilla_outcomes == 1)
    with pytest.raises(ValueError):
        measure_shots(state, "Z", 0, seed=3)


def test_sample_shots_matches_density_matrix():
    """Test trajectory sampling against exact noisy probabilities."""

    circuit = Circuit(2, [GateOp("H", (0,)), GateOp("CNOT", (0, 1)), GateOp("RX", (1,), angle=0.6)])
    noise = NoiseModel(p1=0.05, p2=0.1)
    rho = run_density_matrix(circuit, noise)
    exact = rho.expectation(PauliString.from_label("IZ"))
    n_shots = 20000
    table = sample_shots(circuit, noise, n_shots, seed=11, ancilla_basis="Z")
    assert len(table) == n_shots
    sigma = math.sqrt((1 - exact**2) / n_shots)
    assert abs(np.mean(table.ancilla_outcomes) - exact) < 4 * sigma


def test_sampling_is_deterministic():
    """Test that the output depends on the seed only, not on batching."""

    circuit = bell_circuit()
    noise = NoiseModel(p1=0.1, p2=0.1)
    first = sample_shots(circuit, noise, 500, seed=5, ancilla_basis="X", batch_size=7)
    second = sample_shots(circuit, noise, 500, seed=5, ancilla_basis="X", batch_size=500)
    assert np.array_equal(first.ancilla_outcomes, second.ancilla_outcomes)
    assert np.array_equal(first.system_bits, second.system_bits)
    other = sample_shots(circuit, noise, 500, seed=6, ancilla_basis="X")
    assert not np.array_equal(first.ancilla_outcomes, other.ancilla_outcomes)
    several = sample_shots(circuit, noise, 501, seed=5, shots_per_trajectory=10)
    assert len(several) == 501
    record = sample_trajectory(circuit, noise, seed=5)
    assert isinstance(record, ShotRecord)
    assert len(record.system_bits) == 1


def test_shot_table():
    """Test conversions between ShotRecord values and ShotTable."""

    records = [ShotRecord((0, 1), 1, "Z"), ShotRecord((1, 1), -1, "Z")]
    table = ShotTable.from_records(records, [4, 7])
    assert table.system_labels == (4, 7)
    assert list(table.records()) == records
    joined = ShotTable.concatenate([table, table])
    assert len(joined) == 4
    assert len(joined.subset(joined.ancilla_outcomes > 0)) == 2
    with pytest.raises(ValueError):
        ShotTable.from_records([ShotRecord((0,), 1, "Z"), ShotRecord((0,), 1, "X")])
    with pytest.raises(ValueError):
        ShotTable(np.zeros((2, 2)), np.ones(2), "Q")


if __name__ == "__main__":
    pytest.main([__file__])
