"""
Unit test for the cdr.py module
"""

# pylint: disable=C0301,C0103,W0632,W0702,W0101,C0302,W0105,E0401,C0413,R0903,W0613,R0912
import sys
import os
import math
import tempfile
import pytest
import numpy as np

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "../../src")))

from evcdr.cdr import (
    ExactBackend,
    RegressionFit,
    SampledBackend,
    TrainingCircuitSpec,
    TrainingDatum,
    bootstrap_variance,
    evaluate_training,
    evcdr_estimate,
    fit,
    read_training_data,
    round_to_clifford,
    sample_clifford_angle,
    sample_training_set,
    train,
    training_frame,
)
from evcdr.circuit import Circuit, GateOp
from evcdr.echo_verification import build_ev_circuit, estimate, exact_tomogram
from evcdr.exceptions import NumericalError
from evcdr.pauli import PauliString
from evcdr.statevector import NoiseModel, pauli_channel

BASE_ANGLES = {0: 0.9, 1: 0.4, 2: 1.3}


def base_circuit():
    """Echo circuit whose ideal value is cos(theta_0)."""
    u = Circuit(
        2,
        [
            GateOp("RX", (0,), angle=BASE_ANGLES[0], param_index=0),
            GateOp("RX", (1,), angle=BASE_ANGLES[1], param_index=1),
            GateOp("RZZ", (0, 1), angle=BASE_ANGLES[2], param_index=2),
        ],
    )
    return build_ev_circuit(u, PauliString.from_label("ZI"))


def z_type_noise() -> NoiseModel:
    """A channel whose system parts are all Z-type, so the noise is affine on every circuit."""
    return NoiseModel(global_channel=pauli_channel({"ZIX": 0.05, "IZZ": 0.1, "ZZI": 0.03, "IIY": 0.02}))


def affine_data(slope: float, intercept: float, axis: str = "Z"):
    """Training data lying exactly on an affine map."""
    data = []
    for c in np.linspace(-0.9, 0.9, 7):
        datum = TrainingDatum(float(c), 0.0, 0.0)
        y = slope * datum.abscissa(axis) + intercept
        data.append(TrainingDatum(float(c), y, y, 0.01, 0.01))
    return data


def test_round_to_clifford():
    """Test rounding to the nearest multiple of pi/2."""

    assert round_to_clifford(0.7 * math.pi) == pytest.approx(math.pi / 2)
    assert round_to_clifford(0.75 * math.pi) == pytest.approx(math.pi)
    assert round_to_clifford(-0.25 * math.pi) == pytest.approx(-math.pi / 2)
    assert round_to_clifford(0.2) == 0.0
    assert round_to_clifford(-3.0) == pytest.approx(-math.pi)
    with pytest.raises(ValueError):
        round_to_clifford(math.nan)


def test_training_spec_angles():
    """Test that only the free indices keep their angle."""

    spec = TrainingCircuitSpec(BASE_ANGLES, (0,))
    assert spec.L == 1
    angles = spec.angles()
    assert angles[0] == 0.9
    assert angles[1] == 0.0
    assert angles[2] == pytest.approx(math.pi / 2)


def test_sample_training_set():
    """Test distinct subsets, determinism and the size checks."""

    base = base_circuit()
    specs = sample_training_set(base, 2, 3, seed=4)
    assert sorted(spec.free_indices for spec in specs) == [(0, 1), (0, 2), (1, 2)]
    again = sample_training_set(base, 2, 3, seed=4)
    assert [spec.free_indices for spec in specs] == [spec.free_indices for spec in again]
    assert len({spec.seed for spec in specs}) == 3
    assert all(spec.base_angles == BASE_ANGLES for spec in specs)
    with pytest.raises(ValueError):
        sample_training_set(base, 4, 3, seed=4)
    with pytest.raises(ValueError):
        sample_training_set(base, 2, 3, seed=4, budget=1)
    with pytest.raises(ValueError):
        sample_training_set(base, 1, 0, seed=4)
    with pytest.warns(UserWarning):
        assert len(sample_training_set(base, 1, 5, seed=4)) == 5


def test_sampled_clifford_rounding():
    """Test training specs whose rounded angles are drawn around the nearest multiple of pi/2."""

    base = base_circuit()
    nearest = sample_training_set(base, 1, 3, seed=4)
    assert all(spec.clifford_angles == {} for spec in nearest)
    specs = sample_training_set(base, 1, 3, seed=4, rounding="sampled", sigma=1.0)
    again = sample_training_set(base, 1, 3, seed=4, rounding="sampled", sigma=1.0)
    assert [spec.clifford_angles for spec in specs] == [spec.clifford_angles for spec in again]
    for spec in specs:
        assert set(spec.clifford_angles) == set(BASE_ANGLES) - set(spec.free_indices)
        angles = spec.angles()
        for index, angle in spec.clifford_angles.items():
            assert angle / (math.pi / 2) == pytest.approx(round(angle / (math.pi / 2)), abs=1e-12)
            assert angles[index] == angle
    rng = np.random.default_rng(5)
    assert sample_clifford_angle(0.3, 2, 0.05, rng) == 0.0
    assert sample_clifford_angle(1.4, 4, 0.05, rng) == pytest.approx(math.pi / 2)
    draws = {sample_clifford_angle(0.1, 2, 2.0, rng) for _ in range(200)}
    assert len(draws) > 1
    assert 0.0 in draws
    with pytest.raises(ValueError):
        sample_clifford_angle(0.3, 2, 0.0, rng)
    with pytest.raises(ValueError):
        sample_training_set(base, 1, 3, seed=4, rounding="random")


def test_evaluate_training_noiseless():
    """Test the ideal value from the stabilizer expansion and a noiseless backend."""

    base = base_circuit()
    datum = evaluate_training(base, TrainingCircuitSpec(BASE_ANGLES, (0,)), ExactBackend())
    assert datum.ideal_value == pytest.approx(math.cos(0.9), abs=1e-12)
    assert datum.noisy_x == pytest.approx(datum.abscissa("X"), abs=1e-12)
    assert datum.noisy_z == pytest.approx(datum.abscissa("Z"), abs=1e-12)
    assert datum.var_x == 0.0
    assert datum.free_indices == (0,)
    rounded = evaluate_training(base, TrainingCircuitSpec(BASE_ANGLES, (1,)), ExactBackend())
    assert rounded.ideal_value == pytest.approx(0.0, abs=1e-12)


def test_evaluate_training_sampled():
    """Test that sampled training points carry a bootstrap variance."""

    base = base_circuit()
    backend = SampledBackend(NoiseModel(p1=0.01), 500)
    datum = evaluate_training(base, TrainingCircuitSpec(BASE_ANGLES, (0,), seed=3), backend, n_resamples=50)
    assert datum.var_x > 0
    assert datum.var_z > 0
    assert 0 < datum.p0_hat <= 1


def test_fit_recovers_affine_map():
    """Test exact recovery of slope and intercept."""

    z_fit = fit(affine_data(0.7, 0.1), "Z")
    assert z_fit.slope == pytest.approx(0.7, abs=1e-10)
    assert z_fit.intercept == pytest.approx(0.1, abs=1e-10)
    assert z_fit.residual_sum == pytest.approx(0.0, abs=1e-12)
    assert z_fit.n_points == 7
    x_fit = fit(affine_data(0.5, -0.2, "X"), "X", "ols")
    assert x_fit.slope == pytest.approx(0.5, abs=1e-10)
    assert x_fit.intercept == pytest.approx(-0.2, abs=1e-10)
    origin = fit(affine_data(0.6, 0.0), "Z", zero_intercept=True)
    assert origin.slope == pytest.approx(0.6, abs=1e-10)
    assert origin.intercept == 0.0
    assert z_fit.inverse(z_fit(0.3)) == pytest.approx(0.3)


def test_wls_equals_ols_for_equal_weights():
    """Test that equal variances give the ordinary least-squares fit."""

    rng = np.random.default_rng(12)
    data = [
        TrainingDatum(float(c), float(rng.normal()), float(rng.normal()), 0.04, 0.04)
        for c in rng.uniform(-1, 1, size=9)
    ]
    for axis in ("X", "Z"):
        weighted = fit(data, axis, "wls")
        ordinary = fit(data, axis, "ols")
        assert weighted.slope == pytest.approx(ordinary.slope, abs=1e-10)
        assert weighted.intercept == pytest.approx(ordinary.intercept, abs=1e-10)


def test_wls_beats_ols_under_heteroscedastic_noise():
    """Test that weighting by inverse variance lowers the spread of the fitted parameters."""

    rng = np.random.default_rng(31)
    ideal = np.linspace(-0.9, 0.9, 10)
    deviations = np.geomspace(0.005, 0.3, len(ideal))
    rng.shuffle(deviations)
    slopes = {"wls": [], "ols": []}
    intercepts = {"wls": [], "ols": []}
    for _ in range(1000):
        data = []
        for c, deviation in zip(ideal, deviations):
            datum = TrainingDatum(float(c), 0.0, 0.0)
            y = 0.7 * datum.abscissa("Z") + 0.1 + rng.normal(0.0, deviation)
            data.append(TrainingDatum(float(c), 0.0, float(y), 0.0, float(deviation**2)))
        for weighting in ("wls", "ols"):
            result = fit(data, "Z", weighting)
            slopes[weighting].append(result.slope)
            intercepts[weighting].append(result.intercept)
    assert np.var(slopes["wls"]) <= np.var(slopes["ols"])
    assert np.var(intercepts["wls"]) <= np.var(intercepts["ols"])
    assert np.mean(slopes["wls"]) == pytest.approx(0.7, abs=0.01)


def test_wls_is_invariant_to_weight_scaling():
    """Test that multiplying every variance by a constant leaves the fit unchanged."""

    rng = np.random.default_rng(17)
    data = [
        TrainingDatum(float(c), float(rng.normal()), float(rng.normal()), float(v), float(v))
        for c, v in zip(rng.uniform(-1, 1, size=8), rng.uniform(0.001, 0.05, size=8))
    ]
    for scale in (1e-3, 37.0):
        scaled = [TrainingDatum(d.ideal_value, d.noisy_x, d.noisy_z, d.var_x * scale, d.var_z * scale) for d in data]
        for axis in ("X", "Z"):
            reference = fit(data, axis, "wls")
            result = fit(scaled, axis, "wls")
            assert result.slope == pytest.approx(reference.slope, abs=1e-10)
            assert result.intercept == pytest.approx(reference.intercept, abs=1e-10)


def test_fit_errors():
    """Test rank-deficient and malformed fits."""

    data = affine_data(0.7, 0.1)
    with pytest.raises(ValueError):
        fit(data, "Z", "lasso")
    with pytest.raises(ValueError):
        fit(data, "Y")
    with pytest.raises(NumericalError):
        fit(data[:1], "Z")
    with pytest.raises(NumericalError):
        fit([TrainingDatum(0.5, 0.1, 0.2), TrainingDatum(0.5, 0.3, 0.4)], "Z")
    with pytest.raises(NumericalError):
        RegressionFit(0.0, 0.1, "ols", 0.0).inverse(0.5)


def test_normalize_purity_ordinate():
    """Test division by the Bloch norm."""

    datum = TrainingDatum(0.2, 0.3, 0.4, bloch_norm=0.5)
    assert datum.ordinate("Z", normalize_purity=True) == pytest.approx(0.8)
    assert datum.ordinate("X") == 0.3


def test_evcdr_is_exact_for_affine_noise():
    """Test that EVCDR removes noise that acts affinely on every circuit."""

    base = base_circuit()
    noise = z_type_noise()
    fit_x, fit_z, data = train(base, 2, 3, ExactBackend(noise), seed=7)
    assert len(data) == 3
    assert fit_z.slope == pytest.approx(0.86, abs=1e-9)
    assert fit_x.slope == pytest.approx(0.76, abs=1e-9)
    assert fit_z.intercept == pytest.approx(0.0, abs=1e-9)
    assert fit_x.intercept == pytest.approx(0.0, abs=1e-9)
    tomogram = exact_tomogram(base, noise)
    result = evcdr_estimate(tomogram, fit_x, fit_z)
    assert result.value == pytest.approx(math.cos(0.9), abs=1e-9)
    assert result.variant == "evcdr"
    assert abs(estimate(tomogram, "standard").value - math.cos(0.9)) > 1e-3
    clipped = evcdr_estimate(tomogram, fit_x, fit_z, clip=True)
    assert clipped.value == pytest.approx(result.value)


def test_training_frame_and_reader():
    """Test the training table written to CSV and read back."""

    data = [
        TrainingDatum(0.5, 0.6, 0.8, 0.01, 0.02, 0.62, 1.0, (0, 2)),
        TrainingDatum(-0.1, 0.9, -0.2, 0.0, 0.0, 0.5, 0.92, ()),
    ]
    frame = training_frame(data)
    assert list(frame["free_indices"]) == ["0;2", ""]
    with tempfile.TemporaryDirectory() as temp_dir:
        path = f"{temp_dir}/training.csv"
        frame.to_csv(path, index=False)
        loaded = read_training_data(path)
    assert [datum.free_indices for datum in loaded] == [(0, 2), ()]
    assert loaded[0].noisy_z == pytest.approx(0.8)
    assert loaded[1].bloch_norm == pytest.approx(0.92)
    with pytest.raises(ValueError):
        read_training_data(frame.drop(columns=["noisy_x"]))


def test_bootstrap_variance():
    """Test the bootstrap variance of a mean of +/-1 outcomes."""

    records = np.concatenate([np.ones(500), -np.ones(500)])
    variance = bootstrap_variance(records, 400, seed=2)
    assert variance == pytest.approx(1 / 1000, rel=0.3)
    assert bootstrap_variance(records, 400, seed=2) == variance
    assert bootstrap_variance(np.ones(10), 50, seed=2) == 0.0
    with pytest.raises(ValueError):
        bootstrap_variance([], 10, seed=2)
    with pytest.raises(ValueError):
        bootstrap_variance(records, 1, seed=2)


if __name__ == "__main__":
    pytest.main([__file__])
