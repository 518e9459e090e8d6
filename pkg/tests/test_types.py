import numpy as np
import pytest

from robustpf.types import (DegenerateWeightsError, EpochMeasurements, ExtendedParticles, GmmCoefficients,
                            ParticleSet, PseudorangeMeasurement, SatelliteState, StateVector,
                            check_simplex, effective_sample_size, normalize_log_weights, wrap_angle)


def test_normalize_symmetric():
    np.testing.assert_allclose(normalize_log_weights([0.0, 0.0, 0.0]), [1 / 3] * 3, atol=1e-15)


def test_normalize_no_underflow():
    np.testing.assert_allclose(normalize_log_weights([-1000.0, -1000.0]), [0.5, 0.5], atol=1e-15)


def test_normalize_arithmetic():
    np.testing.assert_allclose(normalize_log_weights([np.log(1), np.log(3)]), [0.25, 0.75], atol=1e-15)


def test_normalize_keeps_minus_inf_as_zero():
    w = normalize_log_weights([-np.inf, 0.0])
    assert w[0] == 0.0 and w[1] == 1.0


def test_normalize_all_minus_inf():
    with pytest.raises(DegenerateWeightsError):
        normalize_log_weights([-np.inf, -np.inf])


@pytest.mark.parametrize("w, expected", [
    (np.full(4, 0.25), 4.0),
    ([1.0, 0.0, 0.0], 1.0),
    ([0.5, 0.25, 0.25], 1.0 / (0.25 + 0.0625 + 0.0625)),
])
def test_effective_sample_size(w, expected):
    assert effective_sample_size(w) == pytest.approx(expected, rel=1e-12)


def test_check_simplex_rejects():
    with pytest.raises(ValueError):
        check_simplex([0.5, 0.6])
    with pytest.raises(ValueError):
        check_simplex([1.5, -0.5])


def test_state_vector_heading_wrapped():
    s = StateVector(0.0, 0.0, heading=3 * np.pi / 2)
    assert -np.pi <= s.heading < np.pi
    assert s.heading == pytest.approx(-np.pi / 2)
    assert wrap_angle(np.pi) == pytest.approx(-np.pi)


def test_state_vector_rejects_nonfinite():
    with pytest.raises(ValueError):
        StateVector(np.nan, 0.0)


def test_state_vector_roundtrip():
    s = StateVector(1.0, 2.0, 0.5, 7.0)
    assert StateVector.from_array(s.to_array()) == s
    np.testing.assert_array_equal(StateVector(1.0, 2.0).to_array(4), [1, 2, 0, 0])


def test_particle_set_invariants():
    with pytest.raises(ValueError):
        ParticleSet(np.zeros((3, 2)), [0.5, 0.5])
    with pytest.raises(ValueError):
        ParticleSet(np.zeros((2, 2)), [0.7, 0.7])
    src = np.zeros((2, 2))
    ps = ParticleSet(src, [0.5, 0.5])
    src[0, 0] = 9.0
    assert ps.states[0, 0] == 0.0
    assert src.flags.writeable


def test_extended_particles_chi_bounds():
    with pytest.raises(ValueError):
        ExtendedParticles(np.zeros((4, 2)), np.array([1, 2, 3, 1]), np.zeros(4), 2, 2)


def test_measurement_types_validate():
    with pytest.raises(ValueError):
        SatelliteState(0, 0, 0)
    sat = SatelliteState(0, 0, 2e7)
    with pytest.raises(ValueError):
        PseudorangeMeasurement(-1.0, sat, 5.0)
    with pytest.raises(ValueError):
        PseudorangeMeasurement(1.0, sat, 0.0)


def test_epoch_from_measurements_and_subset():
    sats = [SatelliteState(1e6 * k, 0, 2e7) for k in range(3)]
    ep = EpochMeasurements.from_measurements(1.0, [PseudorangeMeasurement(2e7 + k, s, 5.0) for k, s in enumerate(sats)])
    assert ep.num_measurements == 3
    assert list(ep.sat_ids) == [1, 2, 3]
    sub = ep.subset([True, False, True])
    assert list(sub.sat_ids) == [1, 3]
    assert sub.pseudoranges[1].rho == 2e7 + 2


def test_gmm_coefficients():
    np.testing.assert_allclose(GmmCoefficients.uniform(4).gamma, 0.25)
    with pytest.raises(ValueError):
        GmmCoefficients([0.2, 0.2])
