"""Property-based invariants, each checked on at least 100 generated cases."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from helpers import ring_constellation
from robustpf.baselines import KfRaimConfig, KfState, global_threshold, kf_predict, kf_update, raim_global_test
from robustpf.filter import (FilterConfig, compute_votes, gmm_weighting, iterative_weighting, pool_votes,
                             propagate, systematic_resample)
from robustpf.measurement import VOTE_FLOOR, GmmLikelihood, chi2_1_density, vote
from robustpf.types import (EpochMeasurements, GmmCoefficients, ParticleSet, StateVector, check_simplex,
                            normalize_log_weights)

CASES = settings(max_examples=100, deadline=None)

log_vectors = st.lists(st.floats(-700, 700), min_size=1, max_size=40)
seeds = st.integers(0, 2 ** 32 - 1)


# ---------------------------------------------------------------- simplex

@CASES
@given(v=log_vectors)
def test_simplex_normalize(v):
    w = normalize_log_weights(v)
    assert np.all(w >= 0)
    assert abs(w.sum() - 1.0) <= 1e-12


@CASES
@given(seed=seeds, n=st.integers(1, 30), k=st.integers(1, 8), iters=st.integers(1, 4),
       prior=st.booleans())
def test_simplex_filter_outputs(seed, n, k, iters, prior):
    r = np.random.default_rng(seed)
    prev = ParticleSet(r.normal(0, 20, size=(n, 2)), r.dirichlet(np.ones(n)))
    sat = ring_constellation(k, phase=float(r.uniform(0, 6.3)))
    rho = np.linalg.norm(sat, axis=1) + r.normal(0, 5, k) + np.where(r.random(k) < 0.3, 100.0, 0.0)
    ep = EpochMeasurements(1.0, sat, rho, np.full(k, 5.0))
    cfg = FilterConfig(em_iterations=iters, include_prior_in_weighting=prior)
    ext = propagate(prev, None, k, cfg, r)
    check_simplex(ext.weights)
    w, g = iterative_weighting(ext, ep, cfg)
    check_simplex(w)
    check_simplex(g.gamma)
    check_simplex(pool_votes(compute_votes(ext, ep), w).gamma)


# ---------------------------------------------------------------- shift invariance

@CASES
@given(v=log_vectors, c=st.floats(-1e4, 1e4))
def test_shift_invariance(v, c):
    a = normalize_log_weights(v)
    b = normalize_log_weights(np.asarray(v) + c)
    np.testing.assert_allclose(a, b, atol=1e-12)


# ---------------------------------------------------------------- chi-square votes

@CASES
@given(x=st.floats(VOTE_FLOOR, 200.0))
def test_chi2_density_matches_reference(x):
    assert chi2_1_density(x) == pytest.approx(stats.chi2.pdf(x, 1), rel=1e-10)


@CASES
@given(x=st.floats(0.0, VOTE_FLOOR))
def test_chi2_density_clamped(x):
    assert chi2_1_density(x) == chi2_1_density(VOTE_FLOOR)


@CASES
@given(a=st.floats(-30, 30), b=st.floats(-30, 30))
def test_vote_even_and_monotone(a, b):
    assert vote(a) == vote(-a)
    if a * a >= VOTE_FLOOR and abs(b) > abs(a) * (1 + 1e-9):
        assert vote(b) < vote(a)


@CASES
@given(seed=seeds, k=st.integers(1, 6))
def test_gmm_permutation_and_bounds(seed, k):
    r = np.random.default_rng(seed)
    sat = ring_constellation(k, phase=float(r.uniform(0, 6.3)))
    rho = np.linalg.norm(sat, axis=1) + r.normal(0, 10, k)
    gamma = r.dirichlet(np.ones(k))
    states = r.normal(0, 15, size=(10, 2))
    ep = EpochMeasurements(0.0, sat, rho, np.full(k, 5.0))
    perm = r.permutation(k)
    ep_p = EpochMeasurements(0.0, sat[perm], rho[perm], np.full(k, 5.0))
    a = GmmLikelihood(ep, GmmCoefficients(gamma)).log_density(states)
    b = GmmLikelihood(ep_p, GmmCoefficients(gamma[perm])).log_density(states)
    np.testing.assert_allclose(a, b, rtol=1e-12)
    comp = np.stack([GmmLikelihood(ep, GmmCoefficients(np.eye(k)[j])).log_density(states) for j in range(k)], axis=1)
    assert np.all(np.exp(a) <= np.exp(comp).max(axis=1) * (1 + 1e-12))
    assert np.all(np.exp(a) >= (gamma * np.exp(comp)).min(axis=1) * (1 - 1e-12))


# ---------------------------------------------------------------- resampling

@CASES
@given(seed=seeds, m=st.integers(1, 12), n=st.integers(1, 40))
def test_resampling_unbiased(seed, m, n):
    r = np.random.default_rng(seed)
    w = r.dirichlet(np.full(m, 0.5))
    reps = 2000
    counts = np.zeros(m)
    for _ in range(reps):
        c = np.bincount(systematic_resample(w, n, r), minlength=m)
        # systematic resampling never strays more than one copy from n*w
        assert np.all(np.abs(c - n * w) < 1 + 1e-9)
        counts += c
    np.testing.assert_allclose(counts / reps, n * w, atol=0.06)


# ---------------------------------------------------------------- Kalman covariance

@CASES
@given(seed=seeds, k=st.integers(4, 10), sigma=st.floats(0.5, 20.0))
def test_kf_covariance_psd(seed, k, sigma):
    r = np.random.default_rng(seed)
    cfg = KfRaimConfig(propagation_sigma=float(r.uniform(0.1, 20.0)))
    kf = KfState.initial(StateVector(0, 0), cfg)
    sat = ring_constellation(k, phase=float(r.uniform(0, 6.28)))
    for t in range(400):
        kf = kf_predict(kf, None, 1.0, cfg)
        rho = np.linalg.norm(sat - np.append(kf.mean, 0.0), axis=1) + r.normal(0, sigma, k)
        kf = kf_update(kf, EpochMeasurements(float(t), sat, rho, np.full(k, sigma)))
        P = kf.covariance
        assert np.array_equal(P, P.T)
        assert np.linalg.eigvalsh(P).min() >= -1e-9


# ---------------------------------------------------------------- global test false alarms

def wls_residuals(r, k, trials):
    # residuals of a whitened linear least-squares fit: (I - H H^+) e
    H = r.normal(size=(k, 2))
    proj = np.eye(k) - H @ np.linalg.pinv(H)
    return r.normal(size=(trials, k)) @ proj.T


@CASES
@given(seed=seeds, k=st.integers(4, 12), p_fa=st.sampled_from([0.01, 0.05, 0.1]))
def test_global_test_false_alarm_rate(seed, k, p_fa):
    r = np.random.default_rng(seed)
    res = wls_residuals(r, k, 10 ** 4)
    thr = global_threshold(k - 2, p_fa)
    passes = np.mean(np.sum(res ** 2, axis=1) <= thr)
    assert abs(passes - (1 - p_fa)) <= 0.02
    for x in res[:20]:
        assert raim_global_test(x, 2, p_fa) == bool(np.sum(x ** 2) <= thr)


PROPERTY_GROUPS = {
    "simplex": [test_simplex_normalize, test_simplex_filter_outputs],
    "shift-invariance": [test_shift_invariance],
    "chi2-density": [test_chi2_density_matches_reference, test_chi2_density_clamped, test_vote_even_and_monotone],
    "resampling-unbiasedness": [test_resampling_unbiased],
    "kf-psd": [test_kf_covariance_psd],
    "global-test-fa-rate": [test_global_test_false_alarm_rate],
}
