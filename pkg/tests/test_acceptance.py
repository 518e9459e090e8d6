"""Acceptance criteria, each run at its stated tolerance.

Every test prints a single ``CRITERION n: PASS|FAIL | ...`` line; the lines are
repeated in the pytest terminal summary.
"""

import itertools
import time

import numpy as np
import pytest
from scipy import stats

from conftest import report
from helpers import ring_constellation
from robustpf.filter import FaultRobustPF, FilterConfig, iterative_weighting, pool_votes, pooling_objective, propagate
from robustpf.integrity import IntegrityConfig, disk_cubature
from robustpf.measurement import GmmLikelihood
from robustpf.metrics import ExperimentConfig, frontier_dominance, integrity_study, run_experiment
from robustpf.simulator import ScenarioConfig, make_constellation
from robustpf.types import EpochMeasurements, GmmCoefficients, ParticleSet, StateVector

pytestmark = pytest.mark.slow


def _localization(k, faults, seeds=range(10), filters=("proposed", "kf-raim", "j-pf"), **kw):
    sc = ScenarioConfig(num_satellites=k, max_faults=faults, bias_magnitude=100.0, gnss_sigma=5.0, **kw)
    exp = ExperimentConfig(scenario=sc, filters=filters, filter_config=FilterConfig(num_particles=500),
                           seeds=tuple(seeds))
    res = run_experiment(exp)
    assert not res.failures, res.failures
    return {r["filter"]: r for r in res.table}


def test_criterion_1_many_faults():
    t0 = time.perf_counter()
    rows = _localization(10, 6)
    elapsed = time.perf_counter() - t0
    ours, kf, jpf = rows["proposed"]["rmse"], rows["kf-raim"]["rmse"], rows["j-pf"]["rmse"]
    ok = ours < kf and ours < jpf and 6.0 <= ours <= 20.0 and elapsed <= 300
    report(1, ok, f"(10,6) RMSE ours {ours:.2f} m, KF-RAIM {kf:.2f} m, J-PF {jpf:.2f} m; "
                  f"need ours < both and in [6, 20]; {elapsed:.0f} s")
    assert ok


def test_criterion_2_few_faults():
    t0 = time.perf_counter()
    rows = _localization(5, 1)
    elapsed = time.perf_counter() - t0
    ours, jpf, kf = rows["proposed"], rows["j-pf"]["rmse"], rows["kf-raim"]["rmse"]
    ok = jpf < ours["rmse"] and ours["pct_over_15"] <= 40.0 and elapsed <= 300
    report(2, ok, f"(5,1) RMSE J-PF {jpf:.2f} m < ours {ours['rmse']:.2f} m (KF-RAIM {kf:.2f} m); "
                  f"ours %>15 m = {ours['pct_over_15']:.1f} (<= 40); {elapsed:.0f} s")
    assert ok


def test_criterion_3_bias_sensitivity():
    t0 = time.perf_counter()
    curve = {}
    for bias in range(10, 101, 10):
        sc = ScenarioConfig(num_satellites=7, max_faults=3, bias_magnitude=float(bias), gnss_sigma=5.0)
        res = run_experiment(ExperimentConfig(scenario=sc, filters=("proposed",), seeds=tuple(range(5))))
        curve[bias] = res.row("proposed")["rmse"]
    elapsed = time.perf_counter() - t0
    ok = curve[100] < curve[50] and curve[50] > curve[10] and elapsed <= 600
    shape = ", ".join(f"{b}:{v:.2f}" for b, v in curve.items())
    report(3, ok, f"(7,3) RMSE by bias [{shape}]; need RMSE(100) < RMSE(50) > RMSE(10); {elapsed:.0f} s")
    assert ok


def test_criterion_4_integrity_dominance():
    t0 = time.perf_counter()
    study = integrity_study(seeds=range(25), particle_counts=(100, 500), alarm_limits=(10.0, 15.0),
                            include_same_filter=True)
    elapsed = time.perf_counter() - t0
    fa_grid = np.round(np.arange(0, 101) * 0.01, 2)
    parts, diag, ok = [], [], elapsed <= 900
    for n, al in itertools.product((100, 500), (10.0, 15.0)):
        key = ("proposed", n, al)
        samples = study.num_samples(key)
        d = frontier_dominance(study.sweeps[key], study.sweeps[("bayesian-raim", n, al)], fa_grid)
        d_same = frontier_dominance(study.sweeps[key], study.sweeps[("bayesian-raim-pf", n, al)], fa_grid)
        ok = ok and d >= 0.7 and samples >= 10 ** 4
        parts.append(f"N={n} AL={al:g}: {d:.2f} ({samples} epochs)")
        diag.append(f"{d_same:.2f}")
    report(4, ok, "dominance share vs Bayesian RAIM " + "; ".join(parts) +
           f"; need >= 0.70 each; same-posterior diagnostic [{', '.join(diag)}]; {elapsed:.0f} s")
    assert ok


def _simplex_grid(step=1e-3):
    m = int(round(1 / step))
    a, b = np.meshgrid(np.arange(m + 1), np.arange(m + 1), indexing="ij")
    keep = a + b <= m
    a, b = a[keep] / m, b[keep] / m
    return np.column_stack([a, b, 1.0 - a - b])


def test_criterion_5_pooling_oracle():
    grid = _simplex_grid()
    log_grid = np.log(np.clip(grid, 1e-300, None))
    r = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        votes = r.uniform(0.0, 12.6, size=(5, 3))
        w = r.dirichlet(np.ones(15))
        g = pool_votes(votes, w).gamma
        c = np.sum(w.reshape(5, 3) * votes, axis=0)
        best_grid = np.max(log_grid @ c)
        gap = best_grid - pooling_objective(g, votes, w)
        worst = max(worst, gap)
    ok = worst <= 1e-6
    report(5, ok, f"max(grid objective - pooled objective) over 100 instances = {worst:.2e} (<= 1e-6)")
    assert ok


def _gmm_instance(seed):
    r = np.random.default_rng(seed)
    k = int(r.integers(4, 11))
    sat = make_constellation(ScenarioConfig(num_satellites=k, max_faults=1), r).positions_at(0.0)
    truth = r.uniform(-50, 50, 2)
    rho = np.linalg.norm(sat - np.append(truth, 0.0), axis=1) + r.normal(0, 5, k)
    rho += np.where(r.random(k) < 0.3, r.uniform(20, 150, k), 0.0)
    gmm = GmmLikelihood(EpochMeasurements(0.0, sat, rho, np.full(k, 5.0)), GmmCoefficients(r.dirichlet(np.ones(k))))
    return gmm, truth + r.normal(0, 5, 2), float(r.uniform(5, 20)), r


def test_criterion_6_cubature_oracle():
    t0 = time.perf_counter()
    order = IntegrityConfig().cubature_order
    worst = 0.0
    for seed in range(20):
        gmm, center, radius, r = _gmm_instance(seed)
        f = lambda p: np.exp(gmm.log_density(p))
        rr = radius * np.sqrt(r.random(10 ** 6))
        th = r.uniform(0, 2 * np.pi, 10 ** 6)
        mc = np.pi * radius ** 2 * np.mean(f(center + np.column_stack([rr * np.cos(th), rr * np.sin(th)])))
        worst = max(worst, abs(disk_cubature(f, center, radius, order) / mc - 1.0))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-2 and elapsed <= 60
    report(6, ok, f"order-{order} cubature vs 1e6-sample Monte Carlo, worst relative error {worst:.2e} "
                  f"over 20 instances (<= 1e-2); {elapsed:.0f} s")
    assert ok


def test_criterion_7_fault_downweighting():
    t0 = time.perf_counter()
    hits = 0
    cfg = FilterConfig(num_particles=500, em_iterations=1)
    for trial in range(100):
        r = np.random.default_rng(10_000 + trial)
        k = 6
        sat = make_constellation(ScenarioConfig(num_satellites=k, max_faults=1), r).positions_at(0.0)
        truth = r.uniform(-100, 100, 2)
        bad = int(r.integers(k))
        sd = np.where(np.arange(k) == bad, np.sqrt(2) * 5.0, 5.0)
        rho = np.linalg.norm(sat - np.append(truth, 0.0), axis=1) + r.normal(0, 1, k) * sd
        rho[bad] += 100.0
        ep = EpochMeasurements(1.0, sat, rho, np.full(k, 5.0))
        # parents uniformly within 10 m of the truth
        rad, ang = 10.0 * np.sqrt(r.random(500)), r.uniform(0, 2 * np.pi, 500)
        prev = ParticleSet.uniform(truth + np.column_stack([rad * np.cos(ang), rad * np.sin(ang)]))
        ext = propagate(prev, None, k, cfg, r)
        _, g = iterative_weighting(ext, ep, cfg)
        others = np.delete(g.gamma, bad)
        hits += int(g.gamma[bad] < others.min())
    elapsed = time.perf_counter() - t0
    ok = hits >= 95 and elapsed <= 60
    report(7, ok, f"faulty gamma strictly smallest in {hits}/100 trials (>= 95); {elapsed:.0f} s")
    assert ok


def test_criterion_8_linear_scaling():
    t0 = time.perf_counter()
    ks = [5, 10, 20, 40]
    filters, clocks = {}, {}
    for k in ks:
        filters[k] = FaultRobustPF(FilterConfig(num_particles=500, rng_seed=0), StateVector(0.0, 0.0), t0=0.0)
        clocks[k] = 0.0
    sats = {k: ring_constellation(k) for k in ks}
    blocks = {k: [] for k in ks}
    # interleave K values so background load affects all of them alike
    for rnd in range(30):
        for k in ks:
            rho = np.linalg.norm(sats[k], axis=1)
            s = time.perf_counter()
            for _ in range(10):
                clocks[k] += 1.0
                filters[k].step(EpochMeasurements(clocks[k], sats[k], rho, np.full(k, 5.0)))
            if rnd > 0:
                blocks[k].append((time.perf_counter() - s) / 10)
    times = [np.median(blocks[k]) for k in ks]
    fit = stats.linregress(ks, times)
    r2 = fit.rvalue ** 2
    elapsed = time.perf_counter() - t0
    ok = r2 >= 0.95 and elapsed <= 120
    shown = ", ".join(f"K={k}: {1e3 * t:.2f} ms" for k, t in zip(ks, times))
    report(8, ok, f"median step time {shown}; linear fit R^2 = {r2:.4f} (>= 0.95); {elapsed:.0f} s")
    assert ok


def test_criterion_9_invariant_suite():
    import test_properties as props
    t0 = time.perf_counter()
    failed = []
    for group, funcs in props.PROPERTY_GROUPS.items():
        for fn in funcs:
            try:
                fn()
            except Exception as err:  # noqa: BLE001
                failed.append(f"{group}/{fn.__name__}: {type(err).__name__}")
    elapsed = time.perf_counter() - t0
    ok = not failed and elapsed <= 120
    detail = "all groups pass" if not failed else "; ".join(failed)
    report(9, ok, f"{len(props.PROPERTY_GROUPS)} property groups, 100 cases per property: {detail}; {elapsed:.0f} s")
    assert ok
