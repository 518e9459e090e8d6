"""Localization and integrity metrics, threshold sweeps and the Monte Carlo runner."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .baselines import JointPF, JpfConfig, KfRaim, KfRaimConfig
from .filter import FaultRobustPF, FilterConfig
from .integrity import IntegrityConfig, bayesian_monitor, monitor
from .simulator import (IntegrityScenarioConfig, Scenario, ScenarioConfig,
                        simulate_integrity_scenario, simulate_scenario)

log = logging.getLogger(__name__)

FILTERS = ("proposed", "kf-raim", "j-pf")
DEFAULT_PMIR_GRID = np.round(np.arange(0, 101) * 0.01, 2)
DEFAULT_RA_GRID = np.arange(0, 31, dtype=float)
ALWAYS_ALARM = -np.inf


def horizontal_errors(estimates, truths) -> np.ndarray:
    e = np.asarray(estimates, dtype=float)[:, :2]
    t = np.asarray(truths, dtype=float)[:, :2]
    if e.shape != t.shape:
        raise ValueError(f"length mismatch: {e.shape[0]} estimates vs {t.shape[0]} truths")
    return np.linalg.norm(e - t, axis=1)


def rmse(estimates, truths) -> float:
    err = horizontal_errors(estimates, truths)
    if err.size == 0:
        raise ValueError("need at least one epoch")
    return float(np.sqrt(np.mean(err ** 2)))


def pct_over(estimates, truths, limit: float = 15.0) -> float:
    err = horizontal_errors(estimates, truths)
    return float(100.0 * np.count_nonzero(err > limit) / err.size)


def pfa_pir(avail_flags, hazard_flags) -> Tuple[float, float]:
    """Empirical false-alarm and integrity-risk rates over all epochs."""
    a = np.asarray(avail_flags, dtype=bool)
    h = np.asarray(hazard_flags, dtype=bool)
    if a.shape != h.shape or a.size == 0:
        raise ValueError("flag sequences must be nonempty and of equal length")
    t = a.size
    return float(np.count_nonzero(~a & ~h) / t), float(np.count_nonzero(a & h) / t)


@dataclass
class RunRecord:
    """Per-epoch outputs of one filter run."""

    times: np.ndarray
    estimates: np.ndarray
    truths: np.ndarray
    p_mir: np.ndarray
    r_a: np.ndarray
    available: np.ndarray
    alarm_limit: float = 15.0
    label: str = ""
    # errors read back from disk; avoids re-deriving them from a reconstructed truth
    stored_errors: Optional[np.ndarray] = None

    def __post_init__(self):
        n = len(self.times)
        for name in ("estimates", "truths", "p_mir", "r_a", "available"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} is not aligned with times")

    @property
    def errors(self) -> np.ndarray:
        if self.stored_errors is not None:
            return np.asarray(self.stored_errors, dtype=float)
        return horizontal_errors(self.estimates, self.truths)

    @property
    def hazard(self) -> np.ndarray:
        return self.errors > self.alarm_limit

    def __len__(self):
        return len(self.times)


def _concat(records: Sequence[RunRecord]):
    p = np.concatenate([r.p_mir for r in records])
    ra = np.concatenate([r.r_a for r in records])
    hz = np.concatenate([r.hazard for r in records])
    return p, ra, hz


@dataclass(frozen=True)
class SweepResult:
    """``points`` rows are ``(pmir_threshold, ra_threshold, p_fa, p_ir)``."""

    points: np.ndarray
    frontier: np.ndarray

    def ir_at(self, fa_grid) -> np.ndarray:
        """Lowest attainable integrity risk with false-alarm rate at most each grid value."""
        fa_grid = np.asarray(fa_grid, dtype=float)
        out = np.full(fa_grid.shape, np.nan)
        for j, f in enumerate(fa_grid):
            ok = self.points[:, 2] <= f + 1e-12
            if ok.any():
                out[j] = self.points[ok, 3].min()
        return out


def pareto_frontier(points) -> np.ndarray:
    """Non-dominated ``(.., .., fa, ir)`` rows sorted by false-alarm rate."""
    pts = np.asarray(points, dtype=float)
    order = np.lexsort((pts[:, 3], pts[:, 2]))
    keep, best = [], np.inf
    for j in order:
        if pts[j, 3] < best:
            keep.append(j)
            best = pts[j, 3]
    return pts[keep]


def threshold_sweep(run_records: Sequence[RunRecord], pmir_grid=None, ra_grid=None,
                    include_always_alarm: bool = True) -> SweepResult:
    """False-alarm and integrity-risk rates for every threshold pair on the grid.

    Availability is recomputed from the raw ``p_mir`` and ``r_a`` columns. An
    extra always-alarm row (thresholds ``-inf``) is appended when requested.
    """
    pmir_grid = DEFAULT_PMIR_GRID if pmir_grid is None else np.asarray(pmir_grid, dtype=float)
    ra_grid = DEFAULT_RA_GRID if ra_grid is None else np.asarray(ra_grid, dtype=float)
    p, ra, hz = _concat(run_records)
    t = p.size
    pass_p = p[None, :] <= pmir_grid[:, None]
    pass_r = ra[None, :] <= ra_grid[:, None]
    rows = []
    for a, p0 in zip(pass_p, pmir_grid):
        avail = a[None, :] & pass_r
        fa = np.count_nonzero(~avail & ~hz[None, :], axis=1) / t
        ir = np.count_nonzero(avail & hz[None, :], axis=1) / t
        rows.append(np.column_stack([np.full(ra_grid.size, p0), ra_grid, fa, ir]))
    if include_always_alarm:
        rows.append(np.array([[ALWAYS_ALARM, ALWAYS_ALARM, np.count_nonzero(~hz) / t, 0.0]]))
    points = np.vstack(rows)
    return SweepResult(points, pareto_frontier(points))


# ---------------------------------------------------------------- running

@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a scenario family, a set of filters and a list of seeds."""

    scenario: object = field(default_factory=ScenarioConfig)
    filters: Tuple[str, ...] = FILTERS
    filter_config: FilterConfig = field(default_factory=FilterConfig)
    kf_config: KfRaimConfig = field(default_factory=KfRaimConfig)
    jpf_config: JpfConfig = field(default_factory=JpfConfig)
    integrity: IntegrityConfig = field(default_factory=IntegrityConfig)
    seeds: Tuple[int, ...] = tuple(range(10))
    workers: int = 1
    output_dir: Optional[str] = None
    monitor_integrity: bool = False

    def __post_init__(self):
        bad = set(self.filters) - set(FILTERS)
        if bad:
            raise ValueError(f"unknown filters: {sorted(bad)}")


def make_scenario(config, seed: int) -> Scenario:
    cfg = replace(config, rng_seed=seed)
    if isinstance(cfg, IntegrityScenarioConfig):
        return simulate_integrity_scenario(cfg)
    return simulate_scenario(cfg)


def _scenario_parts(scenario):
    # Scenario (simulated) or ScenarioData (loaded from CSV)
    if isinstance(scenario, Scenario):
        return scenario.times.copy(), scenario.truth.copy(), float(scenario.trajectory.times[0])
    return scenario.epoch_times, scenario.epoch_truth, float(scenario.truth_times[0])


def run_filter(name: str, scenario, exp: ExperimentConfig, seed: int) -> RunRecord:
    """Run one filter over a scenario and collect per-epoch estimates and integrity outputs.

    ``scenario`` is a simulated :class:`Scenario` or scenario data loaded from CSV.
    """
    times, truth, t0 = _scenario_parts(scenario)
    n = len(scenario.epochs)
    est = np.zeros((n, 2))
    pm = np.zeros(n)
    ra = np.zeros(n)
    av = np.zeros(n, dtype=bool)
    icfg = exp.integrity
    if name == "proposed":
        f = FaultRobustPF(replace(exp.filter_config, rng_seed=seed), scenario.initial_state, dim=2, t0=t0)
        for j, ep in enumerate(scenario.epochs):
            res = f.step(ep)
            est[j] = res.estimate.position
            if exp.monitor_integrity:
                rep = monitor(res, icfg)
                pm[j], ra[j], av[j] = rep.p_mir, rep.r_a, rep.available
    elif name == "j-pf":
        k = scenario.epochs[0].num_measurements
        f = JointPF(replace(exp.jpf_config, rng_seed=seed), scenario.initial_state, k, dim=2, t0=t0)
        for j, ep in enumerate(scenario.epochs):
            res = f.step(ep)
            est[j] = res.estimate.position
            if exp.monitor_integrity:
                rep = bayesian_monitor(res.posterior, res.estimate, icfg)
                pm[j], ra[j], av[j] = rep.p_mir, rep.r_a, rep.available
    elif name == "kf-raim":
        f = KfRaim(exp.kf_config, scenario.initial_state, dim=2, t0=t0)
        for j, ep in enumerate(scenario.epochs):
            res = f.step(ep)
            est[j] = res.estimate.position
            av[j] = not res.excluded
    else:
        raise ValueError(f"unknown filter {name!r}")
    return RunRecord(times, est, truth, pm, ra, av, icfg.alarm_limit, name)


def _run_seed(args):
    exp, seed = args
    scenario = make_scenario(exp.scenario, seed)
    out = {}
    for name in exp.filters:
        try:
            out[name] = run_filter(name, scenario, exp, seed)
        except Exception as err:  # noqa: BLE001 - failures are recorded per run
            log.error("run failed: filter=%s seed=%s: %s", name, seed, err)
            out[name] = err
    return seed, out


@dataclass
class ExperimentResult:
    """Per-(seed, filter) records plus an aggregated table."""

    records: Dict[Tuple[int, str], RunRecord]
    failures: Dict[Tuple[int, str], str]
    table: List[dict]

    def row(self, name: str) -> dict:
        return next(r for r in self.table if r["filter"] == name)


def aggregate(records: Dict[Tuple[int, str], RunRecord], filters: Sequence[str]) -> List[dict]:
    """Mean and standard error of RMSE and %>15 m per filter, plus false-alarm and integrity-risk rates."""
    table = []
    for name in filters:
        recs = [r for (s, f), r in sorted(records.items()) if f == name]
        if not recs:
            continue
        rm = np.array([rmse(r.estimates, r.truths) for r in recs])
        po = np.array([pct_over(r.estimates, r.truths, r.alarm_limit) for r in recs])
        pfa, pir = pfa_pir(np.concatenate([r.available for r in recs]), np.concatenate([r.hazard for r in recs]))
        se = (lambda x: float(x.std(ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0)
        table.append({"filter": name, "runs": len(recs), "rmse": float(rm.mean()), "rmse_se": se(rm),
                      "pct_over_15": float(po.mean()), "pct_over_15_se": se(po), "p_fa": pfa, "p_ir": pir})
    return table


def run_experiment(exp: ExperimentConfig) -> ExperimentResult:
    """Run every (seed, filter) pair; results are ordered by seed regardless of worker count."""
    jobs = [(exp, s) for s in exp.seeds]
    if exp.workers > 1:
        with ProcessPoolExecutor(max_workers=exp.workers) as pool:
            results = list(pool.map(_run_seed, jobs))
    else:
        results = [_run_seed(j) for j in jobs]
    records, failures = {}, {}
    for seed, out in sorted(results, key=lambda x: x[0]):
        for name, rec in out.items():
            if isinstance(rec, Exception):
                failures[(seed, name)] = repr(rec)
            else:
                records[(seed, name)] = rec
    return ExperimentResult(records, failures, aggregate(records, exp.filters))


# ---------------------------------------------------------------- integrity study

MONITORS = ("proposed", "bayesian-raim")


@dataclass
class IntegrityStudy:
    """Run records and threshold sweeps keyed by ``(monitor, num_particles, alarm_limit)``."""

    records: Dict[Tuple[str, int, float], List[RunRecord]]
    sweeps: Dict[Tuple[str, int, float], SweepResult]

    def frontiers(self) -> Dict[Tuple[str, int, float], np.ndarray]:
        return {k: s.frontier for k, s in self.sweeps.items()}

    def num_samples(self, key) -> int:
        return int(sum(len(r) for r in self.records[key]))


def _integrity_seed(args):
    seed, scenario_cfg, n, alarm_limits, filter_cfg, jpf_cfg, integrity_cfg, same_filter = args
    scenario = make_scenario(scenario_cfg, seed)
    t0 = float(scenario.trajectory.times[0])
    pf = FaultRobustPF(replace(filter_cfg, num_particles=n, rng_seed=seed), scenario.initial_state, dim=2, t0=t0)
    jpf = JointPF(replace(jpf_cfg, num_particles=n, rng_seed=seed), scenario.initial_state,
                  scenario.epochs[0].num_measurements, dim=2, t0=t0)
    T = len(scenario.epochs)
    names = list(MONITORS) + (["bayesian-raim-pf"] if same_filter else [])
    est = {m: np.zeros((T, 2)) for m in names}
    pm = {(m, al): np.zeros(T) for m in names for al in alarm_limits}
    ra = {m: np.zeros(T) for m in names}
    for j, ep in enumerate(scenario.epochs):
        res = pf.step(ep)
        jres = jpf.step(ep)
        est["proposed"][j] = res.estimate.position
        est["bayesian-raim"][j] = jres.estimate.position
        for al in alarm_limits:
            icfg = replace(integrity_cfg, alarm_limit=al)
            rep = monitor(res, icfg)
            brep = bayesian_monitor(jres.posterior, jres.estimate, icfg)
            pm[("proposed", al)][j], ra["proposed"][j] = rep.p_mir, rep.r_a
            pm[("bayesian-raim", al)][j], ra["bayesian-raim"][j] = brep.p_mir, brep.r_a
            if same_filter:
                srep = bayesian_monitor(res.posterior, res.estimate, icfg)
                est["bayesian-raim-pf"][j] = res.estimate.position
                pm[("bayesian-raim-pf", al)][j], ra["bayesian-raim-pf"][j] = srep.p_mir, srep.r_a
    out = {}
    for m in names:
        for al in alarm_limits:
            icfg = replace(integrity_cfg, alarm_limit=al)
            p = pm[(m, al)]
            avail = (p <= icfg.pmir_threshold) & (ra[m] <= icfg.accuracy_threshold)
            out[(m, n, al)] = RunRecord(scenario.times.copy(), est[m].copy(), scenario.truth.copy(), p, ra[m].copy(),
                                        avail, al, m)
    return seed, out


def integrity_study(seeds: Sequence[int], particle_counts=(100, 500), alarm_limits=(10.0, 15.0),
                    scenario: Optional[IntegrityScenarioConfig] = None, propagation_sigma: float = 20.0,
                    integrity: Optional[IntegrityConfig] = None, include_same_filter: bool = False,
                    pmir_grid=None, ra_grid=None, workers: int = 1) -> IntegrityStudy:
    """Compare the mixture-likelihood monitor with Bayesian RAIM on offset-fault scenarios.

    The proposed monitor runs on the fault-robust filter; Bayesian RAIM integrates
    the joint-state particle filter posterior. Both filters use
    ``propagation_sigma`` and no odometry. With ``include_same_filter`` a third
    monitor applies Bayesian RAIM to the fault-robust filter's own posterior.
    """
    scenario = scenario or IntegrityScenarioConfig()
    integrity = integrity or IntegrityConfig()
    fcfg = FilterConfig(propagation_sigma=propagation_sigma)
    jcfg = JpfConfig(propagation_sigma=propagation_sigma)
    jobs = [(s, scenario, n, tuple(alarm_limits), fcfg, jcfg, integrity, include_same_filter)
            for n in particle_counts for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_integrity_seed, jobs))
    else:
        results = [_integrity_seed(j) for j in jobs]
    records: Dict[Tuple[str, int, float], List[RunRecord]] = {}
    for _, out in results:
        for key, rec in out.items():
            records.setdefault(key, []).append(rec)
    sweeps = {k: threshold_sweep(v, pmir_grid, ra_grid) for k, v in sorted(records.items())}
    return IntegrityStudy(records, sweeps)


def frontier_dominance(ours: SweepResult, theirs: SweepResult, fa_grid=None) -> float:
    """Share of false-alarm grid points where ``ours`` attains integrity risk no higher than ``theirs``.

    Only grid points where at least one frontier still has nonzero risk count.
    """
    fa_grid = np.linspace(0.0, 1.0, 101) if fa_grid is None else np.asarray(fa_grid, dtype=float)
    a, b = ours.ir_at(fa_grid), theirs.ir_at(fa_grid)
    ok = ~np.isnan(a) & ~np.isnan(b) & ((a > 0) | (b > 0))
    if not ok.any():
        return 1.0
    return float(np.mean(a[ok] <= b[ok] + 1e-12))
