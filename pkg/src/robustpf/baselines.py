"""Comparison methods: residual-RAIM Kalman filter and joint state/fault particle filter."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import FrozenSet, Optional

import numpy as np
from scipy import stats

from .filter import (FilterConfig, add_process_noise, apply_dynamics, initial_particles,
                     mean_estimate, systematic_resample)
from .measurement import expected_pseudoranges, gaussian_log_density
from .types import (CLOCK, HEADING, EpochMeasurements, ParticleSet, StateVector,
                    normalize_log_weights)


class InsufficientRedundancyError(ValueError):
    """Fewer measurements than needed for a residual test."""


@dataclass(frozen=True)
class KfRaimConfig:
    propagation_sigma: float = 5.0
    measurement_sigma: Optional[float] = 5.0
    init_sigma: float = 5.0
    p_fa_global: float = 0.05
    p_fa_local: float = 0.01
    heading_sigma: float = 0.01
    clock_sigma: float = 1.0
    init_heading_sigma: float = 0.05
    init_clock_sigma: float = 5.0
    wls_iterations: int = 4


@dataclass(frozen=True)
class KfState:
    mean: np.ndarray
    covariance: np.ndarray

    @property
    def estimate(self) -> StateVector:
        return StateVector.from_array(self.mean)

    @classmethod
    def initial(cls, initial: StateVector, config: KfRaimConfig, dim: Optional[int] = None) -> "KfState":
        x0 = initial.to_array(dim)
        var = [config.init_sigma ** 2] * 2
        if x0.shape[0] > CLOCK:
            var += [config.init_heading_sigma ** 2, config.init_clock_sigma ** 2]
        return cls(x0, np.diag(var))


def _process_noise(dim, config):
    q = [config.propagation_sigma ** 2] * 2
    if dim > CLOCK:
        q += [config.heading_sigma ** 2, config.clock_sigma ** 2]
    return np.diag(q)


def _transition_jacobian(mean, odometry, dt):
    dim = mean.shape[0]
    F = np.eye(dim)
    if dim > CLOCK and odometry is not None:
        segs = odometry.segments
        if segs is None:
            segs = np.array([[dt, odometry.speed, odometry.yaw_rate or 0.0]])
        theta = mean[HEADING]
        for seg_dt, speed, yaw_rate in np.asarray(segs, dtype=float):
            theta += yaw_rate * seg_dt
            F[0, HEADING] -= speed * seg_dt * np.sin(theta)
            F[1, HEADING] += speed * seg_dt * np.cos(theta)
    return F


def kf_predict(kf: KfState, odometry, dt: float, config: KfRaimConfig) -> KfState:
    """Propagate the mean through the motion model; ``P <- F P F^T + Q``."""
    F = _transition_jacobian(kf.mean, odometry, dt)
    mean = apply_dynamics(kf.mean[None, :], odometry, dt)[0]
    P = F @ kf.covariance @ F.T + _process_noise(mean.shape[0], config)
    return KfState(mean, 0.5 * (P + P.T))


def _jacobian(x, sat_pos):
    """Rows ``d rho / d (px, py[, heading, clock])`` at ``x``."""
    d = np.column_stack([x[0] - sat_pos[:, 0], x[1] - sat_pos[:, 1], -sat_pos[:, 2]])
    r = np.linalg.norm(d, axis=1)
    H = np.zeros((sat_pos.shape[0], x.shape[0]))
    H[:, 0] = d[:, 0] / r
    H[:, 1] = d[:, 1] / r
    if x.shape[0] > CLOCK:
        H[:, CLOCK] = 1.0
    return H


def _snapshot_columns(dim):
    return [0, 1, CLOCK] if dim > CLOCK else [0, 1]


def wls_fix(x0, meas: EpochMeasurements, iterations: int = 4):
    """Gauss-Newton weighted least-squares fix from ``x0``.

    Only position (and clock bias for 4-D states) are estimated. Returns the fix,
    normalized residuals and the whitened geometry matrix.
    """
    x = np.array(x0, dtype=float)
    cols = _snapshot_columns(x.shape[0])
    for _ in range(iterations):
        H = _jacobian(x, meas.sat_pos)[:, cols] / meas.sigma[:, None]
        r = (meas.rho - expected_pseudoranges(x[None, :], meas.sat_pos)) / meas.sigma
        dx, *_ = np.linalg.lstsq(H, r, rcond=None)
        x[cols] += dx
    H = _jacobian(x, meas.sat_pos)[:, cols] / meas.sigma[:, None]
    r = (meas.rho - expected_pseudoranges(x[None, :], meas.sat_pos)) / meas.sigma
    return x, r, H


def global_threshold(dof: int, p_fa: float = 0.05) -> float:
    return float(stats.chi2.ppf(1.0 - p_fa, dof))


def raim_global_test(residuals, state_dim: int, p_fa: float = 0.05) -> bool:
    """Chi-square test on the sum of squared normalized residuals; True means pass."""
    r = np.asarray(residuals, dtype=float)
    dof = r.shape[0] - state_dim
    if dof < 1:
        raise InsufficientRedundancyError(f"{r.shape[0]} measurements for state_dim={state_dim}")
    return bool(np.sum(r * r) <= global_threshold(dof, p_fa))


def raim_local_test(residuals, p_fa: float = 0.01):
    """Index of the largest ``|r|`` (lowest index on ties) and whether it exceeds the two-sided threshold."""
    r = np.abs(np.asarray(residuals, dtype=float))
    if r.size == 0:
        raise ValueError("no residuals")
    idx = int(np.argmax(r))
    return idx, bool(r[idx] > stats.norm.ppf(1.0 - p_fa / 2.0))


def standardized_residuals(r, H):
    """Residuals scaled by the square root of the residual-projection diagonal."""
    S = np.eye(H.shape[0]) - H @ np.linalg.pinv(H)
    return r / np.sqrt(np.clip(np.diag(S), 1e-12, None))


def kf_update(kf: KfState, meas: EpochMeasurements) -> KfState:
    """Sequential scalar EKF updates, relinearizing after each measurement."""
    x, P = kf.mean.copy(), kf.covariance.copy()
    for k in range(meas.num_measurements):
        sat = meas.sat_pos[k:k + 1]
        h = _jacobian(x, sat)[0]
        innov = meas.rho[k] - expected_pseudoranges(x[None, :], sat)[0]
        s = h @ P @ h + meas.sigma[k] ** 2
        gain = P @ h / s
        x = x + gain * innov
        IKH = np.eye(x.shape[0]) - np.outer(gain, h)
        P = IKH @ P @ IKH.T + meas.sigma[k] ** 2 * np.outer(gain, gain)
        P = 0.5 * (P + P.T)
    return KfState(x, P)


@dataclass(frozen=True)
class KfRaimResult:
    state: KfState
    excluded: FrozenSet[int]
    prediction_only: bool = False

    def __iter__(self):
        return iter((self.state, self.excluded))

    @property
    def estimate(self) -> StateVector:
        return self.state.estimate


def kf_raim_step(kf: KfState, epoch: EpochMeasurements, config: KfRaimConfig, dt: float = 1.0) -> KfRaimResult:
    """Predict, iteratively exclude measurements until the global test passes, update.

    ``excluded`` holds 0-based indices into the epoch's measurement arrays.
    """
    if config.measurement_sigma is not None:
        epoch = replace(epoch, sigma=np.full(epoch.num_measurements, config.measurement_sigma))
    kf = kf_predict(kf, epoch.odometry, dt, config)
    state_dim = len(_snapshot_columns(kf.mean.shape[0]))
    active = np.ones(epoch.num_measurements, dtype=bool)
    while active.sum() > state_dim:
        sub = epoch.subset(active)
        _, r, H = wls_fix(kf.mean, sub, config.wls_iterations)
        if raim_global_test(r, state_dim, config.p_fa_global):
            break
        if active.sum() <= state_dim + 1:
            break
        worst, _ = raim_local_test(standardized_residuals(r, H), config.p_fa_local)
        active[np.flatnonzero(active)[worst]] = False
    excluded = frozenset(int(k) for k in np.flatnonzero(~active))
    if not active.any():
        return KfRaimResult(kf, excluded, prediction_only=True)
    return KfRaimResult(kf_update(kf, epoch.subset(active)), excluded)


class KfRaim:
    def __init__(self, config: KfRaimConfig, initial: StateVector, dim: Optional[int] = None, t0: Optional[float] = None):
        self.config = config
        self.state = KfState.initial(initial, config, dim)
        self.time = t0

    def step(self, epoch: EpochMeasurements) -> KfRaimResult:
        dt = 1.0 if self.time is None else epoch.time - self.time
        self.time = epoch.time
        res = kf_raim_step(self.state, epoch, self.config, dt)
        self.state = res.state
        return res


# ---------------------------------------------------------------- joint PF

@dataclass(frozen=True)
class JpfConfig:
    num_particles: int = 500
    propagation_sigma: float = 5.0
    measurement_sigma: Optional[float] = 5.0
    init_sigma: float = 5.0
    fault_change_prob: float = 0.2
    max_faults: int = 2
    # flat density of a faulted pseudorange: 1 / (10 km window)
    fault_density: float = 1e-4
    initial_hypotheses: str = "uniform"
    rng_seed: int = 0
    heading_sigma: float = 0.01
    clock_sigma: float = 1.0
    init_heading_sigma: float = 0.05
    init_clock_sigma: float = 5.0


def fault_hypotheses(k: int, max_faults: int = 2) -> np.ndarray:
    """Boolean ``(H, k)`` table of every fault set with at most ``max_faults`` members."""
    rows = []
    for size in range(min(max_faults, k) + 1):
        for combo in itertools.combinations(range(k), size):
            row = np.zeros(k, dtype=bool)
            row[list(combo)] = True
            rows.append(row)
    return np.array(rows).reshape(-1, k)


@dataclass(frozen=True)
class JpfParticles:
    """Joint particles: states plus an index into the fault-hypothesis table."""

    states: np.ndarray
    hypothesis: np.ndarray
    table: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return self.states.shape[0]

    @property
    def fault_sets(self) -> np.ndarray:
        return self.table[self.hypothesis]


@dataclass(frozen=True)
class JpfStepResult:
    """``posterior`` is the weighted set before resampling; ``particles`` after."""

    estimate: StateVector
    posterior: ParticleSet
    particles: JpfParticles
    fault_mass: np.ndarray


def _jpf_initial(initial: StateVector, config: JpfConfig, k: int, rng, dim=None) -> JpfParticles:
    fcfg = FilterConfig(num_particles=config.num_particles, init_sigma=config.init_sigma,
                        init_heading_sigma=config.init_heading_sigma, init_clock_sigma=config.init_clock_sigma)
    ps = initial_particles(initial, fcfg, rng, dim)
    table = fault_hypotheses(k, config.max_faults)
    hyp = _draw_hypotheses(config, table, config.num_particles, rng)
    return JpfParticles(np.array(ps.states), hyp, table, ps.weights.copy())


def _draw_hypotheses(config, table, n, rng):
    if config.initial_hypotheses == "empty":
        return np.zeros(n, dtype=int)
    return rng.integers(0, table.shape[0], size=n)


def jpf_step(particles: JpfParticles, epoch: EpochMeasurements, config: JpfConfig, rng, dt: float = 1.0) -> JpfStepResult:
    """Propagate states, switch fault hypotheses, weight and resample."""
    if config.measurement_sigma is not None:
        epoch = replace(epoch, sigma=np.full(epoch.num_measurements, config.measurement_sigma))
    n = len(particles)
    k = epoch.num_measurements
    table, hyp = particles.table, particles.hypothesis
    if table.shape[1] != k:
        table = fault_hypotheses(k, config.max_faults)
        hyp = _draw_hypotheses(config, table, n, rng)
    switch = rng.random(n) < config.fault_change_prob
    if switch.any():
        hyp = hyp.copy()
        hyp[switch] = rng.integers(0, table.shape[0], size=int(switch.sum()))
    fcfg = _as_filter_config(config)
    states = add_process_noise(apply_dynamics(particles.states, epoch.odometry, dt), fcfg, rng)
    if k == 0:
        post = ParticleSet(states, particles.weights)
        out = JpfParticles(states, hyp, table, particles.weights)
        return JpfStepResult(mean_estimate(post), post, out, np.zeros(0))
    rho_hat = expected_pseudoranges(states[:, None, :], epoch.sat_pos[None, :, :])
    comp = gaussian_log_density(epoch.rho[None, :], rho_hat, epoch.sigma[None, :])
    faulted = table[hyp]
    loglik = np.where(faulted, np.log(config.fault_density), comp).sum(axis=1)
    with np.errstate(divide="ignore"):
        w = normalize_log_weights(loglik + np.log(particles.weights))
    post = ParticleSet(states, w)
    fault_mass = w @ faulted
    idx = systematic_resample(w, n, rng)
    out = JpfParticles(states[idx], hyp[idx], table, np.full(n, 1.0 / n))
    return JpfStepResult(mean_estimate(post), post, out, fault_mass)


def _as_filter_config(config: JpfConfig):
    return FilterConfig(num_particles=config.num_particles, propagation_sigma=config.propagation_sigma,
                        heading_sigma=config.heading_sigma, clock_sigma=config.clock_sigma)


class JointPF:
    def __init__(self, config: JpfConfig, initial: StateVector, num_measurements: int, dim: Optional[int] = None,
                 t0: Optional[float] = None):
        self.config = config
        self.rng = np.random.default_rng(config.rng_seed)
        self.particles = _jpf_initial(initial, config, num_measurements, self.rng, dim)
        self.time = t0

    def step(self, epoch: EpochMeasurements) -> JpfStepResult:
        dt = 1.0 if self.time is None else epoch.time - self.time
        self.time = epoch.time
        res = jpf_step(self.particles, epoch, self.config, self.rng, dt)
        self.particles = res.particles
        return res
