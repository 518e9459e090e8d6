"""Fault-robust particle filter with a Gaussian-mixture measurement likelihood.

Each epoch runs four stages:

1. ``propagate``: every parent particle is copied once per measurement and
   moved through the dynamics, giving ``N * K`` extended particles
   ``(x, chi)``.
2. ``iterative_weighting``: EM-style loop of measurement voting, vote
   pooling (mixture coefficients ``gamma``) and mixture weighting.
3. ``reduced_resample``: systematic resampling back down to ``N`` particles.
4. ``mean_estimate``: weighted mean of the resampled set.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .measurement import expected_pseudoranges, gaussian_log_density, vote
from .types import (CLOCK, HEADING, EpochMeasurements, ExtendedParticles,
                    GmmCoefficients, Odometry, ParticleSet, StateVector,
                    normalize_log_weights, wrap_angle)

log = logging.getLogger(__name__)

CONVERGENCE_TOL = 1e-4


class NoMeasurementsError(ValueError):
    """Raised by :func:`propagate` when an epoch carries no pseudoranges."""


@dataclass(frozen=True)
class FilterConfig:
    num_particles: int = 500
    propagation_sigma: float = 5.0
    # None: use the per-measurement sigma carried by the epoch
    measurement_sigma: Optional[float] = 5.0
    init_sigma: float = 5.0
    em_iterations: int = 1
    include_prior_in_weighting: bool = True
    rng_seed: int = 0
    # replay-mode process noise for the extra state columns
    heading_sigma: float = 0.01
    clock_sigma: float = 1.0
    init_heading_sigma: float = 0.05
    init_clock_sigma: float = 5.0
    convergence_tol: float = CONVERGENCE_TOL

    def __post_init__(self):
        if self.num_particles < 1:
            raise ValueError("num_particles must be >= 1")
        if self.em_iterations < 1:
            raise ValueError("em_iterations must be >= 1")
        sigmas = [self.propagation_sigma, self.init_sigma]
        if self.measurement_sigma is not None:
            sigmas.append(self.measurement_sigma)
        if any(not s > 0 for s in sigmas):
            raise ValueError("all sigmas must be positive")


def apply_dynamics(states, odometry: Optional[Odometry], dt: float):
    """Deterministic part of the motion model, ``f(x, u)``.

    Two-column states move by ``speed * dt`` along the known heading; four-column
    states integrate a speed/yaw-rate unicycle over the odometry segments. No
    odometry leaves the state unchanged.
    """
    out = np.array(states, dtype=float, copy=True)
    if odometry is None:
        return out
    if out.shape[1] == 2:
        if odometry.heading is None:
            raise ValueError("2-D dynamics need a known heading")
        step = odometry.speed * dt
        out[:, 0] += step * np.cos(odometry.heading)
        out[:, 1] += step * np.sin(odometry.heading)
        return out
    segments = odometry.segments
    if segments is None:
        segments = np.array([[dt, odometry.speed, odometry.yaw_rate or 0.0]])
    for seg_dt, speed, yaw_rate in np.asarray(segments, dtype=float):
        out[:, HEADING] += yaw_rate * seg_dt
        out[:, 0] += speed * seg_dt * np.cos(out[:, HEADING])
        out[:, 1] += speed * seg_dt * np.sin(out[:, HEADING])
    out[:, HEADING] = wrap_angle(out[:, HEADING])
    return out


def add_process_noise(states, config: FilterConfig, rng):
    n = states.shape[0]
    states[:, :2] += rng.normal(0.0, config.propagation_sigma, size=(n, 2))
    if states.shape[1] > CLOCK:
        states[:, HEADING] = wrap_angle(states[:, HEADING] + rng.normal(0.0, config.heading_sigma, size=n))
        states[:, CLOCK] += rng.normal(0.0, config.clock_sigma, size=n)
    return states


def propagate(prev: ParticleSet, odometry, num_measurements: int, config: FilterConfig, rng,
              dt: float = 1.0) -> ExtendedParticles:
    """Copy each parent ``K`` times and push every copy through the dynamics.

    Copies carry the log-weight ``log(w_parent / K)``.
    """
    k = int(num_measurements)
    if k < 1:
        raise NoMeasurementsError("epoch has no measurements")
    n = len(prev)
    states = np.repeat(prev.states, k, axis=0)
    states = add_process_noise(apply_dynamics(states, odometry, dt), config, rng)
    chi = np.tile(np.arange(1, k + 1), n)
    with np.errstate(divide="ignore"):
        log_w = np.repeat(np.log(prev.weights), k) - np.log(k)
    return ExtendedParticles(states, chi, log_w, n, k)


def _copy_residuals(extended: ExtendedParticles, measurements: EpochMeasurements):
    """Normalized residual of measurement ``k`` at copy ``(i, chi=k)``, shape ``(N, K)``."""
    n, k = extended.num_parents, extended.num_measurements
    states = extended.states.reshape(n, k, -1)
    rho_hat = expected_pseudoranges(states, measurements.sat_pos[None, :, :])
    return (measurements.rho[None, :] - rho_hat) / measurements.sigma[None, :], rho_hat


def compute_votes(extended: ExtendedParticles, measurements: EpochMeasurements) -> np.ndarray:
    """``(N, K)`` matrix of chi-square votes."""
    if measurements.num_measurements != extended.num_measurements:
        raise ValueError("measurement count does not match extended particles")
    r, _ = _copy_residuals(extended, measurements)
    return vote(r)


def pool_votes(votes, extended_weights) -> GmmCoefficients:
    """Mixture coefficients proportional to the weighted vote mass per measurement.

    Falls back to uniform coefficients (``fallback=True``) when every
    weighted vote is zero.
    """
    votes = np.asarray(votes, dtype=float)
    w = np.asarray(extended_weights, dtype=float).reshape(votes.shape)
    mass = np.sum(w * votes, axis=0)
    total = mass.sum()
    if not total > 0:
        log.warning("pooled vote mass is zero; using uniform gamma")
        return GmmCoefficients(np.full(votes.shape[1], 1.0 / votes.shape[1]), fallback=True)
    return GmmCoefficients(mass / total)


def pooling_objective(gamma, votes, extended_weights, log_form: bool = True) -> float:
    """Objective maximized by vote pooling.

    With ``log_form`` the EM M-step objective ``sum_k c_k log gamma_k`` is
    returned, where ``c_k = sum_i w_ik v_ik``; otherwise the plain total
    ``sum_k gamma_k c_k``.
    """
    votes = np.asarray(votes, dtype=float)
    c = np.sum(np.asarray(extended_weights, dtype=float).reshape(votes.shape) * votes, axis=0)
    g = np.asarray(gamma, dtype=float)
    if not log_form:
        return float(np.dot(g, c))
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(c > 0, c * np.log(g), 0.0)
    return float(terms.sum())


def extended_log_likelihood(extended: ExtendedParticles, measurements: EpochMeasurements, gamma) -> np.ndarray:
    """Per-row ``log gamma_chi + log N(rho_chi | x)``, flattened to ``N * K``."""
    _, rho_hat = _copy_residuals(extended, measurements)
    comp = gaussian_log_density(measurements.rho[None, :], rho_hat, measurements.sigma[None, :])
    g = gamma.gamma if isinstance(gamma, GmmCoefficients) else np.asarray(gamma, dtype=float)
    with np.errstate(divide="ignore"):
        log_gamma = np.log(g)
    return (comp + log_gamma[None, :]).ravel()


def gmm_weighting(extended: ExtendedParticles, measurements: EpochMeasurements, gamma,
                  include_prior: bool = True) -> np.ndarray:
    """Normalized weights of all extended particles under the mixture likelihood."""
    lw = extended_log_likelihood(extended, measurements, gamma)
    if include_prior:
        lw = lw + extended.log_weights
    return normalize_log_weights(lw)


def iterative_weighting(extended: ExtendedParticles, measurements: EpochMeasurements, config: FilterConfig):
    """Alternate vote pooling and mixture weighting.

    Starts from uniform ``gamma`` and the propagated prior weights; stops after
    ``config.em_iterations`` passes or once ``gamma`` moves less than
    ``config.convergence_tol``. Returns ``(weights, gamma)``.
    """
    votes = compute_votes(extended, measurements)
    weights = normalize_log_weights(extended.log_weights)
    gamma = GmmCoefficients.uniform(extended.num_measurements)
    for _ in range(config.em_iterations):
        new_gamma = pool_votes(votes, weights)
        weights = gmm_weighting(extended, measurements, new_gamma, config.include_prior_in_weighting)
        delta = np.max(np.abs(new_gamma.gamma - gamma.gamma))
        gamma = new_gamma
        if delta < config.convergence_tol:
            break
    return weights, gamma


def systematic_resample(weights, n: int, rng) -> np.ndarray:
    """Indices drawn by systematic resampling with one uniform offset."""
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    u = (np.arange(n) + rng.random()) / n
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, len(cdf) - 1)


def reduced_resample(extended: ExtendedParticles, weights, n: int, rng) -> ParticleSet:
    """Draw ``n`` equally weighted particles from the ``N * K`` extended set."""
    idx = systematic_resample(np.asarray(weights, dtype=float), n, rng)
    return ParticleSet.uniform(extended.states[idx])


def mean_estimate(particles: ParticleSet) -> StateVector:
    w = particles.weights
    s = particles.states
    mean = w @ s
    if s.shape[1] > CLOCK:
        mean[HEADING] = np.arctan2(w @ np.sin(s[:, HEADING]), w @ np.cos(s[:, HEADING]))
    return StateVector.from_array(mean)


@dataclass(frozen=True)
class StepResult:
    """Output of one filter epoch.

    ``propagated`` is the predicted distribution (extended particles with their
    prior weights); the integrity monitor evaluates prior mass on it.
    """

    estimate: StateVector
    posterior: ParticleSet
    gamma: Optional[GmmCoefficients]
    propagated: ParticleSet
    measurements: Optional[EpochMeasurements] = None

    def __iter__(self):
        return iter((self.estimate, self.posterior, self.gamma))


def initial_particles(initial: StateVector, config: FilterConfig, rng, dim: Optional[int] = None) -> ParticleSet:
    """Gaussian cloud of ``config.num_particles`` around ``initial``."""
    x0 = initial.to_array(dim)
    n = config.num_particles
    states = np.tile(x0, (n, 1))
    states[:, :2] += rng.normal(0.0, config.init_sigma, size=(n, 2))
    if states.shape[1] > CLOCK:
        states[:, HEADING] = wrap_angle(states[:, HEADING] + rng.normal(0.0, config.init_heading_sigma, size=n))
        states[:, CLOCK] += rng.normal(0.0, config.init_clock_sigma, size=n)
    return ParticleSet.uniform(states)


class FaultRobustPF:
    """Stateful driver around the per-epoch operations.

    Parameters
    ----------
    config : FilterConfig
    initial : StateVector
        Initial fix; particles are drawn around it with ``config.init_sigma``.
    dim : int, optional
        2 for simulation mode, 4 for replay mode (heading and clock bias).
    """

    def __init__(self, config: FilterConfig, initial: StateVector, dim: Optional[int] = None, t0: Optional[float] = None):
        self.config = config
        self.rng = np.random.default_rng(config.rng_seed)
        self.particles = initial_particles(initial, config, self.rng, dim)
        self.time = t0

    def _dt(self, epoch):
        dt = 1.0 if self.time is None else epoch.time - self.time
        if dt <= 0 and self.time is not None:
            raise ValueError("epoch times must be strictly increasing")
        self.time = epoch.time
        return dt

    def _sigma_override(self, epoch: EpochMeasurements) -> EpochMeasurements:
        if self.config.measurement_sigma is None:
            return epoch
        return replace(epoch, sigma=np.full(epoch.num_measurements, self.config.measurement_sigma))

    def step(self, epoch: EpochMeasurements) -> StepResult:
        cfg = self.config
        dt = self._dt(epoch)
        if epoch.num_measurements == 0:
            states = add_process_noise(apply_dynamics(self.particles.states, epoch.odometry, dt), cfg, self.rng)
            self.particles = ParticleSet(states, self.particles.weights)
            return StepResult(mean_estimate(self.particles), self.particles, None, self.particles)
        meas = self._sigma_override(epoch)
        extended = propagate(self.particles, epoch.odometry, meas.num_measurements, cfg, self.rng, dt)
        weights, gamma = iterative_weighting(extended, meas, cfg)
        self.particles = reduced_resample(extended, weights, cfg.num_particles, self.rng)
        prior = ParticleSet(extended.states, normalize_log_weights(extended.log_weights))
        return StepResult(mean_estimate(self.particles), self.particles, gamma, prior, meas)


def step(filter_state: FaultRobustPF, epoch: EpochMeasurements) -> StepResult:
    return filter_state.step(epoch)
