"""Integrity monitoring: misleading-information risk, accuracy and availability.

Two risk estimators are provided. :func:`p_mir` evaluates the mixture
measurement likelihood over the alarm-limit disk (via :func:`disk_cubature`)
against the propagated particle distribution. :func:`bayesian_pmir` is the
classical particle-mass-outside-the-disk estimate used for comparison.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp, roots_jacobi
from scipy.stats import norm

from .measurement import GmmLikelihood
from .types import EpochMeasurements, GmmCoefficients, ParticleSet, StateVector

log = logging.getLogger(__name__)


class DegenerateCovarianceError(ValueError):
    """Weighted covariance undefined: the weights sit on a single particle."""


@dataclass(frozen=True)
class IntegrityConfig:
    alarm_limit: float = 15.0
    pmir_threshold: float = 0.05
    accuracy_threshold: float = 10.0
    alpha: float = 0.5
    cubature_order: int = 8

    def __post_init__(self):
        if not self.alarm_limit > 0:
            raise ValueError("alarm_limit must be positive")
        if not 0.0 <= self.pmir_threshold <= 1.0:
            raise ValueError("pmir_threshold must be a probability")
        if self.accuracy_threshold < 0:
            raise ValueError("accuracy_threshold must be nonnegative")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.cubature_order < 1:
            raise ValueError("cubature_order must be >= 1")


@dataclass(frozen=True)
class IntegrityReport:
    p_mir: float
    r_a: float
    available: bool
    prior_mass_in_disk: float
    # set when alpha <= 0.5 makes the accuracy test trivially satisfied
    accuracy_vacuous: bool = False
    zero_evidence: bool = False


def weighted_covariance(particles: ParticleSet) -> np.ndarray:
    """Bias-corrected weighted covariance of the horizontal position."""
    w = particles.weights
    denom = 1.0 - np.sum(w * w)
    if len(particles) < 2 or denom <= 1e-15:
        raise DegenerateCovarianceError("need at least two effective particles")
    pos = particles.positions
    d = pos - w @ pos
    C = (d * w[:, None]).T @ d / denom
    return 0.5 * (C + C.T)


def accuracy(C, alpha: float) -> float:
    """Largest per-axis standard deviation scaled by the ``alpha`` normal quantile.

    For ``alpha <= 0.5`` the result is ``<= 0``; it is returned unchanged.
    """
    sd = np.sqrt(np.clip(np.diag(np.asarray(C, dtype=float)), 0.0, None))
    return float(np.max(sd) * norm.ppf(alpha))


@lru_cache(maxsize=32)
def _unit_disk_rule(order: int):
    # radial Gauss-Jacobi nodes absorb the r dr Jacobian; equispaced angles
    x, wr = roots_jacobi(order, 0.0, 1.0)
    r = 0.5 * (1.0 + x)
    theta = 2.0 * np.pi * np.arange(order) / order
    rr, tt = np.meshgrid(r, theta, indexing="ij")
    pts = np.column_stack([(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()])
    w = np.repeat(wr * 0.25, order) * (2.0 * np.pi / order)
    return pts, w


def disk_cubature_rule(center, radius: float, order: int = 8):
    """Nodes ``(order**2, 2)`` and weights of the product rule on a disk.

    Exact for bivariate polynomials of total degree ``< order``.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    pts, w = _unit_disk_rule(int(order))
    return np.asarray(center, dtype=float)[:2] + radius * pts, w * radius * radius


def disk_cubature(f, center, radius: float, order: int = 8) -> float:
    """Approximate the integral of ``f`` over a disk.

    ``f`` maps an ``(M, 2)`` array of points to ``M`` values.
    """
    pts, w = disk_cubature_rule(center, radius, order)
    return float(np.dot(w, f(pts)))


def _states_at(points, estimate: StateVector, dim: int):
    """Lift disk points to full states, holding non-position fields at the estimate."""
    base = estimate.to_array(dim)
    states = np.tile(base, (points.shape[0], 1))
    states[:, :2] = points
    return states


@dataclass(frozen=True)
class PmirTerms:
    p_mir: float
    prior_mass: float
    log_evidence: float
    log_disk_mean: float


def p_mir_terms(gamma: GmmCoefficients, measurements: EpochMeasurements, propagated: ParticleSet,
                estimate: StateVector, config: IntegrityConfig) -> PmirTerms:
    gmm = GmmLikelihood(measurements, gamma)
    dim = propagated.dim
    inside = np.linalg.norm(propagated.positions - estimate.position, axis=1) <= config.alarm_limit
    prior_mass = float(np.sum(propagated.weights[inside]))
    with np.errstate(divide="ignore"):
        log_evidence = float(logsumexp(gmm.log_density(propagated.states) + np.log(propagated.weights)))
    pts, w = disk_cubature_rule(estimate.position, config.alarm_limit, config.cubature_order)
    area = np.pi * config.alarm_limit ** 2
    log_disk_mean = float(logsumexp(gmm.log_density(_states_at(pts, estimate, dim)), b=w / area))
    if prior_mass == 0.0:
        return PmirTerms(1.0, 0.0, log_evidence, log_disk_mean)
    if log_evidence == -np.inf:
        log.warning("zero evidence for the epoch; reporting maximal risk")
        return PmirTerms(1.0, prior_mass, log_evidence, log_disk_mean)
    ratio = np.exp(np.log(prior_mass) + log_disk_mean - log_evidence)
    return PmirTerms(float(np.clip(1.0 - ratio, 0.0, 1.0)), prior_mass, log_evidence, log_disk_mean)


def p_mir(gamma: GmmCoefficients, measurements: EpochMeasurements, propagated: ParticleSet,
          estimate: StateVector, config: IntegrityConfig) -> float:
    """Misleading-information risk from the mixture likelihood over the alarm disk.

    ``1 - prior_mass * mean_disk_likelihood / evidence``, clamped to ``[0, 1]``,
    where ``prior_mass`` is the propagated weight within ``alarm_limit`` of
    ``estimate`` and ``evidence`` the propagated-weighted mean likelihood.
    """
    return p_mir_terms(gamma, measurements, propagated, estimate, config).p_mir


def bayesian_pmir(posterior: ParticleSet, estimate: StateVector, alarm_limit: float) -> float:
    """Posterior mass farther than ``alarm_limit`` from ``estimate``."""
    d = np.linalg.norm(posterior.positions - estimate.position, axis=1)
    return float(np.sum(posterior.weights[d > alarm_limit]))


def availability(p_mir_value: float, r_a: float, config: IntegrityConfig) -> bool:
    return bool(p_mir_value <= config.pmir_threshold and r_a <= config.accuracy_threshold)


def _accuracy_or_zero(particles, alpha):
    try:
        return max(accuracy(weighted_covariance(particles), alpha), 0.0)
    except DegenerateCovarianceError:
        return 0.0


def monitor(step_result, config: IntegrityConfig) -> IntegrityReport:
    """Integrity report for one :class:`~robustpf.filter.StepResult`."""
    if step_result.gamma is None:
        r_a = _accuracy_or_zero(step_result.posterior, config.alpha)
        return IntegrityReport(1.0, r_a, False, 0.0, config.alpha <= 0.5, zero_evidence=True)
    terms = p_mir_terms(step_result.gamma, step_result.measurements, step_result.propagated,
                        step_result.estimate, config)
    r_a = _accuracy_or_zero(step_result.posterior, config.alpha)
    return IntegrityReport(terms.p_mir, r_a, availability(terms.p_mir, r_a, config), terms.prior_mass,
                           config.alpha <= 0.5, terms.log_evidence == -np.inf)


def bayesian_monitor(posterior: ParticleSet, estimate: StateVector, config: IntegrityConfig) -> IntegrityReport:
    """Bayesian-RAIM style report computed from a weighted posterior."""
    risk = bayesian_pmir(posterior, estimate, config.alarm_limit)
    r_a = _accuracy_or_zero(posterior, config.alpha)
    return IntegrityReport(risk, r_a, availability(risk, r_a, config), 1.0 - risk, config.alpha <= 0.5)
