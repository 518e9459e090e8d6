"""Pseudorange geometry, chi-square votes and the mixture likelihood.

The receiver sits on the horizontal plane (altitude 0). Functions accept a
:class:`StateVector` or an ``(M, d)`` state array; array inputs are
broadcast against ``(M, 3)`` or ``(3,)`` satellite positions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .types import (CLOCK, EpochMeasurements, GeometryError, GmmCoefficients,
                    PseudorangeMeasurement, SatelliteState, StateVector)

VOTE_FLOOR = 1e-3
LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def _as_states(state):
    if isinstance(state, StateVector):
        return state.to_array()[None, :], True
    arr = np.asarray(state, dtype=float)
    if arr.ndim == 1:
        return arr[None, :], True
    return arr, False


def _as_sat(sat):
    if isinstance(sat, SatelliteState):
        return sat.position
    return np.asarray(sat, dtype=float)


def ranges(states, sat_pos):
    """Geometric range from each state row to the paired satellite row.

    ``states`` is ``(M, d)`` and ``sat_pos`` is ``(M, 3)`` or ``(3,)``.
    """
    dx = states[..., 0] - sat_pos[..., 0]
    dy = states[..., 1] - sat_pos[..., 1]
    dz = sat_pos[..., 2]
    return np.sqrt(dx * dx + dy * dy + dz * dz)


def expected_pseudoranges(states, sat_pos):
    """Vectorized expected pseudorange, including clock bias for 4-D states."""
    r = ranges(states, sat_pos)
    if states.shape[-1] > CLOCK:
        r = r + states[..., CLOCK]
    return r


def expected_pseudorange(state, sat) -> float:
    """Range from the receiver to ``sat`` plus clock bias, in meters."""
    states, _ = _as_states(state)
    pos = _as_sat(sat)
    r = ranges(states, pos)
    if np.any(r == 0):
        raise GeometryError("satellite coincides with receiver")
    if states.shape[-1] > CLOCK:
        r = r + states[..., CLOCK]
    return float(r[0])


def normalized_residual(state, meas: PseudorangeMeasurement) -> float:
    return (meas.rho - expected_pseudorange(state, meas.satellite)) / meas.sigma


def chi2_1_density(x):
    """Chi-square (1 dof) density, with the argument floored at ``VOTE_FLOOR``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("chi-square argument must be nonnegative")
    x = np.maximum(x, VOTE_FLOOR)
    out = np.exp(-0.5 * x - 0.5 * np.log(x) - LOG_SQRT_2PI)
    return out if out.ndim else float(out)


def vote(residual):
    """Vote cast for a measurement with normalized ``residual``."""
    r = np.asarray(residual, dtype=float)
    return chi2_1_density(r * r)


def gaussian_log_density(rho, mean, sigma):
    z = (rho - mean) / sigma
    return -0.5 * z * z - np.log(sigma) - LOG_SQRT_2PI


def component_log_density(state, meas: PseudorangeMeasurement) -> float:
    """Gaussian log density of ``meas.rho`` about the expected pseudorange."""
    return float(gaussian_log_density(meas.rho, expected_pseudorange(state, meas.satellite), meas.sigma))


@dataclass(frozen=True)
class GmmLikelihood:
    measurements: EpochMeasurements
    gamma: GmmCoefficients

    def __post_init__(self):
        if len(self.gamma) != self.measurements.num_measurements:
            raise ValueError("gamma length must equal the number of measurements")

    def log_density(self, states) -> np.ndarray:
        """Mixture log likelihood for each row of an ``(M, d)`` state array."""
        m = self.measurements
        # (M, K) table of component log densities
        exp_rho = expected_pseudoranges(states[:, None, :], m.sat_pos[None, :, :])
        comp = gaussian_log_density(m.rho[None, :], exp_rho, m.sigma[None, :])
        with np.errstate(divide="ignore"):
            log_gamma = np.log(self.gamma.gamma)
        return logsumexp(comp + log_gamma[None, :], axis=1)


def gmm_log_likelihood(state, gmm: GmmLikelihood):
    """``log sum_k gamma_k N(rho_k | rho_hat_k(x), sigma_k^2)``.

    Returns a float for a single state and an array for an ``(M, d)`` input.
    """
    states, scalar = _as_states(state)
    out = gmm.log_density(states)
    return float(out[0]) if scalar else out
