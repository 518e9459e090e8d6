"""Shared data model and weight bookkeeping.

Particles are kept as struct-of-arrays (``states`` is an ``(N, d)`` array)
so that every per-particle operation is a vectorized numpy expression.
State columns are ``[px, py]`` in simulation mode and
``[px, py, heading, clock_bias]`` in replay mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

SIMPLEX_ATOL = 1e-9

PX, PY, HEADING, CLOCK = 0, 1, 2, 3


class DegenerateWeightsError(ValueError):
    """All candidate weights vanished (every log-weight is -inf)."""


class GeometryError(ValueError):
    """Receiver and satellite positions coincide."""


def wrap_angle(theta):
    """Wrap angles into [-pi, pi)."""
    return (np.asarray(theta) + np.pi) % (2.0 * np.pi) - np.pi


def check_simplex(w, atol=SIMPLEX_ATOL):
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a nonempty 1-D array")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    if abs(w.sum() - 1.0) > atol:
        raise ValueError(f"weights sum to {w.sum():.12g}, expected 1")
    return w


@dataclass(frozen=True)
class StateVector:
    """Vehicle state. ``heading`` and ``clock_bias`` are only used in replay mode."""

    px: float
    py: float
    heading: Optional[float] = None
    clock_bias: Optional[float] = None

    def __post_init__(self):
        vals = [self.px, self.py] + [v for v in (self.heading, self.clock_bias) if v is not None]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("state fields must be finite")
        if self.heading is not None:
            object.__setattr__(self, "heading", float(wrap_angle(self.heading)))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.px, self.py])

    def to_array(self, dim: Optional[int] = None) -> np.ndarray:
        """Pack into a state row. ``dim`` of 4 fills missing optional fields with 0."""
        if dim is None:
            dim = 4 if (self.heading is not None or self.clock_bias is not None) else 2
        if dim == 2:
            return np.array([self.px, self.py], dtype=float)
        return np.array([self.px, self.py, self.heading or 0.0, self.clock_bias or 0.0])

    @classmethod
    def from_array(cls, x) -> "StateVector":
        x = np.asarray(x, dtype=float)
        if x.shape[0] == 2:
            return cls(float(x[0]), float(x[1]))
        return cls(float(x[0]), float(x[1]), float(x[2]), float(x[3]))


@dataclass(frozen=True)
class ParticleSet:
    """Weighted particle approximation of the state distribution."""

    states: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        states = np.array(self.states, dtype=float, ndmin=2)
        weights = check_simplex(self.weights)
        if states.shape[0] != weights.shape[0]:
            raise ValueError("particles and weights differ in length")
        states.flags.writeable = False
        weights = weights.copy()
        weights.flags.writeable = False
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, :2]

    @classmethod
    def uniform(cls, states) -> "ParticleSet":
        states = np.atleast_2d(np.asarray(states, dtype=float))
        n = states.shape[0]
        return cls(states, np.full(n, 1.0 / n))

    def particle(self, i: int) -> StateVector:
        return StateVector.from_array(self.states[i])


@dataclass(frozen=True)
class ExtendedParticle:
    """One ``(state, chi)`` hypothesis; ``chi`` is the 1-based measurement index."""

    state: StateVector
    chi: int
    log_weight: float


@dataclass(frozen=True)
class ExtendedParticles:
    """The ``N * K`` extended particles of one epoch, parent-major.

    Row ``i * K + (chi - 1)`` holds the copy of parent ``i`` associated with
    measurement ``chi``.
    """

    states: np.ndarray
    chi: np.ndarray
    log_weights: np.ndarray
    num_parents: int
    num_measurements: int

    def __post_init__(self):
        n, k = self.num_parents, self.num_measurements
        if self.states.shape[0] != n * k or self.chi.shape[0] != n * k:
            raise ValueError("extended particle arrays must have N*K rows")
        if np.any(self.chi < 1) or np.any(self.chi > k):
            raise ValueError("chi out of range")

    def __len__(self):
        return self.states.shape[0]

    def __getitem__(self, j: int) -> ExtendedParticle:
        return ExtendedParticle(StateVector.from_array(self.states[j]), int(self.chi[j]), float(self.log_weights[j]))

    def grid(self, values) -> np.ndarray:
        """Reshape a per-row array into ``(N, K)``."""
        return np.asarray(values).reshape(self.num_parents, self.num_measurements)

    @property
    def weights(self) -> np.ndarray:
        return normalize_log_weights(self.log_weights)


@dataclass(frozen=True)
class SatelliteState:
    sx: float
    sy: float
    sz: float
    vx: float = 0.0
    vy: float = 0.0
    vz: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite([self.sx, self.sy, self.sz, self.vx, self.vy, self.vz])):
            raise ValueError("satellite state must be finite")
        if math.hypot(self.sx, self.sy, self.sz) <= 0:
            raise ValueError("satellite position must be nonzero")

    @property
    def position(self) -> np.ndarray:
        return np.array([self.sx, self.sy, self.sz])

    @property
    def velocity(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.vz])


@dataclass(frozen=True)
class PseudorangeMeasurement:
    rho: float
    satellite: SatelliteState
    sigma: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("pseudorange must be positive")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class Odometry:
    """Odometry for one epoch.

    ``heading`` is the externally known heading used in simulation mode.
    ``segments`` optionally holds ``(dt, speed, yaw_rate)`` rows at the
    odometry rate for replay mode; when absent a single segment spanning the
    epoch interval is assumed.
    """

    speed: float
    yaw_rate: Optional[float] = None
    heading: Optional[float] = None
    sigma: float = 0.0
    segments: Optional[np.ndarray] = None


@dataclass(frozen=True)
class EpochMeasurements:
    """Pseudoranges of one epoch, stored as aligned arrays of length ``K``."""

    time: float
    sat_pos: np.ndarray
    rho: np.ndarray
    sigma: np.ndarray
    sat_vel: Optional[np.ndarray] = None
    sat_ids: Optional[np.ndarray] = None
    odometry: Optional[Odometry] = None

    def __post_init__(self):
        sat_pos = np.asarray(self.sat_pos, dtype=float).reshape(-1, 3)
        rho = np.atleast_1d(np.asarray(self.rho, dtype=float))
        sigma = np.broadcast_to(np.asarray(self.sigma, dtype=float), rho.shape).copy()
        k = rho.shape[0]
        if sat_pos.shape[0] != k:
            raise ValueError("sat_pos must have shape (K, 3)")
        if np.any(sigma <= 0):
            raise ValueError("sigma must be positive")
        sat_vel = np.zeros((k, 3)) if self.sat_vel is None else np.asarray(self.sat_vel, dtype=float).reshape(k, 3)
        sat_ids = np.arange(1, k + 1) if self.sat_ids is None else np.asarray(self.sat_ids, dtype=int)
        for name, arr in (("sat_pos", sat_pos), ("rho", rho), ("sigma", sigma), ("sat_vel", sat_vel), ("sat_ids", sat_ids)):
            object.__setattr__(self, name, arr)

    @property
    def num_measurements(self) -> int:
        return self.rho.shape[0]

    @property
    def pseudoranges(self) -> tuple:
        return tuple(
            PseudorangeMeasurement(float(self.rho[k]), SatelliteState(*self.sat_pos[k], *self.sat_vel[k]), float(self.sigma[k]))
            for k in range(self.num_measurements)
        )

    @classmethod
    def from_measurements(cls, time: float, measurements: Sequence[PseudorangeMeasurement], odometry=None, sat_ids=None):
        return cls(
            time=time,
            sat_pos=np.array([m.satellite.position for m in measurements]).reshape(-1, 3),
            rho=np.array([m.rho for m in measurements]),
            sigma=np.array([m.sigma for m in measurements]),
            sat_vel=np.array([m.satellite.velocity for m in measurements]).reshape(-1, 3),
            sat_ids=sat_ids,
            odometry=odometry,
        )

    def subset(self, mask) -> "EpochMeasurements":
        mask = np.asarray(mask)
        return EpochMeasurements(self.time, self.sat_pos[mask], self.rho[mask], self.sigma[mask],
                                 self.sat_vel[mask], self.sat_ids[mask], self.odometry)


@dataclass(frozen=True)
class GmmCoefficients:
    """Mixture weights over the measurements of one epoch."""

    gamma: np.ndarray
    fallback: bool = field(default=False, compare=False)

    def __post_init__(self):
        g = check_simplex(self.gamma).copy()
        g.flags.writeable = False
        object.__setattr__(self, "gamma", g)

    def __len__(self):
        return self.gamma.shape[0]

    @classmethod
    def uniform(cls, k: int) -> "GmmCoefficients":
        return cls(np.full(k, 1.0 / k))


def normalize_log_weights(log_weights) -> np.ndarray:
    """Map log-weights to a probability vector using the max-shift trick.

    Raises
    ------
    DegenerateWeightsError
        If every entry is ``-inf``.
    """
    lw = np.asarray(log_weights, dtype=float)
    if lw.size == 0:
        raise ValueError("empty log-weight vector")
    if np.any(np.isnan(lw)) or np.any(lw == np.inf):
        raise ValueError("log-weights must be finite or -inf")
    top = lw.max()
    if top == -np.inf:
        raise DegenerateWeightsError("all log-weights are -inf")
    w = np.exp(lw - top)
    return w / w.sum()


def effective_sample_size(weights) -> float:
    w = check_simplex(weights)
    return float(1.0 / np.sum(w * w))
