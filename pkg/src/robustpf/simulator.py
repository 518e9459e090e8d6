"""Simulated urban-GNSS driving scenarios with injected pseudorange faults.

The world is a flat local frame: the vehicle moves on the plane ``z = 0`` and
satellites fly at a fixed height with constant horizontal velocity. All
randomness derives from ``rng_seed`` through independent named substreams,
so a seed reproduces a scenario bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .measurement import ranges
from .types import EpochMeasurements, Odometry, SatelliteState, StateVector

SAT_HEIGHT = 2.0e7
SAT_SPEED = 1000.0
SUBSTREAMS = ("trajectory", "constellation", "faults", "noise")


@dataclass(frozen=True)
class ScenarioConfig:
    """Localization scenario parameters; defaults follow the (7, 3) setting."""

    num_satellites: int = 7
    gnss_sigma: float = 5.0
    bias_magnitude: float = 100.0
    # optional bias range; both default to bias_magnitude
    bias_lo: Optional[float] = None
    bias_hi: Optional[float] = None
    max_faults: int = 3
    fault_change_prob: float = 0.2
    vehicle_speed: float = 10.0
    odometry_sigma: float = 5.0
    duration: float = 400.0
    rate: float = 1.0
    rng_seed: int = 0
    trajectory: str = "random"
    square_side: float = 1000.0
    heading_hold: Tuple[float, float] = (20.0, 60.0)
    elevation_range: Tuple[float, float] = (15.0, 75.0)

    def __post_init__(self):
        if self.num_satellites < 1:
            raise ValueError("need at least one satellite")
        if not 0 <= self.max_faults < self.num_satellites:
            raise ValueError("max_faults must be in [0, num_satellites)")
        if not 0.0 <= self.fault_change_prob <= 1.0:
            raise ValueError("fault_change_prob must be a probability")
        if self.gnss_sigma <= 0 or self.vehicle_speed < 0 or self.odometry_sigma < 0:
            raise ValueError("noise levels and speed must be nonnegative")
        if self.duration <= 0 or self.rate <= 0:
            raise ValueError("duration and rate must be positive")
        if self.trajectory not in ("random", "square"):
            raise ValueError("trajectory must be 'random' or 'square'")

    @property
    def bias_range(self) -> Tuple[float, float]:
        lo = self.bias_magnitude if self.bias_lo is None else self.bias_lo
        hi = self.bias_magnitude if self.bias_hi is None else self.bias_hi
        return lo, hi

    @property
    def num_epochs(self) -> int:
        return int(round(self.duration * self.rate))


@dataclass(frozen=True)
class IntegrityScenarioConfig:
    """Scenario with a coordinated position-offset fault in a time window."""

    num_satellites: int = 10
    gnss_sigma: float = 5.0
    vehicle_speed: float = 10.0
    duration: float = 400.0
    rate: float = 1.0
    fault_window: Tuple[float, float] = (125.0, 175.0)
    max_fault_fraction: float = 0.6
    offset_range: Tuple[float, float] = (50.0, 150.0)
    # False holds the faulty subset for the whole window
    resample_subset_each_epoch: bool = False
    rng_seed: int = 0
    heading_hold: Tuple[float, float] = (20.0, 60.0)
    elevation_range: Tuple[float, float] = (15.0, 75.0)
    trajectory: str = "random"
    square_side: float = 1000.0

    @property
    def num_epochs(self) -> int:
        return int(round(self.duration * self.rate))

    @property
    def max_faults(self) -> int:
        return int(np.floor(self.max_fault_fraction * self.num_satellites + 1e-9))


@dataclass(frozen=True)
class FaultState:
    faulty: np.ndarray
    bias: np.ndarray

    @property
    def faulty_set(self) -> frozenset:
        return frozenset(int(k) for k in np.flatnonzero(self.faulty))


@dataclass(frozen=True)
class Trajectory:
    """Positions at ``times``; ``headings[j]`` is the heading driven into epoch ``j``."""

    times: np.ndarray
    positions: np.ndarray
    headings: np.ndarray
    speeds: np.ndarray

    def __len__(self):
        return self.times.shape[0]

    def state(self, j: int) -> StateVector:
        return StateVector(float(self.positions[j, 0]), float(self.positions[j, 1]))


@dataclass(frozen=True)
class Constellation:
    initial_positions: np.ndarray
    velocities: np.ndarray

    def positions_at(self, t: float) -> np.ndarray:
        return self.initial_positions + self.velocities * t

    def at(self, t: float) -> List[SatelliteState]:
        return [SatelliteState(*p, *v) for p, v in zip(self.positions_at(t), self.velocities)]

    @property
    def azimuths(self) -> np.ndarray:
        return np.arctan2(self.initial_positions[:, 1], self.initial_positions[:, 0])


@dataclass
class Scenario:
    """Ground truth, measurements and injected faults of one run.

    ``epochs[j]`` is observed at ``trajectory.times[j + 1]``; index 0 of the
    trajectory is the initial fix.
    """

    config: object
    trajectory: Trajectory
    constellation: Constellation
    epochs: List[EpochMeasurements]
    fault_mask: np.ndarray
    biases: np.ndarray
    extras: dict = field(default_factory=dict)

    @property
    def initial_state(self) -> StateVector:
        return self.trajectory.state(0)

    @property
    def truth(self) -> np.ndarray:
        return self.trajectory.positions[1:]

    @property
    def times(self) -> np.ndarray:
        return self.trajectory.times[1:]


def substreams(seed: int) -> dict:
    """Independent generators keyed by purpose, all derived from ``seed``."""
    children = np.random.SeedSequence(seed).spawn(len(SUBSTREAMS))
    return {name: np.random.default_rng(ss) for name, ss in zip(SUBSTREAMS, children)}


def generate_trajectory(config, rng) -> Trajectory:
    """Constant-speed path with a heading redrawn every ``heading_hold`` seconds.

    The ``square`` preset drives the four sides of a square counter-clockwise
    starting and ending at the origin.
    """
    n = config.num_epochs
    dt = 1.0 / config.rate
    times = np.arange(n + 1) * dt
    speed = config.vehicle_speed
    headings = np.zeros(n + 1)
    if config.trajectory == "square":
        leg = n / 4.0
        for j in range(1, n + 1):
            headings[j] = (np.pi / 2.0) * min(int((j - 1) // leg), 3)
        speed = config.square_side * 4.0 / config.duration
    else:
        lo, hi = config.heading_hold
        j = 1
        while j <= n:
            hold = max(1, int(round(rng.uniform(lo, hi) * config.rate)))
            headings[j:j + hold] = rng.uniform(-np.pi, np.pi)
            j += hold
    step = speed * dt * np.column_stack([np.cos(headings), np.sin(headings)])
    step[0] = 0.0
    positions = np.cumsum(step, axis=0)
    speeds = np.full(n + 1, speed)
    speeds[0] = 0.0
    return Trajectory(times, positions, headings, speeds)


def sample_azimuths(n: int, rng) -> np.ndarray:
    """Random azimuths with pairwise spacing of at least ``2*pi / (2n)``."""
    slot = 2.0 * np.pi / n
    jitter = rng.uniform(-slot / 4.0, slot / 4.0, size=n)
    return (rng.uniform(0.0, 2.0 * np.pi) + slot * np.arange(n) + jitter) % (2.0 * np.pi)


def make_constellation(config, rng) -> Constellation:
    n = config.num_satellites
    az = sample_azimuths(n, rng)
    el = np.deg2rad(rng.uniform(*config.elevation_range, size=n))
    horiz = SAT_HEIGHT / np.tan(el)
    pos = np.column_stack([horiz * np.cos(az), horiz * np.sin(az), np.full(n, SAT_HEIGHT)])
    heading = rng.uniform(-np.pi, np.pi, size=n)
    vel = np.column_stack([SAT_SPEED * np.cos(heading), SAT_SPEED * np.sin(heading), np.zeros(n)])
    return Constellation(pos, vel)


def constellation_at(t: float, constellation: Constellation) -> List[SatelliteState]:
    return constellation.at(t)


def draw_fault_state(config: ScenarioConfig, rng) -> FaultState:
    n = config.num_satellites
    size = rng.integers(0, config.max_faults + 1)
    faulty = np.zeros(n, dtype=bool)
    faulty[rng.choice(n, size=size, replace=False)] = True
    bias = np.where(faulty, rng.uniform(*config.bias_range, size=n), 0.0)
    return FaultState(faulty, bias)


def update_fault_state(fs: FaultState, rng, config: ScenarioConfig) -> FaultState:
    """With probability ``fault_change_prob`` redraw the faulty subset and biases."""
    if rng.random() < config.fault_change_prob:
        return draw_fault_state(config, rng)
    return fs


def simulate_epoch(truth: StateVector, sat_pos, fs: FaultState, config: ScenarioConfig, rng, *,
                   time: float = 0.0, true_speed: float = 0.0, heading: Optional[float] = None,
                   sat_vel=None) -> EpochMeasurements:
    """Pseudoranges (biased and with doubled variance on faulty satellites) plus odometry."""
    sat_pos = np.asarray(sat_pos, dtype=float)
    n = sat_pos.shape[0]
    geo = ranges(truth.to_array(2)[None, :], sat_pos)
    noise_sd = np.where(fs.faulty, np.sqrt(2.0) * config.gnss_sigma, config.gnss_sigma)
    rho = geo + fs.bias + rng.normal(0.0, 1.0, size=n) * noise_sd
    speed = true_speed + rng.normal(0.0, config.odometry_sigma)
    odo = Odometry(speed=float(speed), heading=heading, sigma=config.odometry_sigma)
    return EpochMeasurements(time, sat_pos, rho, np.full(n, config.gnss_sigma), sat_vel=sat_vel,
                             sat_ids=np.arange(1, n + 1), odometry=odo)


def simulate_scenario(config: ScenarioConfig) -> Scenario:
    """Full localization run: trajectory, constellation, switching faults, measurements."""
    rngs = substreams(config.rng_seed)
    traj = generate_trajectory(config, rngs["trajectory"])
    const = make_constellation(config, rngs["constellation"])
    fs = draw_fault_state(config, rngs["faults"])
    epochs, masks, biases = [], [], []
    for j in range(1, len(traj)):
        if j > 1:
            fs = update_fault_state(fs, rngs["faults"], config)
        t = float(traj.times[j])
        ep = simulate_epoch(traj.state(j), const.positions_at(t), fs, config, rngs["noise"], time=t,
                            true_speed=float(traj.speeds[j]), heading=float(traj.headings[j]),
                            sat_vel=const.velocities)
        epochs.append(ep)
        masks.append(fs.faulty)
        biases.append(fs.bias)
    return Scenario(config, traj, const, epochs, np.array(masks), np.array(biases))


def simulate_integrity_scenario(config: IntegrityScenarioConfig, rng=None) -> Scenario:
    """Run with no odometry and a coordinated offset fault inside ``fault_window``.

    Faulty pseudoranges are generated from ``truth + offset``, so together they
    point at a consistent wrong position. ``extras`` records the offset.
    """
    rngs = substreams(config.rng_seed)
    if rng is not None:
        rngs["faults"] = rng
    traj = generate_trajectory(config, rngs["trajectory"])
    const = make_constellation(config, rngs["constellation"])
    frng, nrng = rngs["faults"], rngs["noise"]
    n = config.num_satellites
    magnitude = frng.uniform(*config.offset_range)
    direction = frng.uniform(-np.pi, np.pi)
    offset = magnitude * np.array([np.cos(direction), np.sin(direction)])

    def draw_subset():
        size = frng.integers(1, config.max_faults + 1)
        mask = np.zeros(n, dtype=bool)
        mask[frng.choice(n, size=size, replace=False)] = True
        return mask

    subset = draw_subset()
    lo, hi = config.fault_window
    epochs, masks, biases = [], [], []
    for j in range(1, len(traj)):
        t = float(traj.times[j])
        sat_pos = const.positions_at(t)
        truth = traj.positions[j]
        geo = ranges(truth[None, :], sat_pos)
        mask = np.zeros(n, dtype=bool)
        if lo <= t <= hi:
            if config.resample_subset_each_epoch:
                subset = draw_subset()
            mask = subset
        shifted = ranges((truth + offset)[None, :], sat_pos)
        bias = np.where(mask, shifted - geo, 0.0)
        rho = geo + bias + nrng.normal(0.0, config.gnss_sigma, size=n)
        epochs.append(EpochMeasurements(t, sat_pos, rho, np.full(n, config.gnss_sigma),
                                        sat_vel=const.velocities, sat_ids=np.arange(1, n + 1), odometry=None))
        masks.append(mask.copy())
        biases.append(bias)
    return Scenario(config, traj, const, epochs, np.array(masks), np.array(biases), {"offset": offset})
