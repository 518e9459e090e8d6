"""Small fixtures shared by several test modules."""

import numpy as np

from robustpf.types import EpochMeasurements, Odometry


def ring_constellation(k, radius=1.5e7, height=2e7, phase=0.3):
    az = phase + 2 * np.pi * np.arange(k) / k
    return np.column_stack([radius * np.cos(az), radius * np.sin(az), np.full(k, height)])


def clean_epoch(truth_xy, k=6, sigma=5.0, rng=None, bias=None, time=1.0, odometry=None):
    sat = ring_constellation(k)
    rho = np.linalg.norm(sat - np.array([truth_xy[0], truth_xy[1], 0.0]), axis=1)
    if rng is not None:
        rho = rho + rng.normal(0.0, sigma, size=k)
    if bias is not None:
        rho = rho + np.asarray(bias, dtype=float)
    return EpochMeasurements(time, sat, rho, np.full(k, sigma), odometry=odometry)


def gauss_newton_fix(sat, rho, x0, iters=20):
    """Unweighted 2-D Gauss-Newton least squares, written independently of the library."""
    x = np.array(x0, dtype=float)
    for _ in range(iters):
        d = np.column_stack([x[0] - sat[:, 0], x[1] - sat[:, 1], -sat[:, 2]])
        rng_ = np.sqrt(np.sum(d * d, axis=1))
        J = d[:, :2] / rng_[:, None]
        dx = np.linalg.solve(J.T @ J, J.T @ (rho - rng_))
        x += dx
    return x


def still(heading=0.0):
    return Odometry(speed=0.0, heading=heading)
