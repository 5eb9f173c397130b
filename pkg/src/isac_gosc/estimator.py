"""Kalman filter for the BS's belief of the UAV position."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCovarianceError, DegenerateSystemError


def _sym(c: np.ndarray) -> np.ndarray:
    return 0.5 * (c + c.T)


@dataclass
class Estimate:
    mean: np.ndarray
    cov: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))
    last_vel: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def copy(self) -> "Estimate":
        return Estimate(self.mean.copy(), self.cov.copy(), self.last_vel.copy())


def predict(est: Estimate, dt: float, process_var: float) -> Estimate:
    """Propagate with the last commanded velocity; covariance grows by σ_η²·I."""
    return Estimate(
        est.mean + est.last_vel * dt,
        _sym(est.cov + process_var * np.eye(2)),
        est.last_vel.copy(),
    )


def kalman_gain(prior_cov: np.ndarray, meas_cov: np.ndarray) -> np.ndarray:
    innov = prior_cov + meas_cov
    if abs(np.linalg.det(innov)) < 1e-300 or np.linalg.cond(innov) > 1e15:
        raise DegenerateSystemError("innovation covariance is singular")
    return prior_cov.T @ np.linalg.inv(innov)


def fuse(est: Estimate, meas_position, meas_cov: np.ndarray) -> Estimate:
    """Blend the predicted position with a sensed one."""
    G = kalman_gain(est.cov, meas_cov)
    mean = est.mean + G @ (np.asarray(meas_position, dtype=float) - est.mean)
    cov = _sym((np.eye(2) - G) @ est.cov)
    return Estimate(mean, cov, est.last_vel.copy())


def entropy(cov: np.ndarray) -> float:
    """½·ln det(cov); the additive Gaussian constant is dropped.

    Returns ``-inf`` for a zero-determinant covariance; a negative determinant
    raises.
    """
    det = float(np.linalg.det(cov))
    if det < 0 and det < -1e-18:
        raise DegenerateCovarianceError(f"covariance determinant {det!r} is negative")
    if det <= 0:
        return -math.inf
    return 0.5 * math.log(det)


GAUSSIAN_ENTROPY_OFFSET = math.log(2.0 * math.pi * math.e)


def differential_entropy(cov: np.ndarray) -> float:
    """Differential entropy of a 2-D Gaussian with covariance ``cov`` [nats]."""
    return GAUSSIAN_ENTROPY_OFFSET + entropy(cov)
