"""Monte-Carlo check of the Mahalanobis collision bound used by the planner."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .planner import chi2_quantile, collision_threshold, mahalanobis


@dataclass
class BoundTrial:
    d_mahalanobis: float
    threshold: float
    safe_fraction: float  # fraction of draws with true separation > d_safe


def random_spd(rng: np.random.Generator, scale: float) -> np.ndarray:
    """Random 2x2 SPD matrix with eigenvalues in [0.05, 1]·scale and a random orientation."""
    a = rng.uniform(0, np.pi)
    R = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    return R @ np.diag(rng.uniform(0.05, 1.0, 2) * scale) @ R.T


def check_bound(rng: np.random.Generator, n_instances: int = 50, n_draws: int = 100_000,
                d_safe: float = 0.5, margin: tuple[float, float] = (1.0, 1.05)) -> list[BoundTrial]:
    """Sample UAV/obstacle covariance pairs and place the obstacle just beyond the bound.

    For each instance the mean offset is chosen so the Mahalanobis distance is
    ``threshold * u`` with ``u ~ U(margin)``; the true positions are then drawn
    from their Gaussians (paired draws) and the safe fraction is recorded.
    """
    chi2 = chi2_quantile()
    out = []
    for _ in range(n_instances):
        scale = 10.0 ** rng.uniform(-3, 0)
        cov_u = random_spd(rng, scale)
        cov_o = random_spd(rng, scale * rng.uniform(0.1, 10.0))
        sigma = cov_u + cov_o
        thr = collision_threshold(sigma, d_safe, chi2)
        direction = rng.standard_normal(2)
        direction /= np.sqrt(direction @ np.linalg.solve(sigma, direction))  # unit Mahalanobis length
        offset = direction * thr * rng.uniform(*margin)
        mu_u = rng.uniform(-5, 5, 2)
        mu_o = mu_u + offset
        d = mahalanobis(mu_u, mu_o, sigma)
        p_u = rng.multivariate_normal(mu_u, cov_u, size=n_draws)
        p_o = rng.multivariate_normal(mu_o, cov_o, size=n_draws)
        safe = np.linalg.norm(p_u - p_o, axis=1) > d_safe
        out.append(BoundTrial(d, thr, float(safe.mean())))
    return out
