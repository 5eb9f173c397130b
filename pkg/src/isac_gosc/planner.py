"""Dynamic-window command generation under Gaussian position uncertainty.

``select_command`` scores rollouts with Mahalanobis distances and keeps only
candidates whose closest approach clears the chance-constrained bound of
``collision_threshold``. ``select_command_inflated`` is the classical
Euclidean variant with obstacle radii inflated by the uncertainty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .errors import DegenerateCovarianceError
from .estimator import Estimate
from .world import TWO_PI, Command, DetectedObstacle, TaskConfig


def chi2_quantile(p: float = 0.99, dof: int = 2) -> float:
    return float(chi2.ppf(p, dof))


@dataclass(frozen=True)
class PlannerParams:
    horizon: int = 20  # I_p
    n_speed: int = 5
    n_heading: int = 11
    chi2_thresh: float = chi2_quantile(0.99, 2)

    def validate(self):
        checks = {
            "horizon": self.horizon >= 1,
            "n_speed": self.n_speed >= 2,
            "n_heading": self.n_heading >= 2,
            "chi2_thresh": self.chi2_thresh > 0,
        }
        return [k for k, ok in checks.items() if not ok]


@dataclass
class CandidateEvaluation:
    cmd: Command
    d_min: float
    d_dst: float
    b_star: int | None
    o_star: int | None
    feasible: bool


def feasible_set(prev: Command, cfg: TaskConfig, params: PlannerParams) -> list[Command]:
    """n_V × n_φ grid over the dynamic window, speed-major, headings wrapped to [0, 2π)."""
    v_lo = max(0.0, prev.speed - cfg.dv)
    v_hi = min(prev.speed + cfg.dv, cfg.v_max)
    speeds = np.linspace(v_lo, v_hi, params.n_speed)
    offsets = np.linspace(-cfg.dphi, cfg.dphi, params.n_heading)
    headings = (prev.heading + offsets) % TWO_PI
    return [Command(float(v), float(h)) for v in speeds for h in headings]


def _velocities(cands: list[Command]) -> np.ndarray:
    return np.array([c.velocity for c in cands]).reshape(-1, 2)


def rollout(origin: Estimate, cmd: Command, params: PlannerParams, dt: float, process_var: float):
    """Predicted positions (I_p × 2) and covariances (I_p × 2 × 2) for b = 1..I_p."""
    b = np.arange(1, params.horizon + 1)
    pts = origin.mean + np.outer(b * dt, cmd.velocity)
    covs = origin.cov[None, :, :] + (b * process_var)[:, None, None] * np.eye(2)
    return pts, covs


def _inv2(S: np.ndarray):
    """Batched closed-form inverse of 2×2 matrices (last two axes)."""
    a, b, c, d = S[..., 0, 0], S[..., 0, 1], S[..., 1, 0], S[..., 1, 1]
    det = a * d - b * c
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.stack([np.stack([d, -b], -1), np.stack([-c, a], -1)], -2) / det[..., None, None]
    return inv, det


def mahalanobis(p, q, sigma) -> float:
    sigma = np.asarray(sigma, dtype=float)
    inv, det = _inv2(sigma)
    if not det > 0 or not np.all(np.isfinite(inv)):
        raise DegenerateCovarianceError("Mahalanobis covariance is not positive definite")
    d = np.asarray(p, dtype=float) - np.asarray(q, dtype=float)
    return math.sqrt(max(float(d @ inv @ d), 0.0))


def lambda_min(S) -> float:
    S = np.asarray(S, dtype=float)
    a, d = S[0, 0], S[1, 1]
    off = 0.5 * (S[0, 1] + S[1, 0])
    mid = 0.5 * (a + d)
    rad = math.hypot(0.5 * (a - d), off)
    return mid - rad


def lambda_max(S) -> float:
    S = np.asarray(S, dtype=float)
    a, d = S[0, 0], S[1, 1]
    off = 0.5 * (S[0, 1] + S[1, 0])
    return 0.5 * (a + d) + math.hypot(0.5 * (a - d), off)


def collision_threshold(sigma, d_safe: float, chi2_thresh: float) -> float:
    """Smallest Mahalanobis separation that keeps the true separation above ``d_safe``
    with the chi-squared confidence."""
    lam = lambda_min(sigma)
    if not lam > 0:
        raise DegenerateCovarianceError("combined covariance is not positive definite")
    return math.sqrt(chi2_thresh) + d_safe / math.sqrt(lam)


def _combined_cov(traj_covs: np.ndarray, obstacle_cov: np.ndarray, dt: float) -> np.ndarray:
    b = np.arange(1, traj_covs.shape[-3] + 1)
    return traj_covs + obstacle_cov + (b * dt)[:, None, None] * np.eye(2)


def min_mahalanobis(traj, detected: list[DetectedObstacle], dt: float):
    """Closest Mahalanobis approach of a rollout ``(points, covs)`` to the detections.

    Returns ``(d_min, b_star, o_star)`` with 1-based ``b_star``; ``(inf, None, None)``
    when nothing is detected.
    """
    pts, covs = traj
    if not detected:
        return math.inf, None, None
    best = (math.inf, None, None)
    for o, det in enumerate(detected):
        inv, _ = _inv2(_combined_cov(covs, det.cov, dt))
        diff = pts - det.position
        d2 = np.einsum("bi,bij,bj->b", diff, inv, diff)
        b = int(np.argmin(d2))
        d = math.sqrt(max(float(d2[b]), 0.0))
        if d < best[0]:
            best = (d, b + 1, o)
    return best


def destination_distance(endpoint, end_cov, destination) -> float:
    return mahalanobis(endpoint, destination, end_cov)


_COV_FLOOR = 1e-12


def _argmin_first(values: np.ndarray) -> int:
    # np.argmin returns the first occurrence, i.e. lower speed then lower heading offset
    return int(np.argmin(values))


def evaluate_candidates(est: Estimate, detected: list[DetectedObstacle], prev: Command,
                        cfg: TaskConfig, params: PlannerParams) -> list[CandidateEvaluation]:
    """Score every dynamic-window candidate (vectorised over candidates)."""
    cands = feasible_set(prev, cfg, params)
    vel = _velocities(cands)
    I_p = params.horizon
    b = np.arange(1, I_p + 1)
    pts = est.mean[None, None, :] + (b * cfg.dt)[None, :, None] * vel[:, None, :]  # C × B × 2
    traj_cov = est.cov[None, :, :] + (b * cfg.process_var)[:, None, None] * np.eye(2)  # B × 2 × 2

    end_cov = est.cov + I_p * cfg.process_var * np.eye(2)
    if not np.linalg.det(end_cov) > 0:
        # noise-free limit: an isotropic floor ranks candidates like Euclidean distance
        end_cov = end_cov + _COV_FLOOR * np.eye(2)
    end_inv, end_det = _inv2(end_cov)
    if not end_det > 0:
        raise DegenerateCovarianceError("endpoint covariance is singular")
    dd = pts[:, -1, :] - np.asarray(cfg.destination)
    d_dst = np.sqrt(np.maximum(np.einsum("ci,ij,cj->c", dd, end_inv, dd), 0.0))

    n = len(cands)
    d_min = np.full(n, math.inf)
    b_star = np.zeros(n, dtype=int)
    o_star = np.full(n, -1)
    for o, det in enumerate(detected):
        inv, _ = _inv2(_combined_cov(traj_cov, det.cov, cfg.dt))
        diff = pts - det.position
        d2 = np.einsum("cbi,bij,cbj->cb", diff, inv, diff)
        bi = np.argmin(d2, axis=1)
        dm = np.sqrt(np.maximum(d2[np.arange(n), bi], 0.0))
        better = dm < d_min
        d_min = np.where(better, dm, d_min)
        b_star = np.where(better, bi + 1, b_star)
        o_star = np.where(better, o, o_star)

    out = []
    for c in range(n):
        if o_star[c] < 0:
            out.append(CandidateEvaluation(cands[c], math.inf, float(d_dst[c]), None, None, True))
            continue
        bs, os_ = int(b_star[c]), int(o_star[c])
        sigma = detected[os_].cov + est.cov + bs * cfg.process_var * np.eye(2)
        thr = collision_threshold(sigma, cfg.d_safe, params.chi2_thresh)
        out.append(CandidateEvaluation(cands[c], float(d_min[c]), float(d_dst[c]), bs, os_,
                                       bool(d_min[c] >= thr)))
    return out


def _normalised_score(d_dst: np.ndarray, d_min: np.ndarray) -> np.ndarray:
    dst_star = d_dst.max()
    score = d_dst / dst_star if dst_star > 0 else np.zeros_like(d_dst)
    if np.all(np.isfinite(d_min)):
        min_star = d_min.min()
        with np.errstate(divide="ignore", invalid="ignore"):
            obs_term = np.where(d_min > 0, min_star / d_min, math.inf)
        if min_star == 0:
            obs_term = np.where(d_min > 0, 0.0, 1.0)
        score = score + obs_term
    return score


def select_command(est: Estimate, detected: list[DetectedObstacle], prev: Command,
                   cfg: TaskConfig, params: PlannerParams) -> Command:
    """Mahalanobis-distance DWA command.

    Without detections the candidate closest (in Mahalanobis terms) to the
    destination at the horizon wins. Otherwise candidates failing the
    collision bound are discarded and the normalised two-term score is
    minimised; if none survive, the candidate with the largest clearance is
    returned.
    """
    evals = evaluate_candidates(est, detected, prev, cfg, params)
    d_dst = np.array([e.d_dst for e in evals])
    if not detected:
        return evals[_argmin_first(d_dst)].cmd
    keep = [i for i, e in enumerate(evals) if e.feasible]
    if not keep:
        d_min = np.array([e.d_min for e in evals])
        return evals[int(np.argmax(d_min))].cmd
    sub_dst = d_dst[keep]
    sub_min = np.array([evals[i].d_min for i in keep])
    return evals[keep[_argmin_first(_normalised_score(sub_dst, sub_min))]].cmd


def inflation_radius(meas_cov: np.ndarray, obstacle_cov: np.ndarray, d_safe: float, confidence: float) -> float:
    return confidence * math.sqrt(max(lambda_max(meas_cov + obstacle_cov), 0.0)) + d_safe


def select_command_inflated(est: Estimate, detected: list[DetectedObstacle], prev: Command,
                            cfg: TaskConfig, params: PlannerParams, confidence: float = 2.576) -> Command:
    """Euclidean DWA with obstacle discs inflated by ``confidence``·σ_max + D_safe."""
    cands = feasible_set(prev, cfg, params)
    vel = _velocities(cands)
    b = np.arange(1, params.horizon + 1)
    pts = est.mean[None, None, :] + (b * cfg.dt)[None, :, None] * vel[:, None, :]
    d_dst = np.linalg.norm(pts[:, -1, :] - np.asarray(cfg.destination), axis=1)
    if not detected:
        return cands[_argmin_first(d_dst)]
    clearance = np.full(len(cands), math.inf)
    for det in detected:
        rho = inflation_radius(est.cov, det.cov, cfg.d_safe, confidence)
        dist = np.linalg.norm(pts - det.position, axis=2).min(axis=1)
        clearance = np.minimum(clearance, dist - rho)
    keep = np.flatnonzero(clearance > 0)
    if keep.size == 0:
        return cands[int(np.argmax(clearance))]
    score = _normalised_score(d_dst[keep], clearance[keep])
    return cands[int(keep[_argmin_first(score)])]
