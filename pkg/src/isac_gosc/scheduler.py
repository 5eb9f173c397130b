"""Per-slot transmission decisions: state encoding, value of information, reward, baselines.

Actions: 0 silent, 1 sense now, 2 sense now and send the resulting C&C next slot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import DegenerateCovarianceError
from .estimator import differential_entropy, entropy


class Action(IntEnum):
    SILENT = 0
    SENSE = 1
    SENSE_CC = 2


ACTION_COST = {Action.SILENT: 0.0, Action.SENSE: 0.5, Action.SENSE_CC: 1.0}


@dataclass(frozen=True)
class Normalization:
    """Scales used to map raw observations onto O(1) network inputs."""

    distance_scale: float = 100.0
    no_obstacle_value: float = 1.0
    max_slots: int = 2000
    clip: float = 10.0  # bound on every normalised feature

    def as_dict(self):
        return {
            "distance_scale": self.distance_scale,
            "no_obstacle_value": self.no_obstacle_value,
            "max_slots": self.max_slots,
            "clip": self.clip,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in ("distance_scale", "no_obstacle_value", "max_slots", "clip") if k in d})


@dataclass
class SchedState:
    d_dst: float  # Mahalanobis distance to the destination
    d_obs: float  # min Mahalanobis distance to detected obstacles (inf if none)
    det_cov: float
    slot: int
    n_signals: int

    def vector(self, norm: Normalization, det_max: float) -> np.ndarray:
        d_obs = norm.no_obstacle_value if math.isinf(self.d_obs) else self.d_obs / norm.distance_scale
        det = self.det_cov / det_max if det_max > 0 else 0.0
        v = np.array([
            self.d_dst / norm.distance_scale,
            d_obs,
            det,
            self.slot / norm.max_slots,
            self.n_signals / norm.max_slots,
        ])
        return np.clip(v, 0.0, norm.clip)


def step_penalty(slot: int) -> float:
    return 1.0 / (1.0 + math.exp(-0.1 * slot))


def compute_voi_s(cov_prev: np.ndarray, cov_now: np.ndarray) -> float:
    """Entropy reduction ½·ln(det Γ_prev / det Γ_now)."""
    if not (np.linalg.det(cov_prev) > 0 and np.linalg.det(cov_now) > 0):
        raise DegenerateCovarianceError("VoI of sensing needs positive-definite covariances")
    return entropy(cov_prev) - entropy(cov_now)


def compute_voi_c(dest, dist_with: float, dist_without: float, collided_with: bool,
                  collided_without: bool) -> float:
    """Navigation improvement from delivering a C&C command.

    ``dist_*`` are post-step UAV-destination distances in the branches with and
    without the new command (same disturbance realisation in both).
    """
    avoided = 1.0 if (collided_without and not collided_with) else 0.0
    return (dist_without - dist_with) + avoided


@dataclass
class Transition:
    """Everything the reward depends on for one slot."""

    slot: int
    action: int
    voi_s: float = 0.0
    voi_c: float = 0.0
    collided: bool = False


def compute_reward(tr: Transition, collision_penalty: float = 10.0) -> float:
    voi = tr.voi_s + tr.voi_c
    cost = ACTION_COST[Action(tr.action)]
    return voi - cost - step_penalty(tr.slot) - (collision_penalty if tr.collided else 0.0)


ENTROPY_THRESHOLD_CLEAR = 0.01
ENTROPY_THRESHOLD_OBSTACLE = 0.001


def baseline_policy(kind: str, slot: int, belief_entropy: float | None = None,
                    obstacles_detected: bool = False, period: int = 10) -> int:
    """Fixed transmission schedules.

    ``trad`` transmits every slot, ``periodic`` every ``period`` slots and
    ``event`` whenever ``belief_entropy`` reaches the threshold for the
    current obstacle context.
    """
    if kind == "trad":
        return int(Action.SENSE_CC)
    if kind == "periodic":
        return int(Action.SENSE_CC) if slot % period == 0 else int(Action.SILENT)
    if kind == "event":
        if belief_entropy is None:
            raise ValueError("event policy needs the belief entropy")
        thr = ENTROPY_THRESHOLD_OBSTACLE if obstacles_detected else ENTROPY_THRESHOLD_CLEAR
        return int(Action.SENSE_CC) if belief_entropy >= thr else int(Action.SILENT)
    raise ValueError(f"unknown baseline policy {kind!r}")


def event_entropy(cov) -> float:
    """Entropy compared against the event-trigger thresholds."""
    return differential_entropy(np.asarray(cov, dtype=float))
