"""Ground-truth world: UAV and obstacle kinematics, obstacle detection, termination."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InfeasibleCommandError

TWO_PI = 2.0 * math.pi
_FEAS_TOL = 1e-9


@dataclass(frozen=True)
class Command:
    speed: float  # V [m/s]
    heading: float  # φ [rad], kept in [0, 2π)

    @property
    def velocity(self) -> np.ndarray:
        return np.array([self.speed * math.cos(self.heading), self.speed * math.sin(self.heading)])


@dataclass(frozen=True)
class TaskConfig:
    dt: float = 0.005  # Δt [s]
    v_max: float = 4.0
    dv: float = 0.5  # ΔV per slot [m/s]
    dphi: float = math.pi / 6  # Δφ per slot [rad]
    process_var: float = 0.005  # σ_η² [m²]
    d_safe: float = 0.5
    d_thr: float = 0.3
    r_scan: float = 0.4
    start: tuple[float, float] = (0.1, 0.1)
    destination: tuple[float, float] = (10.0, 10.0)
    n_obstacles: int = 10
    spawn_box: tuple[float, float, float, float] = (2.0, 8.0, 2.0, 8.0)  # x0, x1, y0, y1
    obstacle_speed: float = 1.0  # per-axis bound [m/s]
    obstacle_var: float = 0.001  # σ_o² [m²]
    max_slots: int = 2000  # I_max
    initial_heading: float = math.pi / 4

    def validate(self):
        x0, x1, y0, y1 = self.spawn_box
        checks = {
            "dt": self.dt > 0,
            "v_max": self.v_max > 0,
            "dv": self.dv > 0,
            "dphi": self.dphi > 0,
            "process_var": self.process_var >= 0,
            "d_safe": self.d_safe > 0,
            "d_thr": self.d_thr > 0,
            "r_scan": self.r_scan > 0,
            "n_obstacles": self.n_obstacles >= 0,
            "spawn_box": x1 > x0 and y1 > y0,
            "obstacle_speed": self.obstacle_speed >= 0,
            "obstacle_var": self.obstacle_var >= 0,
            "max_slots": self.max_slots >= 1,
        }
        return [k for k, ok in checks.items() if not ok]


@dataclass
class UavState:
    position: np.ndarray
    speed: float = 0.0
    heading: float = math.pi / 4
    prev_speed: float = 0.0
    prev_heading: float = math.pi / 4

    @property
    def command(self) -> Command:
        return Command(self.speed, self.heading)


@dataclass
class Obstacle:
    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))


@dataclass
class DetectedObstacle:
    position: np.ndarray  # p̂_o
    cov: np.ndarray  # Φ_o


class Outcome(str, Enum):
    RUNNING = "running"
    SUCCESS = "success"
    COLLISION = "collision"
    TIMEOUT = "timeout"
    ABORTED = "aborted"  # C&C latency exceeded the slot


def angle_diff(a: float, b: float) -> float:
    """Signed smallest difference a - b on the circle, in [-π, π)."""
    return (a - b + math.pi) % TWO_PI - math.pi


def is_feasible(cmd: Command, prev: Command, cfg: TaskConfig) -> bool:
    return (
        -_FEAS_TOL <= cmd.speed <= cfg.v_max + _FEAS_TOL
        and abs(cmd.speed - prev.speed) <= cfg.dv + _FEAS_TOL
        and abs(angle_diff(cmd.heading, prev.heading)) <= cfg.dphi + _FEAS_TOL
    )


def initial_uav(cfg: TaskConfig) -> UavState:
    h = cfg.initial_heading % TWO_PI
    return UavState(np.array(cfg.start, dtype=float), 0.0, h, 0.0, h)


def step_uav(state: UavState, cmd: Command | None, latency: float, cfg: TaskConfig,
             rng: np.random.Generator | None = None, noise=None) -> UavState:
    """Advance the UAV one slot.

    Without a new command the held command flies the whole slot. With one,
    the held command flies for ``latency`` and the new one for the remainder.
    The disturbance is ``noise`` if given, else drawn from ``rng``; with
    neither the step is noiseless.
    """
    held = state.command
    if cmd is None:
        disp = held.velocity * cfg.dt
        new_cmd = held
    else:
        if not is_feasible(cmd, held, cfg):
            raise InfeasibleCommandError(f"{cmd} not reachable from {held}")
        if not 0.0 <= latency < cfg.dt:
            raise ValueError(f"latency {latency!r} outside [0, dt)")
        new_cmd = Command(cmd.speed, cmd.heading % TWO_PI)
        disp = held.velocity * latency + new_cmd.velocity * (cfg.dt - latency)
    if noise is not None:
        disp = disp + np.asarray(noise, dtype=float)
    elif rng is not None and cfg.process_var > 0:
        disp = disp + math.sqrt(cfg.process_var) * rng.standard_normal(2)
    return UavState(state.position + disp, new_cmd.speed, new_cmd.heading, held.speed, held.heading)


def spawn_obstacles(cfg: TaskConfig, rng: np.random.Generator) -> list[Obstacle]:
    x0, x1, y0, y1 = cfg.spawn_box
    obs = []
    for _ in range(cfg.n_obstacles):
        p = np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)])
        v = rng.uniform(-cfg.obstacle_speed, cfg.obstacle_speed, size=2)
        obs.append(Obstacle(p, v))
    return obs


def step_obstacles(obstacles: list[Obstacle], dt: float, box=None) -> list[Obstacle]:
    """Constant-velocity motion; with ``box`` given, obstacles bounce off its walls."""
    out = []
    for o in obstacles:
        p = o.position + o.velocity * dt
        v = o.velocity.copy()
        if box is not None:
            lo = np.array([box[0], box[2]])
            hi = np.array([box[1], box[3]])
            below, above = p < lo, p > hi
            p = np.where(below, 2 * lo - p, np.where(above, 2 * hi - p, p))
            v = np.where(below | above, -v, v)
        out.append(Obstacle(p, v))
    return out


def detect_obstacles(center, obstacles: list[Obstacle], cfg: TaskConfig,
                     rng: np.random.Generator | None = None) -> list[DetectedObstacle]:
    """Noisy detections of the obstacles inside the closed scan disc around ``center``."""
    center = np.asarray(center, dtype=float)
    cov = cfg.obstacle_var * np.eye(2)
    sd = math.sqrt(cfg.obstacle_var)
    found = []
    for o in obstacles:
        if np.linalg.norm(o.position - center) <= cfg.r_scan:
            p = o.position.copy()
            if rng is not None and sd > 0:
                p = p + sd * rng.standard_normal(2)
            found.append(DetectedObstacle(p, cov.copy()))
    return found


def min_obstacle_distance(p, obstacles: list[Obstacle]) -> float:
    if not obstacles:
        return math.inf
    pos = np.array([o.position for o in obstacles])
    return float(np.min(np.linalg.norm(pos - np.asarray(p), axis=1)))


def check_termination(position, obstacles: list[Obstacle], cfg: TaskConfig, slot: int) -> Outcome:
    if min_obstacle_distance(position, obstacles) <= cfg.d_safe:
        return Outcome.COLLISION
    if np.linalg.norm(np.asarray(position) - np.asarray(cfg.destination)) <= cfg.d_thr:
        return Outcome.SUCCESS
    if slot >= cfg.max_slots:
        return Outcome.TIMEOUT
    return Outcome.RUNNING
