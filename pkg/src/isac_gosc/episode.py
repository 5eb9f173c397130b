"""Closed-loop episode: sensing, Kalman belief, command planning, delivery and world stepping.

Slot ``i`` runs in this order: deliver the C&C command planned in slot
``i-1`` (if any), sense the UAV if the action asks for it and fuse, plan a
new command if the action is 2, advance the true world by one slot, predict
the belief forward, check termination.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import channel, planner
from .config import SimConfig
from .estimator import Estimate, entropy, fuse, predict
from .qnet import QNetwork, act
from .scheduler import Action, Normalization, SchedState, Transition, baseline_policy, compute_reward, \
    compute_voi_c, event_entropy
from .world import Command, DetectedObstacle, Obstacle, Outcome, UavState, check_termination, initial_uav, \
    min_obstacle_distance, spawn_obstacles, step_obstacles, step_uav

STREAMS = ("layout", "process", "measurement", "fading", "detection", "exploration")
_OBS_EPS = 1e-9  # covariance floor for distances observed from a zero-covariance belief

TRAJECTORY_COLUMNS = (
    "slot", "x", "y", "est_x", "est_y", "det_cov", "action", "sensed", "cc_delivered",
    "speed", "heading", "dist_to_dst", "min_obstacle_dist",
)


def rng_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators per concern, all derived from one master seed."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(ss) for name, ss in zip(STREAMS, children)}


@dataclass
class EpisodeResult:
    seed: int
    policy: str
    outcome: str
    slots: int
    n_sense: int
    n_cc: int
    n_tx_slots: int
    path_length: float
    min_obstacle_dist: float
    total_reward: float = 0.0
    trajectory: list[dict] | None = field(default=None, repr=False)

    @property
    def n_signals(self) -> int:
        return self.n_sense + self.n_cc

    @property
    def success(self) -> bool:
        return self.outcome == Outcome.SUCCESS.value

    def record(self) -> dict:
        d = asdict(self)
        d.pop("trajectory")
        d["n_signals"] = self.n_signals
        return d


def belief_angle_spread(est: Estimate) -> tuple[float, float]:
    """Azimuth of the belief mean and the 1-σ angular spread implied by its covariance."""
    x, y = est.mean
    rho = math.hypot(x, y)
    theta = math.atan2(y, x)
    if rho < 1e-9:
        return theta, math.pi
    tangent = np.array([-math.sin(theta), math.cos(theta)])
    var_t = float(tangent @ est.cov @ tangent)
    return theta, math.sqrt(max(var_t, 0.0)) / rho


class Episode:
    """One seeded episode of the ISAC obstacle-avoidance task.

    ``inflated=True`` selects the traditional pipeline: the raw detection is
    handed to the inflation-based planner instead of the filtered belief.
    ``obstacles`` overrides the random layout.
    """

    def __init__(self, cfg: SimConfig, seed: int, *, inflated: bool = False, rewards: bool = False,
                 record: bool = False, obstacles: list[Obstacle] | None = None,
                 normalization: Normalization | None = None):
        self.cfg = cfg
        self.seed = seed
        self.inflated = inflated
        self.rewards = rewards
        self.norm = normalization or Normalization(max_slots=cfg.task.max_slots)
        self.rng = rng_streams(seed)
        task = cfg.task
        self.uav: UavState = initial_uav(task)
        layout = spawn_obstacles(task, self.rng["layout"])
        self.obstacles = layout if obstacles is None else [Obstacle(o.position.copy(), o.velocity.copy())
                                                           for o in obstacles]
        self.belief = Estimate(self.uav.position.copy())
        self.cov_out_prev = np.zeros((2, 2))
        self.pending: Command | None = None
        self.slot = 0
        self.n_sense = 0
        self.n_cc = 0
        self.n_tx_slots = 0
        self.path_length = 0.0
        self.min_dist = min_obstacle_distance(self.uav.position, self.obstacles)
        self.det_max = 0.0
        self.total_reward = 0.0
        self.trajectory: list[dict] | None = [] if record else None
        self.outcome = check_termination(self.uav.position, self.obstacles, task, 0)
        self._draw_detection_noise()

    # -- observation -------------------------------------------------------
    def _draw_detection_noise(self):
        sd = math.sqrt(self.cfg.task.obstacle_var)
        self._det_noise = sd * self.rng["detection"].standard_normal((len(self.obstacles), 2))

    def detections(self, center) -> list[DetectedObstacle]:
        """Obstacles inside the scan disc around ``center``; noise is fixed per slot."""
        center = np.asarray(center, dtype=float)
        cov = self.cfg.task.obstacle_var * np.eye(2)
        out = []
        for o, noise in zip(self.obstacles, self._det_noise):
            if np.linalg.norm(o.position - center) <= self.cfg.task.r_scan:
                out.append(DetectedObstacle(o.position + noise, cov))
        return out

    def observation(self) -> SchedState:
        est = self.belief
        cov = est.cov + _OBS_EPS * np.eye(2)
        d_dst = planner.mahalanobis(est.mean, self.cfg.task.destination, cov)
        d_obs = math.inf
        for det in self.detections(est.mean):
            d_obs = min(d_obs, planner.mahalanobis(est.mean, det.position, cov + det.cov))
        return SchedState(d_dst, d_obs, float(np.linalg.det(est.cov)), self.slot, self.n_sense + self.n_cc)

    def state_vector(self) -> np.ndarray:
        obs = self.observation()
        self.det_max = max(self.det_max, obs.det_cov)
        return obs.vector(self.norm, self.det_max)

    @property
    def done(self) -> bool:
        return self.outcome != Outcome.RUNNING

    # -- dynamics ----------------------------------------------------------
    def _beam(self) -> channel.Beamformer:
        theta, spread = belief_angle_spread(self.belief)
        return channel.synthesize_beamformer(channel.array_angle(theta), spread, self.cfg.radio)

    def step(self, action: int) -> tuple[float, bool]:
        """Execute one slot; returns ``(reward, done)``."""
        if self.done:
            raise RuntimeError("episode already finished")
        cfg, task = self.cfg, self.cfg.task
        action = int(action)
        i = self.slot
        tr = Transition(slot=i, action=action)

        delivered: Command | None = None
        latency = 0.0
        if self.pending is not None:
            _, theta, dist = channel.uav_geometry(self.uav.position, cfg.radio)
            _, latency = channel.comm_snr_latency(dist, channel.array_angle(theta), self._beam(), cfg.radio,
                                                  self.rng["fading"])
            if not latency < task.dt:
                self.outcome = Outcome.ABORTED
                return 0.0, True
            delivered, self.pending = self.pending, None
            self.belief.last_vel = delivered.velocity
            self.n_cc += 1

        meas = None
        if action in (Action.SENSE, Action.SENSE_CC):
            meas = channel.sample_measurement(self.uav.position, cfg.radio, self._beam(), self.rng["measurement"])
            prior = self.belief
            self.belief = fuse(prior, meas.position, meas.cov)
            if np.linalg.det(self.cov_out_prev) > 0 and np.linalg.det(self.belief.cov) > 0:
                tr.voi_s = entropy(self.cov_out_prev) - entropy(self.belief.cov)
            self.n_sense += 1
        if meas is not None or delivered is not None:
            self.n_tx_slots += 1

        if action == Action.SENSE_CC:
            active = delivered or self.uav.command
            if self.inflated:
                est = Estimate(meas.position, meas.cov)
                dets = self.detections(meas.position)
                self.pending = planner.select_command_inflated(est, dets, active, task, cfg.planner,
                                                               cfg.radio.confidence)
            else:
                dets = self.detections(self.belief.mean)
                self.pending = planner.select_command(self.belief, dets, active, task, cfg.planner)

        noise = math.sqrt(task.process_var) * self.rng["process"].standard_normal(2)
        prev_pos = self.uav.position
        nxt = step_uav(self.uav, delivered, latency, task, noise=noise)
        obstacles = step_obstacles(self.obstacles, task.dt, task.spawn_box)

        if self.rewards and delivered is not None:
            held = step_uav(self.uav, None, 0.0, task, noise=noise)
            dst = np.asarray(task.destination)
            tr.voi_c = compute_voi_c(
                dst,
                float(np.linalg.norm(nxt.position - dst)),
                float(np.linalg.norm(held.position - dst)),
                min_obstacle_distance(nxt.position, obstacles) <= task.d_safe,
                min_obstacle_distance(held.position, obstacles) <= task.d_safe,
            )

        self.path_length += float(np.linalg.norm(nxt.position - prev_pos))
        self.uav, self.obstacles = nxt, obstacles
        if self.trajectory is not None:
            self._log(i, action, meas is not None, delivered is not None)
        self.cov_out_prev = self.belief.cov.copy()
        self.belief = predict(self.belief, task.dt, task.process_var)
        self.slot += 1
        self._draw_detection_noise()
        self.min_dist = min(self.min_dist, min_obstacle_distance(self.uav.position, self.obstacles))
        self.outcome = check_termination(self.uav.position, self.obstacles, task, self.slot)
        tr.collided = self.outcome == Outcome.COLLISION
        reward = compute_reward(tr, cfg.train.collision_penalty) if self.rewards else 0.0
        self.total_reward += reward
        return reward, self.done

    def _log(self, slot, action, sensed, delivered):
        """True state at the end of the slot; belief after fusion, before the next prediction."""
        dst = np.asarray(self.cfg.task.destination)
        self.trajectory.append({
            "slot": slot,
            "x": float(self.uav.position[0]),
            "y": float(self.uav.position[1]),
            "est_x": float(self.belief.mean[0]),
            "est_y": float(self.belief.mean[1]),
            "det_cov": float(np.linalg.det(self.belief.cov)),
            "action": action,
            "sensed": int(sensed),
            "cc_delivered": int(delivered),
            "speed": self.uav.speed,
            "heading": self.uav.heading,
            "dist_to_dst": float(np.linalg.norm(self.uav.position - dst)),
            "min_obstacle_dist": min_obstacle_distance(self.uav.position, self.obstacles),
        })

    def result(self, policy_name: str) -> EpisodeResult:
        return EpisodeResult(
            seed=self.seed,
            policy=policy_name,
            outcome=self.outcome.value,
            slots=self.slot,
            n_sense=self.n_sense,
            n_cc=self.n_cc,
            n_tx_slots=self.n_tx_slots,
            path_length=self.path_length,
            min_obstacle_dist=self.min_dist,
            total_reward=self.total_reward,
            trajectory=self.trajectory,
        )


PolicyFn = Callable[[Episode], int]


def make_policy(kind: str, net: QNetwork | None = None) -> PolicyFn:
    """Decision rule for a named scheme. ``gosc`` acts greedily with ``net``."""
    if kind == "gosc":
        if net is None:
            raise ValueError("the gosc policy needs trained Q-network weights")
        rng = np.random.default_rng(0)
        return lambda ep: act(net, ep.state_vector(), 1.0, rng)
    if kind == "trad":
        return lambda ep: baseline_policy("trad", ep.slot)
    if kind == "periodic":
        return lambda ep: baseline_policy("periodic", ep.slot)
    if kind == "event":
        def event(ep: Episode) -> int:
            h = event_entropy(ep.belief.cov)
            return baseline_policy("event", ep.slot, h, bool(ep.detections(ep.belief.mean)))
        return event
    raise ValueError(f"unknown policy {kind!r}")


def run_episode(cfg: SimConfig, policy: str | PolicyFn, seed: int, *, net: QNetwork | None = None,
                record: bool = False, obstacles: list[Obstacle] | None = None,
                rewards: bool = False) -> EpisodeResult:
    """Run one episode to termination and summarise it."""
    name = policy if isinstance(policy, str) else getattr(policy, "__name__", "custom")
    decide = make_policy(policy, net) if isinstance(policy, str) else policy
    ep = Episode(cfg, seed, inflated=(name == "trad"), rewards=rewards, record=record, obstacles=obstacles)
    while not ep.done:
        ep.step(decide(ep))
    return ep.result(name)
