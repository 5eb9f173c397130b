"""Deep Q-learning of the transmission scheduler."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import SimConfig
from .episode import Episode
from .qnet import QNetwork, ReplayBuffer, act, save_weights, sync_target, train_step
from .scheduler import Normalization

log = logging.getLogger(__name__)

TRAIN_SEED_OFFSET = 1_000_000  # training layouts never overlap evaluation seeds


@dataclass
class TrainLogEntry:
    episode: int
    seed: int
    reward: float
    outcome: str
    slots: int
    n_signals: int
    loss: float


def _run(ep: Episode, net, target, buffer, cfg, rng, learn: bool, counter: list[int], losses: list[float]):
    tc = cfg.train
    s = ep.state_vector()
    while not ep.done:
        a = act(net, s, tc.epsilon, rng)
        r, done = ep.step(a)
        s_next = ep.state_vector()
        buffer.push(s, a, r, s_next, done)
        s = s_next
        if learn:
            losses.append(train_step(net, target, buffer, tc, rng))
            sync_target(net, target, counter[0], tc.target_update)
            counter[0] += 1
        elif buffer.full:
            return


def train_gosc(cfg: SimConfig, weights_path=None, log_path=None, episodes: int | None = None,
               seed: int = 0, progress=None) -> tuple[QNetwork, list[TrainLogEntry]]:
    """Train the scheduler's Q-network; optionally persist weights and a JSONL log.

    The replay buffer is first filled by acting with the untrained network,
    then every episode steps the eval network once per slot and hard-copies
    it into the target network every ``target_update`` steps.
    """
    tc = cfg.train
    n_episodes = tc.episodes if episodes is None else episodes
    streams = np.random.SeedSequence([seed, 0x5EED]).spawn(2)
    init_rng, rng = (np.random.default_rng(s) for s in streams)
    net = QNetwork((5, tc.hidden, tc.hidden, 3), init_rng)
    target = net.copy()
    norm = Normalization(max_slots=cfg.task.max_slots)
    buffer = ReplayBuffer(tc.buffer_capacity)
    counter = [0]
    history: list[TrainLogEntry] = []

    if n_episodes > 0:
        warm = 0
        while not buffer.full:
            ep = Episode(cfg, TRAIN_SEED_OFFSET + 500_000 + warm, rewards=True, normalization=norm)
            _run(ep, net, target, buffer, cfg, rng, False, counter, [])
            warm += 1

    for k in range(n_episodes):
        ep_seed = TRAIN_SEED_OFFSET + seed * 100_000 + k
        ep = Episode(cfg, ep_seed, rewards=True, normalization=norm)
        losses: list[float] = []
        _run(ep, net, target, buffer, cfg, rng, True, counter, losses)
        res = ep.result("gosc")
        entry = TrainLogEntry(k, ep_seed, res.total_reward, res.outcome, res.slots, res.n_signals,
                              float(np.mean(losses)) if losses else 0.0)
        history.append(entry)
        if progress is not None:
            progress(entry)
        log.debug("episode %d: %s", k, entry)

    if weights_path is not None:
        save_weights(net, weights_path, norm.as_dict())
    if log_path is not None:
        with Path(log_path).open("w") as fh:
            for e in history:
                fh.write(json.dumps(e.__dict__) + "\n")
    return net, history
