"""A small fully-connected Q-network in numpy, with a replay ring and a DQN update."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InsufficientBufferError

WEIGHTS_MAGIC = "isac-gosc-qnet"


class QNetwork:
    """ReLU MLP ``sizes[0] -> ... -> sizes[-1]`` with a linear output head.

    Weights are stored as ``(fan_in, fan_out)`` matrices so a batch ``x`` of
    shape ``(n, fan_in)`` maps through ``x @ W + b``.
    """

    def __init__(self, sizes=(5, 128, 128, 3), rng: np.random.Generator | None = None):
        self.sizes = tuple(int(s) for s in sizes)
        self.params: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            if rng is None:
                W = np.zeros((fan_in, fan_out))
                b = np.zeros(fan_out)
            else:
                W = rng.uniform(-bound, bound, size=(fan_in, fan_out))
                b = rng.uniform(-bound, bound, size=fan_out)
            self.params += [W, b]

    def copy(self) -> "QNetwork":
        net = QNetwork.__new__(QNetwork)
        net.sizes = self.sizes
        net.params = [p.copy() for p in self.params]
        return net

    def load_from(self, other: "QNetwork"):
        for mine, theirs in zip(self.params, other.params):
            mine[...] = theirs

    @property
    def shapes(self) -> list[tuple[int, ...]]:
        return [p.shape for p in self.params]

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, vec: np.ndarray):
        vec = np.asarray(vec, dtype=float)
        i = 0
        for p in self.params:
            p[...] = vec[i:i + p.size].reshape(p.shape)
            i += p.size
        if i != vec.size:
            raise ValueError(f"expected {i} parameters, got {vec.size}")

    def forward(self, x: np.ndarray, keep=False):
        h = np.atleast_2d(np.asarray(x, dtype=float))
        acts = [h]
        n_layers = len(self.params) // 2
        for layer in range(n_layers):
            W, b = self.params[2 * layer], self.params[2 * layer + 1]
            h = h @ W + b
            if layer < n_layers - 1:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return (h, acts) if keep else h

    def __call__(self, x):
        return self.forward(x)

    def backward(self, acts: list[np.ndarray], grad_out: np.ndarray) -> list[np.ndarray]:
        """Parameter gradients given activations from ``forward(keep=True)``."""
        grads: list[np.ndarray] = [None] * len(self.params)  # type: ignore[list-item]
        g = grad_out
        n_layers = len(self.params) // 2
        for layer in reversed(range(n_layers)):
            h_in = acts[layer]
            grads[2 * layer] = h_in.T @ g
            grads[2 * layer + 1] = g.sum(axis=0)
            if layer > 0:
                g = (g @ self.params[2 * layer].T) * (acts[layer] > 0)
        return grads


def q_forward(net: QNetwork, state) -> np.ndarray:
    """Q-values for a single state vector."""
    return net.forward(np.asarray(state, dtype=float))[0]


def td_loss_and_grads(net: QNetwork, target_net: QNetwork, s, a, r, s_next, terminal, gamma: float):
    """Mean-squared TD error against the target network, and its gradients."""
    s = np.atleast_2d(s)
    s_next = np.atleast_2d(s_next)
    a = np.asarray(a, dtype=int)
    r = np.asarray(r, dtype=float)
    terminal = np.asarray(terminal, dtype=bool)
    q_next = target_net.forward(s_next).max(axis=1)
    target = r + gamma * np.where(terminal, 0.0, q_next)
    q, acts = net.forward(s, keep=True)
    n = len(a)
    err = q[np.arange(n), a] - target
    loss = float(np.mean(err**2))
    grad_out = np.zeros_like(q)
    grad_out[np.arange(n), a] = 2.0 * err / n
    return loss, net.backward(acts, grad_out)


class ReplayBuffer:
    """Fixed-capacity ring of transitions; slot ``c mod capacity`` is overwritten."""

    def __init__(self, capacity: int, state_dim: int = 5):
        self.capacity = int(capacity)
        self.s = np.zeros((self.capacity, state_dim))
        self.a = np.zeros(self.capacity, dtype=int)
        self.r = np.zeros(self.capacity)
        self.s_next = np.zeros((self.capacity, state_dim))
        self.terminal = np.zeros(self.capacity, dtype=bool)
        self.count = 0  # total insertions

    def __len__(self):
        return min(self.count, self.capacity)

    @property
    def full(self) -> bool:
        return self.count >= self.capacity

    def push(self, s, a, r, s_next, terminal):
        i = self.count % self.capacity
        self.s[i], self.a[i], self.r[i] = s, a, r
        self.s_next[i], self.terminal[i] = s_next, terminal
        self.count += 1

    def sample(self, n: int, rng: np.random.Generator):
        if len(self) < n:
            raise InsufficientBufferError(f"need {n} experiences, have {len(self)}")
        idx = rng.choice(len(self), size=n, replace=False)
        return self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.terminal[idx]


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.9
    epsilon: float = 0.8  # probability of acting greedily
    buffer_capacity: int = 8000
    batch_size: int = 32
    learning_rate: float = 0.001
    target_update: int = 100
    collision_penalty: float = 10.0
    episodes: int = 1500
    hidden: int = 128

    def validate(self):
        checks = {
            "gamma": 0 < self.gamma < 1,
            "epsilon": 0 <= self.epsilon <= 1,
            "buffer_capacity": self.buffer_capacity >= 1,
            "batch_size": 1 <= self.batch_size <= self.buffer_capacity,
            "learning_rate": self.learning_rate > 0,
            "target_update": self.target_update >= 1,
            "collision_penalty": self.collision_penalty >= 0,
            "episodes": self.episodes >= 0,
            "hidden": self.hidden >= 1,
        }
        return [k for k, ok in checks.items() if not ok]


def train_step(net: QNetwork, target_net: QNetwork, buffer: ReplayBuffer, cfg: TrainConfig,
               rng: np.random.Generator) -> float:
    """One gradient-descent step on a uniformly sampled minibatch; returns the loss."""
    s, a, r, s_next, term = buffer.sample(cfg.batch_size, rng)
    loss, grads = td_loss_and_grads(net, target_net, s, a, r, s_next, term, cfg.gamma)
    for p, g in zip(net.params, grads):
        p -= cfg.learning_rate * g
    return loss


def sync_target(net: QNetwork, target_net: QNetwork, counter: int, every: int) -> bool:
    if counter % every == 0:
        target_net.load_from(net)
        return True
    return False


def act(net: QNetwork, state, epsilon: float, rng: np.random.Generator) -> int:
    """Greedy with probability ``epsilon`` (ties to the lowest action), else uniform."""
    if rng.random() <= epsilon:
        return int(np.argmax(q_forward(net, state)))
    return int(rng.integers(0, net.sizes[-1]))


def save_weights(net: QNetwork, path, normalization: dict | None = None):
    """Write a one-line JSON header followed by little-endian float64 parameters."""
    header = {
        "format": WEIGHTS_MAGIC,
        "version": 1,
        "sizes": list(net.sizes),
        "shapes": [list(s) for s in net.shapes],
        "dtype": "<f8",
        "normalization": normalization or {},
    }
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(net.flat().astype("<f8").tobytes())
    return path


def load_weights(path) -> tuple[QNetwork, dict]:
    raw = Path(path).read_bytes()
    head, _, body = raw.partition(b"\n")
    header = json.loads(head)
    if header.get("format") != WEIGHTS_MAGIC:
        raise ValueError(f"{path}: not a Q-network weights file")
    net = QNetwork(header["sizes"])
    net.set_flat(np.frombuffer(body, dtype=header["dtype"]))
    return net, header.get("normalization", {})
