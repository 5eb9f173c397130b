"""Paired evaluation of scheduling policies over a shared seed list, and result persistence."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .config import SimConfig
from .episode import TRAJECTORY_COLUMNS, EpisodeResult, run_episode
from .qnet import QNetwork


class MissingWeightsError(RuntimeError):
    """The gosc policy was requested without trained Q-network weights."""


@dataclass
class AggregateMetrics:
    """Per-policy summary. Every mean is over successful episodes only."""

    policy: str
    episodes: int
    success_rate: float
    mean_signals: float
    mean_slots: float
    mean_path_length: float
    mean_min_distance: float
    mean_tx_slots: float
    signal_reduction: float = math.nan  # 1 - signals / trad signals
    tx_slot_reduction: float = math.nan


def _mean(values) -> float:
    values = list(values)
    return float(np.mean(values)) if values else math.nan


def aggregate(policy: str, results: list[EpisodeResult]) -> AggregateMetrics:
    ok = [r for r in results if r.success]
    return AggregateMetrics(
        policy=policy,
        episodes=len(results),
        success_rate=len(ok) / len(results) if results else 0.0,
        mean_signals=_mean(r.n_signals for r in ok),
        mean_slots=_mean(r.slots for r in ok),
        mean_path_length=_mean(r.path_length for r in ok),
        mean_min_distance=_mean(r.min_obstacle_dist for r in ok),
        mean_tx_slots=_mean(r.n_tx_slots for r in ok),
    )


def _reduction(value: float, reference: float) -> float:
    if not (reference > 0) or math.isnan(value):
        return math.nan
    return 1.0 - value / reference


def add_reductions(table: dict[str, AggregateMetrics], reference: str = "trad"):
    ref = table.get(reference)
    if ref is None:
        return
    for m in table.values():
        m.signal_reduction = _reduction(m.mean_signals, ref.mean_signals)
        m.tx_slot_reduction = _reduction(m.mean_tx_slots, ref.mean_tx_slots)


def _job(args):
    cfg, policy, seed, net = args
    return run_episode(cfg, policy, seed, net=net)


def evaluate(cfg: SimConfig, policies, net: QNetwork | None = None, seeds=None,
             workers: int = 1) -> tuple[dict[str, AggregateMetrics], list[EpisodeResult]]:
    """Run every policy on the same seeds; returns the metrics table and all episode results."""
    policies = list(policies)
    if "gosc" in policies and net is None:
        raise MissingWeightsError("evaluating gosc needs a trained weights file (see the train command)")
    seeds = list(cfg.seeds if seeds is None else seeds)
    jobs = [(cfg, p, s, net if p == "gosc" else None) for p in policies for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    table = {p: aggregate(p, [r for r in results if r.policy == p]) for p in policies}
    add_reductions(table)
    return table, results


METRIC_COLUMNS = tuple(f.name for f in fields(AggregateMetrics))


def write_metrics(table: dict[str, AggregateMetrics], path):
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
        w.writeheader()
        for m in table.values():
            w.writerow({k: getattr(m, k) for k in METRIC_COLUMNS})


def write_episodes(results: list[EpisodeResult], path):
    with Path(path).open("w") as fh:
        for r in results:
            fh.write(json.dumps(r.record(), sort_keys=True) + "\n")


def write_trajectory(rows: list[dict], path):
    """Per-slot log as CSV with a header line naming every column."""
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TRAJECTORY_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def format_table(table: dict[str, AggregateMetrics]) -> str:
    head = f"{'policy':<9}{'success':>8}{'signals':>10}{'slots':>9}{'path':>8}{'min_d':>8}{'tx':>9}{'sig_red':>9}{'tx_red':>8}"
    lines = [head]
    for m in table.values():
        lines.append(
            f"{m.policy:<9}{m.success_rate:>8.2f}{m.mean_signals:>10.1f}{m.mean_slots:>9.1f}"
            f"{m.mean_path_length:>8.2f}{m.mean_min_distance:>8.3f}{m.mean_tx_slots:>9.1f}"
            f"{m.signal_reduction:>9.3f}{m.tx_slot_reduction:>8.3f}"
        )
    return "\n".join(lines)
