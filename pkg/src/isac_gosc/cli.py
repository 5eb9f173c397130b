"""Command-line entry point: train, eval, run and validate-lemma2."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import POLICIES, SimConfig, load_config, save_config
from .errors import ConfigError
from .evaluation import MissingWeightsError, evaluate, format_table, write_episodes, write_metrics, \
    write_trajectory
from .episode import run_episode
from .qnet import load_weights
from .training import train_gosc
from .validation import check_bound

DEFAULT_WEIGHTS = "artifacts/gosc_weights.qnet"


def _config(args) -> SimConfig:
    cfg = load_config(args.config) if args.config else SimConfig()
    if getattr(args, "seeds", None) is not None:
        cfg = dataclasses.replace(cfg, seeds=tuple(range(args.seeds)))
    if getattr(args, "policy", None) is not None:
        cfg = dataclasses.replace(cfg, policy=args.policy)
    if getattr(args, "out", None) is not None:
        cfg = dataclasses.replace(cfg, out_dir=args.out)
    return cfg


def _out_dir(cfg: SimConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_net(path):
    if not Path(path).exists():
        raise MissingWeightsError(f"weights file {path} not found; run the train command first")
    net, _ = load_weights(path)
    return net


def cmd_train(args) -> int:
    cfg = _config(args)
    out = _out_dir(cfg)
    weights = Path(args.weights)
    weights.parent.mkdir(parents=True, exist_ok=True)
    t0 = time.time()

    def progress(e):
        if e.episode % 50 == 0:
            print(f"episode {e.episode:5d} reward {e.reward:10.1f} {e.outcome:<9} slots {e.slots:5d} "
                  f"signals {e.n_signals:5d} loss {e.loss:.3g} [{time.time() - t0:.0f}s]", flush=True)

    _, history = train_gosc(cfg, weights, out / "train_log.jsonl", episodes=args.episodes, seed=args.seed,
                            progress=progress)
    wall = time.time() - t0
    save_config(cfg, out / "config.yaml")
    wins = sum(e.outcome == "success" for e in history[-100:])
    summary = {"episodes": len(history), "seed": args.seed, "wall_seconds": wall, "weights": str(weights),
               "success_last_100": wins}
    (out / "train_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"trained {len(history)} episodes in {wall:.0f}s; "
          f"success in last {min(100, len(history))}: {wins}; weights -> {weights}")
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    policies = args.policies.split(",") if args.policies else list(POLICIES)
    for p in policies:
        if p not in POLICIES:
            raise ConfigError(f"unknown policy {p!r}", key="policy")
    net = _load_net(args.weights) if "gosc" in policies else None
    table, results = evaluate(cfg, policies, net=net, workers=args.workers)
    out = _out_dir(cfg)
    write_metrics(table, out / "metrics.csv")
    write_episodes(results, out / "episodes.jsonl")
    save_config(cfg, out / "config.yaml")
    print(format_table(table))
    return 0


def cmd_run(args) -> int:
    cfg = _config(args)
    net = _load_net(args.weights) if cfg.policy == "gosc" else None
    res = run_episode(cfg, cfg.policy, args.seed, net=net, record=True)
    out = _out_dir(cfg)
    write_trajectory(res.trajectory, out / "trajectory.csv")
    write_episodes([res], out / "episodes.jsonl")
    print(json.dumps(res.record(), sort_keys=True))
    return 0


def cmd_validate(args) -> int:
    cfg = _config(args)
    trials = check_bound(np.random.default_rng(args.seed), n_instances=args.instances, n_draws=args.draws,
                         d_safe=cfg.task.d_safe)
    worst = min(t.safe_fraction for t in trials)
    print(f"{len(trials)} instances x {args.draws} draws: worst safe fraction {worst:.5f}")
    return 0 if worst >= 0.99 else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="isac-gosc", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed_default=0):
        sp.add_argument("--config", help="YAML file of key: value overrides")
        sp.add_argument("--seed", type=int, default=seed_default)
        sp.add_argument("--out", help="output directory (overrides out_dir)")

    t = sub.add_parser("train", help="train the E-DQN scheduler")
    common(t)
    t.add_argument("--episodes", type=int, help="override the configured episode count")
    t.add_argument("--weights", default=DEFAULT_WEIGHTS)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate policies on a shared seed list")
    common(e)
    e.add_argument("--seeds", type=int, help="evaluate seeds 0..n-1 (60 for the full protocol)")
    e.add_argument("--policies", help="comma-separated subset of " + ",".join(POLICIES))
    e.add_argument("--weights", default=DEFAULT_WEIGHTS)
    e.add_argument("--workers", type=int, default=1)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("run", help="run one episode and dump its trajectory")
    common(r)
    r.add_argument("--policy", choices=POLICIES)
    r.add_argument("--weights", default=DEFAULT_WEIGHTS)
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate-lemma2", help="Monte-Carlo check of the collision bound")
    common(v)
    v.add_argument("--instances", type=int, default=50)
    v.add_argument("--draws", type=int, default=100_000)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ConfigError, MissingWeightsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
