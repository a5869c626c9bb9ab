"""Desk-scale learning experiments (single CPU, hours rather than days).

The networks are shrunk (one encoder block, D=32, four heads, short context)
so that a 300k-step run fits in about an hour of numpy time. Two training
settings are rescaled for the shorter runs:

* the target network is refreshed every 1,500 steps, i.e. the same number of
  refreshes over 300k steps as 10,000-step refreshes give over 2M steps;
* the discount is 0.9. With no step penalty, a greedy policy that spins or
  bumps into a wall sees identical inputs at every step, so its inflated value
  only decays geometrically in the discount per target refresh; at 0.99 such
  loops soak up the whole desk budget.

Results land in ``<root>/<name>/``.
"""
from __future__ import annotations

import argparse
import json
import time
from dataclasses import replace
from pathlib import Path

from ..environments import random_success_probability
from ..rl_training import TrainConfig
from .experiment import ExperimentConfig, run_experiment

SMALL = dict(embed_dim=32, heads=4, layers=1)
DESK_TRAIN = dict(gamma=0.9, target_sync_period=1_500)

# Memory Cards with P=3 pairs and a 2P-step budget: a uniformly random guesser
# succeeds with probability ~0.062, so a 5x margin is reachable only by memory.
CARDS = dict(pairs=3, max_episode_steps=6)
CARDS_RANDOM = random_success_probability(CARDS["pairs"], CARDS["max_episode_steps"])


def experiments(seeds=(0, 1, 2)) -> dict[str, ExperimentConfig]:
    grid5 = ExperimentConfig.create(
        "gv_memory_5x5", "dbgfqn", model_overrides=dict(SMALL, context_length=16),
        train=TrainConfig(total_steps=300_000, **DESK_TRAIN), seeds=seeds, stop_at_success=0.80,
    )
    cards = ExperimentConfig.create(
        "memorycards", "dbgfqn", env_kwargs=CARDS, model_overrides=dict(SMALL, context_length=6),
        train=TrainConfig(total_steps=150_000, **DESK_TRAIN), seeds=seeds[:1], stop_at_success=min(1.0, 5 * CARDS_RANDOM + 0.05),
    )
    rooms = dict(
        model_overrides=dict(SMALL, context_length=16), train=TrainConfig(total_steps=300_000, **DESK_TRAIN),
        seeds=seeds,
    )
    return {
        "gv5_dbgfqn": grid5,
        "cards_dbgfqn": cards,
        "rooms7_dbgfqn": ExperimentConfig.create("gv_memory_4rooms_7x7", "dbgfqn", **rooms),
        "rooms7_dgfqn": ExperimentConfig.create("gv_memory_4rooms_7x7", "dgfqn", **rooms),
    }


def run_all(root, names=None, deterministic: bool = True) -> dict:
    root = Path(root)
    results = {}
    for name, cfg in experiments().items():
        if names and name not in names:
            continue
        cfg = replace(cfg, out_dir=str(root / name), deterministic=deterministic)
        start = time.time()
        summary = run_experiment(cfg)
        summary["seconds"] = time.time() - start
        results[name] = summary
        (root / name / "summary.json").write_text(json.dumps(summary, indent=2, default=str))
    return results


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="run the desk-scale learning experiments")
    parser.add_argument("--root", default="runs/desk")
    parser.add_argument("names", nargs="*", help=f"subset of {sorted(experiments())}")
    args = parser.parse_args(argv)
    run_all(args.root, args.names)
    return 0


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
