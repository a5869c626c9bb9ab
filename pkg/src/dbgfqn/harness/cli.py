"""Command line: ``dbgfqn {train,eval,params,sweep}``."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from ..environments import env_names, make_env
from ..environments.gridverse import GridConfigError
from ..model_zoo import ALIGNED_ROWS, VARIANTS, ConfigError, EncoderConfig
from .experiment import ExperimentConfig, check_compatible, default_model, evaluate_checkpoint, run_experiment, thread_limits
from .report import report_parameters, sweep_configs

COLUMN_OF = {"dtqn": "DTQN4", "drfqn": "DRFQN", "dlfqn": "DLFQN", "dgfqn": "DGFQN",
             "dbrfqn": "DBRFQN", "dblfqn": "DBLFQN", "dbgfqn": "DBGFQN"}


def _seeds(text: str) -> tuple[int, ...]:
    return tuple(int(s) for s in text.split(",") if s.strip())


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config (JSON); flags given explicitly override it")
    p.add_argument("--env", choices=env_names())
    p.add_argument("--variant", choices=sorted(VARIANTS))
    p.add_argument("--ffn-layers", type=int, help="feed-forward stages for the dtqn variant")
    p.add_argument("--seed", type=_seeds, help="seed or comma-separated seeds")
    p.add_argument("--steps", type=int, help="total environment steps")
    p.add_argument("--out", help="output directory")
    p.add_argument("--deterministic", action="store_true", help="single-threaded, bit-reproducible run")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dbgfqn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train one variant on one environment")
    _common(train)
    train.add_argument("--checkpoint-every", type=int)
    train.add_argument("--resume", action="store_true", help="continue from the latest checkpoint in --out")

    ev = sub.add_parser("eval", help="greedy episodes from a saved checkpoint")
    _common(ev)
    ev.add_argument("--episodes", type=int, default=10)

    params = sub.add_parser("params", help="parameter-count report (CSV)")
    params.add_argument("--env", choices=env_names())
    params.add_argument("--row", choices=sorted(ALIGNED_ROWS), help="aligned published-table row")
    params.add_argument("--variant", choices=sorted(VARIANTS))
    params.add_argument("--ffn-layers", type=int)
    params.add_argument("--out", help="write the CSV here instead of stdout")

    sweep = sub.add_parser("sweep", help="train several variants over several seeds")
    _common(sweep)
    sweep.add_argument("--variants", default=",".join(sorted(VARIANTS)), help="comma-separated variants")
    return parser


def config_from_args(args, variant: Optional[str] = None) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
        if args.env and args.env != cfg.env:
            cfg = replace(cfg, env=args.env)
    else:
        if not args.env:
            raise ConfigError("either --config or --env is required")
        cfg = ExperimentConfig.create(args.env, variant or args.variant or "dbgfqn", args.ffn_layers)
    variant = variant or args.variant
    model = cfg.model
    if variant:
        model = model.replace(**{"sublayer": VARIANTS[variant]})
    if args.ffn_layers is not None:
        model = model.replace(ffn_layers=args.ffn_layers)
    cfg = replace(cfg, model=model)
    if args.seed:
        cfg = replace(cfg, seeds=args.seed)
    if args.steps is not None:
        cfg = replace(cfg, train=replace(cfg.train, total_steps=args.steps))
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    if args.deterministic:
        cfg = replace(cfg, deterministic=True)
    if getattr(args, "checkpoint_every", None) is not None:
        cfg = replace(cfg, checkpoint_every=args.checkpoint_every)
    check_compatible(make_env(cfg.env, **cfg.env_kwargs), cfg.model)
    return cfg


def cmd_train(args) -> int:
    cfg = config_from_args(args)
    summary = run_experiment(cfg, resume=args.resume)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_eval(args) -> int:
    cfg = config_from_args(args)
    with thread_limits(cfg.deterministic):
        for seed in cfg.seeds:
            ckpt = Path(cfg.out_dir) / "checkpoints" / f"seed{seed}"
            if not (ckpt / "state.pkl").exists():
                raise FileNotFoundError(f"no checkpoint for seed {seed} under {ckpt}")
            success, ret = evaluate_checkpoint(cfg, ckpt, args.episodes)
            print(f"seed {seed}: greedy success {success:.3f}, mean return {ret:.3f} over {args.episodes} episodes")
    return 0


def cmd_params(args) -> int:
    if args.row:
        base = EncoderConfig(**ALIGNED_ROWS[args.row])
    elif args.env:
        env = make_env(args.env)
        base = default_model(args.env, env.obs_width, env.action_count, args.variant or "dbgfqn", args.ffn_layers)
    else:
        raise ConfigError("params needs --env or --row")
    configs = sweep_configs(base)
    if args.variant:
        configs = {COLUMN_OF[args.variant]: configs[COLUMN_OF[args.variant]]}
        if args.ffn_layers is not None and args.variant == "dtqn":
            configs = {k: c.replace(ffn_layers=args.ffn_layers) for k, c in configs.items()}
    text = report_parameters(configs, args.out)
    if not args.out:
        sys.stdout.write(text)
    return 0


def cmd_sweep(args) -> int:
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    unknown = set(variants) - set(VARIANTS)
    if unknown:
        raise ConfigError(f"unknown variants {sorted(unknown)}")
    root = Path(args.out or "runs/sweep")
    rows = []
    for variant in variants:
        cfg = config_from_args(args, variant)
        cfg = replace(cfg, out_dir=str(root / variant))
        summary = run_experiment(cfg)
        for seed, s in summary["seeds"].items():
            rows.append([variant, seed, s["steps"], s["episodes"], s["final"], s["best"]])
    root.mkdir(parents=True, exist_ok=True)
    with (root / "sweep_summary.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["variant", "seed", "steps", "episodes", "final_success", "best_success"])
        writer.writerows(rows)
    print((root / "sweep_summary.csv").read_text(), end="")
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "params": cmd_params, "sweep": cmd_sweep}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with thread_limits(getattr(args, "deterministic", False)):
            return COMMANDS[args.command](args)
    except (ConfigError, GridConfigError, FileNotFoundError, KeyError, OSError) as exc:
        print(f"dbgfqn {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
