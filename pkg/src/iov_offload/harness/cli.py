"""Command-line entry point.

Subcommands: train, evaluate, sweep, oracle-gap, describe-config, render.
Any failed experiment cell produces a nonzero exit code with the failing
cells named on stderr.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from ..env import EnvConfig, OffloadEnv
from ..trainer import TrainConfig, train
from .configio import describe_config_text, load_config_file
from .experiments import (
    ExperimentError,
    ExperimentSpec,
    evaluate_learner,
    oracle_gap_table,
    run_convergence,
    run_scalability,
    write_csv,
)
from .svgplot import render_csv_chart

__all__ = ["main", "build_parser"]


def _load_configs(args) -> tuple[EnvConfig, TrainConfig]:
    if getattr(args, "config", None):
        env_cfg, train_cfg = load_config_file(args.config)
    else:
        env_cfg, train_cfg = EnvConfig(), TrainConfig()
    if getattr(args, "mixer", None):
        train_cfg = replace(train_cfg, mixer=args.mixer)
    if getattr(args, "seed", None) is not None:
        train_cfg = replace(train_cfg, seed=args.seed)
    if getattr(args, "episodes", None) is not None:
        train_cfg = replace(train_cfg, episodes=args.episodes)
    return env_cfg, train_cfg


def _add_common(p: argparse.ArgumentParser, mixer: bool = True) -> None:
    p.add_argument("--config", type=Path, help="JSON config file with env/train sections")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", type=Path, default=Path("runs"))
    if mixer:
        p.add_argument("--mixer", choices=("vdn", "qmix", "kmarl"), default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iov-offload",
        description="Simulate and train multi-agent computation offloading in a vehicular edge network.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one policy and write metrics + checkpoints")
    _add_common(p)
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--name", default=None, help="run name prefix for output files")

    p = sub.add_parser("evaluate", help="evaluate a checkpoint greedily")
    _add_common(p, mixer=False)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--episodes", type=int, default=20)
    p.add_argument("--vehicles", type=int, default=None, help="override fleet size")
    p.add_argument("--out-csv", type=Path, default=None)

    p = sub.add_parser("sweep", help="latency vs fleet size for trained policies and baselines")
    _add_common(p, mixer=False)
    p.add_argument("--counts", default="4,8,12", help="comma-separated vehicle counts")
    p.add_argument("--seeds", default="0,1,2", help="comma-separated training seeds")
    p.add_argument("--mixers", default="vdn,qmix,kmarl")
    p.add_argument("--episodes", type=int, default=None, help="training episodes per cell")
    p.add_argument("--eval-episodes", type=int, default=20)
    p.add_argument("--retrain", action="store_true", help="also retrain per count")

    p = sub.add_parser("oracle-gap", help="exact vs greedy table over random slot instances")
    _add_common(p, mixer=False)
    p.add_argument("--instances", type=int, default=50)

    sub.add_parser("describe-config", help="print every config key, type, default and meaning")

    p = sub.add_parser("render", help="re-render a chart from its CSV")
    p.add_argument("--csv", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--x", required=True, help="x column name")
    p.add_argument("--y", required=True, help="comma-separated y column names")
    p.add_argument("--title", default="")

    p = sub.add_parser("convergence", help="reward curves for all mixers on identical seeds")
    _add_common(p, mixer=False)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--mixers", default="vdn,qmix,kmarl")
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--name", default="convergence")

    return parser


def _ints(csv_text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in csv_text.split(",") if v.strip())


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ExperimentError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, OSError) as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    if args.command == "describe-config":
        print(describe_config_text())
        return 0

    if args.command == "render":
        render_csv_chart(args.csv, args.out, args.x, args.y.split(","), title=args.title)
        print(f"wrote {args.out}")
        return 0

    if args.command == "train":
        env_cfg, train_cfg = _load_configs(args)
        name = args.name or f"{train_cfg.mixer}_s{train_cfg.seed}"
        res = train(train_cfg, OffloadEnv(env_cfg), out_dir=args.out_dir, run_name=name)
        print(
            f"trained mixer={train_cfg.mixer} seed={train_cfg.seed} episodes={train_cfg.episodes} "
            f"final_smoothed_return={res.final_smoothed_return:.9g}"
        )
        print(f"metrics: {res.csv_path}")
        print(f"checkpoint: {res.checkpoint_paths[-1]}")
        return 0

    if args.command == "evaluate":
        env_cfg, _ = _load_configs(args)
        if args.vehicles is not None:
            env_cfg = env_cfg.with_vehicles(args.vehicles)
        ev = evaluate_learner(
            args.checkpoint, env_cfg, args.episodes, seed=args.seed if args.seed is not None else 0
        )
        print(
            f"episodes={ev.episodes} slots={ev.slots} mean_latency={ev.mean_latency:.9g} "
            f"mean_system_latency={ev.mean_system_latency:.9g} mean_reward={ev.mean_reward:.9g}"
        )
        if args.out_csv:
            write_csv(
                args.out_csv,
                ["episodes", "slots", "mean_latency", "mean_system_latency", "mean_reward"],
                [[ev.episodes, ev.slots, ev.mean_latency, ev.mean_system_latency, ev.mean_reward]],
            )
            print(f"wrote {args.out_csv}")
        return 0

    if args.command == "convergence":
        env_cfg, train_cfg = _load_configs(args)
        spec = ExperimentSpec(
            name=args.name,
            env=env_cfg,
            train=train_cfg,
            seeds=_ints(args.seeds),
            mixers=tuple(args.mixers.split(",")),
            out_dir=args.out_dir,
        )
        res = run_convergence(spec)
        for mixer in spec.mixers:
            finals = res.final_returns(mixer)
            print(f"{mixer}: final smoothed returns {[f'{v:.6g}' for v in finals]}")
        print(f"summary: {res.summary_csv}\nchart: {res.chart}")
        return 0

    if args.command == "sweep":
        env_cfg, train_cfg = _load_configs(args)
        spec = ExperimentSpec(
            name="sweep",
            env=env_cfg,
            train=train_cfg,
            seeds=_ints(args.seeds),
            mixers=tuple(args.mixers.split(",")),
            vehicle_counts=_ints(args.counts),
            retrain_per_count=args.retrain,
            eval_episodes=args.eval_episodes,
            out_dir=args.out_dir,
        )
        res = run_scalability(spec)
        print(f"rows: {res.rows_csv}\ncurves: {res.curves_csv}\nchart: {res.chart}")
        return 0

    if args.command == "oracle-gap":
        env_cfg, _ = _load_configs(args)
        rows = oracle_gap_table(env_cfg, args.instances, seed=args.seed or 0)
        args.out_dir.mkdir(parents=True, exist_ok=True)
        out_csv = args.out_dir / "oracle_gap.csv"
        write_csv(out_csv, ["instance_seed", "exact_latency", "greedy_latency", "gap_percent"], rows)
        gaps = [r[3] for r in rows]
        print(
            f"instances={len(rows)} mean_gap={sum(gaps) / len(gaps):.3f}% max_gap={max(gaps):.3f}%"
        )
        print(f"wrote {out_csv}")
        return 0

    raise ValueError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    raise SystemExit(main())
