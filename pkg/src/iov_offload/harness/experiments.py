"""Experiment drivers: reward convergence grids and fleet-size sweeps.

Both drivers write every number they plot to CSV first and render charts
from those CSVs, so any chart can be regenerated byte-identically with the
``render`` subcommand.  All floats are written at 9 significant digits with
LF line endings.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..agents import AgentNet, ObsStacker
from ..env import EnvConfig, OffloadEnv, slot_latencies
from ..oracle import (
    DEFAULT_ENUMERATION_CAP,
    EnumerationCapError,
    PolicyEval,
    always_local_policy,
    evaluate_policy,
    exact_slot_optimum,
    greedy_heuristic,
    greedy_policy,
    oracle_policy,
)
from ..trainer import TrainConfig, TrainResult, load_learner, train
from .svgplot import render_csv_chart

__all__ = [
    "ExperimentSpec",
    "ExperimentError",
    "ConvergenceResult",
    "ScalabilityResult",
    "run_convergence",
    "run_scalability",
    "oracle_gap_table",
    "net_policy",
    "evaluate_learner",
    "write_csv",
]


class ExperimentError(RuntimeError):
    """One or more experiment cells failed; the message names each."""

    def __init__(self, failures: list[tuple[str, Exception]]):
        self.failures = failures
        lines = [f"{name}: {type(err).__name__}: {err}" for name, err in failures]
        super().__init__("experiment cells failed:\n  " + "\n  ".join(lines))


@dataclass
class ExperimentSpec:
    name: str
    env: EnvConfig
    train: TrainConfig
    seeds: tuple[int, ...]
    out_dir: Path
    mixers: tuple[str, ...] = ("vdn", "qmix", "kmarl")
    vehicle_counts: tuple[int, ...] = ()
    retrain_per_count: bool = False
    eval_episodes: int = 20
    eval_seed: int = 10_000
    oracle_episodes: int = 2
    oracle_cap: int = DEFAULT_ENUMERATION_CAP

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        if not self.seeds:
            raise ValueError("spec.seeds must be nonempty")

    def snapshot(self) -> dict:
        d = dataclasses.asdict(self)
        d["out_dir"] = str(self.out_dir)
        return d


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def write_csv(path: Path | str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def _write_snapshot(spec: ExperimentSpec, path: Path) -> None:
    import json

    path.write_text(json.dumps(_jsonable(spec.snapshot()), indent=2, sort_keys=True) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


@dataclass
class ConvergenceResult:
    cells: dict[tuple[str, int], TrainResult]
    summary_csv: Path
    curves_csv: Path
    chart: Path

    def final_returns(self, mixer: str) -> list[float]:
        return [r.final_smoothed_return for (m, s), r in sorted(self.cells.items()) if m == mixer]


def run_convergence(spec: ExperimentSpec) -> ConvergenceResult:
    """Train every (mixer, seed) cell on identical episode seeds and emit
    reward curves, a combined chart, and a final-reward summary."""
    out = spec.out_dir / "convergence"
    out.mkdir(parents=True, exist_ok=True)
    _write_snapshot(spec, out / "spec.json")
    cells: dict[tuple[str, int], TrainResult] = {}
    failures: list[tuple[str, Exception]] = []
    for mixer in spec.mixers:
        for seed in spec.seeds:
            cfg = replace(spec.train, mixer=mixer, seed=seed)
            try:
                env = OffloadEnv(spec.env)
                cells[(mixer, seed)] = train(cfg, env, out_dir=out, run_name=f"{mixer}_s{seed}")
            except Exception as err:  # noqa: BLE001 - cell isolation by design
                failures.append((f"(mixer={mixer}, seed={seed})", err))
    if failures:
        raise ExperimentError(failures)

    summary_rows = []
    for (mixer, seed), res in sorted(cells.items()):
        summary_rows.append(
            [mixer, seed, res.final_smoothed_return, res.metrics[-1].mean_latency, res.train_steps]
        )
    summary_csv = out / "final_summary.csv"
    write_csv(
        summary_csv,
        ["mixer", "seed", "final_smoothed_return", "final_mean_latency", "train_steps"],
        summary_rows,
    )

    episodes = spec.train.episodes
    header = ["episode"] + list(spec.mixers)
    rows = []
    for ep in range(episodes):
        row: list = [ep]
        for mixer in spec.mixers:
            vals = [cells[(mixer, s)].metrics[ep].smoothed_return for s in spec.seeds]
            row.append(float(np.mean(vals)))
        rows.append(row)
    curves_csv = out / "reward_curves.csv"
    write_csv(curves_csv, header, rows)
    chart = out / "reward_curves.svg"
    render_csv_chart(curves_csv, chart, "episode", list(spec.mixers), title=f"{spec.name}: smoothed episode reward")
    return ConvergenceResult(cells=cells, summary_csv=summary_csv, curves_csv=curves_csv, chart=chart)


def net_policy(agent: AgentNet, obs_stack: int = 1):
    """Greedy decentralized policy from a trained utility net.

    Works at any fleet size thanks to the shared parameters; keeps its own
    frame stack and restarts it whenever the env reports slot 0.
    """
    stacker: ObsStacker | None = None

    def _policy(obs, env):
        nonlocal stacker
        if stacker is None or env.slot_index == 0 or stacker.num_agents != len(obs):
            stacker = ObsStacker(len(obs), obs_stack)
            stacked = stacker.reset(obs)
        else:
            stacked = stacker.push(obs)
        q = agent.forward(np.stack(stacked)).value
        return [int(np.argmax(row)) for row in q]

    return _policy


def evaluate_learner(
    ckpt_path: Path | str,
    env_config: EnvConfig,
    episodes: int,
    seed: int,
) -> PolicyEval:
    agent, _, meta = load_learner(ckpt_path)
    policy = net_policy(agent, meta["train_config"]["obs_stack"])
    return evaluate_policy(policy, episodes, env_config, seed=seed)


@dataclass
class ScalabilityResult:
    rows: list[list]
    rows_csv: Path
    curves_csv: Path
    chart: Path

    def latency(self, method: str, count: int, mode: str = "transfer") -> list[float]:
        """Per-seed mean latencies for one (method, count)."""
        return [
            r[4]
            for r in self.rows
            if r[0] == count and r[1] == method and r[3] == mode
        ]


def run_scalability(
    spec: ExperimentSpec,
    trained: Mapping[tuple[str, int], TrainResult] | None = None,
) -> ScalabilityResult:
    """Evaluate trained policies and baselines across fleet sizes.

    One checkpoint per (mixer, seed) trained at the base fleet size is
    evaluated unchanged at every count (the size-transfer protocol); with
    ``retrain_per_count`` a fresh policy is also trained per count.  Oracle
    rows appear only where enumeration fits under the cap.
    """
    if not spec.vehicle_counts:
        raise ValueError("spec.vehicle_counts must be nonempty for a sweep")
    out = spec.out_dir / "scalability"
    out.mkdir(parents=True, exist_ok=True)
    _write_snapshot(spec, out / "spec.json")
    failures: list[tuple[str, Exception]] = []

    if trained is None:
        trained = {}
        for mixer in spec.mixers:
            for seed in spec.seeds:
                cfg = replace(spec.train, mixer=mixer, seed=seed)
                try:
                    trained[(mixer, seed)] = train(
                        cfg, OffloadEnv(spec.env), out_dir=out, run_name=f"base_{mixer}_s{seed}"
                    )
                except Exception as err:  # noqa: BLE001
                    failures.append((f"(train mixer={mixer}, seed={seed})", err))
        if failures:
            raise ExperimentError(failures)

    rows: list[list] = []
    for count in spec.vehicle_counts:
        env_c = spec.env.with_vehicles(count)
        for (mixer, seed), res in sorted(trained.items()):
            try:
                policy = net_policy(res.agent, spec.train.obs_stack)
                ev = evaluate_policy(policy, spec.eval_episodes, env_c, seed=spec.eval_seed)
                rows.append([count, mixer, seed, "transfer", ev.mean_latency, ev.mean_system_latency])
            except Exception as err:  # noqa: BLE001
                failures.append((f"(eval mixer={mixer}, seed={seed}, count={count})", err))
        if spec.retrain_per_count:
            for mixer in spec.mixers:
                for seed in spec.seeds:
                    cfg = replace(spec.train, mixer=mixer, seed=seed)
                    try:
                        res = train(cfg, OffloadEnv(env_c))
                        policy = net_policy(res.agent, spec.train.obs_stack)
                        ev = evaluate_policy(policy, spec.eval_episodes, env_c, seed=spec.eval_seed)
                        rows.append([count, mixer, seed, "retrain", ev.mean_latency, ev.mean_system_latency])
                    except Exception as err:  # noqa: BLE001
                        failures.append((f"(retrain mixer={mixer}, seed={seed}, count={count})", err))
        try:
            ev = evaluate_policy(always_local_policy, spec.eval_episodes, env_c, seed=spec.eval_seed)
            rows.append([count, "local", 0, "baseline", ev.mean_latency, ev.mean_system_latency])
            ev = evaluate_policy(greedy_policy, spec.eval_episodes, env_c, seed=spec.eval_seed)
            rows.append([count, "greedy", 0, "baseline", ev.mean_latency, ev.mean_system_latency])
        except Exception as err:  # noqa: BLE001
            failures.append((f"(baselines count={count})", err))
        if env_c.num_actions**count <= spec.oracle_cap:
            try:
                ev = evaluate_policy(
                    oracle_policy(spec.oracle_cap), spec.oracle_episodes, env_c, seed=spec.eval_seed
                )
                rows.append([count, "oracle", 0, "baseline", ev.mean_latency, ev.mean_system_latency])
            except EnumerationCapError:
                pass
            except Exception as err:  # noqa: BLE001
                failures.append((f"(oracle count={count})", err))
    if failures:
        raise ExperimentError(failures)

    rows_csv = out / "sweep_rows.csv"
    write_csv(
        rows_csv,
        ["count", "method", "seed", "mode", "mean_latency", "mean_system_latency"],
        rows,
    )

    methods = list(spec.mixers) + ["local", "greedy", "oracle"]
    curve_rows = []
    for count in spec.vehicle_counts:
        row: list = [count]
        for method in methods:
            vals = [
                r[5]
                for r in rows
                if r[0] == count and r[1] == method and r[3] in ("transfer", "baseline")
            ]
            row.append(float(np.mean(vals)) if vals else float("nan"))
        curve_rows.append(row)
    curves_csv = out / "latency_vs_count.csv"
    write_csv(curves_csv, ["count"] + methods, curve_rows)
    chart = out / "latency_vs_count.svg"
    render_csv_chart(
        curves_csv, chart, "count", methods, title=f"{spec.name}: mean system latency vs fleet size"
    )
    return ScalabilityResult(rows=rows, rows_csv=rows_csv, curves_csv=curves_csv, chart=chart)


def oracle_gap_table(
    env_config: EnvConfig,
    instances: int,
    seed: int = 0,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> list[list]:
    """Rows of (instance seed, exact latency, greedy latency, gap percent).

    Each instance is the first slot of a freshly reset episode.
    """
    rng = np.random.default_rng(seed)
    env = OffloadEnv(env_config)
    rows = []
    for _ in range(instances):
        inst_seed = int(rng.integers(2**63))
        env.reset(inst_seed)
        state = env.slot_state()
        exact = exact_slot_optimum(state, env_config, cap=cap)
        greedy_joint = greedy_heuristic(state, env_config)
        greedy_lat = float(np.mean(slot_latencies(greedy_joint, state, env_config).latencies))
        gap = 100.0 * (greedy_lat / exact.best_mean_latency - 1.0)
        rows.append([inst_seed, exact.best_mean_latency, greedy_lat, gap])
    return rows
