"""Config file loading and the self-describing schema dump.

Config files are JSON with two optional sections mirroring the dataclass
field names exactly:

    {"env": {"num_vehicles": 8, ...}, "train": {"mixer": "kmarl", ...}}

Unknown keys are rejected by name.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

from ..env import EnvConfig
from ..trainer import TrainConfig

__all__ = ["load_config_file", "describe_config_text"]

_TUPLE_FIELDS = {"task_sizes", "rho_range", "speed_range", "rsu_positions", "mbs_position", "seeds", "vehicle_counts"}


def _build(cls, section: dict, name: str):
    valid = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - valid
    if unknown:
        raise ValueError(f"unknown {name} config keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in section.items():
        if key in _TUPLE_FIELDS and isinstance(value, list):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        kwargs[key] = value
    return cls(**kwargs)


def load_config_file(path: str | Path) -> tuple[EnvConfig, TrainConfig]:
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: top level must be an object")
    unknown = set(raw) - {"env", "train"}
    if unknown:
        raise ValueError(f"{path}: unknown sections {sorted(unknown)}; expected 'env' and/or 'train'")
    env = _build(EnvConfig, raw.get("env", {}), "env")
    train = _build(TrainConfig, raw.get("train", {}), "train")
    return env, train


_ENV_NOTES = {
    "num_vehicles": "fleet size I",
    "num_rsus": "roadside unit count R",
    "horizon": "slots per episode",
    "road_length": "highway length in meters, wraps around",
    "rsu_positions": "(x, y) per RSU; evenly spaced along the road when omitted",
    "mbs_position": "(x, y) of the macro base station; mid-road offset when omitted",
    "f_vehicle": "onboard CPU capacity (experimental constant 5e5)",
    "f_rsu": "RSU CPU capacity (experimental constant 6e6)",
    "f_mbs": "MBS CPU capacity (experimental constant 1e7)",
    "b_rsu": "vehicle-to-RSU bandwidth in Hz (experimental constant 2e8)",
    "b_mbs": "vehicle-to-MBS bandwidth in Hz (experimental constant 2e7)",
    "p_t": "transmit power in W (20 dBm)",
    "noise_power": "receiver noise power in W",
    "task_sizes": "task payload sizes in Mbit (experimental set 1/1.5/2)",
    "rho_range": "megacycles per Mbit, uniform draw (experimental range 100..200)",
    "penalty_coefficient": "hinge penalty weight on latency above onboard",
    "adjacency_range": "communication range in meters for the vehicle graph",
    "speed_range": "per-episode constant speed draw, meters per slot",
    "channel_fading": "per-link per-slot gain: 'rayleigh' (exp mean 1) or 'unit'",
    "rng_seed": "default seed used by reset() when none is given",
}

_TRAIN_NOTES = {
    "mixer": "joint-value construction: vdn, qmix, or kmarl",
    "episodes": "training episodes",
    "gamma": "discount factor (experimental constant 0.9)",
    "learning_rate": "RMSProp learning rate (experimental constant 1e-4)",
    "batch_size": "transitions per update (experimental constant 64)",
    "buffer_capacity": "replay ring size (experimental constant 2000)",
    "target_sync_interval": "updates between hard target copies",
    "eps_start": "exploration rate at episode 0",
    "eps_end": "exploration rate after the decay window",
    "eps_decay_frac": "fraction of episodes spent decaying epsilon",
    "agent_hidden": "utility net hidden width",
    "mix_hidden": "mixing layer width",
    "gnn_width": "graph layer width",
    "gnn_layers": "graph convolution depth",
    "pool": "graph pooling: mean or max",
    "obs_stack": "observation frames stacked as agent input",
    "rms_decay": "RMSProp squared-gradient decay",
    "rms_epsilon": "RMSProp denominator epsilon",
    "checkpoint_interval": "episodes between checkpoints (0 disables)",
    "seed": "master seed for init, exploration, batches and episode seeds",
}


def describe_config_text() -> str:
    lines = ["config schema (JSON file with 'env' and 'train' sections)", ""]
    for title, cls, notes in (
        ("[env]", EnvConfig, _ENV_NOTES),
        ("[train]", TrainConfig, _TRAIN_NOTES),
    ):
        lines.append(title)
        for f in dataclasses.fields(cls):
            default = f.default if f.default is not dataclasses.MISSING else None
            type_name = getattr(f.type, "__name__", str(f.type))
            lines.append(
                f"  {f.name:<22} {type_name:<28} default={default!r:<24} {notes.get(f.name, '')}"
            )
        lines.append("")
    return "\n".join(lines)
