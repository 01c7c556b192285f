"""Vehicle / RSU / MBS offloading world.

One episode is ``horizon`` equal time slots on a 1-D highway with wrap-around.
Each slot every vehicle carries one task (data size in Mbit, compute demand
in megacycles) and picks exactly one execution option: onboard, one of the
roadside units, or the macro base station.  Offloaded tasks at the same
destination share its CPU in proportion to their compute demand, which makes
every sharer's compute latency equal to (total assigned load) / (capacity) --
the congestion coupling that the learners must discover.

Latency model per vehicle and slot:

    local:   compute_demand / f_vehicle
    remote:  (assigned load at destination) / destination capacity
             + data_size / (bandwidth * log2(1 + p_t * gain / (noise * dist^2)))

The team reward is the negative mean of latency plus a hinge penalty that
activates when offloading turned out slower than computing onboard.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

__all__ = [
    "EnvConfig",
    "TaskSpec",
    "VehicleState",
    "SlotState",
    "SlotOutcome",
    "StepResult",
    "ConfigError",
    "OffloadEnv",
    "local_latency",
    "link_rate",
    "resource_shares",
    "slot_latencies",
    "team_reward",
    "adjacency",
    "option_label",
]

# Vehicles alternate between two lanes at these y offsets (meters).
LANE_OFFSETS = (0.0, 4.0)
# y offset of roadside units from the road axis.
RSU_LATERAL = 10.0
# perpendicular offset of the macro base station from the road midpoint.
MBS_LATERAL = 500.0


class ConfigError(ValueError):
    """An EnvConfig field failed validation; the message names the field."""


@dataclass
class EnvConfig:
    """World parameters.  Capacities/bandwidths follow the experimental
    setting this repo reproduces; geometry and fading defaults are ours."""

    num_vehicles: int = 8
    num_rsus: int = 4
    horizon: int = 100
    road_length: float = 2000.0
    rsu_positions: tuple[tuple[float, float], ...] | None = None
    mbs_position: tuple[float, float] | None = None
    f_vehicle: float = 5e5       # onboard CPU capacity, megacycles per slot
    f_rsu: float = 6e6           # RSU CPU capacity
    f_mbs: float = 1e7           # MBS CPU capacity
    b_rsu: float = 2e8           # vehicle->RSU channel bandwidth, Hz
    b_mbs: float = 2e7           # vehicle->MBS channel bandwidth, Hz
    p_t: float = 0.1             # transmit power, W (20 dBm)
    noise_power: float = 1e-9    # receiver noise, W
    task_sizes: tuple[float, ...] = (1.0, 1.5, 2.0)   # Mbit
    rho_range: tuple[float, float] = (100.0, 200.0)   # megacycles per Mbit
    penalty_coefficient: float = 1.0
    adjacency_range: float = 300.0
    speed_range: tuple[float, float] = (10.0, 20.0)   # meters per slot
    channel_fading: str = "rayleigh"                  # "rayleigh" | "unit"
    rng_seed: int = 0

    def __post_init__(self):
        if self.rsu_positions is None:
            spacing = self.road_length / max(self.num_rsus, 1)
            self.rsu_positions = tuple(
                ((r + 0.5) * spacing, RSU_LATERAL) for r in range(self.num_rsus)
            )
        else:
            self.rsu_positions = tuple(tuple(p) for p in self.rsu_positions)
        if self.mbs_position is None:
            self.mbs_position = (self.road_length / 2.0, MBS_LATERAL)
        else:
            self.mbs_position = tuple(self.mbs_position)

    def validate(self) -> None:
        if self.num_vehicles < 1:
            raise ConfigError("num_vehicles must be >= 1")
        if self.num_rsus < 1:
            raise ConfigError("num_rsus must be >= 1")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.road_length <= 0:
            raise ConfigError("road_length must be > 0")
        if len(self.rsu_positions) != self.num_rsus:
            raise ConfigError(
                f"rsu_positions has {len(self.rsu_positions)} entries, expected num_rsus={self.num_rsus}"
            )
        for name in ("f_vehicle", "f_rsu", "f_mbs", "b_rsu", "b_mbs", "p_t", "noise_power"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        if not self.task_sizes or any(s <= 0 for s in self.task_sizes):
            raise ConfigError("task_sizes must be nonempty and positive")
        if not (0 < self.rho_range[0] <= self.rho_range[1]):
            raise ConfigError("rho_range must satisfy 0 < lo <= hi")
        if self.penalty_coefficient < 0:
            raise ConfigError("penalty_coefficient must be >= 0")
        if self.adjacency_range < 0:
            raise ConfigError("adjacency_range must be >= 0")
        if not (0 < self.speed_range[0] <= self.speed_range[1]):
            raise ConfigError("speed_range must satisfy 0 < lo <= hi")
        if self.channel_fading not in ("rayleigh", "unit"):
            raise ConfigError("channel_fading must be 'rayleigh' or 'unit'")

    @property
    def num_actions(self) -> int:
        return self.num_rsus + 2

    def with_vehicles(self, n: int) -> "EnvConfig":
        return replace(self, num_vehicles=n)


@dataclass(frozen=True)
class TaskSpec:
    """One slot's task: payload size (Mbit) and compute demand (megacycles)."""

    data_size: float
    compute_demand: float


@dataclass
class VehicleState:
    position: tuple[float, float]
    speed: float
    current_task: TaskSpec


@dataclass(frozen=True)
class SlotState:
    """Everything that determines slot latencies once a joint action is fixed.

    ``gains`` holds the channel gain of every potential link this slot:
    column r < num_rsus is vehicle->RSU r, the last column is vehicle->MBS.
    """

    positions: np.ndarray        # (I, 2)
    tasks: tuple[TaskSpec, ...]  # length I
    gains: np.ndarray            # (I, num_rsus + 1)


@dataclass(frozen=True)
class SlotOutcome:
    latencies: np.ndarray        # (I,) achieved latency per vehicle
    choices: np.ndarray          # (I,) option index: 0 local, 1..R RSUs, R+1 MBS
    labels: tuple[str, ...]
    penalties: np.ndarray        # (I,) hinge penalty per vehicle
    team_reward: float
    loads: dict[int, float]      # option index -> total assigned megacycles


@dataclass(frozen=True)
class StepResult:
    observations: list[np.ndarray]
    reward: float
    outcome: SlotOutcome
    done: bool


def option_label(option: int, num_rsus: int) -> str:
    if option == 0:
        return "local"
    if 1 <= option <= num_rsus:
        return f"rsu{option}"
    if option == num_rsus + 1:
        return "mbs"
    raise ValueError(f"option index {option} out of range for R={num_rsus}")


def local_latency(task: TaskSpec, f_vehicle: float) -> float:
    """Onboard execution latency: compute demand over onboard capacity."""
    if f_vehicle <= 0:
        raise ValueError("f_vehicle must be > 0")
    return task.compute_demand / f_vehicle


def link_rate(bandwidth: float, p_t: float, gain: float, noise: float, distance: float) -> float:
    """Transmission rate B * log2(1 + p_t*g / (noise * distance^2))."""
    if distance <= 0:
        raise ValueError("link distance must be > 0")
    if min(bandwidth, p_t, gain, noise) <= 0:
        raise ValueError("bandwidth, power, gain and noise must be > 0")
    return bandwidth * math.log2(1.0 + p_t * gain / (noise * distance * distance))


def resource_shares(
    joint: Sequence[int], tasks: Sequence[TaskSpec], config: EnvConfig
) -> np.ndarray:
    """Per-vehicle allocated remote capacity (0 for local vehicles).

    Each destination splits its capacity in proportion to the compute demand
    it was assigned, so shares at a destination sum to its full capacity and
    every sharer's compute latency equals load/capacity.
    """
    joint = np.asarray(joint, dtype=np.int64)
    loads = _destination_loads(joint, tasks, config)
    shares = np.zeros(len(joint))
    for i, a in enumerate(joint):
        if a == 0:
            continue
        cap = config.f_rsu if a <= config.num_rsus else config.f_mbs
        shares[i] = tasks[i].compute_demand / loads[int(a)] * cap
    return shares


def _destination_loads(
    joint: np.ndarray, tasks: Sequence[TaskSpec], config: EnvConfig
) -> dict[int, float]:
    loads: dict[int, float] = {}
    for i, a in enumerate(joint):
        a = int(a)
        if a == 0:
            continue
        if not 1 <= a <= config.num_rsus + 1:
            raise ValueError(f"option index {a} out of range for R={config.num_rsus}")
        loads[a] = loads.get(a, 0.0) + tasks[i].compute_demand
    return loads


def slot_latencies(joint: Sequence[int], state: SlotState, config: EnvConfig) -> SlotOutcome:
    """Evaluate one joint action on a frozen slot: latencies, penalties, reward."""
    joint = np.asarray(joint, dtype=np.int64)
    if joint.shape != (len(state.tasks),):
        raise ValueError(
            f"joint action has shape {joint.shape}, expected ({len(state.tasks)},)"
        )
    loads = _destination_loads(joint, state.tasks, config)
    lat = np.zeros(len(joint))
    for i, a in enumerate(joint):
        a = int(a)
        task = state.tasks[i]
        if a == 0:
            lat[i] = local_latency(task, config.f_vehicle)
            continue
        if a <= config.num_rsus:
            dest = config.rsu_positions[a - 1]
            cap, bw = config.f_rsu, config.b_rsu
        else:
            dest = config.mbs_position
            cap, bw = config.f_mbs, config.b_mbs
        dist = math.hypot(state.positions[i, 0] - dest[0], state.positions[i, 1] - dest[1])
        rate = link_rate(bw, config.p_t, state.gains[i, a - 1], config.noise_power, dist)
        lat[i] = loads[a] / cap + task.data_size / rate
    local = np.array([local_latency(t, config.f_vehicle) for t in state.tasks])
    penalties = config.penalty_coefficient * np.maximum(0.0, lat - local)
    reward = -float(np.mean(penalties + lat))
    labels = tuple(option_label(int(a), config.num_rsus) for a in joint)
    return SlotOutcome(
        latencies=lat,
        choices=joint.copy(),
        labels=labels,
        penalties=penalties,
        team_reward=reward,
        loads=loads,
    )


def team_reward(outcome: SlotOutcome, config: EnvConfig) -> float:
    """Negative mean of (penalty + latency); recomputable from any outcome."""
    return -float(np.mean(outcome.penalties + outcome.latencies))


def adjacency(positions: np.ndarray, comm_range: float) -> np.ndarray:
    """0/1 symmetric matrix, zero diagonal: 1 iff pairwise distance <= range."""
    pos = np.asarray(positions, dtype=np.float64)
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    a = (dist <= comm_range).astype(np.float64)
    np.fill_diagonal(a, 0.0)
    return a


class OffloadEnv:
    """Stateful episode wrapper around the slot model.

    ``reset(seed)`` fully determines the trajectory for a given action
    sequence: all stochastic draws (placement, speeds, tasks, fading) come
    from one generator seeded there.
    """

    def __init__(self, config: EnvConfig):
        config.validate()
        self.config = config
        self._rng: np.random.Generator | None = None
        self._slot = 0
        self._done = True
        self._vehicles: list[VehicleState] = []
        self._state: SlotState | None = None

    # -- trainer-facing surface -------------------------------------------

    @property
    def num_agents(self) -> int:
        return self.config.num_vehicles

    @property
    def num_actions(self) -> int:
        return self.config.num_actions

    @property
    def obs_dim(self) -> int:
        return 4

    def reset(self, seed: int | None = None) -> list[np.ndarray]:
        cfg = self.config
        if seed is None:
            seed = cfg.rng_seed
        self._rng = np.random.default_rng(seed)
        i = cfg.num_vehicles
        xs = self._rng.uniform(0.0, cfg.road_length, size=i)
        ys = np.array([LANE_OFFSETS[k % len(LANE_OFFSETS)] for k in range(i)])
        speeds = self._rng.uniform(cfg.speed_range[0], cfg.speed_range[1], size=i)
        tasks = self._draw_tasks()
        self._vehicles = [
            VehicleState(position=(xs[k], ys[k]), speed=speeds[k], current_task=tasks[k])
            for k in range(i)
        ]
        self._state = SlotState(
            positions=np.column_stack([xs, ys]),
            tasks=tasks,
            gains=self._draw_gains(),
        )
        self._slot = 0
        self._done = False
        return self.observations()

    def step(self, joint: Sequence[int]) -> StepResult:
        if self._done or self._state is None:
            raise RuntimeError("step() on a finished episode; call reset() first")
        outcome = slot_latencies(joint, self._state, self.config)
        self._advance()
        self._slot += 1
        self._done = self._slot >= self.config.horizon
        return StepResult(
            observations=self.observations(),
            reward=outcome.team_reward,
            outcome=outcome,
            done=self._done,
        )

    def observations(self) -> list[np.ndarray]:
        """Per-vehicle [x, y, data size, compute demand], all scaled to [0, 1]."""
        cfg = self.config
        max_lane = max(LANE_OFFSETS) or 1.0
        max_da = max(cfg.task_sizes)
        max_co = max_da * cfg.rho_range[1]
        out = []
        for v in self._vehicles:
            t = v.current_task
            out.append(
                np.array(
                    [
                        v.position[0] / cfg.road_length,
                        v.position[1] / max_lane,
                        t.data_size / max_da,
                        t.compute_demand / max_co,
                    ]
                )
            )
        return out

    def adjacency_matrix(self) -> np.ndarray:
        return adjacency(self._positions(), self.config.adjacency_range)

    def slot_state(self) -> SlotState:
        """The frozen current slot, e.g. for the enumeration oracle."""
        if self._state is None:
            raise RuntimeError("environment was never reset")
        return self._state

    @property
    def slot_index(self) -> int:
        return self._slot

    @property
    def done(self) -> bool:
        return self._done

    # -- internals ---------------------------------------------------------

    def _positions(self) -> np.ndarray:
        return np.array([v.position for v in self._vehicles])

    def _draw_tasks(self) -> tuple[TaskSpec, ...]:
        cfg = self.config
        sizes = self._rng.choice(np.asarray(cfg.task_sizes), size=cfg.num_vehicles)
        rhos = self._rng.uniform(cfg.rho_range[0], cfg.rho_range[1], size=cfg.num_vehicles)
        return tuple(TaskSpec(float(s), float(s * r)) for s, r in zip(sizes, rhos))

    def _draw_gains(self) -> np.ndarray:
        cfg = self.config
        shape = (cfg.num_vehicles, cfg.num_rsus + 1)
        if cfg.channel_fading == "unit":
            return np.ones(shape)
        return self._rng.exponential(1.0, size=shape)

    def _advance(self) -> None:
        cfg = self.config
        tasks = self._draw_tasks()
        for k, v in enumerate(self._vehicles):
            x = (v.position[0] + v.speed) % cfg.road_length
            v.position = (x, v.position[1])
            v.current_task = tasks[k]
        self._state = SlotState(
            positions=self._positions(),
            tasks=tasks,
            gains=self._draw_gains(),
        )
