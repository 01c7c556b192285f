"""Ground-truth solvers for the per-slot offloading problem.

Tasks do not persist across slots and actions do not influence mobility, so
the episode objective decomposes into independent per-slot minimizations;
the exact solver therefore enumerates joint actions one slot at a time.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .env import EnvConfig, OffloadEnv, SlotState, slot_latencies

__all__ = [
    "OracleResult",
    "PolicyEval",
    "EnumerationCapError",
    "exact_slot_optimum",
    "greedy_heuristic",
    "evaluate_policy",
    "always_local_policy",
    "greedy_policy",
    "oracle_policy",
]

DEFAULT_ENUMERATION_CAP = 10_000_000


class EnumerationCapError(RuntimeError):
    """The joint action space is larger than the configured enumeration cap."""


@dataclass(frozen=True)
class OracleResult:
    best_joint: tuple[int, ...]
    best_mean_latency: float
    evaluated_count: int


# observations are passed first so plain reactive policies can ignore the env;
# oracle-style baselines read the frozen slot state from it.
Policy = Callable[[Sequence[np.ndarray], OffloadEnv], Sequence[int]]


def exact_slot_optimum(
    state: SlotState, config: EnvConfig, cap: int = DEFAULT_ENUMERATION_CAP
) -> OracleResult:
    """Enumerate every joint action and return the mean-latency minimizer.

    Iteration is in lexicographic order and only strict improvements are
    kept, so ties resolve to the lexicographically smallest joint action.
    """
    n_vehicles = len(state.tasks)
    n_options = config.num_actions
    total = n_options**n_vehicles
    if total > cap:
        raise EnumerationCapError(
            f"enumeration of {total} joint actions exceeds the cap of {cap}"
        )
    best_joint: tuple[int, ...] | None = None
    best = np.inf
    for joint in itertools.product(range(n_options), repeat=n_vehicles):
        m = float(np.mean(slot_latencies(joint, state, config).latencies))
        if m < best:
            best = m
            best_joint = joint
    assert best_joint is not None
    return OracleResult(best_joint=best_joint, best_mean_latency=best, evaluated_count=total)


def greedy_heuristic(state: SlotState, config: EnvConfig) -> tuple[int, ...]:
    """Largest-demand-first sequential assignment.

    Vehicles are visited in descending compute demand (stable on ties); each
    picks the option minimizing its own latency given the load already
    placed by earlier vehicles, recomputing shares as it goes.
    """
    n = len(state.tasks)
    demands = np.array([t.compute_demand for t in state.tasks])
    order = np.argsort(-demands, kind="stable")
    joint = np.zeros(n, dtype=np.int64)
    placed: list[int] = []
    for i in order:
        best_a, best_lat = 0, np.inf
        for a in range(config.num_actions):
            joint[i] = a
            trial = placed + [int(i)]
            lat = slot_latencies(joint[trial], _substate(state, trial), config).latencies[-1]
            if lat < best_lat:
                best_a, best_lat = a, lat
        joint[i] = best_a
        placed.append(int(i))
    return tuple(int(a) for a in joint)


def _substate(state: SlotState, idx: list[int]) -> SlotState:
    return SlotState(
        positions=state.positions[idx],
        tasks=tuple(state.tasks[k] for k in idx),
        gains=state.gains[idx],
    )


@dataclass(frozen=True)
class PolicyEval:
    mean_latency: float          # mean over every (vehicle, slot, episode)
    mean_reward: float           # mean team reward per slot
    mean_system_latency: float   # mean over slots of summed vehicle latency
    episodes: int
    slots: int


def evaluate_policy(
    policy: Policy,
    episodes: int,
    config: EnvConfig,
    seed: int = 0,
) -> PolicyEval:
    """Run full episodes with a frozen policy; deterministic given the seed."""
    rng = np.random.default_rng(seed)
    env = OffloadEnv(config)
    lat_sum = 0.0
    reward_sum = 0.0
    system_sum = 0.0
    slots = 0
    for _ in range(episodes):
        obs = env.reset(int(rng.integers(2**63)))
        done = False
        while not done:
            joint = policy(obs, env)
            res = env.step(joint)
            lat_sum += float(np.mean(res.outcome.latencies))
            system_sum += float(np.sum(res.outcome.latencies))
            reward_sum += res.reward
            slots += 1
            obs = res.observations
            done = res.done
    return PolicyEval(
        mean_latency=lat_sum / slots,
        mean_reward=reward_sum / slots,
        mean_system_latency=system_sum / slots,
        episodes=episodes,
        slots=slots,
    )


def always_local_policy(obs, env: OffloadEnv) -> list[int]:
    return [0] * env.num_agents


def greedy_policy(obs, env: OffloadEnv) -> tuple[int, ...]:
    return greedy_heuristic(env.slot_state(), env.config)


def oracle_policy(cap: int = DEFAULT_ENUMERATION_CAP) -> Policy:
    def _policy(obs, env: OffloadEnv):
        return exact_slot_optimum(env.slot_state(), env.config, cap=cap).best_joint

    return _policy
