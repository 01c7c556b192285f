"""Centralized training / decentralized execution loop.

Episodes are collected with a shared utility net under epsilon-greedy
exploration; transitions go to a FIFO replay ring; after each warm episode
one optimization step regresses the mixed joint value onto a one-step
bootstrap target computed from frozen target copies.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, is_dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from . import numkit as nk
from .agents import AgentConfig, AgentNet, ObsStacker, epsilon_at, select_action
from .mixers import MIXER_KINDS, MixBatch, make_mixer

__all__ = [
    "TrainConfig",
    "Transition",
    "ReplayBuffer",
    "MetricRow",
    "TrainResult",
    "collect_episode",
    "td_targets",
    "compute_loss",
    "train_step",
    "train",
    "write_metrics_csv",
    "save_learner",
    "load_learner",
    "greedy_joint_action",
]


class EnvLike(Protocol):
    num_agents: int
    num_actions: int
    obs_dim: int

    def reset(self, seed: int | None = None) -> list[np.ndarray]: ...
    def step(self, joint: Sequence[int]): ...
    def adjacency_matrix(self) -> np.ndarray: ...


@dataclass
class TrainConfig:
    mixer: str = "kmarl"
    episodes: int = 5000
    gamma: float = 0.9
    learning_rate: float = 1e-4
    batch_size: int = 64
    buffer_capacity: int = 2000
    target_sync_interval: int = 200
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_frac: float = 0.5
    agent_hidden: int = 64
    mix_hidden: int = 32
    gnn_width: int = 32
    gnn_layers: int = 2
    pool: str = "mean"
    obs_stack: int = 1
    rms_decay: float = 0.99
    rms_epsilon: float = 1e-8
    checkpoint_interval: int = 1000
    seed: int = 0

    def validate(self) -> None:
        if self.mixer not in MIXER_KINDS:
            raise ValueError(f"mixer must be one of {MIXER_KINDS}, got {self.mixer!r}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        if self.batch_size > self.buffer_capacity:
            raise ValueError("batch_size must not exceed buffer_capacity")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if self.obs_stack < 1:
            raise ValueError("obs_stack must be >= 1")


@dataclass(frozen=True)
class Transition:
    obs: np.ndarray             # (I, D) stacked observations
    actions: np.ndarray         # (I,) option indices
    reward: float
    next_obs: np.ndarray        # (I, D)
    adjacency: np.ndarray       # (I, I)
    next_adjacency: np.ndarray  # (I, I)
    done: bool


class ReplayBuffer:
    """Fixed-capacity ring with strictly FIFO eviction."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._next = 0

    def append(self, t: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(t)
        else:
            self._items[self._next] = t
            self._next = (self._next + 1) % self.capacity

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, i: int) -> Transition:
        return self._items[i]

    def snapshot(self) -> list[Transition]:
        """Items in insertion order, oldest first."""
        return self._items[self._next :] + self._items[: self._next]

    def sample(self, rng: np.random.Generator, n: int) -> list[Transition]:
        """Uniform with replacement."""
        idx = rng.integers(0, len(self._items), size=n)
        return [self._items[int(k)] for k in idx]


@dataclass(frozen=True)
class MetricRow:
    episode: int
    ret: float
    smoothed_return: float
    loss: float
    epsilon: float
    mean_latency: float
    wall_ms: float


@dataclass
class TrainResult:
    metrics: list[MetricRow]
    agent: AgentNet
    mixer: object
    train_steps: int
    csv_path: Path | None
    checkpoint_paths: list[Path]

    @property
    def final_smoothed_return(self) -> float:
        return self.metrics[-1].smoothed_return


def greedy_joint_action(agent: AgentNet, stacked_obs: list[np.ndarray]) -> list[int]:
    q = agent.forward(np.stack(stacked_obs)).value
    return [int(np.argmax(row)) for row in q]


def collect_episode(
    env: EnvLike,
    agent: AgentNet,
    epsilon: float,
    rng: np.random.Generator,
    buffer: ReplayBuffer,
    stacker: ObsStacker,
) -> tuple[float, float, int]:
    """Roll one episode into the buffer.

    The caller resets the env and seeds ``stacker`` with the first
    observations.  Returns (episode return, mean per-vehicle latency over
    the episode or nan when the env reports no latency outcome, transitions
    stored).
    """
    stacked = stacker.stacked()
    total = 0.0
    lat_sum, lat_n = 0.0, 0
    count = 0
    done = False
    while not done:
        qvals = agent.forward(np.stack(stacked)).value
        actions = np.array(
            [select_action(qvals[i], epsilon, rng) for i in range(env.num_agents)],
            dtype=np.int64,
        )
        adj = env.adjacency_matrix()
        res = env.step(actions)
        next_stacked = stacker.push(res.observations)
        buffer.append(
            Transition(
                obs=np.stack(stacked),
                actions=actions,
                reward=res.reward,
                next_obs=np.stack(next_stacked),
                adjacency=adj,
                next_adjacency=env.adjacency_matrix(),
                done=res.done,
            )
        )
        total += res.reward
        if res.outcome is not None:
            lat_sum += float(np.mean(res.outcome.latencies))
            lat_n += 1
        stacked = next_stacked
        count += 1
        done = res.done
    mean_lat = lat_sum / lat_n if lat_n else math.nan
    return total, mean_lat, count


def _batch_arrays(batch: list[Transition]):
    obs = np.stack([t.obs for t in batch])                # (B, I, D)
    next_obs = np.stack([t.next_obs for t in batch])
    adj = np.stack([t.adjacency for t in batch])          # (B, I, I)
    next_adj = np.stack([t.next_adjacency for t in batch])
    rewards = np.array([[t.reward] for t in batch])       # (B, 1)
    dones = np.array([[1.0 if t.done else 0.0] for t in batch])
    actions = np.stack([t.actions for t in batch])        # (B, I)
    return obs, actions, rewards, next_obs, adj, next_adj, dones


def td_targets(
    batch: list[Transition],
    target_agent: AgentNet,
    target_mixer,
    gamma: float,
) -> np.ndarray:
    """One-step bootstrap y = r + gamma * Q_tot(greedy next utilities), or r
    on terminal transitions.  Pure evaluation: nothing is recorded."""
    if not batch:
        raise ValueError("td_targets on an empty batch")
    obs, _, rewards, next_obs, _, next_adj, dones = _batch_arrays(batch)
    b, i, d = next_obs.shape
    nq = target_agent.forward(next_obs.reshape(b * i, d)).value
    greedy = nq.max(axis=1).reshape(b, i)
    next_batch = MixBatch.from_arrays(next_obs, next_adj)
    qtot_next = target_mixer.mix_batch(greedy, next_batch).value
    return rewards + gamma * qtot_next * (1.0 - dones)


def compute_loss(
    agent: AgentNet,
    mixer,
    batch: list[Transition],
    targets: np.ndarray,
) -> nk.Node:
    """Mean squared error between y and the mixed value of the taken actions.

    Call under an active tape to record gradients; targets enter as
    constants so no gradient flows through the bootstrap.
    """
    obs, actions, _, _, adj, _, _ = _batch_arrays(batch)
    b, i, d = obs.shape
    a = agent.config.num_actions
    qvals = agent.forward(obs.reshape(b * i, d))          # (B*I, A)
    mask = np.zeros((b * i, a))
    mask[np.arange(b * i), actions.reshape(-1)] = 1.0
    chosen = nk.matmul(nk.mul(qvals, nk.constant(mask)), np.ones((a, 1)))
    chosen = nk.reshape(chosen, b, i)
    qtot = mixer.mix_batch(chosen, MixBatch.from_arrays(obs, adj))
    diff = nk.sub(qtot, nk.constant(targets))
    return nk.scale(nk.reduce(nk.mul(diff, diff), "sum_all"), 1.0 / b)


@dataclass
class _LoopState:
    steps: int = 0


def train_step(
    buffer: ReplayBuffer,
    agent: AgentNet,
    mixer,
    target_agent: AgentNet,
    target_mixer,
    config: TrainConfig,
    rng: np.random.Generator,
    state: _LoopState,
) -> float | None:
    """One batch update; returns the loss, or None while the buffer is cold."""
    if len(buffer) < config.batch_size:
        return None
    batch = buffer.sample(rng, config.batch_size)
    targets = td_targets(batch, target_agent, target_mixer, config.gamma)
    params = nk.collect_params(agent.params(), mixer.params())
    with nk.Tape() as tape:
        loss = compute_loss(agent, mixer, batch, targets)
    tape.backward(loss)
    nk.rmsprop_step(params, config.learning_rate, config.rms_decay, config.rms_epsilon)
    state.steps += 1
    if state.steps % config.target_sync_interval == 0:
        target_agent.copy_from(agent)
        target_mixer.copy_from(mixer)
    return float(loss.value[0, 0])


SMOOTH_WINDOW = 50


def train(
    config: TrainConfig,
    env: EnvLike,
    out_dir: Path | str | None = None,
    run_name: str = "run",
) -> TrainResult:
    """Full training run; every stochastic draw derives from config.seed.

    When ``out_dir`` is given, writes <run_name>_metrics.csv plus periodic
    and final checkpoints there.
    """
    config.validate()
    ss = np.random.SeedSequence(config.seed)
    init_rng, act_rng, batch_rng, seed_rng = [np.random.default_rng(s) for s in ss.spawn(4)]

    agent_cfg = AgentConfig(
        num_actions=env.num_actions,
        obs_dim=env.obs_dim,
        hidden=config.agent_hidden,
        obs_stack=config.obs_stack,
    )
    agent = AgentNet(agent_cfg, init_rng)
    target_agent = AgentNet(agent_cfg, init_rng)
    target_agent.copy_from(agent)
    mixer = make_mixer(
        config.mixer,
        env.num_agents,
        agent_cfg.input_dim,
        config.mix_hidden,
        config.gnn_width,
        config.gnn_layers,
        config.pool,
        init_rng,
    )
    target_mixer = make_mixer(
        config.mixer,
        env.num_agents,
        agent_cfg.input_dim,
        config.mix_hidden,
        config.gnn_width,
        config.gnn_layers,
        config.pool,
        init_rng,
    )
    target_mixer.copy_from(mixer)

    buffer = ReplayBuffer(config.buffer_capacity)
    stacker = ObsStacker(env.num_agents, config.obs_stack)
    state = _LoopState()
    metrics: list[MetricRow] = []
    returns: list[float] = []
    ckpt_paths: list[Path] = []
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    for ep in range(config.episodes):
        eps = epsilon_at(ep, config.episodes, config.eps_start, config.eps_end, config.eps_decay_frac)
        first = env.reset(int(seed_rng.integers(2**63)))
        stacker.reset(first)
        ret, mean_lat, _ = collect_episode(env, agent, eps, act_rng, buffer, stacker)
        loss = train_step(buffer, agent, mixer, target_agent, target_mixer, config, batch_rng, state)
        returns.append(ret)
        smoothed = float(np.mean(returns[-SMOOTH_WINDOW:]))
        metrics.append(
            MetricRow(
                episode=ep,
                ret=ret,
                smoothed_return=smoothed,
                loss=math.nan if loss is None else loss,
                epsilon=eps,
                mean_latency=mean_lat,
                # reserved for the parallel-collection mode; kept at zero so
                # the single-threaded reference produces reproducible bytes
                wall_ms=0.0,
            )
        )
        if out is not None and config.checkpoint_interval > 0:
            if (ep + 1) % config.checkpoint_interval == 0 and ep + 1 < config.episodes:
                p = out / f"{run_name}_ckpt_ep{ep + 1}.nkc"
                save_learner(p, agent, mixer, config, env, episode=ep + 1)
                ckpt_paths.append(p)

    csv_path = None
    if out is not None:
        csv_path = out / f"{run_name}_metrics.csv"
        write_metrics_csv(csv_path, metrics)
        p = out / f"{run_name}_ckpt_final.nkc"
        save_learner(p, agent, mixer, config, env, episode=config.episodes)
        ckpt_paths.append(p)
    return TrainResult(
        metrics=metrics,
        agent=agent,
        mixer=mixer,
        train_steps=state.steps,
        csv_path=csv_path,
        checkpoint_paths=ckpt_paths,
    )


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def write_metrics_csv(path: Path | str, metrics: list[MetricRow]) -> None:
    lines = ["episode,return,smoothed_return,loss,epsilon,mean_latency,wall_ms"]
    for m in metrics:
        lines.append(
            ",".join(
                [
                    str(m.episode),
                    _fmt(m.ret),
                    _fmt(m.smoothed_return),
                    _fmt(m.loss),
                    _fmt(m.epsilon),
                    _fmt(m.mean_latency),
                    _fmt(m.wall_ms),
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def save_learner(path, agent: AgentNet, mixer, config: TrainConfig, env: EnvLike, episode: int) -> None:
    meta = {
        "kind": "offload-learner",
        "mixer": mixer.kind,
        "episode": episode,
        "num_agents": env.num_agents,
        "num_actions": env.num_actions,
        "obs_dim": env.obs_dim,
        "train_config": asdict(config),
    }
    env_cfg = getattr(env, "config", None)
    if is_dataclass(env_cfg):
        meta["env_config"] = _jsonable(asdict(env_cfg))
    params = dict(agent.params())
    params.update(mixer.params())
    nk.save_checkpoint(path, params, meta)


def load_learner(path) -> tuple[AgentNet, object, dict]:
    """Rebuild the agent net and mixer saved by ``save_learner``."""
    meta, arrays = nk.load_checkpoint(path)
    if meta.get("kind") != "offload-learner":
        raise nk.CheckpointError(f"{path} is not an offload learner checkpoint")
    tc = meta["train_config"]
    agent_cfg = AgentConfig(
        num_actions=meta["num_actions"],
        obs_dim=meta["obs_dim"],
        hidden=tc["agent_hidden"],
        obs_stack=tc["obs_stack"],
    )
    rng = np.random.default_rng(0)
    agent = AgentNet(agent_cfg, rng)
    mixer = make_mixer(
        meta["mixer"],
        meta["num_agents"],
        agent_cfg.input_dim,
        tc["mix_hidden"],
        tc["gnn_width"],
        tc["gnn_layers"],
        tc["pool"],
        rng,
    )
    wanted = dict(agent.params())
    wanted.update(mixer.params())
    if set(wanted) != set(arrays):
        missing = set(wanted) ^ set(arrays)
        raise nk.CheckpointError(f"checkpoint parameter names mismatch: {sorted(missing)}")
    for name, p in wanted.items():
        if p.value.shape != arrays[name].shape:
            raise nk.CheckpointError(
                f"shape mismatch for {name}: {p.value.shape} vs {arrays[name].shape}"
            )
        np.copyto(p.value, arrays[name])
    return agent, mixer, meta


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj
