"""Per-agent utility network and action selection.

One MLP is shared by every vehicle (homogeneous fleet), mapping the local
observation to one utility per offloading option.  The shared parameters are
what let a trained policy run unchanged at any fleet size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numkit as nk

__all__ = ["AgentConfig", "AgentNet", "select_action", "epsilon_at", "ObsStacker"]


@dataclass(frozen=True)
class AgentConfig:
    num_actions: int
    obs_dim: int = 4
    hidden: int = 64
    obs_stack: int = 1

    @property
    def input_dim(self) -> int:
        return self.obs_dim * self.obs_stack


def _init(rng: np.random.Generator, rows: int, cols: int, std: float) -> nk.Param:
    return nk.Param(rng.normal(0.0, std, size=(rows, cols)))


class AgentNet:
    """obs -> relu -> relu -> utilities, one value per option."""

    def __init__(self, config: AgentConfig, rng: np.random.Generator):
        self.config = config
        d, h, a = config.input_dim, config.hidden, config.num_actions
        # He-scaled hidden layers; small final layer so initial utilities sit
        # near zero (the reward scale of the world is ~1e-4).
        self._p = {
            "agent.w1": _init(rng, d, h, np.sqrt(2.0 / d)),
            "agent.b1": nk.Param(np.zeros((1, h))),
            "agent.w2": _init(rng, h, h, np.sqrt(2.0 / h)),
            "agent.b2": nk.Param(np.zeros((1, h))),
            "agent.w3": _init(rng, h, a, 0.01 * np.sqrt(1.0 / h)),
            "agent.b3": nk.Param(np.zeros((1, a))),
        }

    def params(self) -> dict[str, nk.Param]:
        return self._p

    def forward(self, obs_batch) -> nk.Node:
        """Batched forward: (n, input_dim) -> (n, num_actions) node."""
        x = obs_batch if isinstance(obs_batch, nk.Node) else nk.constant(obs_batch)
        if x.value.shape[1] != self.config.input_dim:
            raise nk.ShapeError(
                f"observation dim {x.value.shape[1]}, expected {self.config.input_dim}"
            )
        p = self._p
        h1 = nk.activation(nk.add_row(nk.matmul(x, p["agent.w1"]), p["agent.b1"]), "relu")
        h2 = nk.activation(nk.add_row(nk.matmul(h1, p["agent.w2"]), p["agent.b2"]), "relu")
        return nk.add_row(nk.matmul(h2, p["agent.w3"]), p["agent.b3"])

    def q_values(self, obs: np.ndarray) -> np.ndarray:
        """Utilities for a single observation vector."""
        obs = np.asarray(obs, dtype=np.float64).reshape(1, -1)
        return self.forward(obs).value[0]

    def copy_from(self, other: "AgentNet") -> None:
        for name, p in self._p.items():
            np.copyto(p.value, other._p[name].value)


def select_action(q: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy: uniform with prob epsilon, else first argmax."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must be in [0, 1]")
    if rng.random() < epsilon:
        return int(rng.integers(len(q)))
    return int(np.argmax(q))


def epsilon_at(
    episode: int,
    total_episodes: int,
    start: float = 1.0,
    end: float = 0.05,
    decay_frac: float = 0.5,
) -> float:
    """Linear start -> end over the first decay_frac of episodes, then flat."""
    horizon = max(1, int(total_episodes * decay_frac))
    if episode >= horizon:
        return end
    return start + (end - start) * episode / horizon


class ObsStacker:
    """Keeps the last k observations per agent, concatenated oldest-first.

    At episode start the history is padded by repeating the first frame, so
    stacked observations are well defined from slot 0.
    """

    def __init__(self, num_agents: int, depth: int):
        self.depth = depth
        self.num_agents = num_agents
        self._frames: list[list[np.ndarray]] = [[] for _ in range(num_agents)]

    def reset(self, obs: list[np.ndarray]) -> list[np.ndarray]:
        self._frames = [[o.copy()] * self.depth for o in obs]
        return self.stacked()

    def push(self, obs: list[np.ndarray]) -> list[np.ndarray]:
        for i, o in enumerate(obs):
            self._frames[i] = self._frames[i][1:] + [o.copy()]
        return self.stacked()

    def stacked(self) -> list[np.ndarray]:
        return [np.concatenate(f) for f in self._frames]
