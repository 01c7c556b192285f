"""Joint-value constructions over per-agent utilities.

Three interchangeable mixers produce the scalar joint value Q_tot from the
utilities the agents assigned to their chosen actions:

* ``VdnMixer``      -- plain sum; permutation invariant, state-blind.
* ``QmixMixer``     -- state-conditioned monotone mixing: hypernetworks read
  the concatenation of all observations (in vehicle-index order) and emit
  the mixing weights through an absolute value, which keeps every partial
  dQ_tot/dq_i nonnegative.  The ordered state makes it permutation
  sensitive -- the defect the graph mixer removes.
* ``KmarlMixer``    -- graph-encoded monotone mixing: a small graph
  convolution stack over the vehicle communication graph, pooled to a
  fixed-size embedding, feeds the hypernetworks.  One shared per-agent
  weight is generated for all utility positions, so the mixer is invariant
  under agent relabeling and accepts any fleet size.

All mixers expose ``mix_batch(chosen_q, batch)`` returning a (B, 1) graph
node, differentiable end to end.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import fsum

import numpy as np

from . import numkit as nk

__all__ = [
    "MixBatch",
    "VdnMixer",
    "QmixMixer",
    "KmarlMixer",
    "GnnEncoder",
    "gnn_layer",
    "vdn_mix",
    "monotonicity_check",
    "make_mixer",
    "MIXER_KINDS",
]

MIXER_KINDS = ("vdn", "qmix", "kmarl")

# Activation applied to hypernetwork weight outputs.  "abs" enforces the
# monotonicity constraint; tests may patch this to break it on purpose.
_NONNEG = "abs"


@dataclass(frozen=True)
class MixBatch:
    """State inputs for a batch of mixing evaluations."""

    size: int                        # B
    num_agents: int                  # I
    concat_obs: np.ndarray           # (B, I*D) observations in index order
    node_feats: np.ndarray           # (B*I, D) rows grouped per sample
    adj_block: np.ndarray            # (B*I, B*I) block-diagonal adjacency

    @staticmethod
    def from_arrays(obs: np.ndarray, adj: np.ndarray) -> "MixBatch":
        """obs: (B, I, D); adj: (B, I, I)."""
        obs = np.asarray(obs, dtype=np.float64)
        adj = np.asarray(adj, dtype=np.float64)
        b, i, d = obs.shape
        block = np.zeros((b * i, b * i))
        for k in range(b):
            block[k * i : (k + 1) * i, k * i : (k + 1) * i] = adj[k]
        return MixBatch(
            size=b,
            num_agents=i,
            concat_obs=obs.reshape(b, i * d),
            node_feats=obs.reshape(b * i, d),
            adj_block=block,
        )

    @staticmethod
    def single(obs: np.ndarray, adj: np.ndarray) -> "MixBatch":
        return MixBatch.from_arrays(np.asarray(obs)[None, :, :], np.asarray(adj)[None, :, :])


def vdn_mix(q) -> float:
    """Additive joint value; fsum keeps it exactly permutation invariant."""
    return fsum(float(v) for v in q)


class VdnMixer:
    kind = "vdn"

    def __init__(self, num_agents: int):
        self.num_agents = num_agents
        self._ones = np.ones((num_agents, 1))

    def params(self) -> dict[str, nk.Param]:
        return {}

    def mix_batch(self, chosen_q, batch: MixBatch | None = None) -> nk.Node:
        q = chosen_q if isinstance(chosen_q, nk.Node) else nk.constant(chosen_q)
        return nk.matmul(q, self._ones)

    def mix(self, q) -> float:
        return vdn_mix(q)

    def copy_from(self, other: "VdnMixer") -> None:
        pass


def _hyper(rng, in_dim: int, out_dim: int, prefix: str, w_std: float, b_init: float):
    return {
        f"{prefix}.w": nk.Param(rng.normal(0.0, w_std, size=(in_dim, out_dim))),
        f"{prefix}.b": nk.Param(np.full((1, out_dim), b_init)),
    }


class QmixMixer:
    """Monotone mixing with ordered-state hypernetworks.

    Q_tot = W2^T elu(W1^T q + b1) + b2 where W1 (I x H) and W2 (H x 1) are
    generated from the global state and passed through abs.
    """

    kind = "qmix"

    def __init__(
        self,
        num_agents: int,
        state_dim: int,
        mix_hidden: int = 32,
        rng: np.random.Generator | None = None,
    ):
        rng = rng or np.random.default_rng(0)
        self.num_agents = num_agents
        self.state_dim = state_dim
        self.mix_hidden = mix_hidden
        i, h, s = num_agents, mix_hidden, state_dim
        w_std = 0.1 / np.sqrt(s)
        self._p: dict[str, nk.Param] = {}
        # biases seed the generated weights near 1/I and 1/H so the initial
        # joint value is roughly the mean utility
        self._p.update(_hyper(rng, s, i * h, "mixer.hw1", w_std, 1.0 / i))
        self._p.update(_hyper(rng, s, h, "mixer.hb1", w_std, 0.0))
        self._p.update(_hyper(rng, s, h, "mixer.hw2", w_std, 1.0 / h))
        self._p.update(_hyper(rng, s, 1, "mixer.hb2", w_std, 0.0))
        # q tiling (I -> I*H, agent-major) and group-sum (I*H -> H) constants
        tile = np.zeros((i, i * h))
        group = np.zeros((i * h, h))
        for a in range(i):
            for k in range(h):
                tile[a, a * h + k] = 1.0
                group[a * h + k, k] = 1.0
        self._tile = tile
        self._group = group
        self._ones_h = np.ones((h, 1))

    def params(self) -> dict[str, nk.Param]:
        return self._p

    def _gen(self, s: nk.Node, name: str, nonneg: bool) -> nk.Node:
        out = nk.add_row(nk.matmul(s, self._p[f"{name}.w"]), self._p[f"{name}.b"])
        return nk.activation(out, _NONNEG) if nonneg else out

    def mix_batch(self, chosen_q, batch: MixBatch) -> nk.Node:
        if batch.concat_obs.shape[1] != self.state_dim:
            raise nk.ShapeError(
                f"state dim {batch.concat_obs.shape[1]}, expected {self.state_dim}"
            )
        q = chosen_q if isinstance(chosen_q, nk.Node) else nk.constant(chosen_q)
        s = nk.constant(batch.concat_obs)
        w1 = self._gen(s, "mixer.hw1", nonneg=True)    # (B, I*H)
        b1 = self._gen(s, "mixer.hb1", nonneg=False)   # (B, H)
        w2 = self._gen(s, "mixer.hw2", nonneg=True)    # (B, H)
        b2 = self._gen(s, "mixer.hb2", nonneg=False)   # (B, 1)
        qt = nk.matmul(q, self._tile)                  # (B, I*H)
        hidden = nk.activation(nk.add(nk.matmul(nk.mul(qt, w1), self._group), b1), "elu")
        return nk.add(nk.matmul(nk.mul(hidden, w2), self._ones_h), b2)

    def mix(self, q, state) -> float:
        """Single-sample joint value from utilities and the ordered state."""
        q = np.asarray(q, dtype=np.float64).reshape(1, -1)
        state = np.asarray(state, dtype=np.float64).reshape(1, -1)
        batch = MixBatch(
            size=1,
            num_agents=self.num_agents,
            concat_obs=state,
            node_feats=np.zeros((self.num_agents, 1)),
            adj_block=np.zeros((self.num_agents, self.num_agents)),
        )
        return float(self.mix_batch(q, batch).value[0, 0])

    def copy_from(self, other: "QmixMixer") -> None:
        for name, p in self._p.items():
            np.copyto(p.value, other._p[name].value)


def gnn_layer(h, adj, w_self, w_other, kind: str = "relu", n: int | None = None) -> nk.Node:
    """One graph convolution: sigma((1/n) A h W_other + h W_self).

    ``adj`` must be square with zero diagonal and match h's row count; for
    block-diagonal batches pass n = vehicles per graph explicitly.
    """
    h = h if isinstance(h, nk.Node) else nk.constant(h)
    adj_v = adj.value if isinstance(adj, nk.Node) else np.asarray(adj, dtype=np.float64)
    rows = h.value.shape[0]
    if adj_v.shape != (rows, rows):
        raise nk.ShapeError(f"adjacency {adj_v.shape} does not match {rows} node rows")
    if n is None:
        n = rows
    neighbor = nk.scale(nk.matmul(nk.constant(adj_v), nk.matmul(h, w_other)), 1.0 / n)
    return nk.activation(nk.add(neighbor, nk.matmul(h, w_self)), kind)


class GnnEncoder:
    """Stack of graph convolutions plus permutation-invariant pooling."""

    def __init__(
        self,
        in_dim: int,
        width: int = 32,
        layers: int = 2,
        pool: str = "mean",
        rng: np.random.Generator | None = None,
    ):
        if pool not in ("mean", "max"):
            raise ValueError(f"unknown pooling kind {pool!r}")
        rng = rng or np.random.default_rng(0)
        self.in_dim, self.width, self.layers, self.pool = in_dim, width, layers, pool
        self._p: dict[str, nk.Param] = {}
        d = in_dim
        for layer in range(layers):
            std = np.sqrt(2.0 / d)
            self._p[f"mixer.gnn{layer}.self"] = nk.Param(rng.normal(0.0, std, (d, width)))
            self._p[f"mixer.gnn{layer}.other"] = nk.Param(rng.normal(0.0, std, (d, width)))
            d = width

    def params(self) -> dict[str, nk.Param]:
        return self._p

    def encode(self, node_feats, adj_block: np.ndarray, num_agents: int, size: int) -> nk.Node:
        """(B*I, D) node features -> (B, width) pooled embeddings."""
        h = node_feats if isinstance(node_feats, nk.Node) else nk.constant(node_feats)
        for layer in range(self.layers):
            h = gnn_layer(
                h,
                adj_block,
                self._p[f"mixer.gnn{layer}.self"],
                self._p[f"mixer.gnn{layer}.other"],
                kind="relu",
                n=num_agents,
            )
        if self.pool == "mean":
            pool = np.zeros((size, size * num_agents))
            for k in range(size):
                pool[k, k * num_agents : (k + 1) * num_agents] = 1.0 / num_agents
            return nk.matmul(pool, h)
        parts = [
            nk.reduce(nk.take_rows(h, k * num_agents, (k + 1) * num_agents), "max_rows")
            for k in range(size)
        ]
        return nk.concat_rows(parts)


class KmarlMixer:
    """Graph-embedded monotone mixing, invariant to agent relabeling.

    The pooled graph embedding generates one shared per-agent weight per
    mixing unit (replicated across all utility positions), so utilities only
    enter through their sum and the construction transfers across fleet
    sizes unchanged.
    """

    kind = "kmarl"

    def __init__(
        self,
        obs_dim: int,
        mix_hidden: int = 32,
        gnn_width: int = 32,
        gnn_layers: int = 2,
        pool: str = "mean",
        rng: np.random.Generator | None = None,
    ):
        rng = rng or np.random.default_rng(0)
        self.obs_dim = obs_dim
        self.mix_hidden = mix_hidden
        self.encoder = GnnEncoder(obs_dim, gnn_width, gnn_layers, pool, rng)
        h, e = mix_hidden, gnn_width
        w_std = 0.1 / np.sqrt(e)
        self._p = dict(self.encoder.params())
        self._p.update(_hyper(rng, e, h, "mixer.kw1", w_std, 0.5))
        self._p.update(_hyper(rng, e, h, "mixer.kb1", w_std, 0.0))
        self._p.update(_hyper(rng, e, h, "mixer.kw2", w_std, 1.0 / h))
        self._p.update(_hyper(rng, e, 1, "mixer.kb2", w_std, 0.0))
        self._ones_h = np.ones((h, 1))

    def params(self) -> dict[str, nk.Param]:
        return self._p

    def _gen(self, e: nk.Node, name: str, nonneg: bool) -> nk.Node:
        out = nk.add_row(nk.matmul(e, self._p[f"{name}.w"]), self._p[f"{name}.b"])
        return nk.activation(out, _NONNEG) if nonneg else out

    def mix_batch(self, chosen_q, batch: MixBatch) -> nk.Node:
        if batch.node_feats.shape[1] != self.obs_dim:
            raise nk.ShapeError(
                f"node feature dim {batch.node_feats.shape[1]}, expected {self.obs_dim}"
            )
        q = chosen_q if isinstance(chosen_q, nk.Node) else nk.constant(chosen_q)
        i = batch.num_agents
        emb = self.encoder.encode(batch.node_feats, batch.adj_block, i, batch.size)
        w1 = self._gen(emb, "mixer.kw1", nonneg=True)   # (B, H) shared per agent
        b1 = self._gen(emb, "mixer.kb1", nonneg=False)
        w2 = self._gen(emb, "mixer.kw2", nonneg=True)
        b2 = self._gen(emb, "mixer.kb2", nonneg=False)
        sum_q = nk.matmul(q, np.ones((i, 1)))           # (B, 1)
        sum_b = nk.matmul(sum_q, np.ones((1, self.mix_hidden)))
        hidden = nk.activation(nk.add(nk.mul(w1, sum_b), b1), "elu")
        return nk.add(nk.matmul(nk.mul(hidden, w2), self._ones_h), b2)

    def mix(self, q, node_feats, adj) -> float:
        """Single-sample joint value from utilities, node features, adjacency."""
        q = np.asarray(q, dtype=np.float64).reshape(1, -1)
        batch = MixBatch.single(np.asarray(node_feats, dtype=np.float64), adj)
        return float(self.mix_batch(q, batch).value[0, 0])

    def copy_from(self, other: "KmarlMixer") -> None:
        for name, p in self._p.items():
            np.copyto(p.value, other._p[name].value)


def monotonicity_check(
    mixer,
    samples: int = 1000,
    num_agents: int | None = None,
    rng: np.random.Generator | None = None,
    step: float = 1e-4,
) -> float:
    """Most negative central-difference partial dQ_tot/dq_i on random inputs.

    Inputs: utilities ~ U[-1, 1], observation-like states ~ U[0, 1] and a
    random symmetric zero-diagonal adjacency per sample.
    """
    rng = rng or np.random.default_rng(0)
    i = num_agents or getattr(mixer, "num_agents", None)
    if i is None:
        raise ValueError("num_agents required for this mixer")
    if isinstance(mixer, QmixMixer):
        d = mixer.state_dim // i
    elif isinstance(mixer, KmarlMixer):
        d = mixer.obs_dim
    else:
        d = 4
    obs = rng.uniform(0.0, 1.0, size=(samples, i, d))
    adj = np.zeros((samples, i, i))
    for k in range(samples):
        upper = rng.integers(0, 2, size=(i, i))
        a = np.triu(upper, 1)
        adj[k] = a + a.T
    batch = MixBatch.from_arrays(obs, adj)
    q = rng.uniform(-1.0, 1.0, size=(samples, i))
    worst = np.inf
    for a in range(i):
        e = np.zeros((1, i))
        e[0, a] = step
        f_plus = mixer.mix_batch(q + e, batch).value[:, 0]
        f_minus = mixer.mix_batch(q - e, batch).value[:, 0]
        worst = min(worst, float(((f_plus - f_minus) / (2.0 * step)).min()))
    return worst


def make_mixer(
    kind: str,
    num_agents: int,
    obs_dim: int,
    mix_hidden: int = 32,
    gnn_width: int = 32,
    gnn_layers: int = 2,
    pool: str = "mean",
    rng: np.random.Generator | None = None,
):
    if kind == "vdn":
        return VdnMixer(num_agents)
    if kind == "qmix":
        return QmixMixer(num_agents, num_agents * obs_dim, mix_hidden, rng)
    if kind == "kmarl":
        return KmarlMixer(obs_dim, mix_hidden, gnn_width, gnn_layers, pool, rng)
    raise ValueError(f"unknown mixer kind {kind!r}; expected one of {MIXER_KINDS}")
