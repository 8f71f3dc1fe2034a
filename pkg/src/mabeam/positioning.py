"""Learned grid-point selection: graph encoder plus attention pointer decoder.

The encoder alternates node/edge updates over the (grid points x users)
bipartite graph and returns one embedding per grid point.  The decoder picks
points one at a time: a context vector summarizing the sample and the points
chosen so far attends over the embeddings, and a clipped single-head pointer
produces a distribution whose support is exactly the set of points still
compatible with the spacing constraint.  Completed selections are therefore
feasible by construction.

Network inputs are conditioned to O(1): channel entries are divided by the
per-sample RMS magnitude and coordinates by the region side.  Both scalings
are permutation-invariant, so the encoder equivariance is unaffected.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .channel import SamplingGrid
from .layers import Mlp, NodeEdgeLayer, rowwise_matmul, uniform_init
from .rng import DOMAIN_INIT_POS, derived_rng


class DeadEndError(RuntimeError):
    """No grid point is selectable at some decoding step."""

    def __init__(self, prefix):
        self.prefix = np.asarray(prefix)
        super().__init__(f"no feasible choice after prefix {self.prefix.tolist()}")


@dataclass
class PolicyConfig:
    embed_dim: int = 128  # encoder feature width; final embeddings have this width
    ctx_dim: int = 256  # decoder context width
    heads: int = 8
    enc_layers: int = 3
    clip: float = 8.0  # pointer logit clipping constant

    def __post_init__(self):
        if self.ctx_dim % self.heads != 0:
            raise ValueError("ctx_dim must be divisible by heads")

    @property
    def head_dim(self) -> int:
        return self.ctx_dim // self.heads


@dataclass
class RolloutResult:
    selections: np.ndarray  # (B, M) chosen grid indices, in decode order
    step_logp: np.ndarray  # (B, M) log-probability of each step's choice
    logp: ad.Tensor  # (B,) differentiable total log-probability

    @property
    def total_logp(self) -> np.ndarray:
        return self.step_logp.sum(axis=1)


def _normalize_channel(h: np.ndarray) -> np.ndarray:
    rms = np.sqrt((np.abs(h) ** 2).mean(axis=(1, 2), keepdims=True))
    return h / np.maximum(rms, 1e-300)


class PositioningPolicy:
    def __init__(self, cfg: PolicyConfig, store: ad.ParameterStore | None = None,
                 seed: int = 0):
        self.cfg = cfg
        self.store = store if store is not None else ad.ParameterStore()
        rng = derived_rng(seed, DOMAIN_INIT_POS)
        d, dh = cfg.embed_dim, cfg.ctx_dim
        self.edge_init = Mlp(self.store, "enc.edge_init", (2,), d, rng)
        self.node_init = Mlp(self.store, "enc.node_init", (2,), d, rng)
        self.layers = [NodeEdgeLayer(self.store, f"enc.l{i}", d, rng)
                       for i in range(cfg.enc_layers)]
        self.ctx_pair = Mlp(self.store, "dec.ctx.pair", (2,), dh, rng)
        self.ctx_point = Mlp(self.store, "dec.ctx.point", (2, dh), dh, rng)
        self.ctx_sel = Mlp(self.store, "dec.ctx.sel", (d,), dh, rng)
        self.ctx_merge = Mlp(self.store, "dec.ctx.merge", (dh, dh), dh, rng)
        self.start = self.store.create("dec.start", uniform_init(rng, dh, (dh,)))
        self.w_q = self.store.create("dec.mha.wq", uniform_init(rng, dh, (dh, dh)))
        self.w_k = self.store.create("dec.mha.wk", uniform_init(rng, d, (d, dh)))
        self.w_v = self.store.create("dec.mha.wv", uniform_init(rng, d, (d, dh)))
        self.w_o = self.store.create("dec.mha.wo",
                                     uniform_init(rng, cfg.head_dim, (dh, dh)))
        self.w_pq = self.store.create("dec.ptr.wq", uniform_init(rng, dh, (dh, dh)))
        self.w_pk = self.store.create("dec.ptr.wk", uniform_init(rng, d, (d, dh)))

    # -- encoder ------------------------------------------------------------

    def encode_init(self, h: np.ndarray, grid: SamplingGrid):
        """Initial feature tensors: edges from channel entries, grid nodes from
        coordinates, user nodes at zero."""
        b, n, k = h.shape
        hn = _normalize_channel(h)
        feats = np.stack([hn.real, hn.imag], axis=-1)
        coords = np.broadcast_to(grid.coords / grid.side, (b, n, 2))
        e = self.edge_init(ad.constant(feats))
        f_sp = self.node_init(ad.constant(coords))
        f_ue = ad.constant(np.zeros((b, k, self.cfg.embed_dim)))
        return f_sp, f_ue, e

    def encode(self, h: np.ndarray, grid: SamplingGrid) -> ad.Tensor:
        """(B, N, embed_dim) grid-point embeddings."""
        f_sp, f_ue, e = self.encode_init(h, grid)
        for layer in self.layers:
            f_sp, f_ue, e = layer(f_sp, f_ue, e)
        return f_sp

    # -- decoder ------------------------------------------------------------

    def build_cache(self, emb: ad.Tensor, h: np.ndarray, grid: SamplingGrid) -> dict:
        """Per-sample quantities reused across decoding steps."""
        b, n, _ = emb.shape
        cfg = self.cfg
        hn = _normalize_channel(h)
        feats = np.stack([hn.real, hn.imag], axis=-1)  # (B, N, K, 2)
        pair = ad.mean_axis(self.ctx_pair(ad.constant(feats)), 2)  # (B, N, dh)
        coords = np.broadcast_to(grid.coords / grid.side, (b, n, 2))
        ctx_global = ad.mean_axis(self.ctx_point(ad.constant(coords), pair), 1)

        keys = ad.transpose(
            ad.reshape(rowwise_matmul(emb, self.w_k.tensor()),
                       (b, n, cfg.heads, cfg.head_dim)), (0, 2, 1, 3))
        values = ad.transpose(
            ad.reshape(rowwise_matmul(emb, self.w_v.tensor()),
                       (b, n, cfg.heads, cfg.head_dim)), (0, 2, 1, 3))
        ptr_keys = rowwise_matmul(emb, self.w_pk.tensor())  # (B, N, dh)
        emb_flat = ad.reshape(emb, (b * n, cfg.embed_dim))
        return {"ctx_global": ctx_global, "keys": keys, "values": values,
                "ptr_keys": ptr_keys, "emb_flat": emb_flat, "b": b, "n": n}

    def context_embed(self, cache: dict, sel_sum: ad.Tensor | None, t: int) -> ad.Tensor:
        """Context at step t; the start token replaces the selection mean at t=1."""
        b = cache["b"]
        if t == 1:
            first = ad.add(ad.constant(np.zeros((b, self.cfg.ctx_dim))),
                           ad.reshape(self.start.tensor(), (1, self.cfg.ctx_dim)))
        else:
            first = ad.scale(sel_sum, 1.0 / (t - 1))
        return self.ctx_merge(first, cache["ctx_global"])

    def decode_step(self, ctx: ad.Tensor, cache: dict, mask: np.ndarray) -> ad.Tensor:
        """(B, N) selection probabilities with support exactly on mask."""
        cfg = self.cfg
        b, n = cache["b"], cache["n"]
        q = ad.reshape(ad.matmul(ctx, self.w_q.tensor()), (b, cfg.heads, 1, cfg.head_dim))
        scores = ad.scale(ad.sum_axis(ad.multiply(q, cache["keys"]), 3),
                          1.0 / np.sqrt(cfg.head_dim))  # (B, Nh, N)
        attn = ad.masked_softmax(scores, mask[:, None, :])
        heads = ad.sum_axis(ad.multiply(ad.reshape(attn, (b, cfg.heads, n, 1)),
                                        cache["values"]), 2)  # (B, Nh, dv)
        updated = ad.matmul(ad.reshape(heads, (b, cfg.ctx_dim)), self.w_o.tensor())

        pq = ad.reshape(ad.matmul(updated, self.w_pq.tensor()), (b, 1, cfg.ctx_dim))
        compat = ad.scale(ad.sum_axis(ad.multiply(pq, cache["ptr_keys"]), 2),
                          1.0 / np.sqrt(cfg.ctx_dim))  # (B, N)
        logits = ad.scale(ad.tanh(compat), cfg.clip)
        return ad.masked_softmax(logits, mask)

    def _decode(self, h: np.ndarray, grid: SamplingGrid, m: int, mode: str,
                rng: np.random.Generator | None, forced: np.ndarray | None):
        b, n, _ = h.shape
        emb = self.encode(h, grid)
        cache = self.build_cache(emb, h, grid)
        pair_ok = grid.pair_ok()
        mask = np.ones((b, n), dtype=bool)
        rows = np.arange(b)
        selections = np.empty((b, m), dtype=np.int64)
        step_logp = np.empty((b, m))
        sel_sum = None
        logp = None
        for t in range(1, m + 1):
            if not mask.any(axis=1).all():
                bad = int(np.flatnonzero(~mask.any(axis=1))[0])
                raise DeadEndError(selections[bad, :t - 1])
            ctx = self.context_embed(cache, sel_sum, t)
            probs = self.decode_step(ctx, cache, mask)
            if forced is not None:
                idx = np.asarray(forced[:, t - 1], dtype=np.int64)
                if not mask[rows, idx].all():
                    raise ValueError(
                        f"forced choice infeasible at step {t} for sample "
                        f"{int(np.flatnonzero(~mask[rows, idx])[0])}")
            elif mode == "greedy":
                idx = np.where(mask, probs.data, -1.0).argmax(axis=1)
            elif mode == "sample":
                cum = np.cumsum(probs.data, axis=1)
                cum /= cum[:, -1:]
                idx = (rng.random((b, 1)) > cum).sum(axis=1)
            else:
                raise ValueError(f"unknown decode mode '{mode}'")
            assert mask[rows, idx].all()

            flat = rows * n + idx
            chosen = ad.log(ad.gather_rows(ad.reshape(probs, (b * n, 1)), flat))
            logp = chosen if logp is None else ad.add(logp, chosen)
            step_logp[:, t - 1] = np.log(probs.data[rows, idx])
            selections[:, t - 1] = idx

            picked = self.ctx_sel(ad.gather_rows(cache["emb_flat"], flat))
            sel_sum = picked if sel_sum is None else ad.add(sel_sum, picked)
            mask &= pair_ok[idx]
            mask[rows, idx] = False
        return RolloutResult(selections=selections, step_logp=step_logp,
                             logp=ad.reshape(logp, (b,)))

    def rollout_batch(self, h: np.ndarray, grid: SamplingGrid, m: int,
                      mode: str = "greedy",
                      rng: np.random.Generator | None = None) -> RolloutResult:
        if mode == "sample" and rng is None:
            raise ValueError("sample mode needs an rng")
        return self._decode(h, grid, m, mode, rng, forced=None)

    def rollout(self, h: np.ndarray, grid: SamplingGrid, m: int,
                mode: str = "greedy",
                rng: np.random.Generator | None = None) -> RolloutResult:
        """Single-sample convenience wrapper; h is (N, K)."""
        return self.rollout_batch(h[None], grid, m, mode, rng)

    def log_prob_of(self, selections: np.ndarray, h: np.ndarray,
                    grid: SamplingGrid) -> ad.Tensor:
        """Differentiable (B,) log-probability of the given selections."""
        selections = np.atleast_2d(np.asarray(selections, dtype=np.int64))
        if h.ndim == 2:
            h = h[None]
        res = self._decode(h, grid, selections.shape[1], "greedy", None,
                           forced=selections)
        return res.logp
