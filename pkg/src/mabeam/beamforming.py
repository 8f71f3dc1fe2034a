"""Beamformer prediction through the low-dimensional optimal structure.

Instead of regressing 2*K*M beamformer entries, a node-edge GNN over the
(selected antennas x users) graph predicts two K-vectors: per-user uplink
weights mu and downlink powers p, both softmax-normalized to sum to the power
budget.  Beamformers are then reconstructed as

    w_k = sqrt(p_k) * v_k / ||v_k||,
    v_k = (I + sum_i mu_i / noise_k * h_i h_i^H)^{-1} h_k,

so the total-power constraint holds with equality for any network output.
Complex solves run on the real 2M x 2M block embedding so the whole chain
stays differentiable through the tape.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .layers import Mlp, NodeEdgeLayer, uniform_init
from .rng import DOMAIN_INIT_BF, derived_rng
from .system import LOG2

_SEL_MU = np.array([[1.0], [0.0]])
_SEL_P = np.array([[0.0], [1.0]])


@dataclass
class BfConfig:
    dim: int = 64
    layers: int = 3


@dataclass
class BfOutput:
    mu: ad.Tensor  # (B, K) watts, sums to p_max per sample
    p: ad.Tensor  # (B, K) watts, sums to p_max per sample
    w_embed: ad.Tensor  # (B, K, 2M) per-user beamformers, [re; im] stacking
    w: np.ndarray  # (B, M, K) complex view of the same beamformers


def _embed_bases(h: np.ndarray, noise: np.ndarray):
    """Per-user real embeddings of h_i h_i^H / noise_k and of h_k itself."""
    b, m, k = h.shape
    hr = h.real.transpose(0, 2, 1)  # (B, K, M)
    hi = h.imag.transpose(0, 2, 1)
    # outer products h_i h_i^H: real part and imaginary part
    g_re = np.einsum("sim,sin->simn", hr, hr) + np.einsum("sim,sin->simn", hi, hi)
    g_im = np.einsum("sim,sin->simn", hi, hr) - np.einsum("sim,sin->simn", hr, hi)
    basis = np.empty((b, k, 2 * m, 2 * m))
    basis[:, :, :m, :m] = g_re
    basis[:, :, m:, m:] = g_re
    basis[:, :, :m, m:] = -g_im
    basis[:, :, m:, :m] = g_im
    # scale by 1/noise_k of the target user: (B, K_target, K_source, 2M, 2M)
    basis = basis[:, None, :, :, :] / noise[:, :, None, None, None]
    rhs = np.concatenate([hr, hi], axis=2)[..., None]  # (B, K, 2M, 1)
    return basis, rhs


def structured_beamformer_t(h: np.ndarray, mu: ad.Tensor, p: ad.Tensor,
                            noise: np.ndarray) -> ad.Tensor:
    """Differentiable (B, K, 2M) beamformers from (mu, p); h and noise fixed."""
    b, m, k = h.shape
    basis, rhs = _embed_bases(h, noise)
    flat = ad.constant(basis.reshape(b, k, k, 4 * m * m))
    mu_row = ad.reshape(mu, (b, 1, 1, k))
    acc = ad.reshape(ad.matmul(mu_row, flat), (b, k, 2 * m, 2 * m))
    a = ad.add(acc, ad.constant(np.eye(2 * m)))
    x = ad.solve(a, ad.constant(rhs))  # (B, K, 2M, 1)
    ns = ad.sum_axis(ad.multiply(x, x), 2, keepdims=True)
    inv_norm = ad.reciprocal(ad.sqrt(ad.add(ns, ad.constant(1e-300))))
    amp = ad.reshape(ad.sqrt(p), (b, k, 1, 1))
    w = ad.multiply(ad.multiply(x, inv_norm), amp)
    return ad.reshape(w, (b, k, 2 * m))


def embed_to_complex(w_embed: np.ndarray) -> np.ndarray:
    """(B, K, 2M) real stacking back to (B, M, K) complex."""
    m = w_embed.shape[2] // 2
    return (w_embed[:, :, :m] + 1j * w_embed[:, :, m:]).transpose(0, 2, 1)


def sum_rate_t(w_embed: ad.Tensor, h: np.ndarray, noise: np.ndarray) -> ad.Tensor:
    """Differentiable (B,) sum rate; h (B, M, K) and noise (B, K) are fixed."""
    b, m, k = h.shape
    hr = h.real.transpose(0, 2, 1)
    hi = h.imag.transpose(0, 2, 1)
    h_re = ad.constant(np.concatenate([hr, hi], axis=2))  # (B, K, 2M)
    h_im = ad.constant(np.concatenate([-hi, hr], axis=2))
    wt = ad.transpose(w_embed, (0, 2, 1))  # (B, 2M, K)
    re = ad.matmul(h_re, wt)  # (B, K, K): entry (k, l) = Re(h_k^H w_l)
    im = ad.matmul(h_im, wt)
    g2 = ad.add(ad.multiply(re, re), ad.multiply(im, im))
    signal = ad.sum_axis(ad.multiply(g2, ad.constant(np.eye(k))), 2)
    interference = ad.add(ad.sum_axis(g2, 2), ad.scale(signal, -1.0))
    sinr = ad.multiply(signal, ad.reciprocal(ad.add(interference, ad.constant(noise))))
    rates = ad.scale(ad.log(ad.add(sinr, ad.constant(1.0))), 1.0 / LOG2)
    return ad.sum_axis(rates, 1)


class BeamformingNet:
    def __init__(self, cfg: BfConfig, store: ad.ParameterStore | None = None,
                 seed: int = 0):
        self.cfg = cfg
        self.store = store if store is not None else ad.ParameterStore()
        rng = derived_rng(seed, DOMAIN_INIT_BF)
        self.edge_init = Mlp(self.store, "bf.edge_init", (2,), cfg.dim, rng)
        self.layers = [NodeEdgeLayer(self.store, f"bf.l{i}", cfg.dim, rng)
                       for i in range(cfg.layers)]
        self.head_w = self.store.create("bf.head.w",
                                        uniform_init(rng, cfg.dim, (cfg.dim, 2)))
        self.head_b = self.store.create("bf.head.b", uniform_init(rng, cfg.dim, (2,)))

    def forward(self, h_sel: np.ndarray, noise, p_max: float) -> BfOutput:
        """h_sel (B, M, K) complex channel at the selected points."""
        b, m, k = h_sel.shape
        noise = np.broadcast_to(np.asarray(noise, float), (b, k))
        rms = np.sqrt((np.abs(h_sel) ** 2).mean(axis=(1, 2), keepdims=True))
        hn = h_sel / np.maximum(rms, 1e-300)
        feats = np.stack([hn.real, hn.imag], axis=-1)
        e = self.edge_init(ad.constant(feats))
        f_ma = ad.constant(np.zeros((b, m, self.cfg.dim)))
        f_ue = ad.constant(np.zeros((b, k, self.cfg.dim)))
        for layer in self.layers:
            f_ma, f_ue, e = layer(f_ma, f_ue, e)
        raw = ad.fused_dense([f_ue], [self.head_w.tensor()], self.head_b.tensor(),
                             relu_out=False)  # (B, K, 2), linear head
        mu_raw = ad.reshape(ad.matmul(raw, ad.constant(_SEL_MU)), (b, k))
        p_raw = ad.reshape(ad.matmul(raw, ad.constant(_SEL_P)), (b, k))
        ones = np.ones((b, k), dtype=bool)
        mu = ad.scale(ad.masked_softmax(mu_raw, ones), p_max)
        p = ad.scale(ad.masked_softmax(p_raw, ones), p_max)
        w_embed = structured_beamformer_t(h_sel, mu, p, noise)
        return BfOutput(mu=mu, p=p, w_embed=w_embed, w=embed_to_complex(w_embed.data))

    def __call__(self, h_sel, noise, p_max):
        return self.forward(h_sel, noise, p_max)


def beamformer_from_structure(h_sel: np.ndarray, mu: np.ndarray, p: np.ndarray,
                              noise) -> np.ndarray:
    """Plain-numpy (M, K) beamformers via per-user Hermitian solves."""
    m, k = h_sel.shape
    mu = np.asarray(mu, float)
    p = np.asarray(p, float)
    if (mu < 0).any() or (p < 0).any():
        raise ValueError("mu and p must be non-negative")
    noise = np.broadcast_to(np.asarray(noise, float), (k,))
    outer = np.einsum("mi,ni->imn", h_sel, h_sel.conj())  # (K, M, M) h_i h_i^H
    w = np.empty((m, k), dtype=np.complex128)
    for kk in range(k):
        a = np.eye(m) + (mu[:, None, None] * outer).sum(axis=0) / noise[kk]
        v = np.linalg.solve(a, h_sel[:, kk])
        nv = np.linalg.norm(v)
        if nv == 0.0:
            w[:, kk] = 0.0
        else:
            w[:, kk] = np.sqrt(p[kk]) * v / nv
    return w
