"""Sum-rate objective and selection feasibility for the joint design problem.

Selections are ordered index arrays into the sampling grid; beamformers are
(M, K) complex arrays with columns per user.  Rate computations are
order-invariant in the selection.
"""

from dataclasses import dataclass

import numpy as np

from .channel import SamplingGrid

LOG2 = np.log(2.0)


@dataclass
class RateReport:
    sinr: np.ndarray  # (K,)
    rates: np.ndarray  # (K,) bits/s/Hz
    sum_rate: float


def select_channel(selection, h: np.ndarray) -> np.ndarray:
    """Rows of the (N, K) channel at the selected indices, as (M, K)."""
    idx = np.asarray(selection, dtype=np.intp)
    n = h.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"selection index out of range for {n} grid points")
    return h[idx]


def compute_rates(h_sel: np.ndarray, w: np.ndarray, noise_w) -> RateReport:
    """Per-user SINR and rates for channel h_sel (M, K) and beamformers w (M, K)."""
    noise = np.broadcast_to(np.asarray(noise_w, float), (h_sel.shape[1],))
    gains = np.abs(h_sel.conj().T @ w) ** 2  # (K, K): row k = |h_k^H w_l|^2
    signal = np.diag(gains).copy()
    interference = gains.sum(axis=1) - signal
    sinr = signal / (interference + noise)
    rates = np.log1p(sinr) / LOG2
    return RateReport(sinr=sinr, rates=rates, sum_rate=float(rates.sum()))


def sum_rates_batch(h_sel: np.ndarray, w: np.ndarray, noise_w) -> np.ndarray:
    """Sum rate per sample for stacked (S, M, K) channels and beamformers."""
    noise = np.asarray(noise_w, float)
    if noise.ndim < 2:
        noise = np.broadcast_to(noise, (h_sel.shape[0], h_sel.shape[2]))
    gains = np.abs(np.einsum("smk,sml->skl", h_sel.conj(), w)) ** 2
    signal = np.einsum("skk->sk", gains)
    interference = gains.sum(axis=2) - signal
    sinr = signal / (interference + noise)
    return np.log1p(sinr).sum(axis=1) / LOG2


def total_power(w: np.ndarray) -> float:
    return float((np.abs(w) ** 2).sum())


def feasible_mask(prefix, grid: SamplingGrid) -> np.ndarray:
    """(N,) bool: points at distance >= d_min from every already-selected point.

    With d_min > 0 the selected points themselves come out False.
    """
    mask = np.ones(grid.n, dtype=bool)
    pair_ok = grid.pair_ok()
    for a in np.asarray(prefix, dtype=np.intp):
        mask &= pair_ok[a]
    return mask


def check_feasibility(selection, grid: SamplingGrid, m: int) -> bool:
    """|selection| == m, indices valid and distinct, all pairwise spacings ok."""
    idx = np.asarray(selection, dtype=np.intp)
    if idx.ndim != 1 or idx.size != m:
        return False
    if idx.size and (idx.min() < 0 or idx.max() >= grid.n):
        return False
    if len(set(idx.tolist())) != m:
        return False
    pair_ok = grid.pair_ok()
    for i in range(m):
        for j in range(i + 1, m):
            if not pair_ok[idx[i], idx[j]]:
                return False
    return True
