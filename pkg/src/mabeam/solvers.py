"""Classical baselines: WMMSE and zero-forcing beamforming, heuristic and
random grid-point selection, and an exhaustive positioning oracle.

The WMMSE solver is written over a stack of independent systems so the oracle
can run hundreds of candidate subsets in one vectorized pass; a single system
is just a stack of one.
"""

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .channel import SamplingGrid
from .system import RateReport, compute_rates, sum_rates_batch


@dataclass
class WmmseConfig:
    max_iter: int = 200
    rate_tol: float = 1e-6  # relative sum-rate change across iterations
    mu_tol: float = 1e-10  # relative bracket width on the power multiplier
    init: str = "mrt"

    def __post_init__(self):
        if self.rate_tol <= 0 or self.mu_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.init != "mrt":
            raise ValueError(f"unknown init mode '{self.init}'")


@dataclass
class WmmseResult:
    w: np.ndarray  # (S, M, K) beamformers
    rate_history: np.ndarray  # (S, iters+1) sum rate, index 0 = initialization
    iterations: int


def _mrt_init(h: np.ndarray, p_max: float) -> np.ndarray:
    s, m, k = h.shape
    norms = np.linalg.norm(h, axis=1, keepdims=True)  # (S, 1, K)
    w = np.where(norms > 0, h / np.where(norms > 0, norms, 1.0), 0.0)
    return np.sqrt(p_max / k) * w


def _power_at(mu, lam, d):
    """sum_j d_j / (lam_j + mu)^2 per system; terms with d_j = 0 contribute 0.

    A zero eigenvalue implies its eigenvector is orthogonal to every active
    user channel, so d_j = 0 there and the masked divide is safe.
    """
    denom = (lam + mu[:, None]) ** 2
    out = np.zeros_like(d)
    with np.errstate(divide="ignore", invalid="ignore"):
        np.divide(d, denom, out=out, where=d > 0)
    return out.sum(axis=1)


def wmmse_batch(h: np.ndarray, p_max: float, noise, cfg: WmmseConfig | None = None
                ) -> WmmseResult:
    """Alternating receive-scalar / weight / beamformer updates on S systems.

    h is (S, M, K); the transmit-power multiplier in the beamformer update is
    found by bisection on the eigenbasis of the weighted channel covariance.
    The recorded sum rate is non-decreasing across iterations.
    """
    cfg = cfg or WmmseConfig()
    h = np.asarray(h, dtype=np.complex128)
    s, m, k = h.shape
    noise = np.broadcast_to(np.asarray(noise, float), (s, k))
    if not (np.abs(h) > 0).any():
        raise ValueError("wmmse: channel is identically zero")

    w = _mrt_init(h, p_max)
    history = [sum_rates_batch(h, w, noise)]
    iterations = 0
    for it in range(cfg.max_iter):
        g = np.einsum("smk,sml->skl", h.conj(), w)  # g[k, l] = h_k^H w_l
        t = np.einsum("skk->sk", g)
        total = (np.abs(g) ** 2).sum(axis=2) + noise
        u = t.conj() / total
        mse = 1.0 - np.abs(t) ** 2 / total
        v = 1.0 / mse
        beta = v * u.conj()  # w_k = beta_k (B + mu I)^{-1} h_k

        coef = v * np.abs(u) ** 2
        cov = np.einsum("sk,smk,snk->smn", coef, h, h.conj())
        lam, q = np.linalg.eigh(cov)
        lam = np.maximum(lam, 0.0)
        z = np.einsum("smj,smk->sjk", q.conj(), h)  # q_j^H h_k
        d = (np.abs(beta[:, None, :]) ** 2 * np.abs(z) ** 2).sum(axis=2)  # (S, M)

        mu = np.zeros(s)
        need = _power_at(mu, lam, d) > p_max
        if need.any():
            hi = np.ones(s)
            for _ in range(300):
                over = need & (_power_at(hi, lam, d) > p_max)
                if not over.any():
                    break
                hi[over] *= 2.0
            lo = np.zeros(s)
            for _ in range(200):
                if ((hi - lo)[need] <= cfg.mu_tol * np.maximum(1.0, hi[need])).all():
                    break
                mid = 0.5 * (lo + hi)
                over = _power_at(mid, lam, d) > p_max
                lo = np.where(need & over, mid, lo)
                hi = np.where(need & ~over, mid, hi)
            mu = np.where(need, hi, 0.0)

        denom = lam + mu[:, None]
        inv = np.zeros_like(denom)
        with np.errstate(divide="ignore"):
            np.divide(1.0, denom, out=inv, where=denom > 0)
        y = z * inv[:, :, None] * beta[:, None, :]
        w = np.einsum("smj,sjk->smk", q, y)

        rate = sum_rates_batch(h, w, noise)
        if not np.isfinite(rate).all():
            raise FloatingPointError(f"wmmse: non-finite rate at iteration {it}")
        history.append(rate)
        iterations = it + 1
        delta = (rate - history[-2]) / np.maximum(1.0, np.abs(rate))
        if np.abs(delta).max() < cfg.rate_tol:
            break
    return WmmseResult(w=w, rate_history=np.stack(history, axis=1),
                       iterations=iterations)


def wmmse(h: np.ndarray, p_max: float, noise, cfg: WmmseConfig | None = None
          ) -> WmmseResult:
    """Single-system convenience wrapper; h is (M, K)."""
    res = wmmse_batch(h[None], p_max, noise, cfg)
    return WmmseResult(w=res.w[0], rate_history=res.rate_history[0],
                       iterations=res.iterations)


def zero_forcing(h: np.ndarray, p_max: float) -> np.ndarray:
    """Interference-nulling directions with equal per-user power."""
    m, k = h.shape
    if m < k or np.linalg.matrix_rank(h) < k:
        raise ValueError("ZF infeasible: channel is not full column rank")
    gram = h.conj().T @ h
    dirs = np.linalg.solve(gram, h.conj().T).conj().T  # H (H^H H)^{-1}
    dirs = dirs / np.linalg.norm(dirs, axis=0, keepdims=True)
    return np.sqrt(p_max / k) * dirs


def strongest_positioning(h: np.ndarray, grid: SamplingGrid, m: int) -> np.ndarray:
    """Greedy picks of the highest mean power gain, re-masking after each pick."""
    score = (np.abs(h) ** 2).mean(axis=1)
    pair_ok = grid.pair_ok()
    mask = np.ones(grid.n, dtype=bool)
    out = np.empty(m, dtype=np.int64)
    for t in range(m):
        if not mask.any():
            raise RuntimeError(f"no feasible choice after {t} picks")
        pick = int(np.where(mask, score, -np.inf).argmax())
        out[t] = pick
        mask &= pair_ok[pick]
        mask[pick] = False
    return out


def random_feasible_positioning(rng: np.random.Generator, grid: SamplingGrid, m: int,
                                max_retries: int = 100_000) -> np.ndarray:
    """Uniform m-subsets redrawn until the spacing constraint holds."""
    pair_ok = grid.pair_ok()
    for _ in range(max_retries):
        idx = np.sort(rng.choice(grid.n, size=m, replace=False))
        if pair_ok[np.ix_(idx, idx)][np.triu_indices(m, 1)].all():
            return idx
    raise RuntimeError(f"no feasible selection found in {max_retries} draws")


@dataclass
class OracleResult:
    selection: np.ndarray
    w: np.ndarray
    report: RateReport
    n_feasible: int


def exhaustive_oracle(h: np.ndarray, grid: SamplingGrid, m: int, p_max: float,
                      noise, budget: int = 200_000,
                      wmmse_cfg: WmmseConfig | None = None) -> OracleResult:
    """Best feasible m-subset under WMMSE beamforming, by full enumeration.

    Ties resolve to the lexicographically smallest subset (subsets are
    enumerated in lexicographic order and argmax takes the first maximum).
    """
    total = math.comb(grid.n, m)
    if total > budget:
        raise ValueError(f"exhaustive search over {total} subsets exceeds "
                         f"budget {budget}")
    pair_ok = grid.pair_ok()
    triu = np.triu_indices(m, 1)
    subsets = [s for s in combinations(range(grid.n), m)
               if pair_ok[np.ix_(s, s)][triu].all()]
    if not subsets:
        raise ValueError("no feasible subset exists")
    idx = np.asarray(subsets, dtype=np.intp)
    h_all = h[idx]  # (S, M, K)
    noise_k = np.broadcast_to(np.asarray(noise, float), (h.shape[1],))
    res = wmmse_batch(h_all, p_max, np.broadcast_to(noise_k, (len(subsets), h.shape[1])),
                      wmmse_cfg)
    rates = sum_rates_batch(h_all, res.w, noise_k)
    best = int(rates.argmax())
    report = compute_rates(h_all[best], res.w[best], noise_k)
    return OracleResult(selection=idx[best].copy(), w=res.w[best], report=report,
                        n_feasible=len(subsets))
