"""Joint unsupervised training of the positioning policy and beamforming net.

Selections are sampled, so the selection policy learns from the score-function
(policy-gradient) estimator reward * grad log p(selection); the beamforming
net's parameters get exact gradients of the batch-mean sum rate through the
structured-solve tape.  Both stores are updated by Adam each step, beamformer
first, then policy, using rewards computed before either update.

Every random draw is keyed by (seed, domain, step), so training trajectories
are reproducible and resume exactly from a checkpoint.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .beamforming import BeamformingNet, BfConfig, sum_rate_t
from .channel import ChannelDataset
from .positioning import PolicyConfig, PositioningPolicy
from .rng import DOMAIN_BATCH, DOMAIN_ROLLOUT, derived_rng
from .system import check_feasibility, sum_rates_batch

CURVE_COLUMNS = ("step", "mean_reward", "eval_reward", "grad_norm_p",
                 "grad_norm_w", "wall_ms")


@dataclass
class TrainConfig:
    epochs: int = 100
    steps_per_epoch: int = 50
    batch_size: int = 1024
    lr: float = 1e-4
    baseline: str = "none"  # "none" keeps the raw-reward estimator; "batch-mean" centers it
    p_max_w: float = 0.1
    m: int = 6
    seed: int = 0
    eval_every: int = 50  # steps between greedy held-out evals; 0 disables
    grad_clip: float = 10.0

    def __post_init__(self):
        if min(self.epochs, self.steps_per_epoch, self.batch_size) < 1:
            raise ValueError("epochs, steps_per_epoch and batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.baseline not in ("none", "batch-mean"):
            raise ValueError(f"unknown baseline mode '{self.baseline}'")


@dataclass
class TrainState:
    policy: PositioningPolicy
    bfnet: BeamformingNet
    step: int = 0

    def save(self, path) -> None:
        meta = ad.ParameterStore()
        meta.create("meta.step", float(self.step))
        ad.save_checkpoint(path, {"policy": self.policy.store,
                                  "beamforming": self.bfnet.store,
                                  "meta": meta})

    def load(self, path) -> None:
        stores = ad.load_checkpoint(path)
        self.policy.store.load_from(stores["policy"])
        self.bfnet.store.load_from(stores["beamforming"])
        self.step = int(stores["meta"]["meta.step"].value)


def init_state(policy_cfg: PolicyConfig, bf_cfg: BfConfig, seed: int = 0) -> TrainState:
    return TrainState(policy=PositioningPolicy(policy_cfg, seed=seed),
                      bfnet=BeamformingNet(bf_cfg, seed=seed))


@dataclass
class StepResult:
    selections: np.ndarray  # (B, M)
    logp: ad.Tensor  # (B,) differentiable selection log-probabilities
    rate: ad.Tensor  # (B,) differentiable sum rates
    rewards: np.ndarray  # (B,) detached copy of the rates
    h_sel: np.ndarray  # (B, M, K)
    noise: np.ndarray  # (B, K)


def rollout_batch(h: np.ndarray, noise: np.ndarray, grid, m: int,
                  policy: PositioningPolicy, bfnet: BeamformingNet, p_max: float,
                  rng: np.random.Generator) -> StepResult:
    """Sampled selections, beamformers and rewards for one batch."""
    res = policy.rollout_batch(h, grid, m, mode="sample", rng=rng)
    b = h.shape[0]
    h_sel = h[np.arange(b)[:, None], res.selections]
    noise = np.broadcast_to(np.asarray(noise, float), (b, h.shape[2]))
    out = bfnet.forward(h_sel, noise, p_max)
    rate = sum_rate_t(out.w_embed, h_sel, noise)
    return StepResult(selections=res.selections, logp=res.logp, rate=rate,
                      rewards=rate.data.copy(), h_sel=h_sel, noise=noise)


def positioning_gradient(result: StepResult, baseline: str = "none") -> None:
    """Accumulate the policy-gradient estimate of -d(mean reward)/d(theta_p)."""
    r = result.rewards
    b = r.mean() if baseline == "batch-mean" else 0.0
    weights = (r - b) / r.size
    loss = ad.scale(ad.sum_axis(ad.multiply(result.logp, ad.constant(weights)), 0),
                    -1.0)
    ad.backward(loss)


def beamforming_gradient(result: StepResult) -> None:
    """Accumulate -d(batch-mean sum rate)/d(theta_w) through the rate tape."""
    loss = ad.scale(ad.mean_axis(result.rate, 0), -1.0)
    ad.backward(loss)


def train_step(h: np.ndarray, noise: np.ndarray, grid, state: TrainState,
               cfg: TrainConfig) -> dict:
    rng = derived_rng(cfg.seed, DOMAIN_ROLLOUT, state.step)
    state.policy.store.zero_grads()
    state.bfnet.store.zero_grads()
    result = rollout_batch(h, noise, grid, cfg.m, state.policy, state.bfnet,
                           cfg.p_max_w, rng)
    beamforming_gradient(result)
    positioning_gradient(result, cfg.baseline)
    norm_w = state.bfnet.store.clip_grad_norm(cfg.grad_clip)
    norm_p = state.policy.store.clip_grad_norm(cfg.grad_clip)
    if not (np.isfinite(norm_w) and np.isfinite(norm_p)):
        raise FloatingPointError(
            f"step {state.step}: non-finite gradients (policy {norm_p}, "
            f"beamforming {norm_w}); mean reward {result.rewards.mean()}")
    ad.adam_step(state.bfnet.store, cfg.lr)
    ad.adam_step(state.policy.store, cfg.lr)
    state.step += 1
    return {"step": state.step, "mean_reward": float(result.rewards.mean()),
            "mean_logp": float(result.logp.data.mean()),
            "grad_norm_p": float(norm_p), "grad_norm_w": float(norm_w)}


@dataclass
class EvalMetrics:
    mean_rate: float
    median_rate: float
    std_rate: float
    feasibility: float
    rates: np.ndarray = field(repr=False)
    selections: np.ndarray = field(repr=False)


def evaluate_policy(policy: PositioningPolicy, bfnet: BeamformingNet,
                    ds: ChannelDataset, m: int, p_max: float, mode: str = "greedy",
                    best_of: int = 0, rng: np.random.Generator | None = None,
                    chunk: int = 512) -> EvalMetrics:
    """Deterministic greedy evaluation, or best-of-k sampled rollouts."""
    n = len(ds)
    rates = np.empty(n)
    selections = np.empty((n, m), dtype=np.int64)
    with ad.inference_mode():
        for lo in range(0, n, chunk):
            hi = min(lo + chunk, n)
            h = ds.h[lo:hi]
            noise = ds.noise_w[lo:hi]
            if mode == "greedy":
                sel = policy.rollout_batch(h, ds.grid, m, mode="greedy").selections
                cand = [sel]
            elif mode == "sample":
                cand = [policy.rollout_batch(h, ds.grid, m, mode="sample",
                                             rng=rng).selections
                        for _ in range(max(1, best_of))]
            else:
                raise ValueError(f"unknown eval mode '{mode}'")
            best_rate = np.full(hi - lo, -np.inf)
            best_sel = cand[0]
            for sel in cand:
                h_sel = h[np.arange(hi - lo)[:, None], sel]
                out = bfnet.forward(h_sel, noise, p_max)
                rate = sum_rates_batch(h_sel, out.w, noise)
                better = rate > best_rate
                best_rate = np.where(better, rate, best_rate)
                best_sel = np.where(better[:, None], sel, best_sel)
            rates[lo:hi] = best_rate
            selections[lo:hi] = best_sel
    feasible = np.mean([check_feasibility(selections[i], ds.grid, m)
                        for i in range(n)])
    return EvalMetrics(mean_rate=float(rates.mean()),
                       median_rate=float(np.median(rates)),
                       std_rate=float(rates.std()), feasibility=float(feasible),
                       rates=rates, selections=selections)


def _format_row(values) -> str:
    out = []
    for v in values:
        if v is None:
            out.append("")
        elif isinstance(v, float):
            out.append(f"{v:.9g}")
        else:
            out.append(str(v))
    return ",".join(out)


def train_loop(cfg: TrainConfig, train_ds: ChannelDataset,
               state: TrainState | None = None,
               val_ds: ChannelDataset | None = None, out_dir=None,
               timing: bool = True, policy_cfg: PolicyConfig | None = None,
               bf_cfg: BfConfig | None = None, log_every: int = 0) -> list[dict]:
    """Run epochs x steps_per_epoch batches; returns the training curve rows."""
    if state is None:
        state = init_state(policy_cfg or PolicyConfig(), bf_cfg or BfConfig(),
                           seed=cfg.seed)
    n = len(train_ds)
    curve = []
    for epoch in range(cfg.epochs):
        for _ in range(cfg.steps_per_epoch):
            rng = derived_rng(cfg.seed, DOMAIN_BATCH, state.step)
            idx = rng.choice(n, size=cfg.batch_size, replace=cfg.batch_size > n)
            t0 = time.perf_counter()
            metrics = train_step(train_ds.h[idx], train_ds.noise_w[idx],
                                 train_ds.grid, state, cfg)
            wall_ms = (time.perf_counter() - t0) * 1e3 if timing else 0.0
            eval_reward = None
            if (cfg.eval_every and val_ds is not None
                    and state.step % cfg.eval_every == 0):
                eval_reward = evaluate_policy(state.policy, state.bfnet, val_ds,
                                              cfg.m, cfg.p_max_w).mean_rate
            row = {"step": metrics["step"], "mean_reward": metrics["mean_reward"],
                   "eval_reward": eval_reward, "grad_norm_p": metrics["grad_norm_p"],
                   "grad_norm_w": metrics["grad_norm_w"], "wall_ms": wall_ms}
            curve.append(row)
            if log_every and state.step % log_every == 0:
                ev = f" eval {eval_reward:.4f}" if eval_reward is not None else ""
                print(f"step {state.step}: reward {metrics['mean_reward']:.4f}{ev}")
        if out_dir is not None:
            state.save(f"{out_dir}/ckpt_epoch{epoch + 1:04d}.bin")
    if out_dir is not None:
        state.save(f"{out_dir}/ckpt.bin")
        with open(f"{out_dir}/curve.csv", "w") as fh:
            fh.write(",".join(CURVE_COLUMNS) + "\n")
            for row in curve:
                fh.write(_format_row([row[c] for c in CURVE_COLUMNS]) + "\n")
    return curve
