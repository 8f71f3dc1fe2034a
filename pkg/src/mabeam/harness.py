"""Benchmark runner: paired method comparisons over (N, M, P_max) sweeps.

Every method at a sweep point consumes the identical channel samples, so rate
comparisons are paired.  Timing is measured separately in the online regime:
one sample at a time through each method's full positioning + beamforming
pipeline, since per-sample latency is what distinguishes the approaches.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import plots
from .autodiff import inference_mode, load_checkpoint
from .beamforming import BeamformingNet
from .channel import ChannelDataset, dbm_to_watts, generate_dataset
from .config import ExperimentConfig
from .positioning import PositioningPolicy
from .rng import DOMAIN_MISC, derived_rng
from .solvers import (exhaustive_oracle, random_feasible_positioning,
                      strongest_positioning, wmmse, wmmse_batch, zero_forcing)
from .system import check_feasibility, sum_rates_batch
from .training import evaluate_policy

RESULT_COLUMNS = ("method", "n", "m", "k", "p_max_dbm", "mean_sum_rate", "std",
                  "feasibility", "mean_ms")


@dataclass
class ResultRow:
    method: str
    n: int
    m: int
    k: int
    p_max_dbm: float
    mean_sum_rate: float
    std: float
    feasibility: float
    mean_ms: float

    def as_csv(self) -> str:
        return (f"{self.method},{self.n},{self.m},{self.k},"
                f"{self.p_max_dbm:.9g},{self.mean_sum_rate:.9g},{self.std:.9g},"
                f"{self.feasibility:.9g},{self.mean_ms:.9g}")


class MissingCheckpointError(RuntimeError):
    pass


def load_nets(cfg: ExperimentConfig, checkpoint) -> tuple[PositioningPolicy,
                                                          BeamformingNet]:
    policy = PositioningPolicy(cfg.policy_config(), seed=cfg.seed)
    bfnet = BeamformingNet(cfg.bf_config(), seed=cfg.seed)
    if checkpoint is not None:
        stores = load_checkpoint(checkpoint)
        policy.store.load_from(stores["policy"])
        bfnet.store.load_from(stores["beamforming"])
    return policy, bfnet


def method_selections(method: str, ds: ChannelDataset, m: int,
                      cfg: ExperimentConfig, nets=None) -> np.ndarray:
    """(count, m) selections; independent of the power budget for all methods."""
    n_samples = len(ds)
    if method == "proposed":
        policy, _ = nets
        with inference_mode():
            return policy.rollout_batch(ds.h, ds.grid, m, mode="greedy").selections
    if method in ("strongest+wmmse", "strongest+zf"):
        return np.stack([strongest_positioning(ds.h[i], ds.grid, m)
                         for i in range(n_samples)])
    if method == "random+wmmse":
        return np.stack([
            random_feasible_positioning(derived_rng(cfg.seed, DOMAIN_MISC, i),
                                        ds.grid, m)
            for i in range(n_samples)])
    raise ValueError(f"method '{method}' has no positioning stage")


def evaluate_method(method: str, ds: ChannelDataset, m: int, p_max_dbm: float,
                    cfg: ExperimentConfig, nets=None):
    """Per-sample sum rates and selections for one method at one sweep point."""
    p_max = dbm_to_watts(p_max_dbm)
    if method == "oracle":
        rates = np.empty(len(ds))
        selections = np.empty((len(ds), m), dtype=np.int64)
        for i in range(len(ds)):
            res = exhaustive_oracle(ds.h[i], ds.grid, m, p_max, ds.noise_w[i],
                                    budget=cfg.oracle_budget,
                                    wmmse_cfg=cfg.wmmse_config())
            rates[i] = res.report.sum_rate
            selections[i] = res.selection
        return rates, selections
    if method == "proposed":
        policy, bfnet = nets
        ev = evaluate_policy(policy, bfnet, ds, m, p_max)
        return ev.rates, ev.selections
    selections = method_selections(method, ds, m, cfg)
    h_sel = ds.h[np.arange(len(ds))[:, None], selections]
    if method.endswith("+wmmse"):
        res = wmmse_batch(h_sel, p_max, ds.noise_w, cfg.wmmse_config())
        w = res.w
    elif method.endswith("+zf"):
        w = np.stack([zero_forcing(h_sel[i], p_max) for i in range(len(ds))])
    else:
        raise ValueError(f"unknown method '{method}'")
    return sum_rates_batch(h_sel, w, ds.noise_w), selections


def time_method(method: str, ds: ChannelDataset, m: int, p_max_dbm: float,
                cfg: ExperimentConfig, nets=None, samples: int = 100) -> float:
    """Mean per-sample wall-clock (ms), processing one sample at a time."""
    p_max = dbm_to_watts(p_max_dbm)
    n = min(samples, len(ds))
    t0 = time.perf_counter()
    for i in range(n):
        h = ds.h[i]
        noise = ds.noise_w[i]
        if method == "proposed":
            policy, bfnet = nets
            with inference_mode():
                sel = policy.rollout_batch(h[None], ds.grid, m,
                                           mode="greedy").selections[0]
                bfnet.forward(h[sel][None], noise[None], p_max)
            continue
        if method == "oracle":
            exhaustive_oracle(h, ds.grid, m, p_max, noise, budget=cfg.oracle_budget,
                              wmmse_cfg=cfg.wmmse_config())
            continue
        if method == "random+wmmse":
            sel = random_feasible_positioning(derived_rng(cfg.seed, DOMAIN_MISC, i),
                                              ds.grid, m)
        else:
            sel = strongest_positioning(h, ds.grid, m)
        if method.endswith("+wmmse"):
            wmmse(h[sel], p_max, noise, cfg.wmmse_config())
        else:
            zero_forcing(h[sel], p_max)
    return (time.perf_counter() - t0) / n * 1e3


def run_experiment(cfg: ExperimentConfig, out_dir=None, checkpoint=None,
                   dataset: ChannelDataset | None = None, timing: bool = True,
                   log=print) -> list[ResultRow]:
    """Evaluate every configured method over the (N, M, P_max) sweep grid."""
    nets = None
    if "proposed" in cfg.methods:
        if checkpoint is None:
            raise MissingCheckpointError(
                "method 'proposed' needs a checkpoint; run 'mabeam train' first "
                "and pass --checkpoint")
        nets = load_nets(cfg, checkpoint)

    pps_list = cfg.sweep_points_per_side()
    rows: list[ResultRow] = []
    rate_points = {"p_max_dbm": [], "m": [], "n": []}
    timings: list[tuple[str, float]] = []
    first_point = True
    for pps in pps_list:
        if dataset is not None and len(pps_list) == 1:
            ds = dataset
        else:
            ds = generate_dataset(cfg.channel_config(points_per_side=pps), cfg.count)
        for m in cfg.sweep_m():
            for p_dbm in cfg.p_max_dbm:
                for method in cfg.methods:
                    rates, sels = evaluate_method(method, ds, m, p_dbm, cfg, nets)
                    feasibility = float(np.mean([
                        check_feasibility(sels[i], ds.grid, m)
                        for i in range(len(ds))]))
                    mean_ms = 0.0
                    if timing and first_point:
                        mean_ms = time_method(method, ds, m, p_dbm, cfg, nets,
                                              samples=cfg.timing_samples)
                        timings.append((method, mean_ms))
                    row = ResultRow(method=method, n=ds.grid.n, m=m, k=ds.users,
                                    p_max_dbm=p_dbm,
                                    mean_sum_rate=float(rates.mean()),
                                    std=float(rates.std()),
                                    feasibility=feasibility, mean_ms=mean_ms)
                    rows.append(row)
                    if log:
                        log(f"  {method:>16s} N={row.n} M={m} P={p_dbm:g}dBm: "
                            f"{row.mean_sum_rate:.4f} bits/s/Hz")
                    if pps == pps_list[0] and m == cfg.sweep_m()[0]:
                        rate_points["p_max_dbm"].append(
                            (p_dbm, method, row.mean_sum_rate))
                    if p_dbm == cfg.p_max_dbm[0] and pps == pps_list[0]:
                        rate_points["m"].append((m, method, row.mean_sum_rate))
                    if p_dbm == cfg.p_max_dbm[0] and m == cfg.sweep_m()[0]:
                        rate_points["n"].append((ds.grid.n, method,
                                                 row.mean_sum_rate))
                first_point = False

    if out_dir is not None:
        write_results(rows, f"{out_dir}/results.csv")
        axes = {"p_max_dbm": len(cfg.p_max_dbm), "m": len(cfg.sweep_m()),
                "n": len(pps_list)}
        for axis, count in axes.items():
            if count > 1:
                plots.write_plot_data(rate_points[axis],
                                      f"{out_dir}/rate_vs_{axis}.csv")
                plots.render_rate_plot(rate_points[axis], axis,
                                       f"{out_dir}/rate_vs_{axis}.png")
        if timings:
            with open(f"{out_dir}/timing.csv", "w") as fh:
                fh.write("method,mean_ms\n")
                for name, ms in timings:
                    fh.write(f"{name},{ms:.9g}\n")
            plots.render_timing_bar(timings, f"{out_dir}/timing.png")
    return rows


def write_results(rows: list[ResultRow], path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(RESULT_COLUMNS) + "\n")
        for row in rows:
            fh.write(row.as_csv() + "\n")
