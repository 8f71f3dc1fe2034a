"""Command-line entry points: gen-data, train, eval, bench, oracle."""

import argparse
import os
import sys

import numpy as np

from .channel import dbm_to_watts, generate_dataset, load_dataset, save_dataset
from .config import ALL_METHODS, config_summary, load_config
from .harness import (MissingCheckpointError, evaluate_method, load_nets,
                      run_experiment, time_method)
from .solvers import exhaustive_oracle
from .training import init_state, train_loop

EVAL_COLUMNS = ("method", "n", "m", "k", "p_max_dbm", "mean_sum_rate",
                "median_sum_rate", "std", "feasibility", "mean_ms")


def _add_config_args(sub):
    sub.add_argument("--config", help="flat key=value config file")
    sub.add_argument("--seed", type=int, help="override the config seed")


def _load_cfg(args, **extra):
    overrides = dict(extra)
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return load_config(args.config, overrides)


def cmd_gen_data(args) -> int:
    overrides = {} if args.count is None else {"count": args.count}
    cfg = _load_cfg(args, **overrides)
    ds = generate_dataset(cfg.channel_config(), cfg.count)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} samples (N={ds.grid.n}, K={ds.users}) to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    train_ds = load_dataset(args.data, d_min=cfg.d_min)
    val_ds = load_dataset(args.val_data, d_min=cfg.d_min) if args.val_data else None
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "config.txt"), "w") as fh:
        fh.write(config_summary(cfg))
    state = init_state(cfg.policy_config(), cfg.bf_config(), seed=cfg.seed)
    tcfg = cfg.train_config()
    if args.steps is not None:
        tcfg.epochs, tcfg.steps_per_epoch = 1, args.steps
    curve = train_loop(tcfg, train_ds, state=state, val_ds=val_ds,
                       out_dir=args.out, timing=not args.no_timing,
                       log_every=args.log_every)
    print(f"trained {len(curve)} steps; final mean reward "
          f"{curve[-1]['mean_reward']:.4f}; checkpoint at {args.out}/ckpt.bin")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    ds = load_dataset(args.data, d_min=cfg.d_min)
    nets = None
    if args.method == "proposed":
        if args.checkpoint is None:
            raise MissingCheckpointError(
                "eval of 'proposed' needs --checkpoint; run 'mabeam train' first")
        nets = load_nets(cfg, args.checkpoint)
    p_dbm = cfg.p_max_dbm[0]
    rates, sels = evaluate_method(args.method, ds, cfg.m, p_dbm, cfg, nets)
    from .system import check_feasibility
    feas = float(np.mean([check_feasibility(sels[i], ds.grid, cfg.m)
                          for i in range(len(ds))]))
    mean_ms = 0.0
    if not args.no_timing:
        mean_ms = time_method(args.method, ds, cfg.m, p_dbm, cfg, nets,
                              samples=cfg.timing_samples)
    with open(args.out, "w") as fh:
        fh.write(",".join(EVAL_COLUMNS) + "\n")
        fh.write(f"{args.method},{ds.grid.n},{cfg.m},{ds.users},{p_dbm:.9g},"
                 f"{rates.mean():.9g},{np.median(rates):.9g},{rates.std():.9g},"
                 f"{feas:.9g},{mean_ms:.9g}\n")
    print(f"{args.method}: mean sum rate {rates.mean():.4f} bits/s/Hz "
          f"(feasibility {feas:.3f}) -> {args.out}")
    return 0


def cmd_bench(args) -> int:
    cfg = _load_cfg(args)
    ds = load_dataset(args.data, d_min=cfg.d_min) if args.data else None
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "config.txt"), "w") as fh:
        fh.write(config_summary(cfg))
    rows = run_experiment(cfg, out_dir=args.out, checkpoint=args.checkpoint,
                          dataset=ds, timing=not args.no_timing)
    print(f"wrote {len(rows)} result rows to {args.out}/results.csv")
    return 0


def cmd_oracle(args) -> int:
    cfg = _load_cfg(args)
    ds = load_dataset(args.data, d_min=cfg.d_min)
    limit = len(ds) if args.limit is None else min(args.limit, len(ds))
    p_max = dbm_to_watts(cfg.p_max_dbm[0])
    with open(args.out, "w") as fh:
        fh.write("sample,sum_rate,selection\n")
        for i in range(limit):
            res = exhaustive_oracle(ds.h[i], ds.grid, cfg.m, p_max, ds.noise_w[i],
                                    budget=cfg.oracle_budget,
                                    wmmse_cfg=cfg.wmmse_config())
            sel = " ".join(str(s) for s in res.selection)
            fh.write(f"{i},{res.report.sum_rate:.9g},{sel}\n")
    print(f"solved {limit} samples exhaustively -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mabeam",
        description="antenna positioning + beamforming: data, training, "
                    "baselines and benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a channel dataset file")
    _add_config_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, help="override the config sample count")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train the positioning + beamforming nets")
    _add_config_args(p)
    p.add_argument("--data", required=True, help="training dataset file")
    p.add_argument("--val-data", help="held-out dataset for periodic greedy eval")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--steps", type=int, help="override: train exactly this many steps")
    p.add_argument("--no-timing", action="store_true",
                   help="write wall-clock columns as 0 for reproducible output")
    p.add_argument("--log-every", type=int, default=0)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate one method on a dataset")
    _add_config_args(p)
    p.add_argument("--data", required=True)
    p.add_argument("--method", required=True, choices=ALL_METHODS)
    p.add_argument("--checkpoint", help="trained checkpoint (for 'proposed')")
    p.add_argument("--out", required=True, help="metrics CSV path")
    p.add_argument("--no-timing", action="store_true")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("bench", help="run the configured method/sweep comparison")
    _add_config_args(p)
    p.add_argument("--data", help="dataset file (otherwise generated from config)")
    p.add_argument("--checkpoint", help="trained checkpoint (for 'proposed')")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-timing", action="store_true")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("oracle", help="exhaustive positioning oracle on a dataset")
    _add_config_args(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--limit", type=int, help="solve only the first few samples")
    p.set_defaults(fn=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (OSError, ValueError, RuntimeError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
