"""Scratch calibration for the desk-scale learning experiment (not shipped)."""
import sys
import time

import numpy as np

from mabeam import channel as ch
from mabeam import training as tr
from mabeam.beamforming import BfConfig
from mabeam.config import ExperimentConfig
from mabeam.harness import evaluate_method
from mabeam.positioning import PolicyConfig
from mabeam.solvers import exhaustive_oracle, wmmse_batch
from mabeam.system import sum_rates_batch
from mabeam.rng import DOMAIN_MISC, derived_rng
from mabeam.solvers import random_feasible_positioning

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 50
d_e = int(sys.argv[2]) if len(sys.argv) > 2 else 48
d_h = int(sys.argv[3]) if len(sys.argv) > 3 else 96
lr = float(sys.argv[4]) if len(sys.argv) > 4 else 3e-4
baseline = sys.argv[5] if len(sys.argv) > 5 else "batch-mean"

ccfg = ch.ChannelConfig(points_per_side=4, users=2, paths=16, seed=11, d_min=0.03)
print("generating data...", flush=True)
t0 = time.perf_counter()
train_ds = ch.generate_dataset(ccfg, 20000)
test_ds = ch.generate_dataset(ch.ChannelConfig(points_per_side=4, users=2, paths=16,
                                               seed=99, d_min=0.03), 100)
print(f"  {time.perf_counter()-t0:.1f}s")

pcfg = PolicyConfig(embed_dim=d_e, ctx_dim=d_h, heads=4, enc_layers=3)
bcfg = BfConfig(dim=64, layers=3)
tcfg = tr.TrainConfig(epochs=1, steps_per_epoch=steps, batch_size=128, lr=lr,
                      baseline=baseline, p_max_w=0.1, m=3, seed=7, eval_every=0)
state = tr.init_state(pcfg, bcfg, seed=7)
print(f"params: policy {state.policy.store.n_values()}, bf {state.bfnet.store.n_values()}")

t0 = time.perf_counter()
curve = tr.train_loop(tcfg, train_ds, state=state)
dt = time.perf_counter() - t0
print(f"{steps} steps in {dt:.1f}s -> {dt/steps*1000:.0f} ms/step")
rewards = [c["mean_reward"] for c in curve]
print("reward first 5:", np.round(rewards[:5], 3), "last 5:", np.round(rewards[-5:], 3))

ev = tr.evaluate_policy(state.policy, state.bfnet, test_ds, 3, 0.1)
print(f"greedy policy on test: {ev.mean_rate:.4f} (feas {ev.feasibility})")

# random + wmmse baseline
sel = np.stack([random_feasible_positioning(derived_rng(1, DOMAIN_MISC, i), test_ds.grid, 3)
                for i in range(100)])
h_sel = test_ds.h[np.arange(100)[:, None], sel]
res = wmmse_batch(h_sel, 0.1, test_ds.noise_w)
rw = sum_rates_batch(h_sel, res.w, test_ds.noise_w)
print(f"random+wmmse: {rw.mean():.4f}")

t0 = time.perf_counter()
orc = np.array([exhaustive_oracle(test_ds.h[i], test_ds.grid, 3, 0.1,
                                  test_ds.noise_w[i]).report.sum_rate
                for i in range(100)])
print(f"oracle(wmmse): {orc.mean():.4f} ({time.perf_counter()-t0:.1f}s)")
print(f"policy/oracle: {ev.mean_rate/orc.mean():.4f}  policy-vs-random: "
      f"{ev.mean_rate - rw.mean():+.4f}")
