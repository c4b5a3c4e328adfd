#!/usr/bin/env python3
"""Classic constant-velocity Kalman filtering on synthetic trajectories.

Generates linear-Gaussian sequences, runs the exact-parameter filter, and
compares it against the raw measurements, a grid-searched filter, and an
exponential moving average.
"""

import numpy as np

from lstmkf import (
    build_cv_model,
    ema_filter,
    gen_linear_cv,
    grid_search,
    kf_filter,
    measurement_estimates,
    oracle_error,
)


def mean_euclid(estimates, truth):
    return float(np.linalg.norm(estimates - truth, axis=1).mean())


train = gen_linear_cv(d=2, length=200, n_seq=10, q=0.002, r=0.25, seed=7)
test = gen_linear_cv(d=2, length=200, n_seq=40, q=0.002, r=0.25, seed=7, index_offset=10)
print(f"generated {train.n_sequences} train and {test.n_sequences} test sequences, "
      f"T={test.length}, d={test.dim}")

# The generator's own parameters give the statistically optimal filter.
model = build_cv_model(pose_dim=2, dt=1.0, q_scale=0.002, r_scale=0.25)
beliefs = kf_filter(test.sequences[0].measurements, model)
print(f"state dim {model.state_dim} (pose + velocity), posterior cov trace at "
      f"t=199: {np.trace(beliefs[-1].cov):.4f}")

raw = np.mean([mean_euclid(s.measurements, s.truth) for s in test.sequences])
oracle = oracle_error(test)
print(f"\nraw measurement error   {raw:.4f}")
print(f"exact-parameter filter  {oracle:.4f}")

# Pretend the true noise levels are unknown: pick them on the training set.
gs = grid_search(
    train.train_pairs(),
    "cv",
    q_grid=[0.0002, 0.0006, 0.002, 0.006, 0.02],
    r_grid=[0.05, 0.1, 0.25, 0.5, 1.25],
    dt=1.0,
)
print(f"\ngrid search over {len(gs.table)} (q, r) combinations")
print(f"best: q={gs.best['q_scale']}, r={gs.best['r_scale']}, "
      f"train error {gs.best_error:.4f}")

tuned = build_cv_model(2, 1.0, gs.best["q_scale"], gs.best["r_scale"])
tuned_err = np.mean(
    [
        mean_euclid(measurement_estimates(kf_filter(s.measurements, tuned), tuned), s.truth)
        for s in test.sequences
    ]
)
print(f"gridded filter on test  {tuned_err:.4f}")

ema_gs = grid_search(train.train_pairs(), "ema", window_grid=[1, 2, 3, 5, 8, 13, 21])
window = ema_gs.best["window"]
ema_err = np.mean(
    [mean_euclid(ema_filter(s.measurements, window), s.truth) for s in test.sequences]
)
print(f"EMA(window={window}) on test  {ema_err:.4f}")
print("\nordering: oracle <= gridded < raw, and the EMA sits in between.")
