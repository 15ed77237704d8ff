# Copyright (c) 2025, paired-resolution authors.

import argparse
import time

import torch

from paired_resolution.models.config_resolution import TestConfig
from paired_resolution.modules.anytime_eprocess import calibrate_eprocess
from paired_resolution.modules.resample_sim import calibration_grid, latent_rho_for_bernoulli
from paired_resolution.ops.resampling import binomial_chain_counts, binomial_chain_counts_ref
from paired_resolution.utils.rng import task_generator


parser = argparse.ArgumentParser(description="Calibration benchmarking")
parser.add_argument("--p", type=float, nargs="+", default=[0.5, 0.7, 0.9])
parser.add_argument("--rho-z", type=float, nargs="+", default=[0.0, 0.4, 0.8])
parser.add_argument("--n", type=int, default=500)
parser.add_argument("--trials", type=int, default=1500)
parser.add_argument("--bootstrap-reps", type=int, default=1000)
parser.add_argument("--eprocess-trials", type=int, default=600)
parser.add_argument("--threads", type=int, default=None)
args = parser.parse_args()

repeats = 3
if args.threads:
    torch.set_num_threads(args.threads)

# resampling kernel: chained binomials against index resampling
replicates = 2000
fns = {
    "binomial_chain": lambda: binomial_chain_counts(12032, 787, 684, 12032, replicates, task_generator(0)),
    "index_ref": lambda: binomial_chain_counts_ref(12032, 787, 684, 12032, replicates, task_generator(0)),
}
for name, fn in fns.items():
    fn()
    start = time.time()
    for _ in range(repeats):
        fn()
    print(f"{name}: {(time.time() - start) / repeats * 1000:.0f}ms for {replicates} replicates")

config = TestConfig()
start = time.time()
frame = calibration_grid(args.p, args.rho_z, args.n, args.trials, seed=0, config=config, b_reps=args.bootstrap_reps)
elapsed = time.time() - start
print(frame.to_string(index=False, float_format=lambda x: f"{x:.4g}"))
print(f"calibration grid: {len(args.p) * len(args.rho_z)} cells x {args.trials} trials in {elapsed:.1f}s")

for delta, rho in ((0.024, 0.64), (0.078, 0.54)):
    rho_z = latent_rho_for_bernoulli(0.6 + delta / 2, 0.6 - delta / 2, rho)
    start = time.time()
    result = calibrate_eprocess(0.6, rho_z, delta, trials=args.eprocess_trials, seed=0)
    print(
        f"e-process delta={delta} rho={rho}: type1={result.type1:.3f} reject={result.reject_rate:.3f} "
        f"stop/N*={result.mean_stop_ratio:.2f} ({time.time() - start:.1f}s)"
    )
