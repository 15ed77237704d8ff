# Copyright (c) 2025, paired-resolution authors.
"""Resampling tests, bootstrap intervals on N*, prospective power and the
synthetic generators used to calibrate them.

Binary pairs are resampled through their discordant counts (see
`paired_resolution.ops.resampling`); graded pairs by item indices. Every trial or
replicate draws from its own generator derived from (seed, index).
"""

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import pandas as pd
import torch
from scipy import optimize
from scipy.stats import beta as beta_dist

from paired_resolution.errors import DataValidationError
from paired_resolution.models.config_resolution import TestConfig
from paired_resolution.modules.binary_tests import mcnemar_pvalues
from paired_resolution.modules.paired_core import (
    admissible_rho_bounds,
    bernoulli_diff_variance,
    power_at,
    required_n,
    summarize_pair,
)
from paired_resolution.ops.distributions import bivariate_normal_orthant, norm_ppf, z_two_sided
from paired_resolution.ops.resampling import (
    binomial_chain_counts,
    bootstrap_means,
    latent_bernoulli_pairs,
    percentile_interval,
    resampled_sums,
)
from paired_resolution.utils.rng import task_generator

logger = logging.getLogger(__name__)

VARIANTS = ("chi2", "exact", "midp", "cc", "bootstrap")


@dataclass(frozen=True)
class GeneratorSpec:
    p: float
    delta: float
    rho_z: float
    n: int
    seed: int = 42

    def __post_init__(self):
        if not (0.0 < min(self.p_a, self.p_b) and max(self.p_a, self.p_b) < 1.0):
            raise DataValidationError(f"p +- delta/2 must lie in (0, 1), got p={self.p}, delta={self.delta}")
        if not -1.0 <= self.rho_z <= 1.0:
            raise DataValidationError(f"rho_z must lie in [-1, 1], got {self.rho_z}")
        if self.n < 1:
            raise DataValidationError(f"n must be >= 1, got {self.n}")

    @property
    def p_a(self):
        return self.p + self.delta / 2.0

    @property
    def p_b(self):
        return self.p - self.delta / 2.0


class CalibrationCell(NamedTuple):
    variant: str
    p: float
    rho_z: float
    n: int
    delta: float
    type1: float
    power: float
    mcse_type1: float
    mcse_power: float


class BootstrapTest(NamedTuple):
    ci_lo: float
    ci_hi: float
    reject: bool
    p_value: float


def latent_cell_probabilities(p_a, p_b, rho_z):
    """(p11, p10, p01, p00) of Bernoulli pairs thresholded from a Gaussian copula."""
    p11 = bivariate_normal_orthant(norm_ppf(p_a), norm_ppf(p_b), rho_z)
    p11 = min(max(p11, max(0.0, p_a + p_b - 1.0)), min(p_a, p_b))
    return p11, p_a - p11, p_b - p11, 1.0 - p_a - p_b + p11


def bernoulli_rho_from_latent(p_a, p_b, rho_z):
    p11, _, _, _ = latent_cell_probabilities(p_a, p_b, rho_z)
    return (p11 - p_a * p_b) / math.sqrt(p_a * (1 - p_a) * p_b * (1 - p_b))


def latent_rho_for_bernoulli(p_a, p_b, rho):
    """Latent correlation whose thresholded pair has Bernoulli correlation rho."""
    lo, hi = admissible_rho_bounds(p_a, p_b)
    if not lo <= rho <= hi:
        raise DataValidationError(f"rho={rho} is outside the admissible interval [{lo:.4f}, {hi:.4f}]")
    if rho == 0.0:
        return 0.0
    return optimize.brentq(lambda r: bernoulli_rho_from_latent(p_a, p_b, r) - rho, -1.0, 1.0, xtol=1e-12)


def gen_paired_bernoulli(spec):
    a, b = latent_bernoulli_pairs(spec.p_a, spec.p_b, spec.rho_z, (spec.n,), task_generator(spec.seed, 0))
    return a.numpy(), b.numpy()


def gen_paired_graded(alpha_shape, beta_shape, rho_z, delta_shift, n, seed):
    """Gaussian-copula pair with Beta(alpha_shape, beta_shape) marginals.

    Model A's scores are shifted up by delta_shift and clamped to [0, 1].
    """
    if alpha_shape <= 0.0 or beta_shape <= 0.0:
        raise DataValidationError(f"Beta shapes must be positive, got ({alpha_shape}, {beta_shape})")
    if not -1.0 <= rho_z <= 1.0:
        raise DataValidationError(f"rho_z must lie in [-1, 1], got {rho_z}")
    z = torch.randn(n, 2, generator=task_generator(seed, 0), dtype=torch.float64)
    z_a = z[:, 0]
    z_b = rho_z * z_a + math.sqrt(1.0 - rho_z**2) * z[:, 1]
    u = torch.special.ndtr(torch.stack([z_a, z_b], dim=-1)).numpy()
    x = beta_dist.ppf(u, alpha_shape, beta_shape)
    return np.clip(x[:, 0] + delta_shift, 0.0, 1.0), x[:, 1]


def gen_clustered_paired(k, m, tau, seed, mean=0.0):
    """Gaussian paired differences D = mean + u_j + e_ij with exchangeable
    within-cluster correlation tau. Returns (d, labels)."""
    if not 0.0 <= tau < 1.0:
        raise DataValidationError(f"tau must lie in [0, 1), got {tau}")
    g = task_generator(seed, 0)
    u = math.sqrt(tau) * torch.randn(k, 1, generator=g, dtype=torch.float64)
    e = math.sqrt(1.0 - tau) * torch.randn(k, m, generator=g, dtype=torch.float64)
    d = (mean + u + e).flatten().numpy()
    labels = [f"c{j}" for j in range(k) for _ in range(m)]
    return d, labels


def _pair_arrays(scores_a, scores_b):
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    summary = summarize_pair(a, b)
    return a, b, summary


def _stream_generator(seed, stream):
    return task_generator(seed, *(stream if isinstance(stream, tuple) else (stream,)))


def _percentile_test(means, alpha):
    lo, hi = percentile_interval(means, alpha / 2.0, 1.0 - alpha / 2.0)
    below = float((means <= 0.0).to(torch.float64).mean())
    above = float((means >= 0.0).to(torch.float64).mean())
    p_value = min(1.0, 2.0 * min(below, above))
    return BootstrapTest(lo, hi, not lo <= 0.0 <= hi, p_value)


def bootstrap_test_from_summary(summary, alpha, b_reps, seed, d=None, stream=0):
    """Percentile bootstrap test of a pair given its summary.

    Binary pairs need only the discordant counts; graded pairs need the
    per-item differences `d`.
    `stream` (an int or a tuple of ints) selects the random stream under `seed`.
    """
    if b_reps < 100:
        raise DataValidationError(f"b_reps must be >= 100, got {b_reps}")
    g = _stream_generator(seed, stream)
    if summary.binary:
        b_star, c_star = binomial_chain_counts(summary.n, summary.b, summary.c, summary.n, b_reps, g)
        means = (b_star - c_star) / summary.n
    else:
        assert d is not None, "graded pairs are resampled item by item"
        means = bootstrap_means(torch.as_tensor(np.asarray(d, dtype=np.float64)), b_reps, g)
    return _percentile_test(means, alpha)


def paired_bootstrap_test(scores_a, scores_b, alpha, b_reps, seed):
    """Percentile bootstrap CI on mean(D); rejects iff 0 lies outside it."""
    a, b, summary = _pair_arrays(scores_a, scores_b)
    return bootstrap_test_from_summary(summary, alpha, b_reps, seed, d=a - b)


def _nstar_from_moments(mean, var, config):
    n_star = config.k_const * var / (mean * mean).clamp_min(1e-300)
    return torch.where(mean == 0.0, torch.full_like(n_star, math.inf), torch.ceil(n_star - 1e-9 * n_star))


def nstar_ci_from_summary(summary, b_reps, config, seed, d=None, stream=0):
    if b_reps < 100:
        raise DataValidationError(f"b_reps must be >= 100, got {b_reps}")
    g = _stream_generator(seed, stream)
    n = summary.n
    if summary.binary:
        b_star, c_star = binomial_chain_counts(n, summary.b, summary.c, n, b_reps, g)
        mean = (b_star - c_star) / n
        var = (b_star + c_star) / n - mean * mean
    else:
        assert d is not None, "graded pairs are resampled item by item"
        sums, sumsq = resampled_sums(torch.as_tensor(np.asarray(d, dtype=np.float64)), n, b_reps, g)
        mean = sums / n
        var = (sumsq / n - mean * mean).clamp_min(0.0)
    return percentile_interval(_nstar_from_moments(mean, var, config), 0.05, 0.95)


def bootstrap_nstar_ci(scores_a, scores_b, b_reps, config, seed):
    """5th-95th percentile interval of N* over item resamples.

    Resamples with zero gap map to math.inf, which sorts above every finite N*.
    """
    a, b, summary = _pair_arrays(scores_a, scores_b)
    return nstar_ci_from_summary(summary, b_reps, config, seed, d=a - b)


def bootstrap_power(scores_a, scores_b, n_target, alpha, trials, seed, test="auto", b_reps=200):
    """Fraction of size-n_target with-replacement resamples on which `test` rejects.

    test: "chi2" (McNemar, binary only), "wald" (z test on mean(D)),
    "bootstrap" (percentile bootstrap with b_reps inner replicates) or "auto"
    (chi2 for binary pairs, wald otherwise).
    """
    if n_target < 1:
        raise DataValidationError(f"n_target must be >= 1, got {n_target}")
    if trials < 100:
        raise DataValidationError(f"trials must be >= 100, got {trials}")
    a, b, summary = _pair_arrays(scores_a, scores_b)
    if test == "auto":
        test = "chi2" if summary.binary else "wald"
    n_target = int(n_target)
    g = task_generator(seed, n_target)
    z = z_two_sided(alpha)
    if test == "chi2":
        if not summary.binary:
            raise DataValidationError("the McNemar power test needs binary scores")
        b_star, c_star = binomial_chain_counts(n_target, summary.b, summary.c, summary.n, trials, g)
        disc = b_star + c_star
        stat = torch.where(disc > 0, (b_star - c_star) ** 2 / disc.clamp_min(1.0), torch.zeros_like(disc))
        return float((stat > z * z).to(torch.float64).mean())
    d = torch.as_tensor(a - b)
    if test == "wald":
        sums, sumsq = resampled_sums(d, n_target, trials, g)
        mean = sums / n_target
        sd = (sumsq / n_target - mean * mean).clamp_min(0.0).sqrt()
        t = torch.where(sd > 0, mean * math.sqrt(n_target) / sd.clamp_min(1e-300), torch.zeros_like(sd))
        return float((t.abs() > z).to(torch.float64).mean())
    if test == "bootstrap":
        rejections = 0
        for t in range(trials):
            gt = task_generator(seed, n_target, t)
            sample = d[torch.randint(d.shape[0], (n_target,), generator=gt)]
            rejections += _percentile_test(bootstrap_means(sample, b_reps, gt), alpha).reject
        return rejections / trials
    raise DataValidationError(f"Invalid power test {test!r}")


def bootstrap_power_curve(scores_a, scores_b, n_grid, alpha, trials, seed, test="auto", b_reps=200):
    rows = []
    for n in n_grid:
        power = bootstrap_power(scores_a, scores_b, n, alpha, trials, seed, test=test, b_reps=b_reps)
        rows.append(dict(n=int(n), power=power, mcse=math.sqrt(power * (1.0 - power) / trials)))
    return pd.DataFrame(rows, columns=["n", "power", "mcse"])


def crossing_n(n_grid, powers, target=0.8):
    """First n at which the power curve reaches target, by linear interpolation."""
    n_grid = np.asarray(n_grid, dtype=np.float64)
    powers = np.asarray(powers, dtype=np.float64)
    above = np.flatnonzero(powers >= target)
    if above.size == 0:
        return math.inf
    j = above[0]
    if j == 0:
        return float(n_grid[0])
    n0, n1, p0, p1 = n_grid[j - 1], n_grid[j], powers[j - 1], powers[j]
    return float(n0 + (target - p0) * (n1 - n0) / (p1 - p0))


def _sigma_d(p, delta, rho, latent):
    p_a, p_b = p + delta / 2.0, p - delta / 2.0
    r = bernoulli_rho_from_latent(p_a, p_b, rho) if latent else rho
    lo, hi = admissible_rho_bounds(p_a, p_b)
    return math.sqrt(bernoulli_diff_variance(p_a, p_b, min(max(r, lo), hi)))


def tune_delta_for_power(p, rho, n, target, config, latent=False):
    """Gap delta at which the exact Wald power at n items equals target.

    The marginals move with delta as p +- delta/2, so sigma_D depends on delta.
    `rho` is the Bernoulli correlation, or the latent copula correlation when
    latent=True.
    """
    alpha = config.design_alpha
    if target <= alpha:
        return 0.0
    if target >= 1.0:
        raise DataValidationError(f"target power must lie below 1, got {target}")
    delta_max = 2.0 * min(p, 1.0 - p) * (1.0 - 1e-9)
    if not latent:
        # keep rho admissible along the whole search interval
        while delta_max > 1e-12:
            lo, hi = admissible_rho_bounds(p + delta_max / 2.0, p - delta_max / 2.0)
            if lo <= rho <= hi:
                break
            delta_max *= 0.95

    def gap(delta):
        return power_at(delta, _sigma_d(p, delta, rho, latent), n, alpha) - target

    if delta_max <= 1e-12 or gap(delta_max) < 0.0:
        raise DataValidationError(f"no admissible gap reaches power {target} at n={n}")
    return optimize.brentq(gap, 0.0, delta_max, xtol=1e-12)


def _simulate_counts(p_a, p_b, rho_z, n, generator):
    a, b = latent_bernoulli_pairs(p_a, p_b, rho_z, (n,), generator)
    return int(((a == 1) & (b == 0)).sum()), int(((a == 0) & (b == 1)).sum())


def _calibrate_arm(p_a, p_b, rho_z, n, trials, seed, cell, arm, alpha, b_reps):
    bs, cs, boot = [], [], []
    for t in range(trials):
        g = task_generator(seed, cell, arm, t)
        b, c = _simulate_counts(p_a, p_b, rho_z, n, g)
        b_star, c_star = binomial_chain_counts(n, b, c, n, b_reps, g)
        boot.append(_percentile_test((b_star - c_star) / n, alpha).reject)
        bs.append(b)
        cs.append(c)
    pvals = mcnemar_pvalues(np.asarray(bs), np.asarray(cs))
    rates = {name: float(np.mean(pvals[name] <= alpha)) for name in ("chi2", "exact", "midp", "cc")}
    rates["bootstrap"] = float(np.mean(boot))
    return rates


def calibration_grid(p_set, rho_z_set, n, trials, seed, config=None, b_reps=1000):
    """Empirical type-I error and power of every paired-binary test variant.

    Each (p, rho_z) cell is simulated at delta = 0 and at the delta whose exact
    Wald power at n is the configured target.
    """
    config = config or TestConfig()
    rows = []
    for cell, (p, rho_z) in enumerate((p, r) for p in p_set for r in rho_z_set):
        delta = tune_delta_for_power(p, rho_z, n, config.power, config, latent=True)
        logger.info("calibration cell p=%.2f rho_z=%.2f: delta=%.4f", p, rho_z, delta)
        null = _calibrate_arm(p, p, rho_z, n, trials, seed, cell, 0, config.alpha, b_reps)
        alt = _calibrate_arm(p + delta / 2.0, p - delta / 2.0, rho_z, n, trials, seed, cell, 1, config.alpha, b_reps)
        for variant in VARIANTS:
            rows.append(
                CalibrationCell(
                    variant=variant,
                    p=p,
                    rho_z=rho_z,
                    n=n,
                    delta=delta,
                    type1=null[variant],
                    power=alt[variant],
                    mcse_type1=math.sqrt(null[variant] * (1.0 - null[variant]) / trials),
                    mcse_power=math.sqrt(alt[variant] * (1.0 - alt[variant]) / trials),
                )
            )
    return pd.DataFrame(rows, columns=CalibrationCell._fields)


def prospective_power(scores_a, scores_b, config, trials=1000, seed=42, factors=(0.8, 1.0, 1.2)):
    """McNemar power when the pair is re-run at multiples of its own N*."""
    summary = summarize_pair(scores_a, scores_b)
    n_star = required_n(summary.delta_hat, summary.sigma_d_hat, config)
    rows = []
    for f in factors:
        n = max(1, int(round(f * n_star)))
        power = bootstrap_power(scores_a, scores_b, n, config.alpha, trials, seed)
        rows.append(dict(factor=f, n=n, power=power, mcse=math.sqrt(power * (1.0 - power) / trials)))
    return n_star, pd.DataFrame(rows, columns=["factor", "n", "power", "mcse"])
