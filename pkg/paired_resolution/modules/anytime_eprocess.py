# Copyright (c) 2025, paired-resolution authors.
"""Mixture e-process over the signs of discordant pairs.

Under the null of equal accuracies the sign of each discordant pair is a fair coin.
Mixing the likelihood ratio of Bernoulli(theta) against Bernoulli(1/2) over a
prior nu on theta gives

    e_n = sum_j w_j (2 theta_j)^{b_n} (2 (1 - theta_j))^{c_n},

a nonnegative martingale with e_0 = 1, so rejecting at the first n with
e_n >= 1/alpha has type-I error at most alpha at any stopping time. Concordant
items leave the process unchanged.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np
import pandas as pd
import torch
from scipy import optimize, special
from scipy.stats import beta as beta_dist

from paired_resolution.errors import DataValidationError
from paired_resolution.models.config_resolution import TestConfig
from paired_resolution.modules.binary_tests import required_n_discordance_real
from paired_resolution.modules.resample_sim import GeneratorSpec, latent_cell_probabilities
from paired_resolution.ops.distributions import norm_ppf, z_two_sided
from paired_resolution.ops.resampling import first_crossing, latent_bernoulli_pairs
from paired_resolution.utils.rng import task_generator

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MixtureGrid:
    theta: np.ndarray
    log_weights: np.ndarray

    @property
    def symmetric(self):
        order = np.argsort(self.theta)
        theta, logw = self.theta[order], self.log_weights[order]
        return bool(np.allclose(theta, 1.0 - theta[::-1], atol=1e-12) and np.allclose(logw, logw[::-1], atol=1e-12))


def make_grid(grid_spec="uniform"):
    """Mixture support and log weights.

    "uniform": 0.01, ..., 0.99 without 0.5, equal weights; "two-point": {0.4, 0.6};
    "beta": Beta(2, 2) discretized at 200 equal-mass points. A sequence of support
    points gets equal weights; a (points, weights) tuple is used as given.
    """
    if isinstance(grid_spec, MixtureGrid):
        return grid_spec
    if grid_spec == "uniform":
        theta = np.array([j / 100.0 for j in range(1, 100) if j != 50])
        weights = None
    elif grid_spec == "two-point":
        theta = np.array([0.4, 0.6])
        weights = None
    elif grid_spec == "beta":
        theta = beta_dist.ppf((np.arange(200) + 0.5) / 200.0, 2.0, 2.0)
        weights = None
    elif isinstance(grid_spec, tuple) and len(grid_spec) == 2:
        theta = np.asarray(grid_spec[0], dtype=np.float64)
        weights = np.asarray(grid_spec[1], dtype=np.float64)
    elif isinstance(grid_spec, str):
        raise DataValidationError(f"Invalid mixture grid {grid_spec!r}")
    else:
        theta = np.asarray(grid_spec, dtype=np.float64)
        weights = None
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 1 or theta.size == 0:
        raise DataValidationError("mixture grid must be a non-empty list of support points")
    if np.any(theta <= 0.0) or np.any(theta >= 1.0) or np.any(theta == 0.5):
        raise DataValidationError("mixture support points must lie in (0, 1) and differ from 1/2")
    if weights is None:
        weights = np.full(theta.size, 1.0 / theta.size)
    if weights.shape != theta.shape or np.any(weights <= 0.0):
        raise DataValidationError("mixture weights must be positive, one per support point")
    weights = weights / weights.sum()
    return MixtureGrid(theta=theta, log_weights=np.log(weights))


def log_e_value(b, c, grid):
    grid = make_grid(grid)
    terms = grid.log_weights + b * np.log(2.0 * grid.theta) + c * np.log(2.0 * (1.0 - grid.theta))
    return float(special.logsumexp(terms))


def _log_e_t(b, c, grid):
    """log e for tensors of counts; broadcasts over the leading shape."""
    theta = torch.as_tensor(grid.theta, dtype=torch.float64)
    logw = torch.as_tensor(grid.log_weights, dtype=torch.float64)
    terms = (
        logw
        + b.to(torch.float64)[..., None] * torch.log(2.0 * theta)
        + c.to(torch.float64)[..., None] * torch.log(2.0 * (1.0 - theta))
    )
    return torch.logsumexp(terms, dim=-1)


@dataclass(frozen=True)
class EProcessState:
    grid: MixtureGrid
    b_n: int = 0
    c_n: int = 0
    log_e: float = 0.0

    @property
    def theta_grid(self):
        return self.grid.theta

    @property
    def log_weights(self):
        return self.grid.log_weights

    @property
    def e_value(self):
        return math.exp(self.log_e)


def eprocess_new(grid_spec="uniform"):
    return EProcessState(grid=make_grid(grid_spec))


def _sign(sign):
    if sign in (1, "A", "a", "+"):
        return 1
    if sign in (-1, "B", "b", "-"):
        return -1
    raise DataValidationError(f"a discordant sign must be A (+1) or B (-1), got {sign!r}")


def eprocess_update(state, sign):
    if _sign(sign) == 1:
        b_n, c_n = state.b_n + 1, state.c_n
    else:
        b_n, c_n = state.b_n, state.c_n + 1
    return replace(state, b_n=b_n, c_n=c_n, log_e=log_e_value(b_n, c_n, state.grid))


class EProcessTest(NamedTuple):
    rejected: bool
    stopping_index: Optional[int]  # 1-based position in the sign sequence
    trajectory: np.ndarray  # log e after each sign


def eprocess_test(sign_sequence, alpha, grid_spec="uniform"):
    """Scan signs in order and reject at the first e_n >= 1/alpha.

    The trajectory covers the whole sequence.
    """
    if not 0.0 < alpha < 1.0:
        raise DataValidationError(f"alpha must lie in (0, 1), got {alpha}")
    grid = make_grid(grid_spec)
    signs = torch.tensor([_sign(s) for s in sign_sequence], dtype=torch.int64)
    if signs.numel() == 0:
        return EProcessTest(False, None, np.zeros(0))
    b = torch.cumsum(signs == 1, dim=0)
    c = torch.cumsum(signs == -1, dim=0)
    trajectory = _log_e_t(b, c, grid)
    first = int(first_crossing(trajectory >= math.log(1.0 / alpha)).item())
    return EProcessTest(first > 0, first or None, trajectory.numpy())


def signs_from_items(scores_a, scores_b):
    """Discordant signs of a binary pair in item order, and their item positions (1-based)."""
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape:
        raise DataValidationError("score sequences differ in length")
    discordant = np.flatnonzero(a != b)
    return np.where(a[discordant] > b[discordant], 1, -1).tolist(), (discordant + 1).tolist()


def trajectory_frame(trajectory, alpha):
    return pd.DataFrame(
        {
            "n": np.arange(1, len(trajectory) + 1),
            "log_e": np.asarray(trajectory),
            "threshold": math.log(1.0 / alpha),
        }
    )


def stopping_boundary(d_max, alpha, grid_spec="uniform"):
    """Smallest winning count b*(d) >= d/2 at which d discordant pairs cross 1/alpha.

    With a symmetric mixture log e(b, d - b) is convex in b and symmetric about d/2,
    so the process has crossed at d iff max(b, c) >= b*(d). Entries are d + 1 when
    no split of d crosses.
    """
    grid = make_grid(grid_spec)
    if not grid.symmetric:
        raise DataValidationError("stopping_boundary needs a mixture symmetric about 1/2")
    threshold = math.log(1.0 / alpha)
    d = torch.arange(d_max + 1, dtype=torch.int64)
    lo = (d + 1) // 2  # candidate answer lies in [lo, d + 1]
    hi = d + 1
    while bool((lo < hi).any()):
        mid = (lo + hi) // 2
        crossed = _log_e_t(mid, d - mid, grid) >= threshold
        active = lo < hi
        hi = torch.where(active & crossed, mid, hi)
        lo = torch.where(active & ~crossed, mid + 1, lo)
    return lo.numpy()


def first_stops(a, b, boundary):
    """First item index (1-based, 0 = never) where the discordant signs cross.

    a, b: (trials, n) {0, 1} tensors; boundary from `stopping_boundary`.
    """
    wins_a = torch.cumsum((a > b).to(torch.int64), dim=-1)
    wins_b = torch.cumsum((b > a).to(torch.int64), dim=-1)
    bound = torch.as_tensor(boundary, dtype=torch.int64)[wins_a + wins_b]
    return first_crossing(torch.maximum(wins_a, wins_b) >= bound)


class EProcessCalibration(NamedTuple):
    type1: float
    reject_rate: float
    mean_stop_ratio: float
    median_stop: float
    n_star: float
    n_max: int
    mcse_type1: float
    mcse_reject: float


def _simulate_stops(p_a, p_b, rho_z, n_max, trials, seed, arm, boundary, chunk=64):
    stops = []
    for start in range(0, trials, chunk):
        rows = []
        for t in range(start, min(start + chunk, trials)):
            rows.append(latent_bernoulli_pairs(p_a, p_b, rho_z, (n_max,), task_generator(seed, arm, t)))
        a = torch.stack([r[0] for r in rows])
        b = torch.stack([r[1] for r in rows])
        stops.append(first_stops(a, b, boundary))
    return torch.cat(stops)


def calibrate_eprocess(p, rho_z, delta, n_max=None, trials=600, seed=42, alpha=0.05, grid_spec="uniform", config=None):
    """Type-I rate, H1 rejection rate and mean H1 stopping time over the fixed-n N*.

    Item streams come from the latent Gaussian copula at base accuracy p with
    accuracies p + delta/2, p - delta/2 under H1 and p, p under H0. N* is the
    discordance-form McNemar size at the population (psi, delta). The horizon
    defaults to 5 N*.
    """
    config = config or TestConfig(alpha=alpha)
    spec = GeneratorSpec(p=p, delta=delta, rho_z=rho_z, n=1, seed=seed)
    p11, p10, p01, _ = latent_cell_probabilities(spec.p_a, spec.p_b, rho_z)
    n_star = required_n_discordance_real(p10 + p01, p10 - p01, config)
    if n_max is None:
        n_max = int(math.ceil(5.0 * n_star))
    boundary = stopping_boundary(n_max, alpha, grid_spec)
    logger.info("e-process calibration p=%.3f rho_z=%.2f delta=%.3f: N*=%.1f, horizon %d", p, rho_z, delta, n_star, n_max)

    null_stops = _simulate_stops(p, p, rho_z, n_max, trials, seed, 0, boundary)
    alt_stops = _simulate_stops(spec.p_a, spec.p_b, rho_z, n_max, trials, seed, 1, boundary)
    type1 = float((null_stops > 0).to(torch.float64).mean())
    rejected = alt_stops[alt_stops > 0].to(torch.float64)
    reject_rate = rejected.numel() / trials
    mean_stop = float(rejected.mean()) if rejected.numel() else math.inf
    return EProcessCalibration(
        type1=type1,
        reject_rate=reject_rate,
        mean_stop_ratio=mean_stop / n_star,
        median_stop=float(rejected.median()) if rejected.numel() else math.inf,
        n_star=n_star,
        n_max=n_max,
        mcse_type1=math.sqrt(max(type1 * (1 - type1), alpha * (1 - alpha)) / trials),
        mcse_reject=math.sqrt(reject_rate * (1 - reject_rate) / trials),
    )


def threshold_inflation_at(n, alpha, grid_spec="uniform", psi=0.02, power=0.8):
    """N* multiplier implied by the e-process boundary at horizon n.

    With d = psi * n discordant pairs, the smallest imbalance k with
    log e((d + k)/2, (d - k)/2) = log(1/alpha) defines z_eq = k / sqrt(d); the
    multiplier is ((z_eq + z_{1-beta}) / (z_{1-alpha/2} + z_{1-beta}))^2, floored at 1.
    Returns math.inf when even a unanimous split does not cross.
    """
    if n < 1:
        raise DataValidationError(f"n must be >= 1, got {n}")
    if not 0.0 < psi <= 1.0:
        raise DataValidationError(f"psi must lie in (0, 1], got {psi}")
    grid = make_grid(grid_spec)
    d = psi * n
    threshold = math.log(1.0 / alpha)

    def gap(k):
        return log_e_value((d + k) / 2.0, (d - k) / 2.0, grid) - threshold

    if gap(d) < 0.0:
        return math.inf
    if gap(0.0) >= 0.0:
        k = 0.0
    else:
        k = optimize.brentq(gap, 0.0, d, xtol=1e-10)
    z_eq = k / math.sqrt(d)
    z_beta = norm_ppf(power)
    return max(((z_eq + z_beta) / (z_two_sided(alpha) + z_beta)) ** 2, 1.0)

