# Copyright (c) 2025, paired-resolution authors.
"""Paired sufficient statistics, the paired-Bernoulli variance and the Wald
inversions behind the minimum detectable effect, required N and resolution ratio.

With D_i = X_i^A - X_i^B, delta = E[D] and sigma_D = sd(D), a level-alpha,
power-(1-beta) two-sided Wald test needs

    N* = (z_{1-alpha/2} + z_{1-beta})^2 sigma_D^2 / delta^2

paired items, and at N items the smallest detectable gap is
(z_{1-alpha/2} + z_{1-beta}) sigma_D / sqrt(N). The resolution ratio is q = N / N*.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import special

from paired_resolution.errors import DataValidationError, DegenerateError

RHO_TOL = 1e-9


@dataclass(frozen=True)
class PairedSummary:
    n: int
    p_a: float
    p_b: float
    delta_hat: float
    rho_hat: float
    sigma_d_hat: float
    binary: bool
    n11: Optional[int] = None
    n10: Optional[int] = None
    n01: Optional[int] = None
    n00: Optional[int] = None

    @property
    def b(self):
        return self.n10

    @property
    def c(self):
        return self.n01

    @property
    def psi(self):
        """Discordance rate (b + c) / n."""
        assert self.binary
        return (self.n10 + self.n01) / self.n


class ResolutionResult(NamedTuple):
    n: int
    n_star: float  # ceiling integer, or math.inf
    n_star_real: float
    mde: float
    q: float
    t_stat: float
    resolved: bool
    beyond_resolution: bool  # delta_hat == 0: no finite N resolves the pair


def _as_scores(x, name):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DataValidationError(f"{name} must be a one-dimensional score sequence")
    if not np.all(np.isfinite(arr)):
        raise DataValidationError(f"{name} contains non-finite values")
    return arr


def _phi_from_counts(n11, n10, n01, n00):
    row_a = (n11 + n10) * (n01 + n00)
    row_b = (n11 + n01) * (n10 + n00)
    if row_a == 0 or row_b == 0:
        return 0.0
    return (n11 * n00 - n10 * n01) / math.sqrt(row_a * row_b)


def summary_from_counts(n11, n10, n01, n00):
    """PairedSummary of a binary pair from its 2x2 table.

    n10 counts items A got right and B got wrong. sigma_d_hat is the plug-in
    standard deviation, so sigma_d_hat^2 = psi - delta_hat^2 exactly.
    """
    counts = (n11, n10, n01, n00)
    if any(int(v) != v or v < 0 for v in counts):
        raise DataValidationError(f"contingency counts must be non-negative integers, got {counts}")
    n11, n10, n01, n00 = (int(v) for v in counts)
    n = n11 + n10 + n01 + n00
    if n < 1:
        raise DataValidationError("contingency table is empty")
    delta = (n10 - n01) / n
    psi = (n10 + n01) / n
    return PairedSummary(
        n=n,
        p_a=(n11 + n10) / n,
        p_b=(n11 + n01) / n,
        delta_hat=delta,
        rho_hat=_phi_from_counts(n11, n10, n01, n00),
        sigma_d_hat=math.sqrt(max(psi - delta * delta, 0.0)),
        binary=True,
        n11=n11,
        n10=n10,
        n01=n01,
        n00=n00,
    )


def summarize_pair(scores_a, scores_b):
    a = _as_scores(scores_a, "scores_a")
    b = _as_scores(scores_b, "scores_b")
    if a.size != b.size:
        raise DataValidationError(f"score sequences differ in length: {a.size} vs {b.size}")
    if a.size < 2:
        raise DataValidationError(f"at least two paired items are required, got {a.size}")
    if np.all((a == 0.0) | (a == 1.0)) and np.all((b == 0.0) | (b == 1.0)):
        n11 = int(np.sum((a == 1.0) & (b == 1.0)))
        n10 = int(np.sum((a == 1.0) & (b == 0.0)))
        n01 = int(np.sum((a == 0.0) & (b == 1.0)))
        return summary_from_counts(n11, n10, n01, a.size - n11 - n10 - n01)
    d = a - b
    sd_a, sd_b = a.std(), b.std()
    rho = float(np.corrcoef(a, b)[0, 1]) if sd_a > 0 and sd_b > 0 else 0.0
    return PairedSummary(
        n=int(a.size),
        p_a=float(a.mean()),
        p_b=float(b.mean()),
        delta_hat=float(d.mean()),
        rho_hat=rho,
        sigma_d_hat=float(d.std()),
        binary=False,
    )


def admissible_rho_bounds(p_a, p_b):
    """Attainable correlation range of two Bernoulli variables with the given means."""
    for p in (p_a, p_b):
        if not 0.0 < p < 1.0:
            raise DataValidationError(f"marginals must be interior to (0, 1), got {p}")
    q_a, q_b = 1.0 - p_a, 1.0 - p_b
    hi = math.sqrt(min(p_a * q_b, p_b * q_a) / max(p_a * q_b, p_b * q_a))
    lo = -math.sqrt(min(p_a * p_b, q_a * q_b) / max(p_a * p_b, q_a * q_b))
    return lo, hi


def clamp_rho(p_a, p_b, rho):
    lo, hi = admissible_rho_bounds(p_a, p_b)
    return min(max(rho, lo), hi)


def bernoulli_diff_variance(p_a, p_b, rho):
    lo, hi = admissible_rho_bounds(p_a, p_b)
    if not lo - RHO_TOL <= rho <= hi + RHO_TOL:
        raise DataValidationError(
            f"rho={rho} is outside the admissible interval [{lo:.6f}, {hi:.6f}] for marginals ({p_a}, {p_b})"
        )
    v_a, v_b = p_a * (1.0 - p_a), p_b * (1.0 - p_b)
    return max(v_a + v_b - 2.0 * rho * math.sqrt(v_a * v_b), 0.0)


def wald_statistic(summary):
    if summary.sigma_d_hat <= 0.0:
        raise DegenerateError("paired differences have zero variance; the Wald statistic is undefined", "zero_variance")
    return summary.delta_hat * math.sqrt(summary.n) / summary.sigma_d_hat


def power_at(delta, sigma_d, n, alpha):
    """Exact two-sided power of the Wald test at true gap delta."""
    if sigma_d <= 0.0:
        raise DataValidationError(f"sigma_d must be positive, got {sigma_d}")
    if n < 1:
        raise DataValidationError(f"n must be >= 1, got {n}")
    z = float(special.ndtri(1.0 - alpha / 2.0))
    mu = abs(delta) * math.sqrt(n) / sigma_d
    return float(special.ndtr(-z - mu) + special.ndtr(mu - z))


def required_n_real(delta, sigma_d, config):
    """Un-ceiled N*; math.inf at delta == 0."""
    if sigma_d <= 0.0:
        raise DataValidationError(f"sigma_d must be positive, got {sigma_d}")
    if delta == 0.0:
        return math.inf
    return config.k_const * sigma_d * sigma_d / (delta * delta)


def _ceil(x):
    if math.isinf(x):
        return math.inf
    # absorb float noise in values that are integers up to rounding
    return math.ceil(x - 1e-9 * max(1.0, x))


def required_n(delta, sigma_d, config):
    """Paired N* at the configured operating point, as an integer or math.inf.

    Also the paired-t required N for graded scores: pass the graded sigma_D.
    """
    return _ceil(required_n_real(delta, sigma_d, config))


def required_n_paired_t(mean_diff, sd_diff, config):
    if sd_diff <= 0.0 or not math.isfinite(sd_diff):
        raise DataValidationError(f"sd_diff must be positive and finite, got {sd_diff}")
    return required_n(mean_diff, sd_diff, config)


def mde(n, sigma_d, config):
    if n < 1:
        raise DataValidationError(f"n must be >= 1, got {n}")
    if sigma_d <= 0.0:
        raise DataValidationError(f"sigma_d must be positive, got {sigma_d}")
    return config.z_sum * sigma_d / math.sqrt(n)


def resolution_ratio(n, n_star):
    """q = n / n_star, with q = 0 when n_star is infinite."""
    if n < 1:
        raise DataValidationError(f"n must be >= 1, got {n}")
    if math.isinf(n_star):
        return 0.0
    return n / n_star


def resolution_ratio_from_t(t_stat, config):
    return t_stat * t_stat / config.k_const


def resolve(summary, config):
    """Wald statistic, N*, MDE and q of one pair at the configured operating point."""
    n = summary.n
    if summary.sigma_d_hat <= 0.0:
        if summary.delta_hat != 0.0:
            raise DegenerateError(
                "every item differs by the same nonzero amount; the gap has zero variance", "constant_difference"
            )
        return ResolutionResult(n, math.inf, math.inf, 0.0, 0.0, 0.0, False, True)
    t = wald_statistic(summary)
    n_real = required_n_real(summary.delta_hat, summary.sigma_d_hat, config)
    q = resolution_ratio(n, n_real)
    return ResolutionResult(
        n=n,
        n_star=_ceil(n_real),
        n_star_real=n_real,
        mde=mde(n, summary.sigma_d_hat, config),
        q=q,
        t_stat=t,
        resolved=q >= 1.0,
        beyond_resolution=math.isinf(n_real),
    )


def unpaired_required_n(p_a, p_b, config):
    """Per-arm N for two independent samples with the same accuracies."""
    admissible_rho_bounds(p_a, p_b)
    if p_a == p_b:
        return math.inf
    var = p_a * (1.0 - p_a) + p_b * (1.0 - p_b)
    return _ceil(config.k_const * var / (p_a - p_b) ** 2)


def efficiency_ratio(p_a, p_b, rho, config):
    """Unpaired over paired N*, i.e. the variance quotient; defined at p_a == p_b too."""
    paired = bernoulli_diff_variance(p_a, p_b, rho)
    unpaired = p_a * (1.0 - p_a) + p_b * (1.0 - p_b)
    if paired == 0.0:
        return math.inf
    return unpaired / paired


def rho_sensitivity(p_a, p_b, rho, config, shift=0.10):
    """N* with rho moved down and up by `shift`, clamped to the admissible interval.

    Returns (n_star at rho - shift, n_star at rho + shift); lowering rho raises N*.
    """
    delta = p_a - p_b
    out = []
    for r in (rho - shift, rho + shift):
        var = bernoulli_diff_variance(p_a, p_b, clamp_rho(p_a, p_b, r))
        out.append(required_n(delta, math.sqrt(var), config) if var > 0.0 else (math.inf if delta == 0 else 1))
    return tuple(out)
