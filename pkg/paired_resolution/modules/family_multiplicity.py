# Copyright (c) 2025, paired-resolution authors.
"""Family-level alpha adjustment: Bonferroni, Sidak, Holm (step-down) and
Benjamini-Hochberg (step-up)."""

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from paired_resolution.errors import ConfigError, DataValidationError
from paired_resolution.ops.distributions import norm_ppf, z_two_sided

METHODS = ("none", "bonferroni", "sidak", "holm", "bh")
FIXED_METHODS = ("bonferroni", "sidak")
STEPWISE_METHODS = ("holm", "bh")


@dataclass
class FamilyVerdict:
    method: str
    m: int
    adjusted_alpha: Optional[float]
    reject_flags: List[bool]
    position_alphas: List[float]
    inflation: Optional[float]


def adjust_alpha(alpha, m, method):
    if m < 1:
        raise ConfigError(f"family size must be >= 1, got {m}")
    if method == "none":
        return alpha
    if method == "bonferroni":
        return alpha / m
    if method == "sidak":
        return -math.expm1(math.log1p(-alpha) / m)
    if method in STEPWISE_METHODS:
        raise ConfigError(f"{method} is a stepwise procedure with no single per-test level; use stepwise_verdicts")
    raise ConfigError(f"Invalid multiplicity method {method!r}")


def nstar_inflation(alpha, beta, m, method):
    """Multiplier on N* from replacing alpha by the adjusted per-test level."""
    if method not in FIXED_METHODS:
        raise ConfigError(f"N* inflation is defined for {FIXED_METHODS}, got {method!r}")
    if m == 1:
        return 1.0
    z_beta = norm_ppf(1.0 - beta)
    adjusted = z_two_sided(adjust_alpha(alpha, m, method))
    return ((adjusted + z_beta) / (z_two_sided(alpha) + z_beta)) ** 2


def _sort(p_values):
    order = np.argsort(p_values, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return np.asarray(p_values)[order], order, rank


def stepwise_thresholds(m, alpha, method):
    i = np.arange(1, m + 1)
    if method == "holm":
        return alpha / (m - i + 1)
    if method == "bh":
        return i * alpha / m
    raise ConfigError(f"Invalid stepwise method {method!r}")


def _check_p_values(p_values):
    p = np.asarray(p_values, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise DataValidationError("stepwise procedures need a non-empty family of p-values")
    if not np.all(np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
        raise DataValidationError("p-values must be finite and lie in [0, 1]")
    return p


def stepwise_verdicts(p_values, alpha, method):
    """Reject flags, in input order, of the Holm step-down or BH step-up rule.

    Ties are ordered by input position after a stable sort on p.
    """
    p = _check_p_values(p_values)
    m = p.size
    sorted_p, order, _ = _sort(p)
    passes = sorted_p <= stepwise_thresholds(m, alpha, method)
    if method == "holm":
        failed = np.flatnonzero(~passes)
        n_reject = failed[0] if failed.size else m
    else:
        passed = np.flatnonzero(passes)
        n_reject = passed[-1] + 1 if passed.size else 0
    flags = np.zeros(m, dtype=bool)
    flags[order[:n_reject]] = True
    return flags


def position_alphas(p_values, alpha, method):
    """Per-test level at each test's sorted position, in input order."""
    p = _check_p_values(p_values)
    _, _, rank = _sort(p)
    return stepwise_thresholds(p.size, alpha, method)[rank]


def family_verdict(p_values, alpha, method, beta=0.2, m=None):
    """Family-level decision on p_values.

    m overrides the family size of the single-step methods, e.g. when the family spans
    several tables; Holm and BH always use the number of p-values.
    """
    p = _check_p_values(p_values)
    if method in STEPWISE_METHODS:
        return FamilyVerdict(
            method=method,
            m=int(p.size),
            adjusted_alpha=None,
            reject_flags=stepwise_verdicts(p, alpha, method).tolist(),
            position_alphas=position_alphas(p, alpha, method).tolist(),
            inflation=None,
        )
    m = m or p.size
    level = adjust_alpha(alpha, m, method)
    return FamilyVerdict(
        method=method,
        m=m,
        adjusted_alpha=level,
        reject_flags=(p <= level).tolist(),
        position_alphas=[level] * p.size,
        inflation=nstar_inflation(alpha, beta, m, method) if method in FIXED_METHODS else 1.0,
    )
