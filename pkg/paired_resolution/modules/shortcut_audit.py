# Copyright (c) 2025, paired-resolution authors.
"""Audit of the Cohen-h shortcut for paired binary comparisons.

The shortcut takes the unpaired per-arm size K / h^2 and multiplies it by (1 - rho).
For small gaps at midpoint p with p_A = p + delta/2, p_B = p - delta/2 it returns
about half the paired N*:

    n_h / N* = 1/2 + C(p, rho) delta^2 + O(delta^4),

so it under-states N* by a factor of two for every admissible (p, rho).
"""

import math
from typing import NamedTuple

import pandas as pd

from paired_resolution.errors import DataValidationError
from paired_resolution.modules.paired_core import admissible_rho_bounds, bernoulli_diff_variance, required_n


class ShortcutReport(NamedTuple):
    h: float
    n_per_arm: float
    n_h: float
    n_star: float
    ratio: float
    c_constant: float
    delta_star: float


def cohens_h(p1, p2):
    for p in (p1, p2):
        if not 0.0 <= p <= 1.0:
            raise DataValidationError(f"proportions must lie in [0, 1], got {p}")
    return 2.0 * math.asin(math.sqrt(p1)) - 2.0 * math.asin(math.sqrt(p2))


def _shortcut_real(p1, p2, rho, config):
    h = cohens_h(p1, p2)
    per_arm = config.k_const / (h * h)
    return per_arm, (1.0 - rho) * per_arm


def shortcut_n(p1, p2, rho, config):
    """(per-arm K / h^2, paired shortcut (1 - rho) K / h^2), both ceiled.

    Equal marginals give (inf, inf).
    """
    lo, hi = admissible_rho_bounds(p1, p2)
    if not lo - 1e-9 <= rho <= hi + 1e-9:
        raise DataValidationError(f"rho={rho} is outside the admissible interval [{lo:.6f}, {hi:.6f}]")
    if p1 == p2:
        return math.inf, math.inf
    per_arm, n_h = _shortcut_real(p1, p2, rho, config)
    return math.ceil(per_arm), math.ceil(n_h)


def lemma_constant(p, rho):
    """C(p, rho), the delta^2 coefficient of n_h / N* - 1/2."""
    if not 0.0 < p < 1.0:
        raise DataValidationError(f"p must lie in (0, 1), got {p}")
    if rho >= 1.0 - 1e-12:
        raise DataValidationError(f"C(p, rho) is unbounded as rho -> 1, got rho={rho}")
    pq = p * (1.0 - p)
    first = (1.0 + rho) * (1.0 - 2.0 * p) ** 2 / (16.0 * (1.0 - rho) * pq * pq)
    return 0.5 * abs(first - 1.0 / (6.0 * pq))


def _lemma_or_nan(p, rho):
    try:
        return lemma_constant(p, rho)
    except DataValidationError:
        return math.nan


def admissible_delta_star(p, rho, epsilon):
    """Largest gap at which the shortcut ratio stays within epsilon of 1/2 (leading order)."""
    if not 0.0 < epsilon < 0.5:
        raise DataValidationError(f"epsilon must lie in (0, 1/2), got {epsilon}")
    c = lemma_constant(p, rho)
    if c == 0.0:
        return math.inf
    return math.sqrt(epsilon / c)


def shortcut_report(p1, p2, rho, config, epsilon=0.05):
    """Shortcut sizes, paired N*, their ratio and the lemma terms at the midpoint.

    Equal marginals give the degenerate report: h = 0, infinite sizes and a NaN ratio.
    """
    per_arm, n_h = shortcut_n(p1, p2, rho, config)
    p_mid = (p1 + p2) / 2.0
    if p1 == p2:
        return ShortcutReport(
            h=0.0,
            n_per_arm=math.inf,
            n_h=math.inf,
            n_star=math.inf,
            ratio=math.nan,
            c_constant=_lemma_or_nan(p_mid, rho),
            delta_star=math.nan,
        )
    n_star = required_n(p1 - p2, math.sqrt(bernoulli_diff_variance(p1, p2, rho)), config)
    return ShortcutReport(
        h=cohens_h(p1, p2),
        n_per_arm=per_arm,
        n_h=n_h,
        n_star=n_star,
        ratio=n_h / n_star,
        c_constant=lemma_constant(p_mid, rho),
        delta_star=admissible_delta_star(p_mid, rho, epsilon),
    )


def calculator_conventions(p_a, p_b, rho, config):
    """Formula-backed rows of a sample-size calculator comparison.

    Keys: Cohen per-arm K/h^2, the 2K/h^2 total, both multiplied by (1 - rho),
    and the paired N*.
    """
    per_arm, n_h = shortcut_n(p_a, p_b, rho, config)
    if p_a == p_b:
        return dict.fromkeys(
            ("cohen_per_arm", "cohen_total", "cohen_per_arm_paired", "cohen_total_paired", "paired_n_star"), math.inf
        )
    real_per_arm, _ = _shortcut_real(p_a, p_b, rho, config)
    n_star = required_n(p_a - p_b, math.sqrt(bernoulli_diff_variance(p_a, p_b, rho)), config)
    return {
        "cohen_per_arm": per_arm,
        "cohen_total": math.ceil(2.0 * real_per_arm),
        "cohen_per_arm_paired": n_h,
        "cohen_total_paired": math.ceil(2.0 * (1.0 - rho) * real_per_arm),
        "paired_n_star": n_star,
    }


def lemma_numeric_audit(p_grid, rho_grid, delta_grid, config):
    """Ratio n_h / N* on every (p, rho, delta) cell, from un-ceiled sizes.

    Columns: p, rho, delta, ratio, deviation, c_pred, c_obs, skipped.
    Cells whose marginals or rho are inadmissible, and delta = 0 cells (no finite N*),
    are kept with skipped=True.
    """
    rows = []
    for p in p_grid:
        for rho in rho_grid:
            for delta in delta_grid:
                p_a, p_b = p + delta / 2.0, p - delta / 2.0
                row = dict(p=p, rho=rho, delta=delta, ratio=math.nan, deviation=math.nan,
                           c_pred=math.nan, c_obs=math.nan, skipped=True)
                try:
                    lo, hi = admissible_rho_bounds(p_a, p_b)
                except DataValidationError:
                    rows.append(row)
                    continue
                if delta == 0.0 or not lo <= rho <= hi or rho >= 1.0:
                    rows.append(row)
                    continue
                var = bernoulli_diff_variance(p_a, p_b, rho)
                n_star = config.k_const * var / (delta * delta)
                _, n_h = _shortcut_real(p_a, p_b, rho, config)
                ratio = n_h / n_star
                deviation = abs(ratio - 0.5)
                row.update(ratio=ratio, deviation=deviation, c_pred=lemma_constant(p, rho),
                           c_obs=deviation / (delta * delta), skipped=False)
                rows.append(row)
    return pd.DataFrame(rows, columns=["p", "rho", "delta", "ratio", "deviation", "c_pred", "c_obs", "skipped"])
