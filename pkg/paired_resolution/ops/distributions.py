# Copyright (c) 2025, paired-resolution authors.
"""Normal, chi-square and binomial tail functions used by every test and inversion.

Scalar entry points go through scipy.special / scipy.stats and return floats. The
`*_ref` functions are slow exact versions kept for tests.
"""

import math
from fractions import Fraction

import numpy as np
from scipy import special
from scipy.integrate import quad
from scipy.stats import binom


def norm_cdf(x):
    return float(special.ndtr(x))


def norm_ppf(p):
    assert 0.0 < p < 1.0, f"quantile level must lie in (0, 1), got {p}"
    return float(special.ndtri(p))


def z_two_sided(alpha):
    """z_{1-alpha/2}."""
    return norm_ppf(1.0 - alpha / 2.0)


def z_sum(alpha, power):
    """z_{1-alpha/2} + z_{1-beta}, the constant every Wald inversion scales with."""
    return z_two_sided(alpha) + norm_ppf(power)


def chi2_1_sf(stat):
    """Upper tail of chi-square with one degree of freedom, via erfc."""
    stat = max(float(stat), 0.0)
    return float(special.erfc(math.sqrt(stat / 2.0)))


def binom_half_sf(k, n):
    """P(X >= k) for X ~ Bin(n, 1/2), evaluated in log space."""
    if k <= 0:
        return 1.0
    if k > n:
        return 0.0
    return float(np.exp(binom.logsf(k - 1, n, 0.5)))


def binom_half_pmf(k, n):
    if k < 0 or k > n:
        return 0.0
    return float(np.exp(binom.logpmf(k, n, 0.5)))


def binom_half_sf_ref(k, n):
    """Exact rational P(X >= k) for X ~ Bin(n, 1/2) by enumeration."""
    total = sum(math.comb(n, j) for j in range(max(k, 0), n + 1))
    return Fraction(total, 2 ** n)


def bivariate_normal_orthant(h, k, rho):
    """P(Z1 <= h, Z2 <= k) for standard normals with correlation rho.

    Uses the one-dimensional integral over the correlation parameter,
    d/dr Phi_2(h, k; r) = phi_2(h, k; r).
    """
    if rho >= 1.0:
        return norm_cdf(min(h, k))
    if rho <= -1.0:
        return max(0.0, norm_cdf(h) + norm_cdf(k) - 1.0)

    def density(r):
        one_minus = 1.0 - r * r
        return math.exp(-(h * h - 2.0 * r * h * k + k * k) / (2.0 * one_minus)) / (
            2.0 * math.pi * math.sqrt(one_minus)
        )

    integral, _ = quad(density, 0.0, rho, epsabs=1e-13, epsrel=1e-12, limit=200)
    return norm_cdf(h) * norm_cdf(k) + integral
