import math

import pytest

from paired_resolution.ops.distributions import (
    binom_half_pmf,
    binom_half_sf,
    binom_half_sf_ref,
    bivariate_normal_orthant,
    chi2_1_sf,
    norm_cdf,
    norm_ppf,
    z_sum,
    z_two_sided,
)


def test_z_constants():
    assert z_two_sided(0.05) == pytest.approx(1.959964, abs=1e-6)
    assert norm_ppf(0.8) == pytest.approx(0.841621, abs=1e-6)
    assert z_sum(0.05, 0.8) ** 2 == pytest.approx(7.848880, abs=1e-6)


@pytest.mark.parametrize("p", [1e-12, 0.025, 0.5, 0.8, 1 - 1e-12])
def test_norm_ppf_inverts_cdf(p):
    assert norm_cdf(norm_ppf(p)) == pytest.approx(p, rel=1e-9)


def test_chi2_sf_matches_normal_tail():
    for z in [0.0, 0.5, 1.959964, 3.0, 8.0]:
        assert chi2_1_sf(z * z) == pytest.approx(2 * norm_cdf(-z), rel=1e-9)


# @pytest.mark.parametrize('n', list(range(1, 61)))
@pytest.mark.parametrize('n', [1, 2, 5, 10, 17, 30])
def test_binom_half_sf(n):
    for k in range(-1, n + 2):
        assert binom_half_sf(k, n) == pytest.approx(float(binom_half_sf_ref(k, n)), rel=1e-12, abs=1e-300)


def test_binom_half_tails_far_out():
    # log-space tail: z ~ 4.45 at n = 2000
    assert 1e-6 < binom_half_sf(1100, 2000) < 1e-5
    assert binom_half_sf(1000, 2000) == pytest.approx(0.5 + 0.5 * binom_half_pmf(1000, 2000), rel=1e-12)
    assert binom_half_pmf(5, 10) == pytest.approx(252 / 1024, rel=1e-12)
    assert binom_half_pmf(11, 10) == 0.0


@pytest.mark.parametrize('h, k', [(0.0, 0.0), (0.4, -0.3), (-1.2, 0.7)])
def test_orthant_special_cases(h, k):
    assert bivariate_normal_orthant(h, k, 0.0) == pytest.approx(norm_cdf(h) * norm_cdf(k), abs=1e-14)
    assert bivariate_normal_orthant(h, k, 1.0) == pytest.approx(norm_cdf(min(h, k)), abs=1e-14)
    assert bivariate_normal_orthant(h, k, -1.0) == pytest.approx(max(0.0, norm_cdf(h) + norm_cdf(k) - 1.0), abs=1e-14)


@pytest.mark.parametrize('rho', [-0.9, -0.5, 0.3, 0.8, 0.99])
def test_orthant_at_origin(rho):
    # P(Z1 <= 0, Z2 <= 0) = 1/4 + asin(rho) / (2 pi)
    assert bivariate_normal_orthant(0.0, 0.0, rho) == pytest.approx(0.25 + math.asin(rho) / (2 * math.pi), abs=1e-10)


def test_orthant_monotone_in_rho():
    values = [bivariate_normal_orthant(0.3, -0.2, r) for r in (-0.8, -0.4, 0.0, 0.4, 0.8)]
    assert values == sorted(values)
