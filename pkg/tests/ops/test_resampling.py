import math

import pytest
import torch

from paired_resolution.ops.resampling import (
    binomial_chain_counts,
    binomial_chain_counts_ref,
    bootstrap_means,
    first_crossing,
    latent_bernoulli_pairs,
    percentile_interval,
    resampled_sums,
)
from paired_resolution.utils.rng import task_generator


@pytest.mark.parametrize('n_total', [200, 1000])
@pytest.mark.parametrize('b, c, n_source', [(30, 10, 200), (5, 5, 50), (0, 12, 100)])
def test_binomial_chain_matches_index_resampling(n_total, b, c, n_source):
    reps = 20000
    fast_b, fast_c = binomial_chain_counts(n_total, b, c, n_source, reps, task_generator(0, 1))
    ref_b, ref_c = binomial_chain_counts_ref(n_total, b, c, n_source, reps, task_generator(0, 2))
    for fast, ref, p in ((fast_b, ref_b, b / n_source), (fast_c, ref_c, c / n_source)):
        se = math.sqrt(n_total * p * (1 - p) / reps) + 1e-12
        assert abs(fast.mean().item() - n_total * p) < 5 * se
        assert abs(ref.mean().item() - n_total * p) < 5 * se
        assert fast.var().item() == pytest.approx(ref.var().item(), rel=0.06, abs=1e-9)
    # discordant counts are negatively correlated under multinomial resampling
    if b and c:
        cov_fast = ((fast_b - fast_b.mean()) * (fast_c - fast_c.mean())).mean().item()
        assert cov_fast == pytest.approx(-n_total * (b / n_source) * (c / n_source), rel=0.3)


def test_bootstrap_means_deterministic():
    d = torch.randn(97, generator=task_generator(3), dtype=torch.float64)
    whole = bootstrap_means(d, 500, task_generator(7), chunk_size=97 * 64)
    assert whole.shape == (500,)
    torch.testing.assert_close(whole, bootstrap_means(d, 500, task_generator(7), chunk_size=97 * 64))
    assert abs(whole.mean().item() - d.mean().item()) < 5 * d.std().item() / math.sqrt(97 * 500)


def test_resampled_sums_shape_and_moments():
    d = torch.tensor([1.0, -1.0, 0.0, 0.0], dtype=torch.float64)
    sums, sumsq = resampled_sums(d, 10, 300, task_generator(5), chunk_size=64)
    assert sums.shape == (300,) and sumsq.shape == (300,)
    assert torch.all(sumsq <= 10) and torch.all(sums.abs() <= sumsq)


def test_percentile_interval_inverted_cdf():
    values = torch.arange(1, 101, dtype=torch.float64)
    assert percentile_interval(values, 0.05, 0.95) == (5.0, 95.0)
    assert percentile_interval(values[:10], 0.05, 0.95) == (1.0, 10.0)
    with_inf = torch.tensor([3.0, math.inf, 1.0, 2.0], dtype=torch.float64)
    assert percentile_interval(with_inf, 0.25, 1.0) == (1.0, math.inf)


def test_first_crossing():
    hits = torch.tensor([[False, False, True, True], [False] * 4, [True, False, False, False]])
    assert first_crossing(hits).tolist() == [3, 0, 1]
    assert first_crossing(hits.reshape(3, 1, 4)).shape == (3, 1)
    assert first_crossing(torch.zeros(0, 5, dtype=torch.bool)).numel() == 0


@pytest.mark.parametrize('rho_z', [0.0, 0.5, 0.9])
def test_latent_pairs_marginals(rho_z):
    a, b = latent_bernoulli_pairs(0.7, 0.6, rho_z, (40000,), task_generator(11))
    assert set(torch.unique(a).tolist()) <= {0.0, 1.0}
    se = math.sqrt(0.25 / 40000)
    assert abs(a.mean().item() - 0.7) < 5 * se
    assert abs(b.mean().item() - 0.6) < 5 * se
    if rho_z > 0:
        assert torch.corrcoef(torch.stack([a, b]))[0, 1].item() > 0.2 * rho_z
