import math

import numpy as np
import pandas as pd
import pytest
from scipy import special

from paired_resolution.errors import DataValidationError, DegenerateError
from paired_resolution.models.config_resolution import TestConfig
from paired_resolution.models.score_matrix import ScoreMatrix
from paired_resolution.modules.cluster_corrections import (
    cluster_bootstrap_verdicts,
    cluster_pair_verdict,
    cluster_required_n,
    cluster_stats,
    design_effect,
    icc_anova,
    loso,
    relabel_clusters,
    unresolved_histogram,
)
from paired_resolution.modules.resample_sim import gen_clustered_paired


def _matrix(n=4000, accuracies=(0.80, 0.70, 0.69), seed=0, clusters=None):
    rng = np.random.default_rng(seed)
    shared = rng.standard_normal(n)
    cols = []
    for p in accuracies:
        z = math.sqrt(0.5) * shared + math.sqrt(0.5) * rng.standard_normal(n)
        cols.append((z < special.ndtri(p)).astype(float))
    names = [f"m{j}" for j in range(len(accuracies))]
    return ScoreMatrix([f"i{j}" for j in range(n)], names, np.stack(cols, axis=1), clusters)


# (pair, published N*, ICC, published cluster N*) at N = 12032 over 14 subjects
PUBLISHED = [
    ("2v3", 778, -0.0003, 778),
    ("3v4", 34092, 0.0002, 40660),
    ("4v5", 433, 0.036, 13621),
    ("5v6", 5787, 0.0067, 39009),
    ("7v8", 4628, -0.0002, 4628),
    ("8v9", 13086, 0.0010, 24632),
]


@pytest.mark.parametrize('pair, n_star, icc, expected', PUBLISHED)
def test_design_effect_identity(pair, n_star, icc, expected):
    de = design_effect(icc, 12032 / 14)
    assert cluster_required_n(n_star, de) == pytest.approx(expected, rel=0.02)


def test_design_effect_floor():
    assert design_effect(-0.2, 40) == 1.0
    assert design_effect(0.036, 859.4) == pytest.approx(31.90, abs=0.01)
    assert cluster_required_n(math.inf, 3.0) == math.inf
    with pytest.raises(DataValidationError):
        design_effect(0.1, 0.5)


@pytest.mark.parametrize('tau', [0.0, 0.01, 0.05])
def test_icc_recovery(tau):
    estimates = []
    for rep in range(200):
        d, labels = gen_clustered_paired(50, 40, tau, seed=rep)
        estimates.append(icc_anova(d, labels))
    estimates = np.array(estimates)
    se = estimates.std(ddof=1) / math.sqrt(len(estimates))
    assert abs(estimates.mean() - tau) <= 3 * se


def test_cluster_stats_fields():
    d, labels = gen_clustered_paired(10, 5, 0.3, seed=1)
    stats = cluster_stats(d, labels)
    assert stats.k == 10 and stats.sizes == [5] * 10 and stats.m_bar == 5.0
    assert stats.de == pytest.approx(1 + 4 * max(stats.icc, 0.0))
    with pytest.raises(DegenerateError) as info:
        icc_anova(d, ["only"] * d.size)
    assert info.value.kind == "too_few_clusters"


def test_constant_within_clusters_is_degenerate():
    stats = cluster_stats(np.zeros(20), [f"c{j % 4}" for j in range(20)])
    assert stats.degenerate and stats.icc == 0.0 and stats.de == 1.0


def test_random_relabel_keeps_iid_verdicts():
    config = TestConfig()
    matrix = relabel_clusters(_matrix(), "random", k=14, seed=3)
    assert len(set(matrix.clusters)) == 14
    for pair in [("m0", "m1"), ("m1", "m2")]:
        stats, result, n_star_cluster, resolved = cluster_pair_verdict(matrix, pair, config)
        assert stats.de < 2.0
        if result.q >= 2.0 or not result.resolved:
            assert resolved == result.resolved


def test_bootstrap_is_reproducible():
    config = TestConfig()
    matrix = relabel_clusters(_matrix(n=240, seed=5), "random", k=12, seed=6)
    pairs = [("m0", "m1"), ("m1", "m2")]
    first, counts = cluster_bootstrap_verdicts(matrix, pairs, 200, 9, config)
    again, counts_again = cluster_bootstrap_verdicts(matrix, pairs, 200, 9, config)
    pd.testing.assert_frame_equal(first, again)
    np.testing.assert_array_equal(counts, counts_again)
    assert list(first.pair) == ["m0 vs m1", "m1 vs m2"]
    assert ((first.pr_unresolved >= 0) & (first.pr_unresolved <= 1)).all()
    assert (first.icc_lo <= first.icc_hi).all() and (first.de_lo >= 1.0).all()
    histogram = unresolved_histogram(counts, len(pairs))
    assert sum(histogram.values()) == 200 and set(histogram) == {0, 1, 2}


def test_bootstrap_identity_draws_reproduce_point():
    config = TestConfig()
    matrix = relabel_clusters(_matrix(n=300, seed=7), "random", k=10, seed=8)
    k = len(set(matrix.clusters))
    identity = np.tile(np.arange(k), (3, 1))
    table, _ = cluster_bootstrap_verdicts(matrix, [("m0", "m2")], 3, 0, config, draws=identity)
    row = table.iloc[0]
    assert row.icc_lo == pytest.approx(row.icc_pt) and row.icc_hi == pytest.approx(row.icc_pt)
    assert row.de_lo == pytest.approx(row.de_pt)


def test_loso_and_relabel_schemes():
    config = TestConfig()
    labels = [f"s{j % 5}" for j in range(500)]
    matrix = _matrix(n=500, seed=10, clusters=labels)
    table = loso(matrix, [("m0", "m1")], config)
    assert list(table.dropped) == [f"s{j}" for j in range(5)]
    assert (table.n_items == 400).all()
    halves = relabel_clusters(matrix, "split_half")
    assert halves.clusters[:10] == [f"s{j}/even" for j in range(5)] + [f"s{j}/odd" for j in range(5)]
    quartiles = relabel_clusters(matrix, "difficulty_quartiles")
    assert set(quartiles.clusters) == {"q1", "q2", "q3", "q4"}
    with pytest.raises(DataValidationError):
        relabel_clusters(matrix, "by_vibes")
    with pytest.raises(DataValidationError):
        loso(_matrix(n=50, seed=1, clusters=["a"] * 25 + ["b"] * 25), [("m0", "m1")], config)


def test_icc_ignores_labels_order_and_location():
    d, labels = gen_clustered_paired(12, 8, 0.3, seed=1)
    icc = icc_anova(d, labels)
    rng = np.random.default_rng(0)
    names = sorted(set(labels))
    renamed = dict(zip(names, rng.permutation(names).tolist()))
    assert icc_anova(d, [renamed[x] for x in labels]) == pytest.approx(icc, rel=1e-10)
    order = rng.permutation(d.size)
    assert icc_anova(d[order], [labels[i] for i in order]) == pytest.approx(icc, rel=1e-10)
    for shift in (0.37, -5.0, 100.0):
        assert icc_anova(d + shift, labels) == pytest.approx(icc, rel=1e-8)
