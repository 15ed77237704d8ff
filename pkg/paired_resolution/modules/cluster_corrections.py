# Copyright (c) 2025, paired-resolution authors.
"""Cluster corrections for items that share a subject, source or template.

The intra-cluster correlation of the paired differences D is estimated by one-way
ANOVA and turned into a design effect DE = 1 + (m_bar - 1) * max(ICC, 0) that
multiplies the IID N*. All ICC evaluations, including bootstrap replicates, go
through per-cluster sufficient statistics (size, sum, sum of squares).
"""

import logging
import math
from dataclasses import dataclass
from typing import List

import numpy as np
import pandas as pd
import torch

from paired_resolution.errors import DataValidationError, DegenerateError
from paired_resolution.modules.paired_core import resolve, summarize_pair
from paired_resolution.utils.rng import task_generator

logger = logging.getLogger(__name__)

SCHEMES = ("random", "difficulty_quartiles", "split_half")


@dataclass
class ClusterStats:
    k: int
    sizes: List[int]
    m_bar: float
    icc: float
    icc_plus: float
    de: float
    degenerate: bool = False


def cluster_sufficient_stats(d, labels):
    """Per-cluster (size, sum, sum of squares) of D, clusters in order of first appearance."""
    d = np.asarray(d, dtype=np.float64)
    if labels is None or len(labels) != d.size:
        raise DataValidationError("cluster labels must cover every item")
    codes, uniques = pd.factorize(pd.Series(list(labels), dtype="object"), sort=False)
    k = len(uniques)
    sizes = np.bincount(codes, minlength=k).astype(np.float64)
    sums = np.bincount(codes, weights=d, minlength=k)
    sumsq = np.bincount(codes, weights=d * d, minlength=k)
    return sizes, sums, sumsq


def _icc_from_stats(sizes, sums, sumsq):
    """Batched ANOVA ICC over the last axis. Returns (icc, degenerate) arrays."""
    n = sizes.sum(-1)
    k = sizes.shape[-1]
    grand = sums.sum(-1) / n
    means = sums / sizes
    ssb = (sizes * (means - grand[..., None]) ** 2).sum(-1)
    ssw = (sumsq - sums * sums / sizes).sum(-1)
    ssw = np.maximum(ssw, 0.0)
    msb = ssb / (k - 1)
    msw = np.where(n > k, ssw / np.maximum(n - k, 1), 0.0)
    n0 = (n - (sizes * sizes).sum(-1) / n) / (k - 1)
    denom = msb + (n0 - 1.0) * msw
    degenerate = denom <= 1e-15 * np.maximum(np.abs(sumsq.sum(-1)), 1.0)
    icc = np.where(degenerate, 0.0, (msb - msw) / np.where(degenerate, 1.0, denom))
    return icc, degenerate


def _icc_point(sizes, sums, sumsq):
    # (1, k) batch layout, identical to the bootstrap path
    icc, degenerate = _icc_from_stats(sizes[None], sums[None], sumsq[None])
    return float(icc[0]), bool(degenerate[0])


def icc_anova(d_series, cluster_labels):
    sizes, sums, sumsq = cluster_sufficient_stats(d_series, cluster_labels)
    if sizes.size < 2:
        raise DegenerateError(f"ICC needs at least two clusters, got {sizes.size}", "too_few_clusters")
    return _icc_point(sizes, sums, sumsq)[0]


def design_effect(icc, m_bar):
    if m_bar < 1.0:
        raise DataValidationError(f"mean cluster size must be >= 1, got {m_bar}")
    return 1.0 + (m_bar - 1.0) * max(icc, 0.0)


def cluster_required_n(n_star_iid, de):
    if math.isinf(n_star_iid):
        return math.inf
    return math.ceil(n_star_iid * de - 1e-9 * n_star_iid * de)


def cluster_stats(d_series, cluster_labels):
    sizes, sums, sumsq = cluster_sufficient_stats(d_series, cluster_labels)
    if sizes.size < 2:
        raise DegenerateError(f"ICC needs at least two clusters, got {sizes.size}", "too_few_clusters")
    icc, degenerate = _icc_point(sizes, sums, sumsq)
    m_bar = float(sizes.sum() / sizes.size)
    return ClusterStats(
        k=int(sizes.size),
        sizes=sizes.astype(int).tolist(),
        m_bar=m_bar,
        icc=icc,
        icc_plus=max(icc, 0.0),
        de=design_effect(icc, m_bar),
        degenerate=bool(degenerate),
    )


def _require_clusters(matrix):
    if matrix.clusters is None:
        raise DataValidationError("the score matrix has no cluster labels")


def cluster_pair_verdict(matrix, pair, config):
    """ClusterStats, IID N*, cluster N* and the cluster-adjusted resolved flag of one pair."""
    _require_clusters(matrix)
    a, b = matrix.column(pair[0]), matrix.column(pair[1])
    result = resolve(summarize_pair(a, b), config)
    stats = cluster_stats(a - b, matrix.clusters)
    n_star_cluster = cluster_required_n(result.n_star_real, stats.de)
    return stats, result, n_star_cluster, result.n >= n_star_cluster


def cluster_bootstrap_verdicts(matrix, pair_list, b_reps, seed, config, draws=None):
    """Resample whole clusters with replacement and recompute ICC, DE and cluster N*.

    The per-pair marginals and correlation stay at their full-data values, so the
    IID N* is fixed and only the cluster structure varies. `draws` (b_reps x k
    cluster indices) replays a given resample instead of drawing one.

    Returns (table, counts): a per-pair DataFrame of point estimates, 5-95%
    percentile bounds and Pr(unresolved), and the unresolved-pair count of every
    replicate.
    """
    _require_clusters(matrix)
    if b_reps < 1:
        raise DataValidationError(f"b_reps must be >= 1, got {b_reps}")
    k = len(pd.unique(pd.Series(list(matrix.clusters), dtype="object")))
    if k < 2:
        raise DegenerateError(f"cluster bootstrap needs at least two clusters, got {k}", "too_few_clusters")
    if draws is None:
        draws = np.stack(
            [torch.randint(k, (k,), generator=task_generator(seed, rep)).numpy() for rep in range(b_reps)]
        )
    draws = np.asarray(draws)
    assert draws.shape == (b_reps, k)

    rows = []
    unresolved = np.zeros(b_reps, dtype=np.int64)
    for pair in pair_list:
        a, b = matrix.column(pair[0]), matrix.column(pair[1])
        full = resolve(summarize_pair(a, b), config)
        sizes, sums, sumsq = cluster_sufficient_stats(a - b, matrix.clusters)
        icc_pt, _ = _icc_point(sizes, sums, sumsq)
        de_pt = design_effect(icc_pt, sizes.sum() / k)

        r_sizes, r_sums, r_sumsq = sizes[draws], sums[draws], sumsq[draws]
        icc, _ = _icc_from_stats(r_sizes, r_sums, r_sumsq)
        m_bar = r_sizes.sum(-1) / k
        de = 1.0 + (m_bar - 1.0) * np.maximum(icc, 0.0)
        n_star = full.n_star_real * de
        flags = full.n < n_star * (1.0 - 1e-9)
        unresolved += flags
        logger.debug("cluster bootstrap %s vs %s: Pr(unresolved)=%.3f", pair[0], pair[1], flags.mean())
        rows.append(
            dict(
                pair=f"{pair[0]} vs {pair[1]}",
                icc_pt=icc_pt,
                icc_lo=float(np.quantile(icc, 0.05, method="inverted_cdf")),
                icc_hi=float(np.quantile(icc, 0.95, method="inverted_cdf")),
                de_pt=de_pt,
                de_lo=float(np.quantile(de, 0.05, method="inverted_cdf")),
                de_hi=float(np.quantile(de, 0.95, method="inverted_cdf")),
                nstar_pt=cluster_required_n(full.n_star_real, de_pt),
                nstar_lo=float(np.quantile(n_star, 0.05, method="inverted_cdf")),
                nstar_hi=float(np.quantile(n_star, 0.95, method="inverted_cdf")),
                pr_unresolved=float(flags.mean()),
            )
        )
    columns = ["pair", "icc_pt", "icc_lo", "icc_hi", "de_pt", "de_lo", "de_hi",
               "nstar_pt", "nstar_lo", "nstar_hi", "pr_unresolved"]
    return pd.DataFrame(rows, columns=columns), unresolved


def unresolved_histogram(counts, n_pairs):
    values = np.bincount(np.asarray(counts, dtype=np.int64), minlength=n_pairs + 1)
    return {int(i): int(v) for i, v in enumerate(values)}


def loso(matrix, pair_list, config):
    """Cluster-adjusted unresolved count with each cluster left out in turn."""
    _require_clusters(matrix)
    labels = list(dict.fromkeys(matrix.clusters))
    if len(labels) < 3:
        raise DataValidationError(f"leave-one-cluster-out needs at least 3 clusters, got {len(labels)}")
    rows = []
    clusters = np.asarray(matrix.clusters, dtype=object)
    for label in labels:
        sub = matrix.subset(clusters != label)
        count = sum(not cluster_pair_verdict(sub, pair, config)[3] for pair in pair_list)
        rows.append(dict(dropped=label, n_items=sub.n_items, unresolved=count))
    return pd.DataFrame(rows, columns=["dropped", "n_items", "unresolved"])


def relabel_clusters(matrix, scheme, k=14, seed=42):
    """Alternative cluster definitions.

    random: k labels drawn uniformly per item; difficulty_quartiles: quartiles of the
    per-item mean score across models; split_half: each existing cluster split by
    the parity of the item's position within it.
    """
    if scheme == "random":
        draws = torch.randint(k, (matrix.n_items,), generator=task_generator(seed, 0)).tolist()
        return matrix.with_clusters([f"random_{j}" for j in draws])
    if scheme == "difficulty_quartiles":
        if matrix.n_models < 2:
            raise DataValidationError("difficulty quartiles need at least two models")
        ranks = pd.Series(matrix.item_means()).rank(method="first")
        quartile = pd.qcut(ranks, 4, labels=["q1", "q2", "q3", "q4"])
        return matrix.with_clusters([str(q) for q in quartile])
    if scheme == "split_half":
        if matrix.clusters is None:
            raise DataValidationError("split_half needs existing cluster labels")
        seen = {}
        labels = []
        for label in matrix.clusters:
            position = seen.get(label, 0)
            seen[label] = position + 1
            labels.append(f"{label}/{'even' if position % 2 == 0 else 'odd'}")
        return matrix.with_clusters(labels)
    raise DataValidationError(f"Invalid relabel scheme {scheme!r}; expected one of {SCHEMES}")
