from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from paired_resolution.errors import DataValidationError
from paired_resolution.modules.paired_core import PairedSummary


@dataclass
class ScoreMatrix:
    """N items x K models of scores in [0, 1], with optional per-item cluster labels."""

    items: List[str]
    model_names: List[str]
    scores: np.ndarray  # (n_items, n_models), float64
    clusters: Optional[List[str]] = None
    binary: bool = field(init=False)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 2:
            raise DataValidationError("scores must be a two-dimensional items x models array")
        n, k = self.scores.shape
        if n < 1:
            raise DataValidationError("score matrix has no items")
        if len(self.items) != n:
            raise DataValidationError(f"{len(self.items)} item ids for {n} score rows")
        if len(self.model_names) != k:
            raise DataValidationError(f"{len(self.model_names)} model names for {k} score columns")
        if len(set(self.model_names)) != k:
            raise DataValidationError("duplicate model names")
        if len(set(self.items)) != n:
            raise DataValidationError("duplicate item ids")
        if not np.all(np.isfinite(self.scores)):
            row, col = np.argwhere(~np.isfinite(self.scores))[0]
            raise DataValidationError("non-finite score", row=int(row), column=self.model_names[col])
        bad = (self.scores < 0.0) | (self.scores > 1.0)
        if bad.any():
            row, col = np.argwhere(bad)[0]
            raise DataValidationError(
                f"score {self.scores[row, col]} outside [0, 1]", row=int(row), column=self.model_names[col]
            )
        if self.clusters is not None and len(self.clusters) != n:
            raise DataValidationError(f"{len(self.clusters)} cluster labels for {n} items")
        self.binary = bool(np.all((self.scores == 0.0) | (self.scores == 1.0)))

    @property
    def n_items(self):
        return self.scores.shape[0]

    @property
    def n_models(self):
        return self.scores.shape[1]

    def column(self, name):
        try:
            return self.scores[:, self.model_names.index(name)]
        except ValueError:
            raise DataValidationError(f"unknown model {name!r}") from None

    def model_means(self):
        return dict(zip(self.model_names, self.scores.mean(axis=0).tolist()))

    def item_means(self):
        return self.scores.mean(axis=1)

    def with_clusters(self, clusters):
        return ScoreMatrix(list(self.items), list(self.model_names), self.scores.copy(), list(clusters))

    def subset(self, mask):
        mask = np.asarray(mask, dtype=bool)
        clusters = None if self.clusters is None else [c for c, keep in zip(self.clusters, mask) if keep]
        items = [i for i, keep in zip(self.items, mask) if keep]
        return ScoreMatrix(items, list(self.model_names), self.scores[mask], clusters)


@dataclass
class PairCounts:
    """One pair of a counts-only table: a label, its 2x2 summary and the correlation
    printed next to it, if any."""

    pair: str
    summary: PairedSummary
    rho_supplied: Optional[float] = None


@dataclass
class CountsTable:
    pairs: List[PairCounts]

    def __post_init__(self):
        labels = [p.pair for p in self.pairs]
        if len(set(labels)) != len(labels):
            raise DataValidationError("duplicate pair labels")

    @property
    def n_pairs(self):
        return len(self.pairs)
