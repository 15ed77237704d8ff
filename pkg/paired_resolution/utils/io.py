"""CSV ingestion for score matrices and counts-only tables, and CSV emission.

Row numbers in error messages are file line numbers, the header being line 1.
"""

import logging
import re
import warnings

import numpy as np
import pandas as pd

from paired_resolution.errors import DataValidationError
from paired_resolution.models.score_matrix import CountsTable, PairCounts, ScoreMatrix
from paired_resolution.modules.paired_core import summary_from_counts

logger = logging.getLogger(__name__)

FORMATS = ("auto", "scores", "counts")
COUNTS_COLUMNS = ["pair", "N", "p_a", "p_b", "b", "c"]
RHO_MISMATCH_TOL = 0.02


def _read_cells(path):
    """Header and data cells of a CSV file, as strings."""
    try:
        header = pd.read_csv(path, header=None, nrows=1, dtype=str, keep_default_na=False).iloc[0].tolist()
    except pd.errors.EmptyDataError:
        raise DataValidationError(f"{path} is empty") from None
    header = [h.strip() for h in header]
    seen = set()
    for name in header:
        if name in seen:
            raise DataValidationError(f"duplicate column {name!r}", row=1, column=name)
        seen.add(name)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        row = int(match.group(1)) if match else None
        raise DataValidationError(f"ragged row: expected {len(header)} fields", row=row) from None
    frame.columns = header
    # short rows are padded with NaN even with keep_default_na=False
    short = frame.isna().any(axis=1).to_numpy()
    if short.any():
        raise DataValidationError(f"ragged row: expected {len(header)} fields", row=int(np.argmax(short)) + 2)
    return header, frame


def _decimal_column(frame, name):
    values = pd.to_numeric(frame[name].str.strip(), errors="coerce")
    bad = values.isna().to_numpy()
    if bad.any():
        row = int(np.argmax(bad))
        raise DataValidationError(f"{frame[name].iloc[row]!r} is not a decimal", row=row + 2, column=name)
    return values.to_numpy(dtype=np.float64)


def _integer_column(frame, name):
    values = _decimal_column(frame, name)
    bad = (values != np.round(values)) | (values < 0)
    if bad.any():
        row = int(np.argmax(bad))
        raise DataValidationError(f"{values[row]} is not a count", row=row + 2, column=name)
    return values.astype(np.int64)


def _first_duplicate(values):
    dupes = pd.Series(values).duplicated().to_numpy()
    return int(np.argmax(dupes)) if dupes.any() else None


def _load_scores(header, frame):
    if header[0] != "item_id":
        raise DataValidationError(f"first column must be 'item_id', got {header[0]!r}", row=1, column=header[0])
    clustered = len(header) > 1 and header[1] == "cluster"
    models = header[2:] if clustered else header[1:]
    if not models:
        raise DataValidationError("the score matrix has no model columns", row=1)
    items = frame["item_id"].str.strip().tolist()
    dupe = _first_duplicate(items)
    if dupe is not None:
        raise DataValidationError(f"duplicate item_id {items[dupe]!r}", row=dupe + 2, column="item_id")
    if not items:
        raise DataValidationError("the score matrix has no items")
    scores = np.stack([_decimal_column(frame, name) for name in models], axis=1)
    bad = (scores < 0.0) | (scores > 1.0)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise DataValidationError(f"score {scores[row, col]} outside [0, 1]", row=int(row) + 2, column=models[col])
    clusters = frame["cluster"].str.strip().tolist() if clustered else None
    matrix = ScoreMatrix(items, models, scores, clusters)
    logger.info("loaded %d items x %d models (binary=%s, clustered=%s)", matrix.n_items, matrix.n_models,
                matrix.binary, clustered)
    return matrix


def counts_row(pair, n, p_a, p_b, b, c, rho=None, row=None):
    """PairCounts from published sufficient statistics.

    The concordant-correct count is rebuilt as n11 = round(mean(p_a, p_b) n - (b + c) / 2).
    A supplied rho that differs from the phi coefficient of the rebuilt table by more
    than 0.02 triggers a warning; the rebuilt table wins.
    """
    n11 = int(round((p_a + p_b) / 2.0 * n - (b + c) / 2.0))
    n00 = int(n) - n11 - int(b) - int(c)
    if n11 < 0 or n00 < 0:
        raise DataValidationError(f"counts of pair {pair!r} do not form a 2x2 table with N={n}", row=row)
    summary = summary_from_counts(n11, int(b), int(c), n00)
    if rho is not None and abs(rho - summary.rho_hat) > RHO_MISMATCH_TOL:
        warnings.warn(
            f"pair {pair!r}: supplied rho={rho:.3f} but the counts give phi={summary.rho_hat:.3f}", UserWarning
        )
    return PairCounts(pair=pair, summary=summary, rho_supplied=rho)


def _load_counts(header, frame):
    missing = [name for name in COUNTS_COLUMNS if name not in header]
    if missing:
        raise DataValidationError(f"counts table is missing column {missing[0]!r}", row=1)
    labels = frame["pair"].str.strip().tolist()
    dupe = _first_duplicate(labels)
    if dupe is not None:
        raise DataValidationError(f"duplicate pair {labels[dupe]!r}", row=dupe + 2, column="pair")
    n, b, c = (_integer_column(frame, name) for name in ("N", "b", "c"))
    p_a, p_b = _decimal_column(frame, "p_a"), _decimal_column(frame, "p_b")
    for name, values in (("p_a", p_a), ("p_b", p_b)):
        bad = (values < 0.0) | (values > 1.0)
        if bad.any():
            row = int(np.argmax(bad))
            raise DataValidationError(f"accuracy {values[row]} outside [0, 1]", row=row + 2, column=name)
    rho = _decimal_column(frame, "rho") if "rho" in header else [None] * len(labels)
    pairs = [
        counts_row(labels[i], int(n[i]), float(p_a[i]), float(p_b[i]), int(b[i]), int(c[i]),
                   None if rho[i] is None else float(rho[i]), row=i + 2)
        for i in range(len(labels))
    ]
    logger.info("loaded %d pairs from a counts table", len(pairs))
    return CountsTable(pairs)


def load_score_matrix(path, format="auto"):
    """Read a score matrix (`item_id[,cluster],<models>`) or a counts-only table
    (`pair,N,p_a,p_b,b,c[,rho]`). "auto" picks the counts reader when the first
    column is `pair`. Returns a ScoreMatrix or a CountsTable."""
    if format not in FORMATS:
        raise DataValidationError(f"Invalid input format {format!r}; expected one of {FORMATS}")
    header, frame = _read_cells(path)
    if format == "counts" or (format == "auto" and header[0] == "pair"):
        return _load_counts(header, frame)
    return _load_scores(header, frame)


def score_matrix_frame(matrix):
    frame = pd.DataFrame(matrix.scores, columns=matrix.model_names)
    if matrix.clusters is not None:
        frame.insert(0, "cluster", matrix.clusters)
    frame.insert(0, "item_id", matrix.items)
    return frame


def write_score_matrix(matrix, path):
    frame = score_matrix_frame(matrix)
    if matrix.binary:
        frame[matrix.model_names] = frame[matrix.model_names].astype(int)
    frame.to_csv(path, index=False)


def write_frame(frame, path):
    """Plot-ready CSV: one header row, no index, full float precision."""
    frame.to_csv(path, index=False, float_format="%.17g")
