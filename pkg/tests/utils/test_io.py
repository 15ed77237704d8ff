import warnings

import numpy as np
import pandas as pd
import pytest

from paired_resolution.errors import DataValidationError
from paired_resolution.models.score_matrix import CountsTable, ScoreMatrix
from paired_resolution.utils.io import counts_row, load_score_matrix, write_frame, write_score_matrix


def _csv(tmp_path, text, name="scores.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_tiny_binary(fixtures_dir):
    matrix = load_score_matrix(fixtures_dir / "tiny_binary.csv")
    assert isinstance(matrix, ScoreMatrix)
    assert matrix.n_items == 4 and matrix.binary and matrix.clusters is None
    assert matrix.model_names == ["model_x", "model_y"]
    assert matrix.model_means() == {"model_x": 0.75, "model_y": 0.5}


def test_clustered_graded(tmp_path):
    path = _csv(tmp_path, "item_id,cluster,a,b\nq1,law,0.5,0.25\nq2,law,1,0\nq3,math,0.75,0.75\n")
    matrix = load_score_matrix(path)
    assert not matrix.binary
    assert matrix.clusters == ["law", "law", "math"]
    assert matrix.column("a").tolist() == [0.5, 1.0, 0.75]


def test_counts_table(oll_path):
    table = load_score_matrix(oll_path)
    assert isinstance(table, CountsTable) and table.n_pairs == 7
    hellaswag = {p.pair: p for p in table.pairs}["hellaswag"]
    assert (hellaswag.summary.b, hellaswag.summary.c, hellaswag.summary.n) == (295, 249, 10042)
    assert hellaswag.rho_supplied == pytest.approx(0.81)


def test_counts_row_reproduces_summary():
    row = counts_row("hellaswag", 10042, 0.8247, 0.8202, 295, 249, rho=0.81)
    summary = row.summary
    assert summary.p_a == pytest.approx(0.8247, abs=1e-4)
    assert summary.p_b == pytest.approx(0.8202, abs=1e-4)
    assert summary.rho_hat == pytest.approx(0.8146, abs=1e-3)
    assert summary.binary


def test_rho_mismatch_warns():
    with pytest.warns(UserWarning, match="phi"):
        counts_row("hellaswag", 10042, 0.8247, 0.8202, 295, 249, rho=0.5)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        counts_row("hellaswag", 10042, 0.8247, 0.8202, 295, 249, rho=0.81)


def test_counts_must_form_a_table():
    with pytest.raises(DataValidationError):
        counts_row("bad", 100, 0.1, 0.1, 60, 60)


@pytest.mark.parametrize('text, row, column', [
    ("item_id,m1,m2\nq1,1,0\nq2,1.5,0\n", 3, "m1"),
    ("item_id,m1,m2\nq1,1,0\nq2,x,0\n", 3, "m1"),
    ("item_id,m1,m2\nq1,1,0\nq1,0,0\n", 3, "item_id"),
    ("item_id,m1,m1\nq1,1,0\n", 1, "m1"),
    ("item_id,m1,m2\nq1,1,0\nq2,1\n", 3, None),
    ("item_id,m1,m2\nq1,1,0\nq2,1,0,1\n", 3, None),
])
def test_malformed_cells_are_located(tmp_path, text, row, column):
    with pytest.raises(DataValidationError) as info:
        load_score_matrix(_csv(tmp_path, text))
    assert info.value.row == row
    assert info.value.column == column


def test_bad_header(tmp_path):
    with pytest.raises(DataValidationError):
        load_score_matrix(_csv(tmp_path, "id,m1\nq1,1\n"))
    with pytest.raises(DataValidationError):
        load_score_matrix(_csv(tmp_path, "item_id\nq1\n"))
    with pytest.raises(DataValidationError):
        load_score_matrix(_csv(tmp_path, "pair,N,p_a\nx,10,0.5\n"))
    with pytest.raises(DataValidationError):
        load_score_matrix(_csv(tmp_path, ""))
    with pytest.raises(DataValidationError):
        load_score_matrix(_csv(tmp_path, "item_id,m1\nq1,1\n"), format="parquet")


def test_write_then_load(tmp_path):
    matrix = ScoreMatrix(["a", "b", "c"], ["x", "y"], np.array([[1, 0], [0, 0], [1, 1]]), ["s1", "s1", "s2"])
    path = tmp_path / "out.csv"
    write_score_matrix(matrix, path)
    assert path.read_text().splitlines()[:2] == ["item_id,cluster,x,y", "a,s1,1,0"]
    loaded = load_score_matrix(path)
    np.testing.assert_array_equal(loaded.scores, matrix.scores)
    assert loaded.clusters == matrix.clusters


def test_write_frame_keeps_precision(tmp_path):
    path = tmp_path / "frame.csv"
    write_frame(pd.DataFrame({"n": [1, 2], "value": [1 / 3, 2 / 3]}), path)
    frame = pd.read_csv(path)
    assert frame.value.tolist() == [1 / 3, 2 / 3]
