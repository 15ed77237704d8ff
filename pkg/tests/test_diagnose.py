import json
import math

import numpy as np
import pytest

from paired_resolution.errors import DataValidationError
from paired_resolution.models.config_resolution import TestConfig
from paired_resolution.models.diagnose import (
    BUCKET_LABELS,
    PROCEDURES,
    diagnose,
    emit_report,
    enumerate_pairs,
    parse_report,
)
from paired_resolution.models.score_matrix import CountsTable, ScoreMatrix
from paired_resolution.modules.resample_sim import bootstrap_test_from_summary, nstar_ci_from_summary
from paired_resolution.utils.io import load_score_matrix


@pytest.fixture
def mmlu(mmlu_path):
    return load_score_matrix(mmlu_path)


def _binary_matrix(n=400, accuracies=(0.8, 0.7, 0.6), clusters=None, seed=0):
    rng = np.random.default_rng(seed)
    scores = (rng.uniform(size=(n, 1)) * 0.5 + rng.uniform(size=(n, len(accuracies))) * 0.5
              < np.asarray(accuracies)).astype(float)
    names = [f"m{j}" for j in range(len(accuracies))]
    return ScoreMatrix([f"i{j}" for j in range(n)], names, scores, clusters)


def test_mmlu_unresolved_counts(mmlu):
    report = diagnose(mmlu, TestConfig(multiplicity="bonferroni"))
    unresolved = report.family_summary["unresolved"]
    assert report.family_summary["m"] == 9
    assert unresolved["fixed_n"] == 4
    assert unresolved["family"] == 4
    assert unresolved["anytime"] == 5
    assert unresolved["cluster"] is None
    flipped = [v.pair for v in report.pairs if v.resolved["fixed_n"] and not v.resolved["anytime"]]
    assert flipped == ["5v6"]
    assert {v.pair for v in report.pairs if not v.resolved["fixed_n"]} == {"3v4", "6v7", "8v9", "9v10"}


def test_stress_tests_only_remove_resolutions(mmlu):
    for method in ("none", "bonferroni", "sidak", "holm", "bh"):
        report = diagnose(mmlu, TestConfig(multiplicity=method))
        for v in report.pairs:
            for procedure in PROCEDURES[1:]:
                if v.resolved[procedure]:
                    assert v.resolved["fixed_n"]


def test_resolution_matches_wald_statistic(mmlu):
    config = TestConfig()
    for v in diagnose(mmlu, config).pairs:
        assert v.resolved["fixed_n"] == (v.t_stat ** 2 >= config.k_const)
        assert v.q == pytest.approx(v.t_stat ** 2 / config.k_const, rel=1e-9)
        assert v.n_star_iid == pytest.approx(v.n_star_discordance, rel=0.012)


def test_identical_columns_are_beyond_resolution():
    scores = np.array([[1, 1], [0, 0], [1, 1], [1, 1], [0, 0]], dtype=float)
    report = diagnose(ScoreMatrix([f"q{j}" for j in range(5)], ["x", "y"], scores))
    (v,) = report.pairs
    assert v.beyond_resolution and v.n_star_iid == math.inf and v.q == 0.0 and v.r == math.inf
    assert v.p_chi2 == 1.0 and v.p_exact == 1.0
    assert not any(v.resolved[procedure] for procedure in PROCEDURES if v.resolved[procedure] is not None)
    payload = json.loads(emit_report(report, "json"))
    assert payload["pairs"][0]["n_star_iid"] == "inf"


def test_empty_family():
    report = diagnose(CountsTable([]))
    assert report.pairs == [] and report.family_summary["pairs"] == 0
    assert report.family_summary["unresolved"]["fixed_n"] == 0
    assert b"(no pairs)" in emit_report(report)
    assert parse_report(emit_report(report, "json")) == report


def test_json_round_trip(mmlu):
    report = diagnose(mmlu, TestConfig(multiplicity="holm"))
    assert parse_report(emit_report(report, "json")) == report
    payload = json.loads(emit_report(report, "json"))
    assert payload["schema_version"] == "1.0"
    payload["schema_version"] = "2.0"
    with pytest.raises(DataValidationError):
        parse_report(json.dumps(payload))


def test_buckets(mmlu):
    buckets = diagnose(mmlu).buckets
    assert [b["bucket"] for b in buckets] == list(BUCKET_LABELS)
    assert [b["pairs"] for b in buckets] == [5, 3, 0, 1, 0]
    assert [b["unresolved"] for b in buckets] == [4, 0, 0, 0, 0]
    assert buckets[2]["r_median"] is None
    assert buckets[0]["r_worst"] > 100


def test_checklist(mmlu):
    rows = diagnose(mmlu, TestConfig(multiplicity="bonferroni")).checklist
    assert [r["quantity"] for r in rows] == [
        "delta_hat", "paired_test", "N", "mde", "q", "nstar_ci", "multiplicity", "per_item_raw",
    ]
    values = {r["quantity"]: r["value"] for r in rows}
    assert values["N"] == "12032"
    assert values["q"] == "5/9 pairs with q >= 1"
    assert values["multiplicity"] == "bonferroni, m=9"
    assert values["per_item_raw"] == "no (counts only)"


def test_diagnose_is_deterministic():
    matrix = _binary_matrix()
    assert diagnose(matrix) == diagnose(matrix)


def test_families_and_ranking():
    matrix = _binary_matrix()
    assert [v.pair for v in diagnose(matrix).pairs] == ["m0 vs m1", "m1 vs m2"]
    report = diagnose(matrix, TestConfig(family="all-pairs"))
    assert [v.pair for v in report.pairs] == ["m0 vs m1", "m0 vs m2", "m1 vs m2"]
    assert report.family_summary["m"] == 3
    assert enumerate_pairs({"b": 0.5, "a": 0.5, "c": 0.9}) == [("c", "a"), ("a", "b")]
    with pytest.raises(DataValidationError):
        diagnose(ScoreMatrix(["q1", "q2"], ["solo"], np.array([[1.0], [0.0]])))


def test_cluster_columns_need_labels():
    plain = diagnose(_binary_matrix())
    assert all(v.icc is None and v.resolved["cluster"] is None for v in plain.pairs)
    labels = [f"s{j % 8}" for j in range(400)]
    clustered = diagnose(_binary_matrix(clusters=labels))
    for v in clustered.pairs:
        assert v.design_effect >= 1.0
        assert v.n_star_cluster >= v.n_star_real - 1e-9
        assert v.resolved["cluster"] is not None
    assert clustered.family_summary["unresolved"]["cluster"] is not None


def test_graded_pairs_skip_mcnemar():
    rng = np.random.default_rng(4)
    scores = np.clip(rng.uniform(size=(300, 2)) + [0.1, 0.0], 0.0, 1.0)
    (v,) = diagnose(ScoreMatrix([f"q{j}" for j in range(300)], ["a", "b"], scores)).pairs
    assert v.p_chi2 is None and v.anytime_factor is None and v.resolved["anytime"] is None
    assert v.p_test == v.p_wald


def test_small_discordance_warns(fixtures_dir):
    with pytest.warns(UserWarning, match="discordant"):
        report = diagnose(load_score_matrix(fixtures_dir / "tiny_binary.csv"))
    assert report.pairs[0].pair == "model_x vs model_y"
    assert b"unresolved: fixed_n=" in emit_report(report)


def test_bootstrap_test_and_interval_use_separate_streams():
    matrix = _binary_matrix(accuracies=(0.8, 0.75, 0.7, 0.6))
    config = TestConfig(bootstrap_reps=500, nstar_ci_reps=500, seed=4)
    report = diagnose(matrix, config)
    for i, v in enumerate(report.pairs):
        d = matrix.column(v.model_a) - matrix.column(v.model_b)
        boot = bootstrap_test_from_summary(v.summary, config.alpha, 500, 4, d=d, stream=(0, i))
        ci = nstar_ci_from_summary(v.summary, 500, config.unadjusted(), 4, d=d, stream=(1, i))
        assert v.p_bootstrap == pytest.approx(float(boot.p_value), rel=1e-12)
        assert v.nstar_ci == pytest.approx((float(ci[0]), float(ci[1])), rel=1e-12)


def test_family_test_summary():
    config = TestConfig(multiplicity="bonferroni", bootstrap_reps=200)
    report = diagnose(_binary_matrix(accuracies=(0.8, 0.75, 0.7, 0.6)), config)
    test = report.family_summary["test"]
    assert test["adjusted_alpha"] == pytest.approx(0.05 / 3)
    assert test["inflation"] > 1.0
    assert test["rejected"] == sum(v.p_test <= 0.05 / 3 for v in report.pairs)
    assert "family test (bonferroni, m=3)" in emit_report(report).decode()
    assert diagnose(_binary_matrix(), TestConfig(multiplicity="none", bootstrap_reps=200)).family_summary["test"] is not None
