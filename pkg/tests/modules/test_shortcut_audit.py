import math

import numpy as np
import pytest

from paired_resolution.errors import DataValidationError
from paired_resolution.models.config_resolution import TestConfig
from paired_resolution.modules.shortcut_audit import (
    admissible_delta_star,
    calculator_conventions,
    cohens_h,
    lemma_constant,
    lemma_numeric_audit,
    shortcut_n,
    shortcut_report,
)


@pytest.fixture
def config():
    return TestConfig()


def test_worked_example(config):
    assert cohens_h(0.65, 0.60) == pytest.approx(0.103322, abs=1e-6)
    assert shortcut_n(0.65, 0.60, 0.30, config) == (736, 515)
    report = shortcut_report(0.65, 0.60, 0.30, config)
    assert report.n_star == 1028
    assert report.ratio == pytest.approx(0.501, abs=1e-3)


@pytest.mark.parametrize('rho', [0.0, 0.3, 0.6, 0.9])
def test_constant_at_midpoint(rho):
    assert lemma_constant(0.5, rho) == pytest.approx(1 / 3, abs=1e-12)


def test_constants():
    assert lemma_constant(0.65, 0.0) == pytest.approx(0.31196, abs=1e-4)
    assert lemma_constant(0.8, 0.5) == pytest.approx(0.7975, abs=1e-3)
    assert lemma_constant(0.65, 0.3) == pytest.approx(0.26539, abs=1e-4)
    assert admissible_delta_star(0.65, 0.3, 0.05) == pytest.approx(0.43405, abs=1e-4)
    with pytest.raises(DataValidationError):
        lemma_constant(0.5, 1.0)
    with pytest.raises(DataValidationError):
        admissible_delta_star(0.5, 0.0, 0.6)


def test_equal_marginals(config):
    assert shortcut_n(0.7, 0.7, 0.2, config) == (math.inf, math.inf)
    report = shortcut_report(0.6, 0.6, 0.3, config)
    assert report.h == 0.0
    assert report.n_per_arm == report.n_h == report.n_star == math.inf
    assert math.isnan(report.ratio)
    assert report.c_constant == pytest.approx(lemma_constant(0.6, 0.3))
    rows = calculator_conventions(0.6, 0.6, 0.3, config)
    assert all(v == math.inf for v in rows.values())
    with pytest.raises(DataValidationError):
        shortcut_report(0.6, 0.6, 1.5, config)


def test_calculator_conventions(config):
    rows = calculator_conventions(0.65, 0.60, 0.30, config)
    assert rows["cohen_per_arm"] == 736
    assert rows["cohen_per_arm_paired"] == 515
    assert rows["cohen_total"] in (1470, 1471)
    assert rows["cohen_total_paired"] == math.ceil(0.7 * 2 * config.k_const / cohens_h(0.65, 0.60) ** 2)
    assert rows["paired_n_star"] == 1028


def test_numeric_audit(config):
    deltas = (0.005, 0.01, 0.02, 0.05, 0.1, 0.2)
    audit = lemma_numeric_audit((0.5, 0.65, 0.8), (0.0, 0.3, 0.5), deltas, config)
    assert len(audit) == 54
    cells = audit[~audit.skipped]
    assert len(cells) >= 50
    mid = cells[cells.p == 0.5]
    assert mid[mid.delta == 0.05].deviation.max() <= 0.00084
    assert mid[mid.delta == 0.2].deviation.max() <= 0.014
    # off the midpoint the bound scales with C(p, rho): 0.0020 at p=0.8, rho=0.5
    assert cells[cells.delta == 0.05].deviation.max() <= 0.0021
    assert cells[cells.delta == 0.2].deviation.max() <= 0.038
    leading = cells[cells.delta <= 0.05]
    assert np.all(leading.deviation <= leading.c_pred * leading.delta ** 2 * 1.2 + 1e-12)
    rel_err = ((leading.c_obs - leading.c_pred) / leading.c_pred).abs()
    assert rel_err.median() <= 0.005


def test_numeric_audit_skips_zero_gap(config):
    audit = lemma_numeric_audit((0.5, 0.65), (0.0, 0.3), (0.0, 0.05), config)
    assert len(audit) == 8
    zero = audit[audit.delta == 0.0]
    assert zero.skipped.all()
    assert zero.ratio.isna().all()
    assert not audit[audit.delta == 0.05].skipped.any()
