# Copyright (c) 2025, paired-resolution authors.
"""End-to-end diagnose pipeline: every pair of a family gets its paired tests,
required N, resolution ratio and the stress-tested resolved flags, then the family
is summarised by |delta| bucket and by the reporting checklist.

Each stress test (family multiplicity, anytime validity, clustering) can only
remove resolutions granted by the fixed-n test.
"""

import itertools
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, fields, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from packaging.version import Version
from scipy import special

from paired_resolution.errors import DataValidationError
from paired_resolution.models.config_resolution import TestConfig
from paired_resolution.models.score_matrix import CountsTable
from paired_resolution.modules.anytime_eprocess import threshold_inflation_at
from paired_resolution.modules.binary_tests import mcnemar_pvalues, required_n_mcnemar
from paired_resolution.modules.cluster_corrections import cluster_required_n, cluster_stats
from paired_resolution.modules.family_multiplicity import FIXED_METHODS, family_verdict
from paired_resolution.modules.paired_core import (
    PairedSummary,
    efficiency_ratio,
    required_n,
    resolve,
    rho_sensitivity,
    summarize_pair,
)
from paired_resolution.modules.resample_sim import bootstrap_test_from_summary, nstar_ci_from_summary

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
PROCEDURES = ("fixed_n", "family", "anytime", "cluster")
BUCKET_EDGES = (0.01, 0.02, 0.05, 0.15)
BUCKET_LABELS = ("<1%", "1-2%", "2-5%", "5-15%", ">=15%")
SMALL_DISCORDANT = 10


@dataclass
class PairVerdict:
    pair: str
    model_a: Optional[str]  # None for rows of a counts-only table
    model_b: Optional[str]
    summary: PairedSummary
    p_chi2: Optional[float]  # McNemar family, binary pairs only
    p_exact: Optional[float]
    p_midp: Optional[float]
    p_cc: Optional[float]
    p_bootstrap: float
    p_wald: float
    t_stat: float
    n_star_iid: float
    n_star_real: float
    n_star_discordance: Optional[float]
    n_star_family: float
    n_star_cluster: Optional[float]
    q: float
    r: float  # N* / N
    mde: float
    nstar_ci: Tuple[float, float]
    rho_sensitivity: Optional[Tuple[float, float]]
    efficiency_ratio: Optional[float]
    icc: Optional[float]
    design_effect: Optional[float]
    anytime_factor: Optional[float]
    resolved: Dict[str, Optional[bool]]
    beyond_resolution: bool

    @property
    def p_test(self):
        """p-value the family procedures act on: McNemar chi2 for binary pairs, Wald otherwise."""
        return self.p_chi2 if self.summary.binary else self.p_wald


@dataclass
class DiagnoseReport:
    config: dict
    source: str  # "scores" or "counts"
    pairs: List[PairVerdict]
    family_summary: dict
    buckets: List[dict]
    checklist: List[dict]
    schema_version: str = SCHEMA_VERSION


def enumerate_pairs(model_means, family="adjacent"):
    """Ordered (higher, lower) model pairs, ranked by mean score descending with
    ties broken by name."""
    ranked = sorted(model_means, key=lambda name: (-model_means[name], name))
    if family == "adjacent":
        return list(zip(ranked[:-1], ranked[1:]))
    if family == "all-pairs":
        return list(itertools.combinations(ranked, 2))
    raise DataValidationError(f"Invalid family {family!r}")


def _entries(data, config):
    if isinstance(data, CountsTable):
        if config.family != "adjacent":
            logger.debug("counts table: the family is the listed rows, ignoring family=%s", config.family)
        return [(p.pair, None, None, p.summary, None) for p in data.pairs], None
    if data.n_models < 2:
        raise DataValidationError(f"diagnose needs at least two models, got {data.n_models}")
    entries = []
    for name_a, name_b in enumerate_pairs(data.model_means(), config.family):
        a, b = data.column(name_a), data.column(name_b)
        entries.append((f"{name_a} vs {name_b}", name_a, name_b, summarize_pair(a, b), a - b))
    return entries, data.clusters


def _interior(summary):
    return 0.0 < summary.p_a < 1.0 and 0.0 < summary.p_b < 1.0


def _pair_verdict(index, entry, clusters, config, base):
    label, name_a, name_b, summary, d = entry
    result = resolve(summary, base)
    n = summary.n
    logger.debug("%s: delta=%.4f N*=%s q=%.3f", label, summary.delta_hat, result.n_star, result.q)

    p = dict(chi2=None, exact=None, midp=None, cc=None)
    n_star_disc = None
    if summary.binary:
        if 0 < summary.b + summary.c < SMALL_DISCORDANT:
            warnings.warn(f"{label}: only {summary.b + summary.c} discordant items", UserWarning)
        p = {k: float(v) for k, v in mcnemar_pvalues(summary.b, summary.c).items()}
        n_star_disc = required_n_mcnemar(summary.b, summary.c, n, base)
    # test and N* interval draw from separate streams of the same seed
    boot = bootstrap_test_from_summary(
        summary, config.alpha, config.bootstrap_reps, config.seed, d=d, stream=(0, index)
    )
    ci = nstar_ci_from_summary(summary, config.nstar_ci_reps, base, config.seed, d=d, stream=(1, index))

    sensitivity = efficiency = None
    if summary.binary and _interior(summary):
        sensitivity = rho_sensitivity(summary.p_a, summary.p_b, summary.rho_hat, base, shift=config.rho_shift)
        efficiency = efficiency_ratio(summary.p_a, summary.p_b, summary.rho_hat, base)

    icc = de = n_star_cluster = None
    if clusters is not None:
        stats = cluster_stats(d, clusters)
        icc, de = stats.icc, stats.de
        n_star_cluster = cluster_required_n(result.n_star_real, de)

    anytime_factor = None
    if summary.binary:
        psi = config.anytime_psi or summary.psi
        if result.beyond_resolution or psi == 0.0:
            anytime_factor = math.inf
        else:
            anytime_factor = threshold_inflation_at(n, config.alpha, config.eprocess_grid, psi=psi, power=config.power)

    resolved = dict(
        fixed_n=bool(result.resolved),
        family=None,
        anytime=None if anytime_factor is None else bool(result.resolved and result.q >= anytime_factor),
        cluster=None if n_star_cluster is None else bool(result.resolved and n >= n_star_cluster),
    )
    return PairVerdict(
        pair=label,
        model_a=name_a,
        model_b=name_b,
        summary=summary,
        p_chi2=p["chi2"],
        p_exact=p["exact"],
        p_midp=p["midp"],
        p_cc=p["cc"],
        p_bootstrap=float(boot.p_value),
        p_wald=float(special.erfc(abs(result.t_stat) / math.sqrt(2.0))),
        t_stat=float(result.t_stat),
        n_star_iid=result.n_star,
        n_star_real=float(result.n_star_real),
        n_star_discordance=n_star_disc,
        n_star_family=result.n_star,
        n_star_cluster=n_star_cluster,
        q=float(result.q),
        r=math.inf if result.q == 0.0 else result.n_star / n,
        mde=float(result.mde),
        nstar_ci=(float(ci[0]), float(ci[1])),
        rho_sensitivity=sensitivity,
        efficiency_ratio=efficiency,
        icc=icc,
        design_effect=de,
        anytime_factor=anytime_factor,
        resolved=resolved,
        beyond_resolution=bool(result.beyond_resolution),
    )


def _n_star_at(summary, config):
    if summary.sigma_d_hat <= 0.0:
        return math.inf
    return required_n(summary.delta_hat, summary.sigma_d_hat, config)


def _apply_family(verdicts, config, m):
    """Fill n_star_family and resolved["family"] in place and return the FamilyVerdict
    of the family test on the pairs' p-values (None for an empty family)."""
    if not verdicts:
        return None
    method = config.multiplicity
    test = family_verdict([v.p_test for v in verdicts], config.alpha, method, beta=config.beta, m=m)
    if method == "none":
        for v in verdicts:
            v.resolved["family"] = v.resolved["fixed_n"]
        return test
    if method in FIXED_METHODS:
        family_config = replace(config, family_size=m)
        for v in verdicts:
            v.n_star_family = _n_star_at(v.summary, family_config)
            v.resolved["family"] = v.resolved["fixed_n"] and v.summary.n >= v.n_star_family
        return test
    # stepwise: the family size is the number of p-values on the table
    base = config.unadjusted()
    for v, flag, level in zip(verdicts, test.reject_flags, test.position_alphas):
        v.n_star_family = _n_star_at(v.summary, replace(base, alpha=float(level)))
        v.resolved["family"] = bool(v.resolved["fixed_n"] and flag and v.summary.n >= v.n_star_family)
    return test


def _unresolved(verdicts, procedure):
    flags = [v.resolved[procedure] for v in verdicts]
    if verdicts and any(f is None for f in flags):
        return None
    return sum(not f for f in flags)


def _family_summary(verdicts, config, m, test):
    summary = dict(
        pairs=len(verdicts),
        m=m,
        method=config.multiplicity,
        unresolved={proc: _unresolved(verdicts, proc) for proc in PROCEDURES},
        test=None,
        rho_sensitivity=None,
    )
    if test is not None:
        summary["test"] = dict(
            adjusted_alpha=test.adjusted_alpha,
            inflation=test.inflation,
            rejected=sum(test.reject_flags),
        )
    if verdicts and all(v.rho_sensitivity is not None for v in verdicts):
        # unresolved counts with rho moved down / up by the configured shift
        summary["rho_sensitivity"] = dict(
            rho_minus=sum(v.summary.n < v.rho_sensitivity[0] for v in verdicts),
            rho_plus=sum(v.summary.n < v.rho_sensitivity[1] for v in verdicts),
        )
    return summary


def bucket_table(verdicts):
    """Pairs, fixed-n unresolved count and the median / worst r = N*/N per |delta| bucket."""
    gaps = pd.Series([abs(v.summary.delta_hat) for v in verdicts], dtype=np.float64)
    buckets = pd.cut(gaps, bins=[0.0, *BUCKET_EDGES, math.inf], right=False, labels=BUCKET_LABELS)
    rows = []
    for label in BUCKET_LABELS:
        members = [v for v, b in zip(verdicts, buckets) if b == label]
        r = [v.r for v in members]
        rows.append(
            dict(
                bucket=label,
                pairs=len(members),
                unresolved=sum(not v.resolved["fixed_n"] for v in members),
                r_median=float(np.median(r)) if r else None,
                r_worst=float(max(r)) if r else None,
            )
        )
    return rows


def _range(values):
    values = [x for x in values if x is not None and math.isfinite(x)]
    if not values:
        return "n/a"
    return f"median {np.median(values):.4g}, range [{min(values):.4g}, {max(values):.4g}]"


def checklist(verdicts, config, m, source):
    binary = bool(verdicts) and all(v.summary.binary for v in verdicts)
    test = "McNemar chi2 (exact, mid-p, cc) and percentile bootstrap" if binary else "paired Wald/t and percentile bootstrap"
    straddle = sum(v.nstar_ci[0] <= v.summary.n <= v.nstar_ci[1] for v in verdicts)
    ns = sorted({v.summary.n for v in verdicts})
    return [
        dict(quantity="delta_hat", definition="observed paired gap mean(D)",
             value=_range([v.summary.delta_hat for v in verdicts])),
        dict(quantity="paired_test", definition="test on the per-item differences", value=test),
        dict(quantity="N", definition="paired items per comparison", value=", ".join(map(str, ns)) or "n/a"),
        dict(quantity="mde", definition="minimum detectable effect at N", value=_range([v.mde for v in verdicts])),
        dict(quantity="q", definition="resolution ratio N / N*",
             value=f"{sum(v.resolved['fixed_n'] for v in verdicts)}/{len(verdicts)} pairs with q >= 1"),
        dict(quantity="nstar_ci", definition=f"5-95% bootstrap interval of N* (B={config.nstar_ci_reps})",
             value=f"{straddle}/{len(verdicts)} intervals contain N"),
        dict(quantity="multiplicity", definition="family-level error control",
             value=f"{config.multiplicity}, m={m}"),
        dict(quantity="per_item_raw", definition="per-item score matrix released",
             value="yes" if source == "scores" else "no (counts only)"),
    ]


def diagnose(data, config=None):
    """Diagnose every pair of a ScoreMatrix (adjacent or all pairs, by config.family)
    or of a CountsTable (its rows, in order)."""
    config = config or TestConfig()
    base = config.unadjusted()
    entries, clusters = _entries(data, config)
    m = config.family_size or len(entries)
    logger.info("diagnosing %d pairs (m=%d, multiplicity=%s)", len(entries), m, config.multiplicity)
    verdicts = [_pair_verdict(i, entry, clusters, config, base) for i, entry in enumerate(entries)]
    test = _apply_family(verdicts, config, m)
    source = "counts" if isinstance(data, CountsTable) else "scores"
    return DiagnoseReport(
        config=config.to_dict(),
        source=source,
        pairs=verdicts,
        family_summary=_family_summary(verdicts, config, m, test),
        buckets=bucket_table(verdicts),
        checklist=checklist(verdicts, config, m, source),
    )


def to_jsonable(x):
    """Lists for tuples, "inf" / "-inf" strings for infinite floats and None for NaN, recursively."""
    if isinstance(x, dict):
        return {k: to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        x = x.item()
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if isinstance(x, float) and math.isnan(x):
        return None
    return x


def _num(x):
    if x == "inf":
        return math.inf
    if x == "-inf":
        return -math.inf
    return x


def _verdict_from_dict(d):
    d = dict(d)
    d["summary"] = PairedSummary(**d["summary"])
    for f in fields(PairVerdict):
        value = d[f.name]
        if f.name in ("nstar_ci", "rho_sensitivity") and value is not None:
            d[f.name] = tuple(_num(x) for x in value)
        elif f.name not in ("pair", "model_a", "model_b", "summary", "resolved"):
            d[f.name] = _num(value)
    return PairVerdict(**d)


def report_to_dict(report):
    """JSON-ready dict; infinite values are written as the strings "inf" / "-inf"."""
    return to_jsonable(asdict(report))


def parse_report(data):
    d = json.loads(data)
    version = d.get("schema_version")
    if version is None or Version(version).major != Version(SCHEMA_VERSION).major:
        raise DataValidationError(f"unsupported report schema_version {version!r}; expected {SCHEMA_VERSION}")
    buckets = [dict(b, r_median=_num(b["r_median"]), r_worst=_num(b["r_worst"])) for b in d["buckets"]]
    return DiagnoseReport(
        config=d["config"],
        source=d["source"],
        pairs=[_verdict_from_dict(v) for v in d["pairs"]],
        family_summary=d["family_summary"],
        buckets=buckets,
        checklist=d["checklist"],
        schema_version=version,
    )


def _fmt(x):
    if x is None:
        return "-"
    if isinstance(x, bool):
        return "yes" if x else "no"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        return "inf" if math.isinf(x) else f"{x:.4g}"
    return str(x)


def _text(report):
    out = [f"paired-resolution report (schema {report.schema_version})"]
    cfg = report.config
    out.append(
        f"alpha={cfg['alpha']} power={cfg['power']} multiplicity={cfg['multiplicity']} "
        f"family={cfg['family']} seed={cfg['seed']}"
    )
    rows = [
        dict(
            pair=v.pair,
            n=v.summary.n,
            delta=v.summary.delta_hat,
            rho=v.summary.rho_hat,
            p=v.p_test,
            n_star=v.n_star_iid,
            q=v.q,
            mde=v.mde,
            **{proc: v.resolved[proc] for proc in PROCEDURES},
        )
        for v in report.pairs
    ]
    columns = ["pair", "n", "delta", "rho", "p", "n_star", "q", "mde", *PROCEDURES]
    out.append("")
    if rows:
        out.append(pd.DataFrame(rows, columns=columns).map(_fmt).to_string(index=False))
    else:
        out.append("(no pairs)")
    unresolved = report.family_summary["unresolved"]
    out.append("")
    out.append(
        "unresolved: " + ", ".join(f"{proc}={_fmt(unresolved[proc])}/{report.family_summary['pairs']}" for proc in PROCEDURES)
    )
    test = report.family_summary.get("test")
    if test is not None:
        out.append(
            f"family test ({report.family_summary['method']}, m={report.family_summary['m']}): "
            f"rejected={test['rejected']}/{report.family_summary['pairs']} "
            f"adjusted_alpha={_fmt(test['adjusted_alpha'])} inflation={_fmt(test['inflation'])}"
        )
    out.append("")
    out.append(pd.DataFrame(report.buckets).map(_fmt).to_string(index=False))
    out.append("")
    out.append(pd.DataFrame(report.checklist).to_string(index=False))
    return "\n".join(out) + "\n"


def emit_report(report, format="text"):
    if format == "json":
        return json.dumps(report_to_dict(report), indent=2, allow_nan=False).encode()
    if format == "text":
        return _text(report).encode()
    raise DataValidationError(f"Invalid report format {format!r}; expected 'json' or 'text'")
