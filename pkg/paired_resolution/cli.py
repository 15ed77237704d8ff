# Copyright (c) 2025, paired-resolution authors.
"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 unreadable or invalid
input, 3 numerically degenerate input.
"""

import argparse
import json
import logging
import math
import sys

import numpy as np
import pandas as pd

from paired_resolution import __version__
from paired_resolution.errors import ConfigError, DataValidationError, DegenerateError
from paired_resolution.models.config_resolution import FAMILIES, GRIDS, TestConfig
from paired_resolution.models.diagnose import diagnose, emit_report, enumerate_pairs, to_jsonable
from paired_resolution.models.score_matrix import ScoreMatrix
from paired_resolution.modules import anytime_eprocess, binary_tests, cluster_corrections, shortcut_audit
from paired_resolution.modules.family_multiplicity import METHODS
from paired_resolution.modules.paired_core import bernoulli_diff_variance, mde, required_n, required_n_paired_t
from paired_resolution.modules.resample_sim import (
    GeneratorSpec,
    calibration_grid,
    gen_clustered_paired,
    gen_paired_bernoulli,
    gen_paired_graded,
)
from paired_resolution.utils.io import FORMATS, load_score_matrix, write_frame, write_score_matrix

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DEGENERATE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_common(parser, suppress=False):
    """Flags shared by every subcommand.

    They are accepted before the subcommand (on the top-level parser, which holds
    the defaults) and after it (suppressed defaults, so they only override).
    """

    def default(value):
        return argparse.SUPPRESS if suppress else value

    parser.add_argument("--alpha", type=float, default=default(0.05))
    parser.add_argument("--power", type=float, default=default(0.8))
    parser.add_argument("--family", choices=FAMILIES, default=default("adjacent"))
    parser.add_argument("--multiplicity", choices=METHODS, default=default("none"))
    parser.add_argument("--family-size", type=int, default=default(None))
    parser.add_argument("--seed", type=int, default=default(42))
    parser.add_argument("--config", type=str, default=default(None), help="TestConfig JSON; explicit flags are ignored")
    parser.add_argument("--json", action="store_true", default=default(False),
                        help="machine-readable output, full precision")
    parser.add_argument("-v", "--verbose", action="count", default=default(0))
    return parser


def build_parser():
    parser = _Parser(prog="paired-resolution", description="Resolution diagnostics for paired model comparisons")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_common(parser)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    common = _add_common(argparse.ArgumentParser(add_help=False), suppress=True)

    p = sub.add_parser("diagnose", parents=[common], help="full report for a score matrix or counts table")
    p.add_argument("path")
    p.add_argument("--format", choices=FORMATS, default="auto")
    p.add_argument("--output", default=None)
    p.add_argument("--bootstrap-reps", type=int, default=1000)
    p.add_argument("--eprocess-grid", choices=GRIDS, default="uniform")

    p = sub.add_parser("required-n", parents=[common], help="paired N* for a binary or graded gap")
    p.add_argument("p_a", type=float, nargs="?")
    p.add_argument("p_b", type=float, nargs="?")
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--mean", type=float, default=None, help="graded mean difference")
    p.add_argument("--sd", type=float, default=None, help="graded sd of the differences")

    p = sub.add_parser("mde", parents=[common], help="minimum detectable effect at N items")
    p.add_argument("n", type=int)
    p.add_argument("--sd", type=float, default=None)
    p.add_argument("--p", type=float, default=None, help="base accuracy of both models")
    p.add_argument("--rho", type=float, default=0.0)

    p = sub.add_parser("mcnemar", parents=[common], help="McNemar p-values from discordant counts")
    p.add_argument("b", type=int)
    p.add_argument("c", type=int)
    p.add_argument("n", type=int, nargs="?")

    p = sub.add_parser("shortcut-audit", parents=[common], help="Cohen-h shortcut against the paired N*")
    p.add_argument("p_a", type=float, nargs="?")
    p.add_argument("p_b", type=float, nargs="?")
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--grid", action="store_true", help="run the numeric audit grid instead")

    p = sub.add_parser("cluster", parents=[common], help="cluster-adjusted verdicts for a clustered score matrix")
    p.add_argument("path")
    p.add_argument("--bootstrap", type=int, default=0, metavar="B")
    p.add_argument("--loso", action="store_true")
    p.add_argument("--relabel", choices=cluster_corrections.SCHEMES, default=None)
    p.add_argument("--output", default=None)

    p = sub.add_parser("eprocess", parents=[common], help="anytime-valid test on discordant signs")
    p.add_argument("--signs", default=None, help="sequence of A/B winners, e.g. ABBA")
    p.add_argument("--counts", type=int, nargs=2, default=None, metavar=("B", "C"))
    p.add_argument("--scores", default=None, help="score matrix; with --pair")
    p.add_argument("--pair", nargs=2, default=None, metavar=("MODEL_A", "MODEL_B"))
    p.add_argument("--inflation-at", type=int, default=None, metavar="N")
    p.add_argument("--psi", type=float, default=0.02)
    p.add_argument("--grid", choices=GRIDS, default="uniform")
    p.add_argument("--output", default=None, help="CSV of the log e trajectory")

    p = sub.add_parser("calibrate", parents=[common], help="Monte Carlo calibration of the paired tests")
    p.add_argument("--p", type=float, nargs="+", default=[0.5, 0.7, 0.9])
    p.add_argument("--rho-z", type=float, nargs="+", default=[0.0, 0.4, 0.8])
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--trials", type=int, default=1500)
    p.add_argument("--eprocess", action="store_true", help="calibrate the e-process instead")
    p.add_argument("--delta", type=float, default=None, help="gap for --eprocess")
    p.add_argument("--grid", choices=GRIDS, default="uniform")
    p.add_argument("--output", default=None)

    p = sub.add_parser("gen", parents=[common], help="synthetic fixtures")
    p.add_argument("kind", choices=("bernoulli", "graded", "clustered"))
    p.add_argument("--output", required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--p", type=float, default=0.65)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--rho-z", type=float, default=0.5)
    p.add_argument("--beta-shapes", type=float, nargs=2, default=[4.0, 2.0])
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--m", type=int, default=40)
    p.add_argument("--tau", type=float, default=0.05)
    return parser


def _config(args, **overrides):
    if args.config:
        with open(args.config) as f:
            return TestConfig.from_dict({**json.load(f), **overrides})
    return TestConfig(
        alpha=args.alpha,
        power=args.power,
        family=args.family,
        multiplicity=args.multiplicity,
        family_size=args.family_size,
        seed=args.seed,
        **overrides,
    )


def _fmt(x):
    if isinstance(x, float):
        return "inf" if math.isinf(x) else f"{x:.4g}"
    return str(x)


def _fmt_p(p):
    return f"{p:.3f}" if p >= 1e-3 else f"{p:.2e}"


def _emit(args, payload, text=None):
    if args.json:
        print(json.dumps(to_jsonable(payload), indent=2, allow_nan=False))
    else:
        print(text if text is not None else " ".join(f"{k}={_fmt(v)}" for k, v in payload.items()))


def _cmd_diagnose(args):
    config = _config(args, bootstrap_reps=args.bootstrap_reps, eprocess_grid=args.eprocess_grid)
    report = diagnose(load_score_matrix(args.path, args.format), config)
    data = emit_report(report, "json" if args.json else "text")
    if args.output:
        with open(args.output, "wb") as f:
            f.write(data)
    else:
        sys.stdout.write(data.decode())
        sys.stdout.write("\n" if args.json else "")


def _cmd_required_n(args):
    config = _config(args)
    if args.mean is not None or args.sd is not None:
        if args.mean is None or args.sd is None:
            raise UsageError("graded required-n needs both --mean and --sd")
        _emit(args, dict(n_star=required_n_paired_t(args.mean, args.sd, config)))
        return
    if args.p_a is None or args.p_b is None:
        raise UsageError("required-n needs P_A P_B [--rho R] or --mean M --sd S")
    sigma = math.sqrt(bernoulli_diff_variance(args.p_a, args.p_b, args.rho))
    if sigma == 0.0:
        raise DegenerateError("the paired differences have zero variance at this rho", "zero_variance")
    _emit(args, dict(n_star=required_n(args.p_a - args.p_b, sigma, config), sigma_d=sigma))


def _cmd_mde(args):
    config = _config(args)
    if args.sd is not None:
        sigma = args.sd
    elif args.p is not None:
        sigma = math.sqrt(bernoulli_diff_variance(args.p, args.p, args.rho))
    else:
        raise UsageError("mde needs --sd S or --p P [--rho R]")
    _emit(args, dict(mde=mde(args.n, sigma, config), sigma_d=sigma))


def _cmd_mcnemar(args):
    config = _config(args)
    payload = dict(
        p_chi2=binary_tests.mcnemar_chi2(args.b, args.c),
        p_exact=binary_tests.mcnemar_exact(args.b, args.c),
        p_midp=binary_tests.mcnemar_midp(args.b, args.c),
        p_cc=binary_tests.mcnemar_cc(args.b, args.c),
    )
    text = " ".join(f"{k}={_fmt_p(v)}" for k, v in payload.items())
    if args.n is not None:
        payload["n_star_discordance"] = binary_tests.required_n_mcnemar(args.b, args.c, args.n, config)
        payload["n_star_bernoulli"] = binary_tests.bernoulli_required_n_from_counts(args.b, args.c, args.n, config)
        text += f" n_star_discordance={_fmt(payload['n_star_discordance'])}"
        text += f" n_star_bernoulli={_fmt(payload['n_star_bernoulli'])}"
    _emit(args, payload, text)


def _cmd_shortcut_audit(args):
    config = _config(args)
    if args.grid:
        frame = shortcut_audit.lemma_numeric_audit(
            (0.5, 0.65, 0.8), (0.0, 0.3, 0.5), (0.005, 0.01, 0.02, 0.05, 0.1, 0.2), config
        )
        if args.json:
            _emit(args, dict(cells=frame.to_dict(orient="records")))
        else:
            print(frame.to_string(index=False))
        return
    if args.p_a is None or args.p_b is None:
        raise UsageError("shortcut-audit needs P_A P_B [--rho R] or --grid")
    report = shortcut_audit.shortcut_report(args.p_a, args.p_b, args.rho, config, epsilon=args.epsilon)
    payload = dict(report._asdict(), **shortcut_audit.calculator_conventions(args.p_a, args.p_b, args.rho, config))
    _emit(args, payload)


def _cluster_matrix(args, seed):
    matrix = load_score_matrix(args.path, "scores")
    if args.relabel:
        matrix = cluster_corrections.relabel_clusters(matrix, args.relabel, seed=seed)
    if matrix.clusters is None:
        raise DataValidationError("the score matrix has no cluster column", row=1)
    return matrix


def _cmd_cluster(args):
    config = _config(args).unadjusted()
    matrix = _cluster_matrix(args, config.seed)
    pairs = enumerate_pairs(matrix.model_means(), args.family)
    rows = []
    for pair in pairs:
        stats, result, n_star_cluster, resolved = cluster_corrections.cluster_pair_verdict(matrix, pair, config)
        rows.append(dict(pair=f"{pair[0]} vs {pair[1]}", icc=stats.icc, m_bar=stats.m_bar, de=stats.de,
                         n_star_iid=result.n_star, n_star_cluster=n_star_cluster,
                         resolved_iid=bool(result.resolved), resolved_cluster=bool(resolved)))
    payload = dict(pairs=rows, unresolved=sum(not r["resolved_cluster"] for r in rows))
    if args.bootstrap:
        table, counts = cluster_corrections.cluster_bootstrap_verdicts(
            matrix, pairs, args.bootstrap, config.seed, config
        )
        payload["seed"] = config.seed
        payload["bootstrap"] = table.to_dict(orient="records")
        payload["unresolved_histogram"] = cluster_corrections.unresolved_histogram(counts, len(pairs))
        if args.output:
            write_frame(table, args.output)
    if args.loso:
        payload["loso"] = cluster_corrections.loso(matrix, pairs, config).to_dict(orient="records")
    if args.json:
        _emit(args, payload)
        return
    lines = [" ".join(f"{k}={_fmt(v)}" for k, v in row.items()) for row in rows]
    lines.append(f"unresolved={payload['unresolved']}/{len(rows)}")
    if "unresolved_histogram" in payload:
        lines.append(f"bootstrap B={args.bootstrap} seed={config.seed}")
        lines.append("bootstrap unresolved histogram: " + " ".join(
            f"{k}:{v}" for k, v in payload["unresolved_histogram"].items() if v))
    for row in payload.get("loso", []):
        lines.append(f"without {row['dropped']}: unresolved={row['unresolved']}")
    print("\n".join(lines))


def _cmd_eprocess(args):
    config = _config(args)
    if args.inflation_at is not None:
        factor = anytime_eprocess.threshold_inflation_at(args.inflation_at, config.alpha, args.grid, psi=args.psi,
                                                         power=config.power)
        _emit(args, dict(n=args.inflation_at, psi=args.psi, inflation=factor))
        return
    if args.signs is not None:
        signs = list(args.signs.strip())
    elif args.counts is not None:
        b, c = args.counts
        e = anytime_eprocess.log_e_value(b, c, anytime_eprocess.make_grid(args.grid))
        _emit(args, dict(b=b, c=c, e_value=math.exp(e), rejected=e >= math.log(1.0 / config.alpha)))
        return
    elif args.scores is not None and args.pair is not None:
        matrix = load_score_matrix(args.scores, "scores")
        signs, _ = anytime_eprocess.signs_from_items(matrix.column(args.pair[0]), matrix.column(args.pair[1]))
    else:
        raise UsageError("eprocess needs --signs, --counts B C, --scores PATH --pair A B or --inflation-at N")
    test = anytime_eprocess.eprocess_test(signs, config.alpha, args.grid)
    if args.output:
        write_frame(anytime_eprocess.trajectory_frame(test.trajectory, config.alpha), args.output)
    final = float(np.exp(test.trajectory[-1])) if len(test.trajectory) else 1.0
    _emit(args, dict(discordant=len(signs), rejected=bool(test.rejected),
                     stopping_index=test.stopping_index, e_value=final))


def _cmd_calibrate(args):
    config = _config(args)
    if args.eprocess:
        if args.delta is None:
            raise UsageError("calibrate --eprocess needs --delta")
        result = anytime_eprocess.calibrate_eprocess(
            args.p[0], args.rho_z[0], args.delta, trials=args.trials, seed=config.seed,
            alpha=config.alpha, grid_spec=args.grid, config=config,
        )
        _emit(args, dict(result._asdict(), seed=config.seed))
        return
    frame = calibration_grid(args.p, args.rho_z, args.n, args.trials, config.seed, config=config)
    if args.output:
        write_frame(frame, args.output)
    if args.json:
        _emit(args, dict(seed=config.seed, cells=frame.to_dict(orient="records")))
    else:
        print(f"seed={config.seed} trials={args.trials} n={args.n}")
        print(frame.to_string(index=False, float_format=lambda x: f"{x:.4g}"))


def _cmd_gen(args):
    seed = _config(args).seed
    if args.kind == "bernoulli":
        a, b = gen_paired_bernoulli(GeneratorSpec(args.p, args.delta, args.rho_z, args.n, seed))
        scores = np.stack([a, b], axis=1)
    elif args.kind == "graded":
        a, b = gen_paired_graded(*args.beta_shapes, args.rho_z, args.delta, args.n, seed)
        scores = np.stack([a, b], axis=1)
    else:
        d, labels = gen_clustered_paired(args.k, args.m, args.tau, seed)
        write_frame(pd.DataFrame({"item_id": [f"i{j}" for j in range(d.size)], "cluster": labels, "d": d}),
                    args.output)
        print(f"wrote {d.size} items in {args.k} clusters to {args.output} (seed {seed})")
        return
    items = [f"i{j}" for j in range(scores.shape[0])]
    write_score_matrix(ScoreMatrix(items, ["A", "B"], scores), args.output)
    print(f"wrote {len(items)} items to {args.output} (seed {seed})")


COMMANDS = {
    "diagnose": _cmd_diagnose,
    "required-n": _cmd_required_n,
    "mde": _cmd_mde,
    "mcnemar": _cmd_mcnemar,
    "shortcut-audit": _cmd_shortcut_audit,
    "cluster": _cmd_cluster,
    "eprocess": _cmd_eprocess,
    "calibrate": _cmd_calibrate,
    "gen": _cmd_gen,
}


def run_cli(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    if args.verbose:
        logging.basicConfig(level=logging.DEBUG if args.verbose > 1 else logging.INFO)
    try:
        COMMANDS[args.command](args)
    except (UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataValidationError, FileNotFoundError, IsADirectoryError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except DegenerateError as e:
        print(f"error: {e} [{e.kind}]", file=sys.stderr)
        return EXIT_DEGENERATE
    return EXIT_OK


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
