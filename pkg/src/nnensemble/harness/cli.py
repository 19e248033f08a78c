"""Command-line entry point.

Exit codes: 0 success, 2 configuration/usage error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

from ..dataprep import DataError
from ..decomposition import decompose, read_cube
from ..ranktests import DegenerateRanksError, rank_report, read_scores, write_avg_ranks, write_square
from .config import ConfigError, load_config
from .report import labels_for, validate_and_report
from .runner import prepare, load_tables, run_level0, run_level1, run_size_sensitivity

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("nnensemble")


def _add_run_flags(p):
    p.add_argument("--config", required=True, help="experiment INI file")
    p.add_argument("--out", help="output directory (default: results/<subcommand>)")
    p.add_argument("--seed", type=int, help="base seed for every trial")
    p.add_argument("--jobs", type=int, help="worker processes; output is identical for any value")
    p.add_argument("--members", type=int, help="ensemble size M")
    p.add_argument("--iterations", type=int, help="training repetitions per fold")
    p.add_argument("--folds", type=int, help="cross-validation folds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nnensemble",
        description="Neural-network ensemble strategies, pairwise composites, "
                    "bias-variance-diversity decomposition and rank tests.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("level0", "run the seven strategies plus simple_average and single"),
                       ("level1", "run the 21 pairwise composites plus simple_average and single"),
                       ("size", "run one method over several ensemble sizes")):
        _add_run_flags(sub.add_parser(name, help=text, description=text))
    p = sub.add_parser("decompose", help="decompose an exported prediction cube")
    p.add_argument("cube", help="CSV with columns trial,member,example,prediction")
    p.add_argument("targets", help="CSV with columns example,target")
    p = sub.add_parser("stats", help="Friedman + Conover over a score CSV (lower is better)")
    p.add_argument("scores", help="CSV: header dataset,<method>,...; one row per dataset")
    p.add_argument("--out", help="also write avg_ranks.csv and conover_p.csv here")
    p.add_argument("--holm", action="store_true", help="Holm-adjust the Conover p-values")
    return parser


def _print_results(results) -> None:
    print(f"{'method':<32} {'M':>4} {'bias':>10} {'variance':>10} {'diversity':>10} {'risk':>10}")
    for lab, r in zip(labels_for(results), results):
        print(f"{lab:<32} {r.members:>4} {r.mean_field('avg_bias'):>10.5f} "
              f"{r.mean_field('avg_variance'):>10.5f} {r.mean_field('diversity'):>10.5f} "
              f"{r.expected_risk:>10.5f}")


def _run(args) -> int:
    config = load_config(args.config).with_(
        seed=args.seed, jobs=args.jobs, members=args.members,
        iterations=args.iterations, folds=args.folds)
    out = args.out or os.path.join("results", args.command)
    prepared = {name: prepare(config, name, table) for name, table in load_tables(config)}
    runner = {"level0": run_level0, "level1": run_level1, "size": run_size_sensitivity}[args.command]
    t0 = time.perf_counter()
    results = runner(config, prepared=prepared)
    log.info("%s finished in %.1f s", args.command, time.perf_counter() - t0)
    arch_lines = ["[architectures]"] + [
        f"{name} fold {f}: {fold.arch_id}" for name, ds in prepared.items() for f, fold in enumerate(ds.folds)
    ] + [""]
    report = validate_and_report(results, out, config, strict=False, extra_manifest=arch_lines)
    _print_results(results)
    if report is not None:
        print(f"friedman statistic {report.friedman_statistic:.6g}, p = {report.friedman_p:.6g}")
    for r in results:
        for f in r.failures:
            print(f"warning: {r.method_id}: {f}", file=sys.stderr)
    print(f"wrote {out}")
    return EXIT_OK


def _decompose(args) -> int:
    cube = read_cube(args.cube, args.targets)
    d = decompose(cube)
    T, M, N = cube.shape
    print(f"cube T={T} M={M} N={N}")
    for k in ("avg_bias", "avg_variance", "diversity", "expected_risk"):
        print(f"{k} {getattr(d, k)!r}")
    return EXIT_OK


def _stats(args) -> int:
    matrix = read_scores(args.scores)
    report = rank_report(matrix, adjust="holm" if args.holm else "none")
    print(f"friedman statistic {report.friedman_statistic:.6g}")
    print(f"friedman p {report.friedman_p:.6g}")
    for m, a in zip(report.method_ids, report.avg_ranks):
        print(f"avg_rank {m} {a:.4f}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_avg_ranks(report, os.path.join(args.out, "avg_ranks.csv"))
        write_square(report.conover_p, report.method_ids, os.path.join(args.out, "conover_p.csv"))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"decompose": _decompose, "stats": _stats}.get(args.command, _run)
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, DataError, DegenerateRanksError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - every other failure maps to exit 3
        print(f"runtime failure: {exc!r}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
