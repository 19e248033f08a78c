"""CSV reports for a finished run.

Files written to the output directory (UTF-8, ``.`` decimal point, floats in
shortest round-trip form):

``decomposition.csv``  method, members, dataset, avg_bias, avg_variance,
                       diversity, expected_risk, srmse, mean_member_risk,
                       stacked_risk (empty for simple-average methods)
``scores.csv``         dataset rows x method columns of sRMSE
``avg_ranks.csv``      method, avg_rank, rank_sum
``friedman.csv``       statistic, p_value, alpha, significant, n_datasets, n_methods
``conover_p.csv``      square matrix of pairwise Conover p-values
``rank_diff.csv``      square matrix of signed rank-sum differences
``plotdata.csv``       one row per method, ordered by expected risk, with
                       the dataset-averaged decomposition (stacked-bar input)
``manifest.txt``       configuration echo, seeds, fold architectures,
                       library versions, failures and warnings
"""

from __future__ import annotations

import csv
import os
import platform

import numpy as np

from .. import __version__
from ..ranktests import (DegenerateRanksError, ScoreMatrix, rank_report, write_avg_ranks,
                         write_square)


class ReportError(ValueError):
    pass


def _f(v) -> str:
    return "" if v is None else repr(float(v))


def labels_for(results) -> list:
    ids = [r.method_id for r in results]
    if len(set(ids)) == len(ids):
        return ids
    return [f"{r.method_id}@{r.members}" for r in results]


def dataset_names(results) -> list:
    seen = []
    for r in results:
        for name in r.decomposition:
            if name not in seen:
                seen.append(name)
    return seen


def _writer(path):
    fh = open(path, "w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


def write_tables(results, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    labels = labels_for(results)
    datasets = dataset_names(results)

    fh, w = _writer(os.path.join(out_dir, "decomposition.csv"))
    with fh:
        w.writerow(["method", "members", "dataset", "avg_bias", "avg_variance", "diversity",
                    "expected_risk", "srmse", "mean_member_risk", "stacked_risk"])
        for lab, r in zip(labels, results):
            for name, d in r.decomposition.items():
                w.writerow([lab, r.members, name, _f(d.avg_bias), _f(d.avg_variance),
                            _f(d.diversity), _f(d.expected_risk), _f(r.srmse[name]),
                            _f(d.avg_bias + d.avg_variance), _f(r.stacked_risk.get(name))])

    fh, w = _writer(os.path.join(out_dir, "scores.csv"))
    with fh:
        w.writerow(["dataset"] + labels)
        for name in datasets:
            w.writerow([name] + [_f(r.srmse.get(name, float("nan"))) for r in results])

    fh, w = _writer(os.path.join(out_dir, "plotdata.csv"))
    with fh:
        w.writerow(["order", "method", "members", "avg_bias", "avg_variance", "diversity",
                    "expected_risk", "srmse"])
        for i, (lab, r) in enumerate(zip(labels, results)):
            srmse = float(np.mean(list(r.srmse.values()))) if r.srmse else float("nan")
            w.writerow([i + 1, lab, r.members, _f(r.mean_field("avg_bias")),
                        _f(r.mean_field("avg_variance")), _f(r.mean_field("diversity")),
                        _f(r.expected_risk), _f(srmse)])


def score_matrix(results) -> ScoreMatrix:
    """sRMSE matrix over datasets every method completed."""
    labels = labels_for(results)
    datasets = [d for d in dataset_names(results) if all(d in r.srmse for r in results)]
    scores = np.array([[r.srmse[d] for r in results] for d in datasets]).reshape(len(datasets), len(results))
    return ScoreMatrix(scores, datasets, labels)


def validate_and_report(results, out_dir, config=None, strict: bool = True, extra_manifest=()):
    """Write every report file; returns the ``RankReport`` (None if not computable).

    With ``strict`` a run with fewer than two methods or datasets raises
    ``ReportError``; otherwise the rank files are skipped with a warning.
    A degenerate Friedman input is always a warning, never an error.
    """
    warnings = []
    n_methods = len(results)
    usable = [d for d in dataset_names(results) if all(d in r.srmse for r in results)]
    if n_methods < 2 or len(usable) < 2:
        msg = f"rank tests need >= 2 methods and >= 2 datasets (got {n_methods} and {len(usable)})"
        if strict:
            raise ReportError(msg)
        warnings.append(msg)
    write_tables(results, out_dir)
    report = None
    if not warnings:
        matrix = score_matrix(results)
        try:
            report = rank_report(matrix, adjust="holm" if config is not None and config.holm else "none")
        except DegenerateRanksError as exc:
            warnings.append(f"friedman test skipped: {exc}")
        if report is not None:
            write_avg_ranks(report, os.path.join(out_dir, "avg_ranks.csv"))
            write_square(report.conover_p, report.method_ids, os.path.join(out_dir, "conover_p.csv"))
            write_square(report.rank_differences(), report.method_ids, os.path.join(out_dir, "rank_diff.csv"))
        fh, w = _writer(os.path.join(out_dir, "friedman.csv"))
        with fh:
            w.writerow(["statistic", "p_value", "alpha", "significant", "n_datasets", "n_methods"])
            if report is None:
                w.writerow(["", "", "0.05", "", len(matrix.dataset_ids), n_methods])
            else:
                w.writerow([_f(report.friedman_statistic), _f(report.friedman_p), _f(report.alpha),
                            int(report.significant), len(matrix.dataset_ids), n_methods])
        if report is not None:
            report.warnings.extend(warnings)
    _write_manifest(results, out_dir, config, warnings, extra_manifest)
    return report


def _write_manifest(results, out_dir, config, warnings, extra) -> None:
    lines = [f"nnensemble {__version__}",
             f"python {platform.python_version()}",
             f"numpy {np.__version__}",
             "prng PCG64 via numpy.random.SeedSequence",
             ""]
    if config is not None:
        lines.append("[config]")
        lines.extend(config.echo())
        lines.append("")
    lines.extend(extra)
    lines.append("[results]")
    for lab, r in zip(labels_for(results), results):
        lines.append(f"{lab} members={r.members} datasets={len(r.decomposition)} failures={len(r.failures)}")
    fails = [f for r in results for f in r.failures]
    if fails:
        lines.append("")
        lines.append("[failures]")
        lines.extend(f"{r.method_id}: {f}" for r in results for f in r.failures)
    if warnings:
        lines.append("")
        lines.append("[warnings]")
        lines.extend(warnings)
    with open(os.path.join(out_dir, "manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
