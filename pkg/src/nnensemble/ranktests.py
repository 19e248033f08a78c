"""Friedman rank test and Conover's post-hoc comparisons.

Scores are lower-is-better (e.g. sRMSE), so rank 1 is the best method on a
dataset.  Both tests use the tie-corrected forms built on

    A = sum_ij r_ij^2          C = n k (k + 1)^2 / 4

which collapse to the textbook formulas when there are no ties.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .special import chi2_sf, student_t_sf

ALPHA = 0.05


class DegenerateRanksError(ValueError):
    """Every dataset ranks every method equally; the tests are undefined."""


@dataclass
class ScoreMatrix:
    scores: np.ndarray
    dataset_ids: list
    method_ids: list

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        n, k = self.scores.shape
        if n < 2 or k < 2:
            raise ValueError(f"need at least 2 datasets and 2 methods, got {n}x{k}")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("score matrix has missing or non-finite entries")
        if len(self.dataset_ids) != n or len(self.method_ids) != k:
            raise ValueError("id lists do not match the score matrix shape")


@dataclass
class RankReport:
    method_ids: list
    avg_ranks: np.ndarray
    rank_sums: np.ndarray
    friedman_statistic: float
    friedman_p: float
    conover_p: np.ndarray
    alpha: float = ALPHA
    adjusted: str = "none"
    warnings: list = field(default_factory=list)

    @property
    def significant(self) -> bool:
        return self.friedman_p < self.alpha

    def rank_differences(self) -> np.ndarray:
        """Signed rank-sum differences ``R_u - R_v``."""
        return self.rank_sums[:, None] - self.rank_sums[None, :]


def rank_rows(scores) -> np.ndarray:
    """Ascending within-row ranks 1..k; ties share their average rank."""
    scores = np.asarray(scores, dtype=float)
    ranks = np.empty_like(scores)
    for r, row in enumerate(scores):
        order = np.argsort(row, kind="mergesort")
        srt = row[order]
        i = 0
        k = len(row)
        while i < k:
            j = i
            while j + 1 < k and srt[j + 1] == srt[i]:
                j += 1
            ranks[r, order[i:j + 1]] = (i + j) / 2.0 + 1.0
            i = j + 1
    return ranks


def _ac(ranks):
    n, k = ranks.shape
    A = float(np.sum(ranks ** 2))
    C = n * k * (k + 1) ** 2 / 4.0
    return A, C


def friedman(ranks) -> tuple:
    """Tie-corrected Friedman chi-square statistic and its p-value (df = k - 1)."""
    ranks = np.asarray(ranks, dtype=float)
    n, k = ranks.shape
    if n < 2 or k < 2:
        raise ValueError("friedman needs n >= 2 and k >= 2")
    A, C = _ac(ranks)
    if A - C <= 1e-12 * max(C, 1.0):
        raise DegenerateRanksError("all methods tie on every dataset")
    R = ranks.sum(axis=0)
    stat = (k - 1) * float(np.sum((R - n * (k + 1) / 2.0) ** 2)) / (A - C)
    return stat, chi2_sf(stat, k - 1)


def holm(pvals: np.ndarray) -> np.ndarray:
    """Holm step-down adjustment of a flat array of p-values."""
    p = np.asarray(pvals, dtype=float)
    m = len(p)
    order = np.argsort(p, kind="mergesort")
    adj = np.empty(m)
    running = 0.0
    for rank, idx in enumerate(order):
        running = max(running, min(1.0, (m - rank) * p[idx]))
        adj[idx] = running
    return adj


def conover(ranks, alpha: float = ALPHA, adjust: str = "none") -> np.ndarray:
    """Pairwise two-sided Conover p-values after a Friedman test.

    ``adjust="holm"`` applies Holm's correction over the k(k-1)/2 pairs.
    """
    ranks = np.asarray(ranks, dtype=float)
    n, k = ranks.shape
    t1, _ = friedman(ranks)
    A, C = _ac(ranks)
    R = ranks.sum(axis=0)
    df = (n - 1) * (k - 1)
    s2 = 2.0 * n * (A - C) * (1.0 - t1 / (n * (k - 1))) / df
    s = math.sqrt(s2) if s2 > 1e-12 * (A - C) else 0.0
    p = np.ones((k, k))
    iu = np.triu_indices(k, 1)
    vals = []
    for u, v in zip(*iu):
        diff = R[u] - R[v]
        if s == 0.0:
            vals.append(1.0 if diff == 0 else 0.0)
        else:
            vals.append(student_t_sf(diff / s, df))
    vals = np.array(vals)
    if adjust == "holm":
        vals = holm(vals)
    elif adjust != "none":
        raise ValueError(f"unknown adjustment {adjust!r}")
    p[iu] = vals
    p[(iu[1], iu[0])] = vals
    return p


def rank_report(matrix: ScoreMatrix, alpha: float = ALPHA, adjust: str = "none") -> RankReport:
    ranks = rank_rows(matrix.scores)
    stat, pval = friedman(ranks)
    return RankReport(list(matrix.method_ids), ranks.mean(axis=0), ranks.sum(axis=0),
                      stat, pval, conover(ranks, alpha, adjust), alpha, adjust)


def read_scores(path) -> ScoreMatrix:
    """Score CSV: header ``dataset,<method>,<method>,...`` then one row per dataset."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise ValueError(f"{path}: no score rows")
    methods = [m.strip() for m in rows[0][1:]]
    datasets = [r[0].strip() for r in rows[1:]]
    try:
        scores = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc
    if scores.shape[1] != len(methods):
        raise ValueError(f"{path}: ragged score rows")
    return ScoreMatrix(scores, datasets, methods)


def write_avg_ranks(report: RankReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "avg_rank", "rank_sum"])
        for m, a, r in zip(report.method_ids, report.avg_ranks, report.rank_sums):
            w.writerow([m, repr(float(a)), repr(float(r))])


def write_square(matrix: np.ndarray, labels, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([""] + list(labels))
        for lab, row in zip(labels, matrix):
            w.writerow([lab] + [repr(float(v)) for v in row])
