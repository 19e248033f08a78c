"""Bias-variance-diversity decomposition of squared ensemble risk.

Input is a prediction cube ``preds[t, i, n]`` (trial, member, example) and
the targets ``y[n]``.  With the ensemble mean over members ``fbar[t, n]`` and
the per-member mean over trials ``ftilde[i, n]``::

    expected_risk = mean_{t,n} (fbar - y)^2
    avg_bias      = mean_{i,n} (ftilde - y)^2
    avg_variance  = mean_{i,n} var_t f            (population variance)
    diversity     = mean_{t,n} mean_i (f - fbar)^2

and ``expected_risk == avg_bias + avg_variance - diversity`` holds exactly for
these empirical averages.  Noise is not split out; it lives in ``avg_bias``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


@dataclass
class PredictionCube:
    preds: np.ndarray
    targets: np.ndarray
    method_id: str = ""
    dataset_id: str = ""

    def __post_init__(self):
        self.preds = np.asarray(self.preds, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        if self.preds.ndim != 3 or min(self.preds.shape) < 1:
            raise ValueError(f"prediction cube must be a non-empty T x M x N array, got {self.preds.shape}")
        if self.targets.shape != (self.preds.shape[2],):
            raise ValueError("targets are not aligned with the example axis")

    @property
    def shape(self) -> tuple:
        return self.preds.shape


@dataclass(frozen=True)
class DecompositionResult:
    avg_bias: float
    avg_variance: float
    diversity: float
    expected_risk: float

    def as_tuple(self) -> tuple:
        return (self.avg_bias, self.avg_variance, self.diversity, self.expected_risk)

    @property
    def identity_gap(self) -> float:
        return self.expected_risk - (self.avg_bias + self.avg_variance - self.diversity)

    @classmethod
    def mean(cls, results) -> "DecompositionResult":
        arr = np.array([r.as_tuple() for r in results])
        return cls(*(float(v) for v in arr.mean(axis=0)))


def _check(cube: PredictionCube):
    if not (np.all(np.isfinite(cube.preds)) and np.all(np.isfinite(cube.targets))):
        raise ValueError("prediction cube contains non-finite values")


def decompose(cube: PredictionCube) -> DecompositionResult:
    _check(cube)
    f, y = cube.preds, cube.targets
    fbar = f.mean(axis=1)  # T x N
    ftilde = f.mean(axis=0)  # M x N
    risk = np.mean((fbar - y) ** 2)
    bias = np.mean((ftilde - y) ** 2)
    variance = np.mean((f - ftilde[None]) ** 2)
    diversity = np.mean((f - fbar[:, None, :]) ** 2)
    return DecompositionResult(float(bias), float(variance), float(diversity), float(risk))


def member_risks(cube: PredictionCube) -> np.ndarray:
    """Mean squared error of each member over trials and examples."""
    _check(cube)
    return np.mean((cube.preds - cube.targets) ** 2, axis=(0, 2))


@dataclass
class CubeAccumulator:
    """Collects per-trial ``M x N`` member prediction matrices."""

    targets: np.ndarray
    method_id: str = ""
    dataset_id: str = ""
    trials: list = field(default_factory=list)

    def append(self, member_preds) -> None:
        m = np.asarray(member_preds, dtype=float)
        if m.ndim != 2 or m.shape[1] != len(self.targets):
            raise ValueError(f"trial matrix of shape {m.shape} does not match {len(self.targets)} targets")
        if self.trials and m.shape != self.trials[0].shape:
            raise ValueError(f"trial shape {m.shape} differs from {self.trials[0].shape}")
        self.trials.append(m)

    def cube(self) -> PredictionCube:
        if not self.trials:
            raise ValueError("no trials accumulated")
        return PredictionCube(np.stack(self.trials), self.targets, self.method_id, self.dataset_id)


def accumulate(trials, targets, method_id: str = "", dataset_id: str = "") -> PredictionCube:
    acc = CubeAccumulator(np.asarray(targets, dtype=float), method_id, dataset_id)
    for t in trials:
        acc.append(t)
    return acc.cube()


def write_cube(cube: PredictionCube, preds_path, targets_path) -> None:
    """Flat long-format export: ``trial,member,example,prediction`` and ``example,target``."""
    with open(preds_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "member", "example", "prediction"])
        T, M, N = cube.shape
        for t in range(T):
            for i in range(M):
                for n in range(N):
                    w.writerow([t, i, n, repr(float(cube.preds[t, i, n]))])
    with open(targets_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["example", "target"])
        for n, v in enumerate(cube.targets):
            w.writerow([n, repr(float(v))])


def read_cube(preds_path, targets_path) -> PredictionCube:
    with open(targets_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    targets = np.empty(len(rows))
    for r in rows:
        targets[int(r["example"])] = float(r["target"])
    with open(preds_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{preds_path}: no predictions")
    idx = np.array([(int(r["trial"]), int(r["member"]), int(r["example"])) for r in rows])
    T, M, N = idx.max(axis=0) + 1
    if N != len(targets) or len(rows) != T * M * N:
        raise ValueError(f"{preds_path}: incomplete cube ({len(rows)} rows for {T}x{M}x{N})")
    preds = np.full((T, M, N), np.nan)
    preds[idx[:, 0], idx[:, 1], idx[:, 2]] = [float(r["prediction"]) for r in rows]
    return PredictionCube(preds, targets)
