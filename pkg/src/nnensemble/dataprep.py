"""Tabular data loading, leakage-free preprocessing, folds and toy datasets."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .nncore import make_rng

DEFAULT_MISSING = ("", "NA", "nan")
ZERO_VARIANCE = 1e-12


class DataError(ValueError):
    """Malformed input table or an unusable dataset."""


class EmptyDatasetError(DataError):
    pass


@dataclass
class RawTable:
    """Columns as parsed from disk.

    Numeric columns are float arrays with NaN for missing cells; categorical
    columns are object arrays with None for missing cells.  The target is
    always numeric and complete.
    """

    names: list
    kinds: dict  # name -> "numeric" | "categorical"
    columns: dict  # name -> np.ndarray
    target: np.ndarray
    target_name: str = "target"

    @property
    def n(self) -> int:
        return len(self.target)

    def has_missing(self, name: str) -> bool:
        col = self.columns[name]
        if self.kinds[name] == "numeric":
            return bool(np.isnan(col).any())
        return any(v is None for v in col)


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    y_mean: float = 0.0
    y_std: float = 1.0
    feature_names: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> "Dataset":
        return Dataset(self.X[rows], self.y[rows], self.y_mean, self.y_std,
                       list(self.feature_names))

    def destandardize(self, y_std_scale: np.ndarray) -> np.ndarray:
        return np.asarray(y_std_scale) * self.y_std + self.y_mean


@dataclass
class FoldSplit:
    k: int
    assignment: np.ndarray

    def test_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def train_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != fold)


def _parse_float(s: str) -> Optional[float]:
    try:
        v = float(s)
    except ValueError:
        return None
    return v


def load_csv(path, target_column: str, missing_markers: Sequence[str] = DEFAULT_MISSING) -> RawTable:
    """Read a comma-separated file with a header row into a ``RawTable``.

    A column is numeric when every non-missing cell parses as a float,
    otherwise categorical.
    """
    markers = set(missing_markers)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: empty file (header row required)")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    bad = [i + 2 for i, r in enumerate(body) if len(r) != len(header)]
    if bad:
        raise DataError(f"{path}: ragged rows at lines {bad[:20]}")
    if target_column not in header:
        raise DataError(f"{path}: target column {target_column!r} not found")

    kinds, columns = {}, {}
    target = None
    for j, name in enumerate(header):
        cells = [r[j].strip() for r in body]
        missing = [c in markers for c in cells]
        parsed = [None if m else _parse_float(c) for c, m in zip(cells, missing)]
        numeric = all(m or p is not None for m, p in zip(missing, parsed))
        if name == target_column:
            if not numeric:
                raise DataError(f"{path}: target column {name!r} is not numeric")
            if any(missing):
                lines = [i + 2 for i, m in enumerate(missing) if m]
                raise DataError(f"{path}: target column has missing cells at lines {lines[:20]}")
            target = np.array(parsed, dtype=float)
            continue
        if numeric:
            kinds[name] = "numeric"
            columns[name] = np.array([np.nan if p is None else p for p in parsed], dtype=float)
        else:
            kinds[name] = "categorical"
            columns[name] = np.array([None if m else c for c, m in zip(cells, missing)], dtype=object)
    names = [h for h in header if h != target_column]
    return RawTable(names, kinds, columns, target, target_column)


def write_csv(data: Dataset, path, target_name: str = "target") -> None:
    """Write a ``Dataset`` (standardized values) so ``load_csv`` reproduces it exactly."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(data.feature_names) + [target_name])
        for row, t in zip(data.X, data.y):
            w.writerow([repr(float(v)) for v in row] + [repr(float(t))])


def table_from_arrays(X: np.ndarray, y: np.ndarray, names=None) -> RawTable:
    X = np.asarray(X, dtype=float)
    names = list(names) if names is not None else [f"x{j + 1}" for j in range(X.shape[1])]
    return RawTable(names, {n: "numeric" for n in names},
                    {n: X[:, j].copy() for j, n in enumerate(names)},
                    np.asarray(y, dtype=float).copy())


def loo_encode(table: RawTable, target, train_rows) -> RawTable:
    """Leave-one-out target encoding of categorical columns.

    Training row i with category c gets the mean target of the *other*
    training rows with category c (the global training mean when it is the
    only one).  Non-training rows get the full training mean of their
    category, or the global training mean for unseen categories.  Missing
    categorical cells are treated as their own category.
    """
    target = np.asarray(target, dtype=float)
    train_rows = np.asarray(train_rows)
    is_train = np.zeros(table.n, dtype=bool)
    is_train[train_rows] = True
    global_mean = float(target[train_rows].mean())
    kinds = dict(table.kinds)
    columns = dict(table.columns)
    for name in table.names:
        if table.kinds[name] != "categorical":
            continue
        col = table.columns[name]
        sums, counts = {}, {}
        for i in train_rows:
            c = col[i]
            sums[c] = sums.get(c, 0.0) + target[i]
            counts[c] = counts.get(c, 0) + 1
        enc = np.empty(table.n)
        for i in range(table.n):
            c = col[i]
            if is_train[i]:
                cnt = counts[c] - 1
                enc[i] = (sums[c] - target[i]) / cnt if cnt > 0 else global_mean
            else:
                enc[i] = sums[c] / counts[c] if c in counts else global_mean
        kinds[name] = "numeric"
        columns[name] = enc
    return RawTable(list(table.names), kinds, columns, table.target, table.target_name)


def preprocess(table: RawTable, train_rows=None) -> Dataset:
    """Drop incomplete columns, LOO-encode categoricals, z-score, drop constants.

    All statistics (category means, feature and target mean/std) come from
    ``train_rows`` only; the remaining rows are transformed with them.
    ``train_rows=None`` uses every row.
    """
    train_rows = np.arange(table.n) if train_rows is None else np.asarray(train_rows)
    if train_rows.size == 0:
        raise DataError("train_rows is empty")
    kept = [n for n in table.names if not table.has_missing(n)]
    complete = RawTable(kept, {n: table.kinds[n] for n in kept},
                        {n: table.columns[n] for n in kept}, table.target, table.target_name)
    encoded = loo_encode(complete, table.target, train_rows)

    names, cols = [], []
    for name in kept:
        col = np.asarray(encoded.columns[name], dtype=float)
        tr = col[train_rows]
        var = tr.var()
        if var < ZERO_VARIANCE:
            continue
        names.append(name)
        cols.append((col - tr.mean()) / math.sqrt(var))
    if not names:
        raise EmptyDatasetError("no usable feature columns left after preprocessing")
    y_tr = table.target[train_rows]
    y_mean, y_std = float(y_tr.mean()), float(y_tr.std())
    if y_std ** 2 < ZERO_VARIANCE:
        raise EmptyDatasetError("target is constant on the training rows")
    X = np.column_stack(cols)
    y = (table.target - y_mean) / y_std
    return Dataset(X, y, y_mean, y_std, names)


def kfold(n: int, k: int, seed: int = 42) -> FoldSplit:
    """Shuffle rows with ``seed`` and deal them into ``k`` near-equal folds."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if n < k:
        raise ValueError(f"cannot split {n} rows into {k} folds")
    perm = make_rng(seed).permutation(n)
    assignment = np.empty(n, dtype=int)
    start = 0
    for f in range(k):
        size = n // k + (1 if f < n % k else 0)
        assignment[perm[start:start + size]] = f
        start += size
    return FoldSplit(k, assignment)


def friedman1_target(X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(X)
    return (10.0 * np.sin(np.pi * X[:, 0] * X[:, 1]) + 20.0 * (X[:, 2] - 0.5) ** 2
            + 10.0 * X[:, 3] + 5.0 * X[:, 4])


def friedman1_table(n: int, noise_sd: float = 1.0, seed: int = 0) -> RawTable:
    if n < 10:
        raise ValueError("n must be >= 10")
    rng = make_rng(seed, 1)
    X = rng.random((n, 10))
    y = friedman1_target(X) + noise_sd * rng.standard_normal(n)
    return table_from_arrays(X, y)


def linear_table(n: int, d: int = 10, noise_sd: float = 1.0, seed: int = 0) -> RawTable:
    if n < 10:
        raise ValueError("n must be >= 10")
    rng = make_rng(seed, 2)
    w = rng.standard_normal(d)
    X = rng.standard_normal((n, d))
    y = X @ w + noise_sd * rng.standard_normal(n)
    return table_from_arrays(X, y)


def synth_friedman1(n: int, noise_sd: float = 1.0, seed: int = 0) -> Dataset:
    """Friedman #1 regression problem on [0,1]^10, standardized over all rows."""
    return preprocess(friedman1_table(n, noise_sd, seed))


def synth_linear(n: int, d: int = 10, noise_sd: float = 1.0, seed: int = 0) -> Dataset:
    """``y = X @ w + noise`` with Gaussian features and weights drawn from ``seed``."""
    return preprocess(linear_table(n, d, noise_sd, seed))


@dataclass
class ManifestEntry:
    path: str
    target: str
    missing: tuple = DEFAULT_MISSING

    @property
    def name(self) -> str:
        return os.path.splitext(os.path.basename(self.path))[0]


def read_manifest(path) -> list:
    """Parse a dataset manifest.

    One dataset per line: ``path,target[,marker|marker|...]``.  Blank lines
    and lines starting with ``#`` are ignored; relative paths resolve against
    the manifest's directory.
    """
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = next(csv.reader([line]))
            if len(parts) < 2:
                raise DataError(f"{path}:{lineno}: expected 'path,target[,markers]'")
            p = parts[0].strip()
            if not os.path.isabs(p):
                p = os.path.join(base, p)
            missing = DEFAULT_MISSING
            if len(parts) > 2:
                missing = tuple(m.strip() for m in parts[2].split("|"))
            entries.append(ManifestEntry(p, parts[1].strip(), missing))
    return entries
