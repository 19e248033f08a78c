"""Ensemble generation strategies and their pairwise composition.

Each strategy contributes one orthogonal mechanism to member generation:

=================  ==========================================================
bagging            bootstrap rows (n draws with replacement)
pasting            ceil(0.7 n) rows without replacement
random_subspace    ceil(0.7 d) features per member
dropout            dropout 0.2 on both hidden layers while training
snapshot           members are parameter copies at the end of each cosine
                   cycle of one training stream
ncl                members trained in order, penalised against earlier ones
stacking           a meta-network replaces the simple average
=================  ==========================================================

A composite is the union of two mechanisms.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .dataprep import Dataset
from .nncore import LossSpec, Network, NetworkConfig, forward, init_network, make_rng, train

STRATEGIES = ("bagging", "dropout", "ncl", "pasting", "random_subspace", "snapshot", "stacking")
BASELINES = ("simple_average", "single")
KINDS = STRATEGIES + BASELINES

_MODES = {
    "bagging": "parallel", "pasting": "parallel", "random_subspace": "parallel",
    "dropout": "parallel", "stacking": "parallel", "simple_average": "parallel",
    "single": "parallel", "snapshot": "stream", "ncl": "sequential",
}


class CompositionError(ValueError):
    pass


@dataclass(frozen=True)
class StrategySpec:
    kind: str
    max_samples: float = 0.7
    max_features: float = 0.7
    dropout_rate: float = 0.2
    lam: float = 0.1
    cycle_len: int = 10
    stacker_lr: float = 0.02

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}")

    @property
    def mode(self) -> str:
        return _MODES[self.kind]

    @property
    def integration(self) -> str:
        return "weighted" if self.kind == "stacking" else "simple_average"

    @property
    def id(self) -> str:
        return self.kind


@dataclass(frozen=True)
class CompositeSpec:
    first: StrategySpec
    second: StrategySpec
    stream_runs: int = 5

    def __post_init__(self):
        if self.first.kind == self.second.kind:
            raise CompositionError(f"cannot compose {self.first.kind!r} with itself")
        for s in (self.first, self.second):
            if s.kind not in STRATEGIES:
                raise CompositionError(f"{s.kind!r} is a baseline, not a composable strategy")
        if self.first.kind > self.second.kind:
            a, b = self.second, self.first
            object.__setattr__(self, "first", a)
            object.__setattr__(self, "second", b)
        if self.stream_runs < 1:
            raise CompositionError("stream_runs must be >= 1")

    @property
    def kinds(self) -> tuple:
        return (self.first.kind, self.second.kind)

    @property
    def id(self) -> str:
        return f"{self.first.kind}-{self.second.kind}"

    @property
    def integration(self) -> str:
        return "weighted" if "stacking" in self.kinds else "simple_average"

    @property
    def mode(self) -> str:
        modes = {self.first.mode, self.second.mode}
        for m in ("sequential", "stream"):
            if m in modes:
                return m
        return "parallel"


Spec = Union[StrategySpec, CompositeSpec]


def parse_method(method_id: str, stream_runs: int = 5) -> Spec:
    """``"bagging"`` -> StrategySpec, ``"dropout-snapshot"`` -> CompositeSpec."""
    if "-" in method_id:
        a, b = method_id.split("-", 1)
        return CompositeSpec(StrategySpec(a), StrategySpec(b), stream_runs)
    return StrategySpec(method_id)


def enumerate_level1(stream_runs: int = 5) -> list:
    """All 21 unordered pairs of the seven strategies, in canonical order."""
    return [CompositeSpec(StrategySpec(a), StrategySpec(b), stream_runs)
            for a, b in itertools.combinations(STRATEGIES, 2)]


@dataclass
class Recipe:
    """The mechanisms a spec switches on, flattened."""

    bootstrap: bool = False
    sample_fraction: Optional[float] = None
    feature_fraction: Optional[float] = None
    dropout_rate: float = 0.0
    ncl_lambda: Optional[float] = None
    cycle_len: Optional[int] = None
    streams: int = 1
    stacker_lr: Optional[float] = None


def recipe_for(spec: Spec) -> Recipe:
    parts = [spec] if isinstance(spec, StrategySpec) else [spec.first, spec.second]
    r = Recipe()
    for s in parts:
        if s.kind == "bagging":
            r.bootstrap = True
        elif s.kind == "pasting":
            r.sample_fraction = s.max_samples
        elif s.kind == "random_subspace":
            r.feature_fraction = s.max_features
        elif s.kind == "dropout":
            r.dropout_rate = s.dropout_rate
        elif s.kind == "ncl":
            r.ncl_lambda = s.lam
        elif s.kind == "snapshot":
            r.cycle_len = s.cycle_len
        elif s.kind == "stacking":
            r.stacker_lr = s.stacker_lr
    if isinstance(spec, CompositeSpec) and "snapshot" in spec.kinds and "stacking" not in spec.kinds:
        r.streams = spec.stream_runs
    return r


@dataclass
class EnsembleModel:
    members: list
    feature_masks: list
    meta: Optional[Network] = None
    method_id: str = ""
    n_features: int = 0

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def integrator(self) -> str:
        return "simple_average" if self.meta is None else "stacked"


def member_predictions(model: EnsembleModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return np.stack([forward(net, X[:, mask]) for net, mask in zip(model.members, model.feature_masks)])


def predict(model: EnsembleModel, X) -> tuple:
    """Return ``(ensemble_predictions, member_predictions)``.

    Member predictions have shape ``(M, n)`` and are always returned, also for
    stacked models, because the decomposition needs them.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got array of shape {X.shape}")
    members = member_predictions(model, X)
    if model.meta is None:
        return members.mean(axis=0), members
    return forward(model.meta, members.T), members


def fraction_count(fraction: float, total: int) -> int:
    """``ceil(fraction * total)``, immune to 0.7 * 10 == 7.000000000000001."""
    return max(1, math.ceil(round(fraction * total, 9)))


def _sample_rows(rng, n, recipe: Recipe) -> np.ndarray:
    size = n if recipe.sample_fraction is None else fraction_count(recipe.sample_fraction, n)
    if recipe.bootstrap:
        return np.sort(rng.integers(0, n, size=size))
    if recipe.sample_fraction is not None:
        return np.sort(rng.choice(n, size=size, replace=False))
    return np.arange(n)


def _sample_features(rng, d, recipe: Recipe) -> np.ndarray:
    if recipe.feature_fraction is None:
        return np.arange(d)
    return np.sort(rng.choice(d, size=fraction_count(recipe.feature_fraction, d), replace=False))


def _peer_loss(recipe, peers, masks, X_rows) -> LossSpec:
    if recipe.ncl_lambda is None:
        return LossSpec()
    if not peers:
        return LossSpec("ncl", recipe.ncl_lambda, None)
    preds = np.stack([forward(net, X_rows[:, m]) for net, m in zip(peers, masks)])
    return LossSpec("ncl", recipe.ncl_lambda, preds)


def _member_seeds(seed, count):
    return [int(s.generate_state(1, np.uint64)[0])
            for s in np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF]).spawn(count)]


def generate(spec: Spec, train_data: Dataset, arch: NetworkConfig, M: int, seed: int = 0) -> EnsembleModel:
    """Train an ensemble of ``M`` members on ``train_data`` following ``spec``."""
    if M < 1:
        raise ValueError("ensemble size must be >= 1")
    if isinstance(spec, StrategySpec) and spec.kind == "single":
        M = 1
    X, y = train_data.X, train_data.y
    n, d = X.shape
    recipe = recipe_for(spec)
    method_id = spec.id
    if recipe.cycle_len is not None:
        if M % recipe.streams:
            raise CompositionError(f"ensemble size {M} is not divisible by stream_runs={recipe.streams}")
        units, per_unit = recipe.streams, M // recipe.streams
    else:
        units, per_unit = M, 1

    base = arch.with_(dropout_rate=recipe.dropout_rate)
    unit_seeds = _member_seeds(seed, units + 1)
    members, masks = [], []
    # ncl peers: every earlier member, or the final snapshot of every earlier stream
    peers, peer_masks = [], []
    for u in range(units):
        rng = make_rng(unit_seeds[u], 7)
        rows = _sample_rows(rng, n, recipe)
        feats = _sample_features(rng, d, recipe)
        Xu, yu = X[rows][:, feats], y[rows]
        loss = _peer_loss(recipe, peers, peer_masks, X[rows])
        net = init_network(base, len(feats), unit_seeds[u])
        if recipe.cycle_len is None:
            train(net, Xu, yu, base, loss)
            members.append(net)
            masks.append(feats)
        else:
            for _ in range(per_unit):
                train(net, Xu, yu, base, loss, epochs=recipe.cycle_len, cycle_len=recipe.cycle_len)
                members.append(net.copy())
                masks.append(feats)
        peers.append(members[-1])
        peer_masks.append(feats)

    model = EnsembleModel(members, masks, None, method_id, d)
    if recipe.stacker_lr is not None:
        model.meta = _fit_stacker(model, X, y, recipe.stacker_lr, arch, unit_seeds[-1])
    return model


def _fit_stacker(model: EnsembleModel, X, y, lr, arch: NetworkConfig, seed) -> Network:
    """One-hidden-layer relu network of width M on in-sample member predictions."""
    Z = member_predictions(model, X).T
    M = Z.shape[1]
    cfg = NetworkConfig(M, None, "relu", lr, epochs=10, batch_size=arch.batch_size)
    meta = init_network(cfg, M, seed)
    return train(meta, Z, y, cfg)
