"""Experiment configuration: an INI file read with :mod:`configparser`.

Example::

    [experiment]
    members = 25
    iterations = 10
    folds = 3
    fold_seed = 42
    seed = 0
    architecture = random_of_four     ; or fixed:M0 .. fixed:M3
    sizes = 5, 10, 25, 100, 200
    size_method = dropout-snapshot

    [datasets]
    manifest = datasets.txt

    [synthetic:friedman1]
    kind = friedman1
    n = 500
    noise_sd = 1.0
    seed = 0

Every key is optional; the defaults are the ones in :class:`ExperimentConfig`.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields, replace
from typing import Optional

from ..dataprep import ManifestEntry, read_manifest
from ..nncore import PRESETS
from ..strategies import BASELINES, STRATEGIES, enumerate_level1, parse_method

LEVELS = ("0", "1", "size")
DEFAULT_SIZES = (5, 10, 25, 100, 200)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticSpec:
    name: str
    kind: str = "friedman1"
    n: int = 500
    d: int = 10
    noise_sd: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    level: str = "0"
    methods: tuple = ()
    members: int = 25
    iterations: int = 10
    folds: int = 3
    fold_seed: int = 42
    seed: int = 0
    architecture: str = "random_of_four"
    sizes: tuple = DEFAULT_SIZES
    size_method: str = "dropout-snapshot"
    stream_runs: int = 5
    pooled: bool = False
    epochs: int = 10
    batch_size: int = 32
    jobs: int = 1
    holm: bool = False
    manifest: Optional[str] = None
    datasets: tuple = ()  # ManifestEntry
    synthetic: tuple = ()  # SyntheticSpec
    out: str = "results"

    def with_(self, **changes) -> "ExperimentConfig":
        cfg = replace(self, **{k: v for k, v in changes.items() if v is not None})
        cfg.validate()
        return cfg

    def method_ids(self) -> list:
        if self.methods:
            return list(self.methods)
        if self.level == "1":
            return [c.id for c in enumerate_level1(self.stream_runs)] + list(BASELINES)
        if self.level == "size":
            return [self.size_method]
        return list(STRATEGIES) + list(BASELINES)

    def validate(self) -> None:
        if self.level not in LEVELS:
            raise ConfigError(f"level must be one of {LEVELS}, got {self.level!r}")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if self.members < 1:
            raise ConfigError("members must be >= 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.stream_runs < 1:
            raise ConfigError("stream_runs must be >= 1")
        if self.level == "size":
            if not self.sizes:
                raise ConfigError("sizes must be nonempty in size mode")
            if len(set(self.sizes)) != len(self.sizes):
                raise ConfigError(f"duplicate ensemble size in {list(self.sizes)}")
            if any(s < 1 for s in self.sizes):
                raise ConfigError("ensemble sizes must be >= 1")
        arch = self.architecture
        if arch != "random_of_four":
            if not arch.startswith("fixed:") or arch[6:] not in PRESETS:
                raise ConfigError(f"architecture must be random_of_four or fixed:M0..M3, got {arch!r}")
        for m in self.method_ids():
            try:
                parse_method(m, self.stream_runs)
            except ValueError as exc:
                raise ConfigError(f"bad method {m!r}: {exc}") from exc
        names = [s.name for s in self.synthetic] + [e.name for e in self.datasets]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate dataset names: {names}")

    def echo(self) -> list:
        """``key = value`` lines describing every setting (for the run manifest)."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "datasets":
                v = [(e.name, e.target) for e in v]
            elif f.name == "synthetic":
                v = [(s.name, s.kind, s.n, s.d, s.noise_sd, s.seed) for s in v]
            elif f.name in ("out", "manifest", "jobs"):
                # excluded so output is identical across output dirs and --jobs
                continue
            lines.append(f"{f.name} = {v}")
        return lines


def _ints(text: str) -> tuple:
    return tuple(int(t) for t in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def load_config(path) -> ExperimentConfig:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    base = os.path.dirname(os.path.abspath(path))
    kw = {}
    if parser.has_section("experiment"):
        sec = parser["experiment"]
        known = {f.name for f in fields(ExperimentConfig)}
        for key, raw in sec.items():
            if key not in known or key in ("datasets", "synthetic", "manifest"):
                raise ConfigError(f"{path}: unknown key [experiment] {key}")
            try:
                if key in ("members", "iterations", "folds", "fold_seed", "seed", "stream_runs",
                           "epochs", "batch_size", "jobs"):
                    kw[key] = int(raw)
                elif key == "sizes":
                    kw[key] = _ints(raw)
                elif key in ("pooled", "holm"):
                    kw[key] = _bool(raw)
                elif key == "methods":
                    kw[key] = tuple(m.strip() for m in raw.split(",") if m.strip())
                else:
                    kw[key] = raw.strip()
            except ValueError as exc:
                raise ConfigError(f"{path}: [experiment] {key}: {exc}") from exc
    entries = ()
    if parser.has_option("datasets", "manifest"):
        mpath = parser["datasets"]["manifest"].strip()
        if not os.path.isabs(mpath):
            mpath = os.path.join(base, mpath)
        if not os.path.isfile(mpath):
            raise ConfigError(f"dataset manifest not found: {mpath}")
        entries = tuple(read_manifest(mpath))
        kw["manifest"] = mpath
    synth = []
    for sec_name in parser.sections():
        if not sec_name.startswith("synthetic:"):
            continue
        sec = parser[sec_name]
        try:
            synth.append(SyntheticSpec(
                name=sec_name.split(":", 1)[1].strip(),
                kind=sec.get("kind", "friedman1").strip(),
                n=sec.getint("n", 500),
                d=sec.getint("d", 10),
                noise_sd=sec.getfloat("noise_sd", 1.0),
                seed=sec.getint("seed", 0),
            ))
        except ValueError as exc:
            raise ConfigError(f"{path}: [{sec_name}]: {exc}") from exc
        if synth[-1].kind not in ("friedman1", "linear"):
            raise ConfigError(f"{path}: [{sec_name}] unknown synthetic kind {synth[-1].kind!r}")
    if not entries and not synth:
        raise ConfigError(f"{path}: no datasets (need [datasets] manifest or [synthetic:*] sections)")
    cfg = ExperimentConfig(datasets=entries, synthetic=tuple(synth), **kw)
    cfg.validate()
    return cfg
