"""Trial protocol shared by the level-0, level-1 and ensemble-size experiments.

One trial is one (iteration, fold) training run: members are trained on the
other folds and predict the held-out fold.  Per fold, the ``iterations``
trials form a prediction cube that is decomposed on its own; fold results are
then averaged (or, with ``pooled``, folds are concatenated along the example
axis before decomposing).

Every trial draws its seeds from ``(seed, dataset, method, size, fold,
iteration, attempt)`` alone, so results do not depend on execution order or
on how many worker processes are used.
"""

from __future__ import annotations

import logging
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from threadpoolctl import threadpool_limits

from ..dataprep import Dataset, RawTable, friedman1_table, kfold, linear_table, load_csv, preprocess
from ..decomposition import CubeAccumulator, DecompositionResult, PredictionCube, decompose, member_risks
from ..nncore import PRESETS, NetworkConfig, TrainingDiverged, make_rng
from ..strategies import generate, parse_method, predict
from .config import ExperimentConfig

log = logging.getLogger(__name__)


class TrialAborted(RuntimeError):
    pass


def _h(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


@dataclass
class FoldData:
    train: Dataset
    test: Dataset
    arch_id: str


@dataclass
class PreparedDataset:
    name: str
    folds: list  # FoldData per fold


@dataclass
class MethodResult:
    method_id: str
    members: int
    decomposition: dict = field(default_factory=dict)  # dataset -> DecompositionResult
    srmse: dict = field(default_factory=dict)  # dataset -> float
    stacked_risk: dict = field(default_factory=dict)  # dataset -> float (weighted integrators)
    fold_checks: dict = field(default_factory=dict)  # dataset -> [(ensemble SA mse, mean member mse)]
    cubes: dict = field(default_factory=dict)  # dataset -> [PredictionCube per fold]
    failures: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def label(self) -> str:
        return self.method_id

    def mean_field(self, name: str) -> float:
        vals = [getattr(d, name) for d in self.decomposition.values()]
        return float(np.mean(vals)) if vals else float("nan")

    @property
    def expected_risk(self) -> float:
        return self.mean_field("expected_risk")


def load_tables(config: ExperimentConfig) -> list:
    tables = []
    for s in config.synthetic:
        if s.kind == "friedman1":
            tables.append((s.name, friedman1_table(s.n, s.noise_sd, s.seed)))
        else:
            tables.append((s.name, linear_table(s.n, s.d, s.noise_sd, s.seed)))
    for e in config.datasets:
        tables.append((e.name, load_csv(e.path, e.target, e.missing)))
    return tables


def architecture_for(config: ExperimentConfig, dataset: str, fold: int) -> str:
    if config.architecture.startswith("fixed:"):
        return config.architecture[6:]
    ids = sorted(PRESETS)
    return ids[int(make_rng(config.seed, _h(dataset), fold).integers(len(ids)))]


def prepare(config: ExperimentConfig, name: str, table: RawTable) -> PreparedDataset:
    split = kfold(table.n, config.folds, config.fold_seed)
    folds = []
    for f in range(config.folds):
        train_rows, test_rows = split.train_rows(f), split.test_rows(f)
        data = preprocess(table, train_rows)
        folds.append(FoldData(data.subset(train_rows), data.subset(test_rows),
                              architecture_for(config, name, f)))
    return PreparedDataset(name, folds)


@dataclass(frozen=True)
class Task:
    dataset: str
    method_id: str
    members: int
    fold: int
    iteration: int


def _trial_seed(config, task: Task, attempt: int) -> int:
    ss = np.random.SeedSequence([config.seed, _h(task.dataset), _h(task.method_id),
                                 task.members, task.fold, task.iteration, attempt])
    return int(ss.generate_state(1, np.uint64)[0])


def run_trial(config: ExperimentConfig, fold: FoldData, task: Task):
    """Train one ensemble and predict the held-out fold.

    Returns ``(member_preds, ensemble_preds, error)``; a diverged run is
    retried once with a fresh seed, then reported through ``error``.
    """
    spec = parse_method(task.method_id, config.stream_runs)
    arch: NetworkConfig = PRESETS[fold.arch_id].with_(epochs=config.epochs, batch_size=config.batch_size)
    members = 1 if task.method_id == "single" else task.members
    last = None
    for attempt in range(2):
        try:
            model = generate(spec, fold.train, arch, members, _trial_seed(config, task, attempt))
            ens, mem = predict(model, fold.test.X)
            if np.all(np.isfinite(mem)) and np.all(np.isfinite(ens)):
                return mem, ens, None
            last = "non-finite predictions"
        except TrainingDiverged as exc:
            last = str(exc)
        log.warning("%s/%s fold %d iteration %d attempt %d: %s", task.dataset, task.method_id,
                    task.fold, task.iteration, attempt, last)
    return None, None, last


_WORKER = {}


def _init_worker(config, prepared):
    _WORKER["config"] = config
    _WORKER["prepared"] = prepared


def _run_task(task: Task):
    config, prepared = _WORKER["config"], _WORKER["prepared"]
    t0 = time.perf_counter()
    with threadpool_limits(limits=1):
        out = run_trial(config, prepared[task.dataset].folds[task.fold], task)
    return out + (time.perf_counter() - t0,)


def execute(config: ExperimentConfig, prepared: dict, tasks: list) -> list:
    if config.jobs <= 1 or len(tasks) <= 1:
        _init_worker(config, prepared)
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=config.jobs, initializer=_init_worker,
                             initargs=(config, prepared)) as pool:
        return list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * config.jobs))))


def _assemble(config, prepared: dict, method_id: str, members: int, outputs: dict) -> MethodResult:
    res = MethodResult(method_id, 1 if method_id == "single" else members)
    weighted = parse_method(method_id, config.stream_runs).integration == "weighted"
    for name, ds in prepared.items():
        fold_results, stacked, checks, cubes, fold_sizes = [], [], [], [], []
        failed = False
        for f, fold in enumerate(ds.folds):
            acc = CubeAccumulator(fold.test.y, method_id, name)
            ens_mse = []
            for it in range(config.iterations):
                mem, ens, err, secs = outputs[(name, f, it)]
                res.seconds += secs
                if err is not None:
                    res.failures.append(f"{name} fold {f} iteration {it}: {err}")
                    failed = True
                    break
                acc.append(mem)
                ens_mse.append(float(np.mean((ens - fold.test.y) ** 2)))
            if failed:
                break
            cube = acc.cube()
            cubes.append(cube)
            fold_sizes.append(len(fold.test.y))
            d = decompose(cube)
            fold_results.append(d)
            stacked.append(float(np.mean(ens_mse)))
            checks.append((d.expected_risk, float(member_risks(cube).mean())))
        if failed:
            continue
        if config.pooled:
            pooled = PredictionCube(np.concatenate([c.preds for c in cubes], axis=2),
                                    np.concatenate([c.targets for c in cubes]), method_id, name)
            dec = decompose(pooled)
            w = np.array(fold_sizes, dtype=float) / sum(fold_sizes)
            out_risk = float(np.dot(w, stacked))
        else:
            dec = DecompositionResult.mean(fold_results)
            out_risk = float(np.mean(stacked))
        res.decomposition[name] = dec
        res.fold_checks[name] = checks
        res.cubes[name] = cubes
        if weighted:
            res.stacked_risk[name] = out_risk
            res.srmse[name] = float(np.sqrt(out_risk))
        else:
            res.srmse[name] = float(np.sqrt(dec.expected_risk))
    return res


def run_methods(config: ExperimentConfig, method_ids: list, sizes: Optional[list] = None,
                prepared: Optional[dict] = None) -> list:
    """Run every (method, size) over every dataset; results sorted by expected risk."""
    if prepared is None:
        prepared = {name: prepare(config, name, table) for name, table in load_tables(config)}
    combos = [(m, s) for m in method_ids for s in (sizes or [config.members])]
    tasks = [Task(name, m, s, f, it)
             for m, s in combos
             for name in prepared
             for f in range(config.folds)
             for it in range(config.iterations)]
    outputs = execute(config, prepared, tasks)
    by_combo = {}
    for task, out in zip(tasks, outputs):
        by_combo.setdefault((task.method_id, task.members), {})[(task.dataset, task.fold, task.iteration)] = out
    results = [_assemble(config, prepared, m, s, by_combo[(m, s)]) for m, s in combos]
    results.sort(key=lambda r: (np.nan_to_num(r.expected_risk, nan=np.inf), r.method_id, r.members))
    return results


def run_level0(config: ExperimentConfig, prepared: Optional[dict] = None) -> list:
    return run_methods(config.with_(level="0"), config.with_(level="0").method_ids(), prepared=prepared)


def run_level1(config: ExperimentConfig, prepared: Optional[dict] = None) -> list:
    return run_methods(config.with_(level="1"), config.with_(level="1").method_ids(), prepared=prepared)


def run_size_sensitivity(config: ExperimentConfig, prepared: Optional[dict] = None) -> list:
    cfg = config.with_(level="size")
    return run_methods(cfg, [cfg.size_method], sizes=list(cfg.sizes), prepared=prepared)
