"""Trial runner, multi-trial aggregation and result files.

One trial trains a freshly initialized model with the DVLR loop:

    forward (training mode) -> batch outcome from argmax vs labels
    -> loss gradient -> select rate -> optimizer step -> record responses

and then measures eval-mode accuracy on the full train and test splits.
Everything is derived from ``(spec, base_seed, trial_index)``.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import models as M
from .config import ExperimentSpec
from .data import Dataset, load_dataset, make_batches
from .errors import DataError, InternalError
from .optim import new_optimizer, step as optimizer_step
from .scheduler import (BatchOutcome, SchedulerState, new_scheduler, record_responses,
                        select_rate, write_trace_csv)
from .stats import welch_t_test
from .tensor import argmax_rows, softmax_cross_entropy

log = logging.getLogger(__name__)

RESULTS_HEADER = ("name", "avg_train", "avg_test", "p_value")
TRIALS_HEADER = ("trial", "seed", "train_acc_eval", "train_acc_train", "test_acc", "seconds")
T_TEST_CONVENTION = "Welch two-sample t-test, two-tailed, on per-trial test accuracy vs the baseline"

_MASK64 = (1 << 64) - 1

# stream ids under a trial seed
INIT_STREAM = 1
DROPOUT_STREAM = 2
SCHEDULER_STREAM = 3
SUBSET_STREAM = 0x5542


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def trial_seed(base_seed: int, trial_index: int) -> int:
    """64-bit seed for one trial, mixed from the base seed and the trial index."""
    return splitmix64(splitmix64(base_seed & _MASK64) ^ (trial_index & _MASK64))


def stream(seed: int, which: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(which,))))


def scheduler_seed(seed: int) -> int:
    return int(stream(seed, SCHEDULER_STREAM).integers(0, 2**63))


@lru_cache(maxsize=4)
def _load_split(dataset: str, split: str, data_dir: str | None) -> Dataset:
    return load_dataset(dataset, split, data_dir)


def subset_indices(n: int, fraction: float, base_seed: int) -> np.ndarray:
    """First ``round(fraction * n)`` entries of a base-seed permutation, sorted."""
    keep = max(1, int(round(fraction * n)))
    order = stream(base_seed, SUBSET_STREAM).permutation(n)
    return np.sort(order[:keep])


def load_data(spec: ExperimentSpec) -> tuple[Dataset, Dataset]:
    """Train and test splits for ``spec`` (train possibly subsetted)."""
    train = _load_split(spec.dataset, "train", spec.data_dir)
    test = _load_split(spec.dataset, "test", spec.data_dir)
    if spec.train_fraction < 1.0:
        train = train.subset(subset_indices(len(train), spec.train_fraction, spec.base_seed))
    return train, test


@dataclass
class TrainedTrial:
    model: M.Model
    scheduler: SchedulerState
    seed: int
    train_acc_train: float
    steps: int


def train_trial(spec: ExperimentSpec, trial_index: int, train: Dataset) -> TrainedTrial:
    """Run the DVLR training loop for one trial and return the trained state."""
    seed = trial_seed(spec.base_seed, trial_index)
    model = M.init_model(spec.model, stream(seed, INIT_STREAM))
    opt = new_optimizer(spec.optimizer, model.params)
    sched = new_scheduler(spec.schedule, scheduler_seed(seed))
    dropout_rng = stream(seed, DROPOUT_STREAM)
    step = 0
    hits = seen = 0
    for epoch in range(spec.epochs):
        hits = seen = 0
        for xb, yb in make_batches(train, spec.batch_size, seed, epoch):
            logits, cache = model.forward(xb, training=True, rng=dropout_rng)
            outcome = BatchOutcome.from_predictions(argmax_rows(logits), yb)
            _, grad_logits = softmax_cross_entropy(logits, yb)
            grads = model.backward(cache, grad_logits)
            eta = select_rate(sched, outcome)
            optimizer_step(opt, model.params, grads, eta)
            record_responses(sched, outcome, step)
            hits += outcome.n_correct
            seen += outcome.total
            step += 1
        log.info("%s trial %d epoch %d/%d: running train acc %.3f%%, eta_c=%.6g eta_i=%.6g",
                 spec.name, trial_index, epoch + 1, spec.epochs, 100.0 * hits / seen,
                 sched.current_eta_c, sched.current_eta_i)
    for name, p in model.params.items():
        if not np.all(np.isfinite(p)):
            raise InternalError(f"{spec.name} trial {trial_index}: parameter {name} became non-finite")
    return TrainedTrial(model, sched, seed, 100.0 * hits / seen, step)


def accuracy(model: M.Model, dataset: Dataset) -> float:
    """Eval-mode accuracy in percent."""
    return 100.0 * float(np.mean(M.predict(model, dataset.images) == dataset.labels))


@dataclass
class TrialResult:
    trial: int
    seed: int
    train_acc_eval: float
    train_acc_train: float
    test_acc: float
    trace: list[tuple[int, float, float]] = field(default_factory=list, repr=False)
    seconds: float = 0.0


def run_trial(spec: ExperimentSpec, trial_index: int,
              data: tuple[Dataset, Dataset] | None = None) -> TrialResult:
    start = time.perf_counter()
    train, test = data if data is not None else load_data(spec)
    done = train_trial(spec, trial_index, train)
    result = TrialResult(
        trial=trial_index,
        seed=done.seed,
        train_acc_eval=accuracy(done.model, train),
        train_acc_train=done.train_acc_train,
        test_acc=accuracy(done.model, test),
        trace=list(done.scheduler.trace),
    )
    result.seconds = time.perf_counter() - start
    log.info("%s trial %d: train %.3f%% test %.3f%% (%.1fs)", spec.name, trial_index,
             result.train_acc_eval, result.test_acc, result.seconds)
    return result


@dataclass
class ExperimentResult:
    name: str
    trials: list[TrialResult]
    spec: ExperimentSpec | None = None

    @property
    def test_accs(self) -> list[float]:
        return [t.test_acc for t in self.trials]

    @property
    def mean_train(self) -> float:
        return float(np.mean([t.train_acc_eval for t in self.trials]))

    @property
    def mean_test(self) -> float:
        return float(np.mean(self.test_accs))


def run_experiment(spec: ExperimentSpec, jobs: int = 1,
                   data: tuple[Dataset, Dataset] | None = None) -> ExperimentResult:
    """Run ``spec.trials`` trials (up to ``jobs`` at once) and aggregate."""
    data = data if data is not None else load_data(spec)
    indices = range(spec.trials)
    if jobs > 1 and spec.trials > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            trials = list(pool.map(lambda k: run_trial(spec, k, data), indices))
    else:
        trials = [run_trial(spec, k, data) for k in indices]
    return ExperimentResult(spec.name, sorted(trials, key=lambda t: t.trial), spec)


def p_value(result: ExperimentResult, baseline: ExperimentResult) -> float:
    return welch_t_test(result.test_accs, baseline.test_accs)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trials_csv(result: ExperimentResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIALS_HEADER)
        for t in result.trials:
            w.writerow((t.trial, t.seed, _fmt(t.train_acc_eval), _fmt(t.train_acc_train),
                        _fmt(t.test_acc), f"{t.seconds:.3f}"))


def read_trials_csv(path, name: str | None = None) -> ExperimentResult:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TRIALS_HEADER:
        raise DataError(f"{path}: expected header {','.join(TRIALS_HEADER)}")
    trials = [TrialResult(int(r[0]), int(r[1]), float(r[2]), float(r[3]), float(r[4]), [], float(r[5]))
              for r in rows[1:]]
    if not trials:
        raise DataError(f"{path}: no trial rows")
    if name is None:
        name = path.stem.removeprefix("trials_")
    return ExperimentResult(name, trials)


def results_rows(results: list[ExperimentResult], baseline: ExperimentResult) -> list[tuple]:
    rows = [(baseline.name, baseline.mean_train, baseline.mean_test, None)]
    for r in results:
        if r.name == baseline.name:
            continue
        p = p_value(r, baseline) if len(r.trials) >= 2 and len(baseline.trials) >= 2 else None
        rows.append((r.name, r.mean_train, r.mean_test, p))
    return rows


def write_results_csv(rows: list[tuple], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for name, train, test, p in rows:
            w.writerow((name, _fmt(train), _fmt(test), "" if p is None else _fmt(p)))


def read_results_csv(path) -> list[tuple]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != RESULTS_HEADER:
        raise DataError(f"{path}: expected header {','.join(RESULTS_HEADER)}")
    return [(n, float(a), float(b), float(p) if p else None) for n, a, b, p in rows[1:]]


def _write_text_report(rows: list[tuple], baseline: str, path) -> None:
    lines = [f"# baseline: {baseline}", f"# p-value: {T_TEST_CONVENTION}", "",
             f"{'name':<40} {'avg_train':>10} {'avg_test':>10} {'p_value':>8}"]
    for name, train, test, p in rows:
        lines.append(f"{name:<40} {train:>10.3f} {test:>10.3f} {'' if p is None else f'{p:.3f}':>8}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def emit_report(results: list[ExperimentResult], baseline: ExperimentResult, out_dir) -> list[tuple]:
    """Write results.csv, report.txt, manifest.json, trials_<name>.csv and trace CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    everything = [baseline] + [r for r in results if r.name != baseline.name]
    for r in everything:
        write_trials_csv(r, out / f"trials_{r.name}.csv")
        for t in r.trials:
            if t.trace:
                write_trace_csv(t.trace, out / f"trace_{r.name}_trial{t.trial}.csv")
    rows = results_rows(results, baseline)
    write_results_csv(rows, out / "results.csv")
    _write_text_report(rows, baseline.name, out / "report.txt")
    manifest = {"baseline": baseline.name, "experiments": [r.name for r in everything],
                "t_test": T_TEST_CONVENTION}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return rows


def recompute_report(out_dir, baseline: str | None = None) -> list[tuple]:
    """Rebuild results.csv and report.txt from the per-trial CSVs in ``out_dir``."""
    out = Path(out_dir)
    manifest_path = out / "manifest.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        names = manifest["experiments"]
        baseline = baseline or manifest["baseline"]
    else:
        names = sorted(p.stem.removeprefix("trials_") for p in out.glob("trials_*.csv"))
    if not names:
        raise DataError(f"no trials_*.csv files in {out}")
    if baseline is None or baseline not in names:
        raise DataError(f"baseline {baseline!r} not found among {names}")
    results = [read_trials_csv(out / f"trials_{n}.csv", n) for n in names]
    base = next(r for r in results if r.name == baseline)
    rows = results_rows(results, base)
    write_results_csv(rows, out / "results.csv")
    _write_text_report(rows, baseline, out / "report.txt")
    return rows
