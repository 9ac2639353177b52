"""Dual variable learning rates.

Two learning rates are kept: ``eta_c`` is used for a batch whose responses are
mostly correct and ``eta_i`` for a batch whose responses are mostly incorrect.
Each rate is either static or follows a variable threshold: correct (resp.
incorrect) responses are counted, and every time the running count reaches a
threshold drawn uniformly from ``[lo, hi]`` the rate moves by a fixed amount,
``delta_fraction * initial``, and a fresh threshold is drawn.

Counting is per example. A batch adds all its responses at once and the
remainder past a threshold is carried into the next count, which gives the
same rates as feeding the responses one at a time. Each rate draws its
thresholds from its own random stream so the two counters never interact.

Typical loop::

    state = new_scheduler(config, seed)
    for step, batch in enumerate(batches):
        outcome = BatchOutcome.from_predictions(pred, labels)
        eta = select_rate(state, outcome)
        optim.step(opt_state, params, grads, eta)
        record_responses(state, outcome, step)
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ConfigError, DataError, InternalError

STATIC = "static"
VARIABLE = "variable"
INCREASE = "increase"
DECREASE = "decrease"
DEFAULT_DELTA_FRACTION = 1e-4
TRACE_HEADER = ("step", "eta_c", "eta_i")


@dataclass(frozen=True)
class RateSchedule:
    initial: float
    mode: str = STATIC
    threshold_lo: int | None = None
    threshold_hi: int | None = None
    direction: str | None = None
    delta_fraction: float = DEFAULT_DELTA_FRACTION

    def __post_init__(self):
        if not (np.isfinite(self.initial) and self.initial > 0):
            raise ConfigError(f"initial learning rate must be positive, got {self.initial}")
        if not (np.isfinite(self.delta_fraction) and self.delta_fraction > 0):
            raise ConfigError(f"delta_fraction must be positive, got {self.delta_fraction}")
        if self.mode == STATIC:
            return
        if self.mode != VARIABLE:
            raise ConfigError(f"schedule mode must be {STATIC!r} or {VARIABLE!r}, got {self.mode!r}")
        lo, hi = self.threshold_lo, self.threshold_hi
        if not (isinstance(lo, (int, np.integer)) and isinstance(hi, (int, np.integer))):
            raise ConfigError(f"variable thresholds must be integers, got {lo!r}-{hi!r}")
        if lo < 1:
            raise ConfigError(f"threshold lower bound must be a positive integer, got {lo}")
        if lo > hi:
            raise ConfigError(f"threshold range {lo}-{hi} is empty (lower bound above upper)")
        if self.direction not in (INCREASE, DECREASE):
            raise ConfigError(f"direction must be {INCREASE!r} or {DECREASE!r}, got {self.direction!r}")

    @classmethod
    def static(cls, initial: float) -> "RateSchedule":
        return cls(initial=initial)

    @classmethod
    def variable(cls, initial, lo, hi, direction=INCREASE, delta_fraction=DEFAULT_DELTA_FRACTION):
        return cls(initial=initial, mode=VARIABLE, threshold_lo=lo, threshold_hi=hi,
                   direction=direction, delta_fraction=delta_fraction)

    @property
    def is_variable(self) -> bool:
        return self.mode == VARIABLE

    @property
    def delta(self) -> float:
        """Signed change applied per trigger."""
        step = self.delta_fraction * self.initial
        return step if self.direction == INCREASE else -step


@dataclass(frozen=True)
class DualRateConfig:
    correct: RateSchedule
    incorrect: RateSchedule
    # which rate an exact 50/50 batch uses
    tie_rate: str = "incorrect"

    def __post_init__(self):
        if self.tie_rate not in ("correct", "incorrect"):
            raise ConfigError(f"tie_rate must be 'correct' or 'incorrect', got {self.tie_rate!r}")

    @classmethod
    def single(cls, eta: float) -> "DualRateConfig":
        """Both rates static and equal: plain single-rate training."""
        return cls(RateSchedule.static(eta), RateSchedule.static(eta))


@dataclass(frozen=True)
class BatchOutcome:
    n_correct: int
    n_incorrect: int

    def __post_init__(self):
        if self.n_correct < 0 or self.n_incorrect < 0:
            raise DataError(f"response counts must be non-negative, got {self.n_correct}/{self.n_incorrect}")
        if self.total <= 0:
            raise DataError("a batch outcome needs at least one response")

    @property
    def total(self) -> int:
        return self.n_correct + self.n_incorrect

    @classmethod
    def from_predictions(cls, predicted, labels) -> "BatchOutcome":
        hits = int(np.count_nonzero(np.asarray(predicted) == np.asarray(labels)))
        return cls(hits, len(labels) - hits)


def _draw(rng: np.random.Generator, schedule: RateSchedule) -> int:
    return int(rng.integers(schedule.threshold_lo, schedule.threshold_hi, endpoint=True))


@dataclass
class RateTrack:
    """Live state of one rate: current value, running count, current threshold."""

    schedule: RateSchedule
    rng: np.random.Generator
    eta: float = 0.0
    count: int = 0
    threshold: int | None = None
    triggers: int = 0

    def __post_init__(self):
        self.eta = float(self.schedule.initial)
        if self.schedule.is_variable:
            self.threshold = _draw(self.rng, self.schedule)

    def add(self, n: int) -> None:
        if not self.schedule.is_variable:
            return
        self.count += n
        delta = self.schedule.delta
        while self.count >= self.threshold:
            self.count -= self.threshold
            self.eta = max(0.0, self.eta + delta)
            self.triggers += 1
            self.threshold = _draw(self.rng, self.schedule)


@dataclass
class SchedulerState:
    config: DualRateConfig
    correct: RateTrack
    incorrect: RateTrack
    trace: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def current_eta_c(self) -> float:
        return self.correct.eta

    @property
    def current_eta_i(self) -> float:
        return self.incorrect.eta

    @property
    def count_c(self) -> int:
        return self.correct.count

    @property
    def count_i(self) -> int:
        return self.incorrect.count

    @property
    def threshold_c(self) -> int | None:
        return self.correct.threshold

    @property
    def threshold_i(self) -> int | None:
        return self.incorrect.threshold


def _stream(seed: int, which: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(which,))))


def new_scheduler(config: DualRateConfig, seed: int) -> SchedulerState:
    """Fresh state: rates at their initial values, counters at zero and, for
    each variable schedule, a first threshold drawn from its own stream."""
    return SchedulerState(
        config=config,
        correct=RateTrack(config.correct, _stream(seed, 0)),
        incorrect=RateTrack(config.incorrect, _stream(seed, 1)),
    )


def select_rate(state: SchedulerState, outcome: BatchOutcome) -> float:
    """Rate for the current batch, by strict majority of its responses."""
    if outcome.n_correct > outcome.n_incorrect:
        return state.correct.eta
    if outcome.n_incorrect > outcome.n_correct:
        return state.incorrect.eta
    return state.correct.eta if state.config.tie_rate == "correct" else state.incorrect.eta


def record_responses(state: SchedulerState, outcome: BatchOutcome, step: int) -> SchedulerState:
    """Count one batch's responses, apply any threshold crossings and log the
    rates. Call once per batch, after the optimizer step for that batch."""
    if state.trace and step <= state.trace[-1][0]:
        raise InternalError(f"trace steps must increase: got {step} after {state.trace[-1][0]}")
    state.correct.add(outcome.n_correct)
    state.incorrect.add(outcome.n_incorrect)
    state.trace.append((int(step), state.correct.eta, state.incorrect.eta))
    return state


def current_rates(state: SchedulerState) -> tuple[float, float]:
    return state.correct.eta, state.incorrect.eta


def export_trace(state: SchedulerState) -> list[tuple[int, float, float]]:
    return list(state.trace)


def write_trace_csv(trace: Iterable[tuple[int, float, float]], dest) -> None:
    """Write ``step,eta_c,eta_i`` rows; floats use ``repr`` so they re-read exactly."""
    own = isinstance(dest, (str, Path))
    fh = open(dest, "w", newline="", encoding="utf-8") if own else dest
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for step, eta_c, eta_i in trace:
            w.writerow((int(step), repr(float(eta_c)), repr(float(eta_i))))
    finally:
        if own:
            fh.close()


def read_trace_csv(src) -> list[tuple[int, float, float]]:
    text = Path(src).read_text(encoding="utf-8") if isinstance(src, (str, Path)) else src.read()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != TRACE_HEADER:
        raise DataError(f"trace CSV must start with header {','.join(TRACE_HEADER)}")
    return [(int(s), float(c), float(i)) for s, c, i in rows[1:]]
