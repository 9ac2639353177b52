"""Experiment specifications and the flat ``key=value`` config file format.

A config file is UTF-8 text with one ``key=value`` per line. Blank lines and
lines starting with ``#`` are ignored. Example::

    name=ss_0.05
    dataset=mnist
    model=mlp
    optimizer=adagrad
    batch_size=100
    epochs=20
    trials=10
    base_seed=1
    schedule=etaS=0.05
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError, ParseError
from .models import MODEL_KINDS
from .notation import format_schedule_spec, parse_schedule_spec
from .optim import OPTIMIZER_KINDS
from .scheduler import DualRateConfig

MODEL_DATASET = {"mlp": "mnist", "mnist_cnn": "mnist", "cifar_cnn": "cifar10"}
DEFAULT_BATCH = {"mlp": 100, "mnist_cnn": 128, "cifar_cnn": 10}
DEFAULT_EPOCHS = {"mlp": 20, "mnist_cnn": 10, "cifar_cnn": 10}
DEFAULT_TRIALS = 10


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    model: str
    schedule: DualRateConfig
    dataset: str = ""
    optimizer: str = "adagrad"
    batch_size: int | None = None  # None: the model's default
    epochs: int | None = None
    trials: int = DEFAULT_TRIALS
    base_seed: int = 0
    # fraction of the training split used, taken from a base_seed permutation
    train_fraction: float = 1.0
    data_dir: str | None = None

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"unknown model {self.model!r}; expected one of {MODEL_KINDS}")
        if not self.dataset:
            object.__setattr__(self, "dataset", MODEL_DATASET[self.model])
        if self.batch_size is None:
            object.__setattr__(self, "batch_size", DEFAULT_BATCH[self.model])
        if self.epochs is None:
            object.__setattr__(self, "epochs", DEFAULT_EPOCHS[self.model])
        if self.dataset != MODEL_DATASET[self.model]:
            raise ConfigError(f"model {self.model} runs on {MODEL_DATASET[self.model]}, not {self.dataset}")
        if self.optimizer not in OPTIMIZER_KINDS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}; expected one of {OPTIMIZER_KINDS}")
        for key in ("batch_size", "epochs", "trials"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be positive, got {getattr(self, key)}")
        if self.base_seed < 0:
            raise ConfigError(f"base_seed must be non-negative, got {self.base_seed}")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ConfigError(f"train_fraction must be in (0, 1], got {self.train_fraction}")
        if not self.name or any(ch in self.name for ch in "/\\,\n"):
            raise ConfigError(f"experiment name {self.name!r} must be non-empty without '/', '\\' or ','")

    def replace(self, **changes) -> "ExperimentSpec":
        return dataclasses.replace(self, **changes)


_INT_KEYS = ("batch_size", "epochs", "trials", "base_seed")


def read_kv(text: str, repeatable: tuple[str, ...] = ()) -> dict[str, str | list[str]]:
    """Parse ``key=value`` lines. Keys in ``repeatable`` collect into lists."""
    out: dict[str, str | list[str]] = {}
    offset = 0
    for lineno, line in enumerate(text.splitlines(), 1):
        start = offset
        offset += len(line) + 1
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ParseError(f"line {lineno}: expected key=value", text, start)
        key, value = (s.strip() for s in stripped.split("=", 1))
        if not key:
            raise ParseError(f"line {lineno}: empty key", text, start)
        if key in repeatable or key.endswith(tuple("." + r for r in repeatable)):
            out.setdefault(key, []).append(value)
        elif key in out:
            raise ParseError(f"line {lineno}: duplicate key {key!r}", text, start)
        else:
            out[key] = value
    return out


def spec_from_mapping(values: dict[str, str], defaults: dict[str, str] | None = None) -> ExperimentSpec:
    merged = dict(defaults or {})
    merged.update(values)
    fields = {f.name for f in dataclasses.fields(ExperimentSpec)} | {"tie_rate"}
    unknown = set(merged) - fields
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for key in ("name", "model", "schedule"):
        if key not in merged:
            raise ConfigError(f"config is missing required key {key!r}")
    kwargs: dict = {}
    for key, value in merged.items():
        if key in _INT_KEYS:
            try:
                kwargs[key] = int(value)
            except ValueError as exc:
                raise ConfigError(f"{key} must be an integer, got {value!r}") from exc
        elif key == "train_fraction":
            try:
                kwargs[key] = float(value)
            except ValueError as exc:
                raise ConfigError(f"train_fraction must be a number, got {value!r}") from exc
        elif key != "tie_rate":
            kwargs[key] = value
    schedule = parse_schedule_spec(merged["schedule"])
    if "tie_rate" in merged:
        schedule = dataclasses.replace(schedule, tie_rate=merged["tie_rate"])
    kwargs["schedule"] = schedule
    return ExperimentSpec(**kwargs)


def parse_config(text: str) -> ExperimentSpec:
    return spec_from_mapping(read_kv(text))


def load_config(path) -> ExperimentSpec:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def format_config(spec: ExperimentSpec) -> str:
    lines = [
        f"name={spec.name}",
        f"dataset={spec.dataset}",
        f"model={spec.model}",
        f"optimizer={spec.optimizer}",
        f"batch_size={spec.batch_size}",
        f"epochs={spec.epochs}",
        f"trials={spec.trials}",
        f"base_seed={spec.base_seed}",
        f"schedule={format_schedule_spec(spec.schedule)}",
    ]
    if spec.schedule.tie_rate != "incorrect":
        lines.append(f"tie_rate={spec.schedule.tie_rate}")
    if spec.train_fraction != 1.0:
        lines.append(f"train_fraction={spec.train_fraction!r}")
    if spec.data_dir:
        lines.append(f"data_dir={spec.data_dir}")
    return "\n".join(lines) + "\n"
