"""Staged empirical search for baselines and variable thresholds.

Stages, in order:

``ss_sweep``      single static rate candidates (``etaS=...`` or a bare number)
``sd_grid``       static dual-rate pairs (``etaC=..., etaI=...`` or ``c,i``)
``one_variable``  one static rate, one variable rate
``combine``       top eta_C schedules x top eta_I schedules from ``one_variable``
``directions``    top ``combine`` results under all four inc/dec assignments
``finals``        best S-S, best S-D and the overall top DVLR configs, more trials

Later stages take their candidates from earlier stage results; a plan may also
list them explicitly.
"""

from __future__ import annotations

import csv
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

from .config import ExperimentSpec, read_kv, spec_from_mapping
from .errors import ConfigError, DataError
from .harness import ExperimentResult, run_experiment
from .notation import format_schedule_spec, parse_schedule_spec
from .scheduler import DECREASE, INCREASE, DualRateConfig, RateSchedule

STAGES = ("ss_sweep", "sd_grid", "one_variable", "combine", "directions", "finals")
STAGE_HEADER = ("method", "test_avg")
SEARCH_TRIALS = 3
FINAL_TRIALS = 10

_PLAN_KEYS = {"stage", "top_k_c", "top_k_i", "top_k_combos", "top_k_finals", "final_trials"}


@dataclass
class SearchPlan:
    stage: str
    candidates: list[DualRateConfig]
    base: dict[str, str]
    trials: int = SEARCH_TRIALS
    top_k_c: int = 3
    top_k_i: int = 8
    top_k_combos: int = 2
    top_k_finals: int = 5
    final_trials: int = FINAL_TRIALS

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ConfigError(f"unknown stage {self.stage!r}; expected one of {STAGES}")
        if not self.candidates:
            raise ConfigError(f"stage {self.stage} has no candidates")
        for cfg in self.candidates:
            _check_kind(self.stage, cfg)

    def specs(self) -> list[ExperimentSpec]:
        trials = self.final_trials if self.stage == "finals" else self.trials
        base = dict(self.base)
        base.setdefault("name", "search")
        prefix = base.pop("name")
        out = []
        for i, cfg in enumerate(self.candidates):
            spec = spec_from_mapping({**base, "name": f"{prefix}_{self.stage}_{i:02d}",
                                      "schedule": format_schedule_spec(cfg)})
            out.append(spec.replace(trials=trials))
        return out


@dataclass
class SearchResult:
    stage: str
    candidates: list[DualRateConfig]
    means: list[float]
    experiments: list[ExperimentResult] = field(default_factory=list, repr=False)

    @property
    def methods(self) -> list[str]:
        return [format_schedule_spec(c) for c in self.candidates]

    def ranking(self) -> list[int]:
        """Candidate indices by mean test accuracy, best first; ties keep declaration order."""
        return sorted(range(len(self.means)), key=lambda i: -self.means[i])

    def ranked(self) -> list[tuple[DualRateConfig, float]]:
        return [(self.candidates[i], self.means[i]) for i in self.ranking()]

    def top(self, k: int, where: Callable[[DualRateConfig], bool] = lambda c: True) -> list[DualRateConfig]:
        return [c for c, _ in self.ranked() if where(c)][:k]


def _is_static_single(cfg: DualRateConfig) -> bool:
    return not cfg.correct.is_variable and not cfg.incorrect.is_variable and cfg.correct.initial == cfg.incorrect.initial


def _is_static_dual(cfg: DualRateConfig) -> bool:
    return not cfg.correct.is_variable and not cfg.incorrect.is_variable


def _varies_c_only(cfg: DualRateConfig) -> bool:
    return cfg.correct.is_variable and not cfg.incorrect.is_variable


def _varies_i_only(cfg: DualRateConfig) -> bool:
    return cfg.incorrect.is_variable and not cfg.correct.is_variable


def _check_kind(stage: str, cfg: DualRateConfig) -> None:
    ok = {
        "ss_sweep": _is_static_single,
        "sd_grid": _is_static_dual,
        "one_variable": lambda c: _varies_c_only(c) or _varies_i_only(c),
        "combine": lambda c: c.correct.is_variable or c.incorrect.is_variable,
        "directions": lambda c: c.correct.is_variable or c.incorrect.is_variable,
        "finals": lambda c: True,
    }[stage]
    if not ok(cfg):
        raise ConfigError(f"candidate {format_schedule_spec(cfg)!r} does not fit stage {stage}")


def parse_candidate(stage: str, text: str) -> DualRateConfig:
    """Candidate text: schedule notation, or a bare rate / ``c,i`` pair for baselines."""
    text = text.strip()
    if not text.lower().startswith("eta"):
        parts = [p.strip() for p in text.split(",")]
        if stage == "ss_sweep" and len(parts) == 1:
            text = f"etaS={parts[0]}"
        elif stage == "sd_grid" and len(parts) == 2:
            text = f"etaC={parts[0]}, etaI={parts[1]}"
    cfg = parse_schedule_spec(text)
    _check_kind(stage, cfg)
    return cfg


def _flip(s: RateSchedule, direction: str) -> RateSchedule:
    return replace(s, direction=direction) if s.is_variable else s


def derive_candidates(stage: str, upstream: dict[str, SearchResult], plan_opts: dict | None = None) -> list[DualRateConfig]:
    """Candidates of a derived stage from completed upstream stages."""
    opts = {"top_k_c": 3, "top_k_i": 8, "top_k_combos": 2, "top_k_finals": 5, **(plan_opts or {})}

    def need(name: str) -> SearchResult:
        if name not in upstream or not upstream[name].candidates:
            raise ConfigError(f"stage {stage} needs results from stage {name}")
        return upstream[name]

    if stage == "combine":
        one = need("one_variable")
        cs = one.top(opts["top_k_c"], _varies_c_only)
        is_ = one.top(opts["top_k_i"], _varies_i_only)
        if not cs or not is_:
            raise ConfigError("combine needs at least one eta_C-varying and one eta_I-varying upstream schedule")
        return [DualRateConfig(c.correct, i.incorrect, c.tie_rate) for c in cs for i in is_]
    if stage == "directions":
        out = []
        for cfg in need("combine").top(opts["top_k_combos"]):
            for dc, di in itertools.product((DECREASE, INCREASE), (INCREASE, DECREASE)):
                cand = DualRateConfig(_flip(cfg.correct, dc), _flip(cfg.incorrect, di), cfg.tie_rate)
                if cand not in out:
                    out.append(cand)
        return out
    if stage == "finals":
        out = [need("ss_sweep").top(1)[0], need("sd_grid").top(1)[0]]
        pool: list[tuple[DualRateConfig, float]] = []
        for name in ("one_variable", "combine", "directions"):
            if name in upstream:
                pool.extend(upstream[name].ranked())
        if not pool:
            raise ConfigError("finals needs at least one of one_variable/combine/directions")
        pool.sort(key=lambda cm: -cm[1])
        for cfg, _ in pool:
            if len(out) >= 2 + opts["top_k_finals"]:
                break
            if cfg not in out:
                out.append(cfg)
        return out
    raise ConfigError(f"stage {stage} takes explicit candidates, not upstream results")


Runner = Callable[[ExperimentSpec], ExperimentResult]


def run_stage(plan: SearchPlan, jobs: int = 1, runner: Runner | None = None) -> SearchResult:
    """Run every candidate of ``plan`` and collect mean test accuracies."""
    runner = runner or (lambda spec: run_experiment(spec))
    specs = plan.specs()
    if jobs > 1 and len(specs) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(runner, specs))
    else:
        results = [runner(s) for s in specs]
    return SearchResult(plan.stage, list(plan.candidates), [r.mean_test for r in results], results)


def write_stage_csv(result: SearchResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STAGE_HEADER)
        for method, mean in zip(result.methods, result.means):
            w.writerow((method, repr(float(mean))))


def read_stage_csv(path, stage: str | None = None) -> SearchResult:
    path = Path(path)
    stage = stage or path.stem.removeprefix("stage_")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != STAGE_HEADER:
        raise DataError(f"{path}: expected header {','.join(STAGE_HEADER)}")
    return SearchResult(stage, [parse_schedule_spec(m) for m, _ in rows[1:]], [float(v) for _, v in rows[1:]])


def emit_search_report(results: dict[str, SearchResult] | list[SearchResult], out_dir) -> list[Path]:
    """One ``stage_<name>.csv`` per completed stage, rows in declaration order."""
    items = results.values() if isinstance(results, dict) else results
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for r in items:
        path = out / f"stage_{r.stage}.csv"
        write_stage_csv(r, path)
        paths.append(path)
    if not paths:
        raise ConfigError("no completed stages to report")
    return paths


def load_upstream(out_dir) -> dict[str, SearchResult]:
    out = Path(out_dir)
    return {s: read_stage_csv(out / f"stage_{s}.csv", s) for s in STAGES if (out / f"stage_{s}.csv").exists()}


def parse_plan(text: str, stage: str | None = None, upstream: dict[str, SearchResult] | None = None) -> SearchPlan:
    """Build a plan from ``key=value`` text.

    Candidates come from ``<stage>.candidate=`` lines, else plain ``candidate=``
    lines, else (for derived stages) from ``upstream``.
    """
    kv = read_kv(text, repeatable=("candidate",))
    stage = stage or kv.get("stage")
    if stage not in STAGES:
        raise ConfigError(f"plan needs a stage in {STAGES}, got {stage!r}")
    lines = kv.get(f"{stage}.candidate") or kv.get("candidate") or []
    opts = {}
    for key in ("top_k_c", "top_k_i", "top_k_combos", "top_k_finals", "final_trials"):
        if key in kv:
            opts[key] = int(kv[key])
    base = {k: v for k, v in kv.items()
            if k not in _PLAN_KEYS and k != "candidate" and not k.endswith(".candidate")}
    trials = int(base.pop("trials", SEARCH_TRIALS))
    base.setdefault("schedule", "etaS=0.01")  # placeholder; each candidate supplies its own
    if lines:
        candidates = [parse_candidate(stage, line) for line in lines]
    elif stage in ("combine", "directions", "finals"):
        candidates = derive_candidates(stage, upstream or {}, opts)
    else:
        raise ConfigError(f"stage {stage} needs candidate= lines in the plan")
    # validate the base spec early so a bad key fails before any training
    spec_from_mapping({**base, "name": base.get("name", "search")})
    return SearchPlan(stage=stage, candidates=candidates, base=base, trials=trials, **opts)
