"""Command line entry point ``dvlr``.

    dvlr train  --config FILE [--out DIR] [--jobs N] [--seed S] [--baseline FILE]
    dvlr report --out DIR [--baseline NAME]
    dvlr trace  --config FILE --trial K [--out FILE] [--seed S]
    dvlr search --plan FILE --stage NAME --out DIR [--jobs N]

Exit codes: 0 success, 1 configuration or data error, 2 internal invariant failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness, search
from .config import ExperimentSpec, format_config, load_config
from .errors import ConfigError, DataError, InternalError
from .notation import format_schedule_spec
from .scheduler import write_trace_csv


def _load_spec(path: str, seed: int | None, data_dir: str | None) -> ExperimentSpec:
    spec = load_config(path)
    if seed is not None:
        spec = spec.replace(base_seed=seed)
    if data_dir:
        spec = spec.replace(data_dir=data_dir)
    return spec


def cmd_train(args) -> int:
    spec = _load_spec(args.config, args.seed, args.data_dir)
    result = harness.run_experiment(spec, jobs=args.jobs)
    baseline = result
    others = []
    if args.baseline:
        base_spec = _load_spec(args.baseline, args.seed, args.data_dir)
        baseline = harness.run_experiment(base_spec, jobs=args.jobs)
        others = [result]
    out = Path(args.out)
    rows = harness.emit_report(others, baseline, out)
    (out / f"{spec.name}.cfg").write_text(format_config(spec), encoding="utf-8")
    for name, train, test, p in rows:
        tail = "" if p is None else f"  p={p:.3f}"
        print(f"{name}: avg_train={train:.3f} avg_test={test:.3f}{tail}")
    return 0


def cmd_report(args) -> int:
    for name, train, test, p in harness.recompute_report(args.out, args.baseline):
        tail = "" if p is None else f"  p={p:.3f}"
        print(f"{name}: avg_train={train:.3f} avg_test={test:.3f}{tail}")
    return 0


def cmd_trace(args) -> int:
    spec = _load_spec(args.config, args.seed, args.data_dir)
    if not 0 <= args.trial:
        raise ConfigError(f"trial index must be non-negative, got {args.trial}")
    result = harness.run_trial(spec, args.trial)
    if args.out:
        write_trace_csv(result.trace, args.out)
    else:
        write_trace_csv(result.trace, sys.stdout)
    return 0


def cmd_search(args) -> int:
    out = Path(args.out)
    upstream = search.load_upstream(out) if out.exists() else {}
    text = Path(args.plan).read_text(encoding="utf-8")
    plan = search.parse_plan(text, stage=args.stage, upstream=upstream)
    if args.data_dir:
        plan.base["data_dir"] = args.data_dir
    result = search.run_stage(plan, jobs=args.jobs)
    search.emit_search_report([result], out)
    cfg_dir = out / "configs"
    cfg_dir.mkdir(parents=True, exist_ok=True)
    for exp in result.experiments:
        (cfg_dir / f"{exp.name}.cfg").write_text(format_config(exp.spec), encoding="utf-8")
    if plan.stage == "finals":
        harness.emit_report(result.experiments[1:], result.experiments[0], out / "finals")
    for cfg, mean in result.ranked():
        print(f"{mean:8.3f}  {format_schedule_spec(cfg)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    common.add_argument("--data-dir", help="dataset root (default: $DVLR_DATA_DIR)")
    parser = argparse.ArgumentParser(prog="dvlr", description="Dual variable learning rate experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="run all trials of one experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="results")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--baseline", help="config of the S-S baseline to compare against")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("report", parents=[common], help="recompute results.csv from per-trial CSVs")
    p.add_argument("--out", required=True)
    p.add_argument("--baseline", help="baseline experiment name (default: from manifest.json)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("trace", parents=[common], help="run one trial and print its learning-rate trace CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--trial", type=int, required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("search", parents=[common], help="run one stage of the threshold search")
    p.add_argument("--plan", required=True)
    p.add_argument("--stage", required=True, choices=search.STAGES)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_search)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; 2 is reserved for internal failures
        return 0 if exc.code in (0, None) else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except InternalError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
