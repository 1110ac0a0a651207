"""Command-line entry point: ``gimrl {mine,baseline,compare,transfer,sweep}``.

Exit codes: 0 success, 1 runtime failure, 2 bad arguments.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import asdict, fields
from fractions import Fraction
from pathlib import Path

from .alloc import tune_allocator
from .dataset import DatasetError, Task, absolute_threshold, load
from .neuralnet import save_checkpoint
from .oracle import EnumerationCapError, mine_ar_exhaustive, mine_fi_exhaustive, mine_hui_exhaustive
from .patterns import format_coverage, read_patterns, write_patterns
from .trainer import PUBLISHED_PRESETS, RunConfig, RunError, run, sweep, write_episode_log
from .transfer import TransferError, transfer_experiment

PATTERNS_FILE = "itemsets.txt"
LOG_FILE = "episodes.csv"
CONFIG_FILE = "config.json"
RUN_FILE = "run.json"
CHECKPOINT_FILE = "agent.npz"

# CLI flag -> RunConfig field, for flags that map one-to-one
_FLAG_FIELDS = {
    "agent": "agent", "episodes": "episodes", "steps": "steps", "seed": "seed",
    "batch_size": "batch_size", "capacity": "capacity", "gamma": "gamma", "lr": "lr",
    "target_sync": "target_sync",
}


class UsageError(Exception):
    """Bad combination of otherwise well-formed flags (exit 2)."""


def _percent(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < v <= 100.0:
        raise argparse.ArgumentTypeError(f"percentage must lie in (0, 100], got {text}")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def _widths(text: str) -> tuple[int, ...]:
    try:
        ws = tuple(int(w) for w in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"widths must be comma-separated integers, got {text!r}") from None
    if not ws or any(w < 1 for w in ws):
        raise argparse.ArgumentTypeError("widths must be positive")
    return ws


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--task", choices=[t.value for t in Task], required=True)
    p.add_argument("--data", type=Path, required=True, help="SPMF transaction file")
    p.add_argument("--utility-format", action="store_true", default=None,
                   help="force the utility format (default: detected from ':' separators)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--threshold", type=_percent, help="percent of N (or of total utility for hui)")
    g.add_argument("--threshold-abs", type=float, help="absolute support count or utility")
    p.add_argument("--conf", type=_percent, help="minimum confidence in percent (ar only)")


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--agent", choices=["random", "state-eps", "state-prob", "basic", "fusion"])
    p.add_argument("--episodes", type=_positive_int)
    p.add_argument("--steps", type=_positive_int)
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", type=_positive_int)
    p.add_argument("--capacity", type=_positive_int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--target-sync", type=_positive_int)
    p.add_argument("--widths", type=_widths, help="hidden widths, e.g. 512,512,512")
    p.add_argument("--config", type=Path, help="run-config JSON; explicit flags override it")
    p.add_argument("--preset", choices=["paper-appc"], help="published hyperparameters for the task")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gimrl", description="Reinforcement-learning itemset mining")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mine", help="train an agent and extract patterns")
    _add_data_args(p)
    _add_run_args(p)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--timing", action="store_true", help="record wall-clock times in the episode log")
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("baseline", help="exhaustive mining at the same thresholds")
    _add_data_args(p)
    p.add_argument("--out", type=Path, required=True, help="output patterns file")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("compare", help="coverage of a result file against a reference file")
    p.add_argument("result", type=Path)
    p.add_argument("reference", type=Path)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("transfer", help="source/target/scratch transfer experiment")
    _add_data_args(p)
    _add_run_args(p)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--reset-bn-stats", action="store_true")
    p.add_argument("--no-lambda-presets", action="store_true",
                   help="use the config's lambda schedule for both phases")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("sweep", help="repeat runs over a hyperparameter grid")
    _add_data_args(p)
    _add_run_args(p)
    p.add_argument("--grid", required=True, help="JSON object or path to one: field -> list of values")
    p.add_argument("--repeats", type=_positive_int, default=10)
    p.add_argument("--per-axis", action="store_true", help="vary one field at a time instead of the product")
    p.add_argument("--reference", type=Path, help="patterns file whose size is the step-number target")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=cmd_sweep)
    return parser


def _load_db(args):
    return load(args.data, args.utility_format)


def _run_config(args) -> RunConfig:
    task = Task(args.task)
    base = {}
    if args.config is not None:
        try:
            base = json.loads(args.config.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read --config: {exc}") from None
        if base.get("task", task.value) != task.value:
            raise UsageError(f"--config is for task {base['task']!r}, not {task.value!r}")
    if getattr(args, "preset", None) == "paper-appc":
        base.update(PUBLISHED_PRESETS[task])
        base["widths"] = None
    base["task"] = task.value
    if args.threshold is not None or args.threshold_abs is not None:
        base["threshold"] = args.threshold
        base["threshold_abs"] = args.threshold_abs
    if base.get("threshold") is None and base.get("threshold_abs") is None:
        raise UsageError("one of --threshold / --threshold-abs is required")
    if task is Task.AR:
        if args.conf is None and base.get("min_conf") is None:
            raise UsageError("--task ar requires --conf")
        if args.conf is not None:
            base["min_conf"] = float(Fraction(str(args.conf)) / 100)
    elif args.conf is not None:
        raise UsageError("--conf only applies to --task ar")
    for flag, name in _FLAG_FIELDS.items():
        value = getattr(args, flag, None)
        if value is not None:
            base[name] = value
    if getattr(args, "widths", None) is not None:
        base["widths"] = args.widths
    try:
        return RunConfig.from_dict(base)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def cmd_mine(args) -> int:
    config = _run_config(args)
    db = _load_db(args)
    t0 = time.perf_counter()
    result = run(db, config)
    elapsed = time.perf_counter() - t0
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    write_patterns(out / PATTERNS_FILE, result.db, config.task, result.patterns)
    write_episode_log(out / LOG_FILE, result.logs, include_timing=args.timing)
    (out / CONFIG_FILE).write_text(config.to_json() + "\n", encoding="utf-8")
    run_info = {
        "data": str(args.data),
        "data_sha256": _sha256(args.data),
        "utility_format": args.utility_format,
        "absolute_threshold": result.measure.threshold,
        "n_items_after_pruning": result.db.n_items,
    }
    (out / RUN_FILE).write_text(json.dumps(run_info, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if result.net is not None:
        extra = {"config": asdict(config), **result.agent_state}
        save_checkpoint(out / CHECKPOINT_FILE, result.net, result.optimizer, extra=extra)
    print(f"extracted {result.n_found} unique {'rules' if config.task == 'ar' else 'itemsets'}")
    print(f"wall time {elapsed:.1f} s")
    return 0


def _oracle(db, args):
    task = Task(args.task)
    if args.threshold is None and args.threshold_abs is None:
        raise UsageError("one of --threshold / --threshold-abs is required")
    th = args.threshold_abs if args.threshold_abs is not None else absolute_threshold(db, task, args.threshold)
    if task is Task.HUI:
        return mine_hui_exhaustive(db, th)
    if task is Task.FI:
        return mine_fi_exhaustive(db, th)
    if args.conf is None:
        raise UsageError("--task ar requires --conf")
    return mine_ar_exhaustive(db, th, float(Fraction(str(args.conf)) / 100))


def cmd_baseline(args) -> int:
    if args.task != "ar" and args.conf is not None:
        raise UsageError("--conf only applies to --task ar")
    db = _load_db(args)
    t0 = time.perf_counter()
    found = _oracle(db, args)
    elapsed = time.perf_counter() - t0
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_patterns(args.out, db, args.task, found)
    print(f"baseline found {len(found)}")
    print(f"wall time {elapsed:.1f} s")
    return 0


def cmd_compare(args) -> int:
    found = read_patterns(args.result)
    reference = read_patterns(args.reference)
    print(f"{format_coverage(found, reference)} of {len(reference)}")
    extra = len(found - reference)
    if extra:
        print(f"{extra} patterns not in the reference", file=sys.stderr)
    return 0


def cmd_transfer(args) -> int:
    config = _run_config(args)
    db = _load_db(args)
    report = transfer_experiment(db, config, use_presets=not args.no_lambda_presets,
                                 reset_bn_stats=args.reset_bn_stats)
    args.out.mkdir(parents=True, exist_ok=True)
    report.write_csv(args.out / "transfer.csv")
    (args.out / CONFIG_FILE).write_text(config.to_json() + "\n", encoding="utf-8")
    a = report.alignment
    print(f"items: source {a.n_source}, target {a.n_target}, shared {len(a.shared)}")
    print(f"final unique: transferred {report.tgt_curve[-1]}, scratch {report.scratch_curve[-1]}")
    return 0


def _grid(text: str) -> dict:
    path = Path(text)
    try:
        raw = path.read_text(encoding="utf-8") if path.exists() else text
        grid = json.loads(raw)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot parse --grid: {exc}") from None
    if not isinstance(grid, dict) or not all(isinstance(v, list) and v for v in grid.values()):
        raise UsageError("--grid must map field names to nonempty lists")
    unknown = set(grid) - {f.name for f in fields(RunConfig)}
    if unknown:
        raise UsageError(f"--grid keys are not config fields: {sorted(unknown)}")
    return grid


def cmd_sweep(args) -> int:
    config = _run_config(args)
    grid = _grid(args.grid)
    target = len(read_patterns(args.reference)) if args.reference else None
    db = _load_db(args)
    report = sweep(db, config, grid, repeats=args.repeats, target_count=target, cartesian=not args.per_axis)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "sweep_runs.csv").write_text(report.to_csv(), encoding="utf-8")
    (args.out / "sweep_summary.csv").write_text(report.summary_csv(), encoding="utf-8")
    (args.out / CONFIG_FILE).write_text(config.to_json() + "\n", encoding="utf-8")
    print(f"{report.n_runs} runs over {len(report.rows)} cells")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    tune_allocator()
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"gimrl: error: {exc}", file=sys.stderr)
        return 2
    except (DatasetError, RunError, TransferError, EnumerationCapError, OSError, ValueError) as exc:
        print(f"gimrl: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
