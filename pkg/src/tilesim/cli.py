"""Command line interface.

Verbs: run, sweep, metrics, validate, replay-check. Exit codes: 0 success,
1 validation error, 2 loss of mission (with --fail-on-loss).
"""

from __future__ import annotations

import argparse
import json
import sys

from . import runner
from .metrics import compute_metrics
from .scenario import ScenarioError, load_scenario
from .trace import read_jsonl


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tilesim",
        description="Deterministic simulator of lockstepped tiled multiprocessors "
                    "under radiation faults.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("--scenario", required=True,
                           help="scenario file path or bundled name "
                                "(fig3, fig6, exhaustion, storm)")
            p.add_argument("--seed", type=int, default=None, help="override the seed")
            p.add_argument("--set", dest="overrides", action="append", default=[],
                           metavar="KEY=VALUE", help="override a scenario field")
        p.add_argument("--quiet", action="store_true")

    p_run = sub.add_parser("run", help="execute one scenario")
    common(p_run)
    p_run.add_argument("--until", type=int, default=None, help="stop at this time")
    p_run.add_argument("--trace-out", default=None)
    p_run.add_argument("--metrics-out", default=None)
    p_run.add_argument("--fail-on-loss", action="store_true",
                       help="exit 2 on loss of mission")

    p_sweep = sub.add_parser("sweep", help="run a parameter grid")
    common(p_sweep)
    p_sweep.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2,...",
                         help="numeric scenario field and its values")
    p_sweep.add_argument("--seeds", default="0", help="comma-separated seeds")
    p_sweep.add_argument("--csv-out", default=None)

    p_metrics = sub.add_parser("metrics", help="recompute metrics from a trace")
    p_metrics.add_argument("--trace", required=True)
    p_metrics.add_argument("--metrics-out", default=None)
    p_metrics.add_argument("--quiet", action="store_true")

    p_val = sub.add_parser("validate", help="lint a scenario file")
    common(p_val)

    p_replay = sub.add_parser("replay-check", help="re-run and byte-compare")
    common(p_replay)
    p_replay.add_argument("--until", type=int, default=None)
    return parser


def _load(args):
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    return load_scenario(args.scenario, overrides)


def cmd_run(args) -> int:
    scenario = _load(args)
    trace, summary = runner.run_simulation(scenario, until=args.until)
    runner.write_outputs(trace, summary, args.trace_out, args.metrics_out)
    if not args.quiet:
        print(json.dumps(summary.to_dict(), sort_keys=True, indent=2))
    if args.fail_on_loss and summary.loss_of_mission:
        return 2
    return 0


def cmd_sweep(args) -> int:
    scenario = _load(args)  # validates before sweeping
    grid = {}
    for spec in args.grid:
        if "=" not in spec:
            raise ScenarioError([f"--grid {spec!r}: expected KEY=V1,V2,..."])
        key, _, values = spec.partition("=")
        parsed = []
        for v in values.split(","):
            try:
                parsed.append(json.loads(v))
            except json.JSONDecodeError:
                raise ScenarioError([f"--grid {key}: non-numeric value {v!r}"])
        grid[key] = parsed
    seeds = [int(s) for s in args.seeds.split(",") if s]
    rows = runner.sweep(scenario.raw, grid, seeds)
    if args.csv_out:
        runner.write_sweep_csv(rows, args.csv_out)
    if not args.quiet:
        for row in rows:
            print(json.dumps(row, sort_keys=True))
    return 0


def cmd_metrics(args) -> int:
    with open(args.trace) as fh:
        records = read_jsonl(fh)
    summary = compute_metrics(records)
    if args.metrics_out:
        with open(args.metrics_out, "w") as fh:
            fh.write(summary.to_json())
    if not args.quiet:
        print(json.dumps(summary.to_dict(), sort_keys=True, indent=2))
    return 0


def cmd_validate(args) -> int:
    _load(args)
    if not args.quiet:
        print(f"{args.scenario}: ok")
    return 0


def cmd_replay_check(args) -> int:
    ok = runner.replay_check(args.scenario, overrides=args.overrides,
                             seed=args.seed, until=args.until)
    if not args.quiet:
        print("replay-check: " + ("byte-identical" if ok else "MISMATCH"))
    return 0 if ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "run": cmd_run,
        "sweep": cmd_sweep,
        "metrics": cmd_metrics,
        "validate": cmd_validate,
        "replay-check": cmd_replay_check,
    }
    try:
        return handlers[args.verb](args)
    except ScenarioError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
