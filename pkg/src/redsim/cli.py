"""Command-line surface: gen, verify, run, score, report, serve-planner.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Every subcommand
is deterministic given its flags; logs and reports carry no wall-clock
timestamps, so identical invocations produce byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

from . import wire
from .generator import GenParams, format_name, generate, verify as verify_env
from .knowledge import EventRecord, KnowledgeBase
from .netmodel import Environment, Goal, InputError, ScenarioError, load_scenario, serialize_scenario, validate
from .orchestrator import (
    ExerciseConfig,
    MetricsReport,
    ReferenceSolution,
    TaskExecution,
    TrialRecord,
    acquired_assets,
    scorecard_table,
    tag_counts,
    tag_tasks,
)
from .planner import ExternalPlanner, RandomPlanner, ReferencePlanner, build_onboarding
from .scenarios import BUNDLED, scenario_text


def _parse_range(text: str) -> tuple[int, int]:
    try:
        lo, hi = text.split("..")
        return int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A..B, got {text!r}") from None


def _load_env(source: str) -> Environment:
    if source in BUNDLED:
        return load_scenario(scenario_text(source))
    path = Path(source)
    if not path.exists():
        raise InputError(f"no scenario file {source}")
    return load_scenario(path.read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Log persistence
# ---------------------------------------------------------------------------


def write_logs(log_dir: Path, report: MetricsReport, env: Environment) -> None:
    log_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "scenario": report.environment,
        "planner": report.planner,
        "config": {
            "trials": report.config.trials,
            "time_limit": report.config.time_limit,
            "max_steps": report.config.max_steps,
            "seed": report.config.seed,
        },
        "critical_assets": list(report.critical_assets),
        "goals": [{"kind": g.kind, "target": g.target} for g in env.goals],
        "trials": [{"index": t.index, "seed": t.seed} for t in report.trials],
    }
    (log_dir / "run.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    (log_dir / "metrics.json").write_text(report.to_json())
    for trial in report.trials:
        events_path = log_dir / f"trial-{trial.index:02d}.events.jsonl"
        with events_path.open("w", encoding="utf-8") as fh:
            for record in trial.events:
                fh.write(record.to_json() + "\n")
        tasks_path = log_dir / f"trial-{trial.index:02d}.tasks.jsonl"
        with tasks_path.open("w", encoding="utf-8") as fh:
            lines: list[tuple[int, int, dict]] = []
            for execution in trial.executions:
                lines.append((execution.step, 0, execution.to_payload()))
            for step, query in trial.queries:
                lines.append((step, 1, {"type": "query", "step": step, "query": query}))
            for _, _, doc in sorted(lines, key=lambda item: (item[0], item[1])):
                fh.write(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")
            end = {
                "type": "end",
                "termination": trial.termination,
                "steps": trial.steps,
                "sim_time": trial.sim_time,
                "acquired": sorted(trial.acquired),
                "success": trial.success,
            }
            fh.write(json.dumps(end, sort_keys=True, separators=(",", ":")) + "\n")


def _read_jsonl(path: Path) -> list[dict]:
    docs = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                docs.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise InputError(f"{path.name}:{lineno}: corrupt log line ({exc.msg})") from None
    return docs


def read_logs(log_dir: Path) -> tuple[dict, MetricsReport]:
    """Rebuild the MetricsReport purely from a run's log directory."""
    manifest_path = log_dir / "run.json"
    if not manifest_path.exists():
        raise InputError(f"no run manifest in {log_dir}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    goals = tuple(Goal(kind=g["kind"], target=g["target"]) for g in manifest["goals"])
    critical = set(manifest["critical_assets"])

    trials = []
    for meta in manifest["trials"]:
        index = meta["index"]
        events_path = log_dir / f"trial-{index:02d}.events.jsonl"
        tasks_path = log_dir / f"trial-{index:02d}.tasks.jsonl"
        for path in (events_path, tasks_path):
            if not path.exists():
                raise InputError(f"missing log file {path.name}")
        events = []
        with events_path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                try:
                    events.append(EventRecord.from_json(line))
                except (json.JSONDecodeError, KeyError, ValueError) as exc:
                    raise InputError(f"{events_path.name}:{lineno}: corrupt log line ({exc})") from None

        executions = []
        queries = []
        end: Optional[dict] = None
        for doc in _read_jsonl(tasks_path):
            if doc.get("type") == "task":
                executions.append(TaskExecution.from_payload(doc))
            elif doc.get("type") == "query":
                queries.append((doc["step"], doc["query"]))
            elif doc.get("type") == "end":
                end = doc
        if end is None:
            raise InputError(f"{tasks_path.name}: truncated log (no end record)")

        # Recompute the acquired set from the event log alone.
        kb = KnowledgeBase.replay(events, goals=goals)
        acquired = frozenset(kb.exfiltrated & critical) | frozenset(
            g.target for g in goals if g.kind == "root_access" and (g.target, "root") in kb.sessions
        )
        trials.append(
            TrialRecord(
                index=index,
                seed=meta["seed"],
                acquired=acquired,
                success=1 if acquired else 0,
                events=events,
                executions=executions,
                queries=queries,
                sim_time=end["sim_time"],
                steps=end["steps"],
                termination=end["termination"],
            )
        )

    cfg = manifest["config"]
    report = MetricsReport(
        environment=manifest["scenario"],
        planner=manifest["planner"],
        config=ExerciseConfig(
            trials=cfg["trials"],
            time_limit=cfg["time_limit"],
            max_steps=cfg["max_steps"],
            seed=cfg["seed"],
        ),
        critical_assets=tuple(manifest["critical_assets"]),
        trials=trials,
    )
    return manifest, report


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        seed = args.seed + i
        params = GenParams(
            subnet_count_range=args.subnets,
            hosts_per_subnet_range=args.hosts,
            goal_fraction=args.goal_frac,
            goal_kind=args.goal_kind,
            seed=seed,
        )
        env = generate(params)
        report = verify_env(env)
        if not report.all_reachable:
            bad = ", ".join(g.id for g in report.unreachable_goals())
            print(f"generation bug: unreachable goals in seed {seed}: {bad}", file=sys.stderr)
            return 1
        name = f"{format_name(env)}-seed{seed}"
        env = replace(env, name=name)
        (out_dir / f"{name}.json").write_text(serialize_scenario(env))
        print(name)
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    env = _load_env(args.env)
    report = verify_env(env)
    for entry in report.entries:
        if entry.reachable:
            print(f"{entry.goal.id}: reachable ({len(entry.witness.actions)} actions)")
        else:
            print(f"{entry.goal.id}: UNREACHABLE")
    return 0 if report.all_reachable else 1


def _planner_factory(choice: str, env: Environment, max_depth: int):
    if choice == "reference":
        return "reference", lambda index, seed: ReferencePlanner(max_depth)
    if choice == "random":
        return "random", lambda index, seed: RandomPlanner(seed)
    if choice.startswith("external:"):
        command = choice.split(":", 1)[1]
        onboarding = build_onboarding(env)
        return choice, lambda index, seed: ExternalPlanner(command, onboarding)
    raise InputError(f"unknown planner {choice!r} (use reference, random, or external:CMD)")


#: Environment variable naming a JSON file with default run flags
#: (trials, time_limit, max_steps, seed, jobs); explicit flags win.
CONFIG_ENV_VAR = "REDSIM_CONFIG"

_RUN_DEFAULTS = {"trials": 5, "time_limit": 75, "max_steps": 200, "seed": 0, "jobs": 1}


def _run_config(args: argparse.Namespace) -> ExerciseConfig:
    defaults = dict(_RUN_DEFAULTS)
    config_path = os.environ.get(CONFIG_ENV_VAR)
    if config_path:
        overrides = json.loads(Path(config_path).read_text(encoding="utf-8"))
        unknown = set(overrides) - set(defaults)
        if unknown:
            raise InputError(f"{config_path}: unknown config keys {sorted(unknown)}")
        defaults.update({k: int(v) for k, v in overrides.items()})
    values = {
        key: getattr(args, key) if getattr(args, key) is not None else fallback
        for key, fallback in defaults.items()
    }
    return ExerciseConfig(**values)


def cmd_run(args: argparse.Namespace) -> int:
    from .orchestrator import run_exercise

    env = _load_env(args.env)
    problems = validate(env)
    if problems:
        print("invalid environment:", file=sys.stderr)
        for p in problems:
            print(f"  {p}", file=sys.stderr)
        return 1
    config = _run_config(args)
    name, factory = _planner_factory(args.planner, env, config.max_depth)
    report = run_exercise(env, factory, config, planner_name=name)
    if args.log:
        write_logs(Path(args.log), report, env)
    print(report.scorecard_row())
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    manifest, report = read_logs(Path(args.logs))
    stored = Path(args.logs) / "metrics.json"
    recomputed = report.to_json()
    if stored.exists() and stored.read_text(encoding="utf-8") != recomputed:
        print("warning: recomputed metrics differ from metrics.json", file=sys.stderr)
    sys.stdout.write(recomputed)
    print(report.scorecard_row())
    if args.reference:
        if args.reference in BUNDLED:
            from .scenarios import bundled_reference

            ref = ReferenceSolution.from_payload(bundled_reference(args.reference))
        else:
            ref = ReferenceSolution.from_payload(json.loads(Path(args.reference).read_text(encoding="utf-8")))
        for trial in report.trials:
            tags = tag_tasks(trial.executions, ref)
            counts = tag_counts(tags)
            total = max(1, len(tags))
            print(
                f"trial {trial.index}: {len(tags)} tasks, "
                f"relevant_correct={100 * counts['relevant_correct'] / total:.1f}% "
                f"relevant_incorrect={100 * counts['relevant_incorrect'] / total:.1f}% "
                f"irrelevant={100 * counts['irrelevant'] / total:.1f}%"
            )
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    reports = []
    for log_dir in args.logs:
        _, report = read_logs(Path(log_dir))
        reports.append(report)
    sys.stdout.write(scorecard_table(reports))
    return 0


def cmd_serve_planner(args: argparse.Namespace) -> int:
    """Bridge scripted step replies onto the wire protocol via stdio."""
    steps = json.loads(Path(args.script).read_text(encoding="utf-8"))
    if not isinstance(steps, list):
        print("script must be a JSON list of step payloads", file=sys.stderr)
        return 1
    decoded = [wire.decode_step(step) for step in steps]  # validate up front
    stdin = sys.stdin.buffer
    stdout = sys.stdout.buffer
    cursor = 0
    while True:
        request = wire.read_frame(stdin)
        if request is None:
            return 0
        wire.decode_request(request)
        if cursor < len(decoded):
            step = decoded[cursor]
            cursor += 1
        else:
            from .planner import PlannerStep

            step = PlannerStep.finished("script exhausted")
        wire.write_frame(stdout, wire.encode_step(step))


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="redsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate verified environments")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--subnets", type=_parse_range, default=(2, 4), metavar="A..B")
    p.add_argument("--hosts", type=_parse_range, default=(7, 15), metavar="A..B")
    p.add_argument("--goal-frac", type=float, default=0.30)
    p.add_argument("--goal-kind", choices=("exfiltrate", "root_access"), default="exfiltrate")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("verify", help="check every goal has an attack path")
    p.add_argument("--env", required=True, help="scenario file or bundled name")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("run", help="run an exercise and write logs")
    p.add_argument("--env", required=True, help="scenario file or bundled name")
    p.add_argument("--planner", default="reference", help="reference | random | external:CMD")
    p.add_argument("--trials", type=int, default=None, help="default 5")
    p.add_argument("--time-limit", type=int, default=None, help="simulated minutes per trial, default 75")
    p.add_argument("--max-steps", type=int, default=None, help="planner exchanges per trial, default 200")
    p.add_argument("--seed", type=int, default=None, help="default 0")
    p.add_argument("--jobs", type=int, default=None, help="parallel trials, default 1")
    p.add_argument("--log", help="directory for event logs and the metrics report")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("score", help="recompute metrics from logs")
    p.add_argument("--logs", required=True)
    p.add_argument("--reference", help="reference solution file (or bundled scenario name) for relevance tagging")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", help="combined scorecard across runs")
    p.add_argument("--logs", nargs="+", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve-planner", help="serve scripted steps over the wire protocol")
    p.add_argument("--script", required=True, help="JSON list of step payloads")
    p.set_defaults(func=cmd_serve_planner)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "gen" and args.count < 1:
        parser.error("--count must be positive")
    if args.command == "run":
        if args.trials is not None and args.trials < 1:
            parser.error("--trials must be positive")
        if args.time_limit is not None and args.time_limit < 1:
            parser.error("--time-limit must be positive")
        if args.max_steps is not None and args.max_steps < 0:
            parser.error("--max-steps must not be negative")
        if args.jobs is not None and args.jobs < 1:
            parser.error("--jobs must be positive")
    try:
        return args.func(args)
    except (InputError, ScenarioError, OSError, json.JSONDecodeError, wire.DecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
