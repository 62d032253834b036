"""Command-line entry point: benchmark runs, offline eval, lesson curation and reports."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .backends import BackendError, HttpConfig, OracleErrorProfile, make_backend
from .engine import MODES, EngineConfig
from .harness import benchmark, offline
from .harness.metrics import build_report
from .harness.tasks import TASK_IDS
from .memory import LongTermStore, curate_lessons

BACKENDS = ("oracle", "lesson-oracle", "replay", "http")


class ConfigError(ValueError):
    pass


def _profile(args) -> OracleErrorProfile | None:
    if not getattr(args, "error_profile", None):
        return None
    d = json.loads(Path(args.error_profile).read_text())
    return OracleErrorProfile(d.get("wrong_param", {}), d.get("wrong_skill", 0.0), d.get("seed", 0))


def _replay_entries(path: Path) -> list[dict]:
    """A transcript file, or a run directory whose trial transcripts are joined in result order."""
    if path.is_file():
        return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
    if not (path / "results.jsonl").exists():
        raise ConfigError(f"no transcript at {path}")
    entries = []
    for r in benchmark.load_results(path):
        f = path / "trials" / r["trial_id"] / "transcript.jsonl"
        entries += [json.loads(line) for line in f.read_text().splitlines() if line.strip()]
    return entries


def _backend(args):
    name = args.backend
    if name not in BACKENDS:
        raise ConfigError(f"unknown backend {name!r}; expected one of {', '.join(BACKENDS)}")
    if name == "replay":
        if not args.transcript:
            raise ConfigError("--transcript is required for the replay backend")
        return make_backend("replay", transcript=_replay_entries(Path(args.transcript)))
    if name == "http":
        if not (args.url and args.model):
            raise ConfigError("--url and --model are required for the http backend")
        return make_backend("http", config=HttpConfig(args.url, args.model, args.provider))
    return make_backend(name, profile=_profile(args))


def _config(args) -> EngineConfig:
    if args.mode not in MODES:
        raise ConfigError(f"unknown mode {args.mode!r}; expected one of {', '.join(MODES)}")
    ltm = LongTermStore.load(args.ltm) if getattr(args, "ltm", None) else None
    return EngineConfig(mode=args.mode, backend=_backend(args), ltm=ltm, max_steps=getattr(args, "max_steps", 25),
                        record_truth=getattr(args, "record_truth", False))


def cmd_run(args) -> int:
    tasks = list(TASK_IDS) if args.task == "all" else [args.task]
    report, _ = benchmark.run_benchmark(tasks, args.trials, _config(args), args.seed, args.out, args.workers)
    print(report.to_text(), end="")
    return 0


def cmd_eval_offline(args) -> int:
    path = Path(args.dataset)
    if args.generate:
        offline.save_dataset(offline.generate_dataset(args.generate, args.seed), path)
    if not path.exists():
        raise ConfigError(f"dataset not found: {path} (use --generate N to create one)")
    report = offline.run_offline_eval(offline.load_dataset(path), _config(args))
    print(report.to_text(), end="")
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    return 0


def cmd_memory_curate(args) -> int:
    truth = json.loads(Path(args.truth).read_text())
    store = curate_lessons(Path(args.log), truth, _backend(args), args.cap)
    store.save(args.out)
    print(f"{len(store)} lessons written to {args.out}")
    return 0


def cmd_report(args) -> int:
    run = Path(args.runs)
    if not (run / "results.jsonl").exists():
        raise ConfigError(f"no results.jsonl in {run}")
    report = build_report(benchmark.load_results(run))
    (run / "report.txt").write_text(report.to_text())
    (run / "report.csv").write_text(report.to_csv())
    print(report.to_text(), end="")
    return 0


def _backend_args(p: argparse.ArgumentParser, default: str = "oracle") -> None:
    p.add_argument("--backend", default=default, help=f"one of {', '.join(BACKENDS)}")
    p.add_argument("--transcript", help="transcript file or run directory (replay backend)")
    p.add_argument("--url", help="endpoint URL (http backend)")
    p.add_argument("--model", help="model name (http backend)")
    p.add_argument("--provider", default="generic", choices=("generic", "openai", "anthropic"))
    p.add_argument("--error-profile", help="JSON file with wrong_param / wrong_skill / seed for oracle backends")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moma", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run benchmark trials")
    p.add_argument("--task", default="all", help=f"'all' or one of {', '.join(TASK_IDS)}")
    p.add_argument("--mode", default="BUMBLE")
    p.add_argument("--trials", type=int, default=10, help="seeds per task (each run under 3 phrasings)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--ltm", help="lesson store JSON")
    p.add_argument("--max-steps", type=int, default=25)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--record-truth", action="store_true", help="log oracle answers for later lesson curation")
    _backend_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval-offline", help="skill-parameter prediction on a synthetic dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--mode", default="BUMBLE")
    p.add_argument("--generate", type=int, default=0, metavar="N", help="write N fresh instances first")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ltm")
    p.add_argument("--csv")
    _backend_args(p)
    p.set_defaults(func=cmd_eval_offline)

    p = sub.add_parser("memory", help="long-term memory tools")
    msub = p.add_subparsers(dest="memory_command", required=True)
    c = msub.add_parser("curate", help="turn flagged predictions into lessons")
    c.add_argument("--log", required=True, help="predictions.jsonl")
    c.add_argument("--truth", required=True, help="JSON mapping prediction id to the correct answer")
    c.add_argument("--out", required=True)
    c.add_argument("--cap", type=int, default=3)
    _backend_args(c)
    c.set_defaults(func=cmd_memory_curate)

    p = sub.add_parser("report", help="render tables for a finished run")
    p.add_argument("--runs", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, BackendError, ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
