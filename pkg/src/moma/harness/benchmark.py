"""Trial fan-out over tasks, phrasings and seeds, with report assembly."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from ..engine import EngineConfig, TrialResult, run_trial
from .metrics import Report, build_report
from .scenarios import benchmark_scenario
from .tasks import TASK_IDS, make_task

PHRASINGS = 3


@dataclass(frozen=True)
class TrialPlan:
    task_id: str
    seed: int
    phrasing: int

    @property
    def trial_id(self) -> str:
        return f"{self.task_id}-s{self.seed}-p{self.phrasing}"


def plan_trials(tasks: Iterable[str], n_trials: int, seed: int = 0) -> list[TrialPlan]:
    """n_trials seeds per task, each run under all three phrasings."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    tasks = list(tasks)
    for t in tasks:
        if t not in TASK_IDS:
            raise ValueError(f"unknown task {t!r}; expected one of {', '.join(TASK_IDS)}")
    return [TrialPlan(t, seed + i, p) for t in tasks for i in range(n_trials) for p in range(PHRASINGS)]


def run_planned(plan: TrialPlan, config: EngineConfig, out_dir: Path | None = None) -> TrialResult:
    scenario = benchmark_scenario(plan.task_id, plan.seed)
    task = make_task(plan.task_id, plan.phrasing, scenario)
    log_dir = out_dir / "trials" / plan.trial_id if out_dir is not None else None
    meta = {"seed": plan.seed, "phrasing": plan.phrasing, "building": scenario["meta"]["building"]}
    return run_trial(task, scenario, config, plan.trial_id, log_dir, meta)


def write_results(results: list[TrialResult], out_dir: str | Path) -> Report:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "results.jsonl", "w") as fh:
        for r in results:
            d = r.to_dict()
            d.pop("wall_time")  # keep the file byte-stable across runs
            fh.write(json.dumps(d, sort_keys=True, default=str) + "\n")
    report = build_report(results)
    (out_dir / "report.txt").write_text(report.to_text())
    (out_dir / "report.csv").write_text(report.to_csv())
    return report


def load_results(run_dir: str | Path) -> list[dict]:
    with open(Path(run_dir) / "results.jsonl") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def run_benchmark(tasks: Iterable[str] = TASK_IDS, n_trials: int = 10, config: EngineConfig | None = None,
                  seed: int = 0, out_dir: str | Path | None = None, workers: int = 1) -> tuple[Report, list]:
    """Run every planned trial and return (report, results) in plan order."""
    config = config or EngineConfig()
    plans = plan_trials(tasks, n_trials, seed)
    out = Path(out_dir) if out_dir is not None else None
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda p: run_planned(p, config, out), plans))
    else:
        results = [run_planned(p, config, out) for p in plans]
    report = write_results(results, out) if out is not None else build_report(results)
    return report, results
