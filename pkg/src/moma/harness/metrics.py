"""Success rates, failure categories and report tables."""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

CATEGORIES = ("none", "wrong-object", "wrong-button", "collision-reasoning", "navigation-stuck", "sensor-fault",
              "step-budget", "semantic-violation")
FAILURE_CATEGORIES = CATEGORIES[1:]
NAV_SKILLS = ("goto_landmark", "navigate_to_point_on_ground", "move_base")
STUCK_RUN = 3


def _steps(stm) -> list[tuple[str, dict, list]]:
    """(skill, outcome dict, parameter values) per recorded step."""
    out = []
    for rec in stm or []:
        if isinstance(rec, Mapping):
            out.append((rec["skill"], dict(rec["outcome"]), [p.get("value") for p in rec.get("parameter", [])]))
        else:
            out.append((rec.skill, rec.outcome.to_dict(), [p.get("value") for p in rec.parameter]))
    return out


def categorize_failure(result, stm=None) -> str:
    """Map a failed trial to one category; earlier rules take precedence.

    1 wrong-object, 2 wrong-button, 3 collision-reasoning, 4 navigation-stuck,
    5 sensor-fault, 6 semantic-violation, 7 step-budget.
    """
    if result.success:
        raise ValueError("not a failure")
    steps = _steps(stm if stm is not None else result.stm)
    if result.held_wrong:
        return "wrong-object"
    floors = set(result.relevant_floors or [])
    for skill, out, _ in steps:
        if out.get("code") == "wrong_button":
            return "wrong-button"
        if skill == "use_elevator" and out.get("success") and floors and out["details"].get("floor") not in floors:
            return "wrong-button"
    codes = Counter(out.get("code") for _, out, _ in steps if not out.get("success"))
    if codes.get("collision", 0) >= 1 and all(codes["collision"] >= v for k, v in codes.items()):
        return "collision-reasoning"
    run = 0
    for skill, out, _ in steps:
        if skill in NAV_SKILLS and not out.get("success"):
            run += 1
            if run >= STUCK_RUN:
                return "navigation-stuck"
        elif skill in NAV_SKILLS or not out.get("success"):
            run = 0
    picks = [(s, out) for s, out, _ in steps if s == "pick_up_object"]
    if picks and not picks[-1][1].get("success") and picks[-1][1].get("code") in ("sensor_fault", "ik_failure"):
        return "sensor-fault"
    if result.semantic_violation:
        return "semantic-violation"
    return "step-budget"


def success_rate(successes: int, trials: int) -> float:
    if trials <= 0:
        raise ValueError("trials must be positive")
    return round(100.0 * successes / trials, 1)


@dataclass
class Report:
    rows: list[dict] = field(default_factory=list)  # per task
    overall: float = 0.0
    histogram: dict[str, int] = field(default_factory=dict)
    n_trials: int = 0

    def to_text(self) -> str:
        lines = [f"{'task':<20}{'trials':>8}{'success':>9}{'rate %':>9}"]
        for r in self.rows:
            lines.append(f"{r['task']:<20}{r['trials']:>8}{r['successes']:>9}{r['rate']:>9.1f}")
        lines.append(f"{'overall':<20}{self.n_trials:>8}{sum(r['successes'] for r in self.rows):>9}"
                     f"{self.overall:>9.1f}")
        lines.append("")
        lines.append("failure categories:")
        for cat in FAILURE_CATEGORIES:
            lines.append(f"  {cat:<22}{self.histogram.get(cat, 0):>5}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["task", "trials", "successes", "rate"] + list(FAILURE_CATEGORIES))
        for r in self.rows:
            w.writerow([r["task"], r["trials"], r["successes"], f"{r['rate']:.1f}"]
                       + [r["categories"].get(c, 0) for c in FAILURE_CATEGORIES])
        w.writerow(["overall", self.n_trials, sum(r["successes"] for r in self.rows), f"{self.overall:.1f}"]
                   + [self.histogram.get(c, 0) for c in FAILURE_CATEGORIES])
        return buf.getvalue()


def build_report(results: Iterable) -> Report:
    """Per-task and overall success (phrasings pooled) plus the failure histogram."""
    by_task: dict[str, list] = {}
    for r in results:
        get = r.get if isinstance(r, Mapping) else lambda k, _r=r: getattr(_r, k)
        by_task.setdefault(get("task_id"), []).append((get("success"), get("failure_category")))
    rows, hist, total, wins = [], Counter(), 0, 0
    for task in sorted(by_task):
        items = by_task[task]
        cats = Counter(c for ok, c in items if not ok)
        ok = sum(1 for s, _ in items if s)
        rows.append({"task": task, "trials": len(items), "successes": ok, "rate": success_rate(ok, len(items)),
                     "categories": dict(cats)})
        hist.update(cats)
        total += len(items)
        wins += ok
    return Report(rows, success_rate(wins, total) if total else 0.0, dict(hist), total)
