"""Per-trial execution history and cross-trial failure lessons."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from .percept import SceneImage
from .prompt import BackendRequest, Prompt
from .world import Outcome

STM_IMAGE_BUDGET = 3
LESSON_CAP = 3
SKILL_SELECTION = "skill_selection"


@dataclass
class StepRecord:
    index: int
    subtask: str
    skill: str
    parameter: list[dict]
    outcome: Outcome
    scene_ref: dict[str, Any] = field(default_factory=dict)  # image path/digest + text table
    transcript_ref: list[int] = field(default_factory=list)
    aborted: bool = False
    scene_image: SceneImage | None = field(default=None, repr=False, compare=False)

    def parameter_text(self) -> str:
        if not self.parameter:
            return "-"
        return ", ".join(str(p.get("label") or p.get("value")) for p in self.parameter)

    def result_text(self) -> str:
        if self.outcome.success:
            return "success"
        return f"failure ({self.outcome.reason})"

    def to_dict(self) -> dict:
        return {"index": self.index, "subtask": self.subtask, "skill": self.skill, "parameter": self.parameter,
                "outcome": self.outcome.to_dict(), "scene_ref": self.scene_ref,
                "transcript_ref": self.transcript_ref, "aborted": self.aborted}

    @classmethod
    def from_dict(cls, d: Mapping) -> "StepRecord":
        return cls(d["index"], d["subtask"], d["skill"], list(d["parameter"]), Outcome.from_dict(d["outcome"]),
                   dict(d.get("scene_ref") or {}), list(d.get("transcript_ref") or []), d.get("aborted", False))


@dataclass
class PromptFragment:
    text: str
    images: list[SceneImage] = field(default_factory=list)


class ShortTermMemory:
    def __init__(self):
        self.records: list[StepRecord] = []

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def append(self, record: StepRecord) -> None:
        if record.index != len(self.records) + 1:
            raise ValueError(f"step index {record.index} breaks contiguity (expected {len(self.records) + 1})")
        self.records.append(record)

    def render(self, budget: int = STM_IMAGE_BUDGET, max_chars: int | None = None) -> PromptFragment:
        if not self.records:
            return PromptFragment("Execution history: no steps executed yet")
        lines = [f"step {r.index}: subtask '{r.subtask}' | skill {r.skill} | parameter {r.parameter_text()} | "
                 f"result {r.result_text()}" for r in self.records]
        if max_chars is not None:
            # drop the oldest lines first; the newest step always stays
            while len(lines) > 1 and sum(len(x) + 1 for x in lines) > max_chars:
                lines.pop(0)
        text = "Execution history:\n" + "\n".join(lines)
        recent = [r.scene_image for r in self.records[-budget:] if r.scene_image is not None] if budget > 0 else []
        return PromptFragment(text, recent)

    def to_list(self) -> list[dict]:
        return [r.to_dict() for r in self.records]


def stm_append(stm: ShortTermMemory, record: StepRecord) -> None:
    stm.append(record)


def stm_render(stm: ShortTermMemory, budget: int = STM_IMAGE_BUDGET) -> PromptFragment:
    return stm.render(budget)


# ----------------------------------------------------------------- lessons


@dataclass
class FailureLesson:
    lesson_id: str
    key: str  # skill name or "skill_selection"
    context: dict[str, Any]
    predicted: Any
    ground_truth: Any
    analysis: str

    def __post_init__(self):
        if self.predicted == self.ground_truth:
            raise ValueError(f"lesson {self.lesson_id}: prediction equals ground truth")

    def render(self) -> str:
        ctx = self.context
        head = f"Task: {ctx.get('instruction', '?')}"
        if ctx.get("subtask"):
            head += f" | subtask: {ctx['subtask']}"
        return (f"- {head}\n  predicted: {self.predicted} | correct: {self.ground_truth}\n"
                f"  analysis: {self.analysis}")


class LongTermStore:
    def __init__(self, cap: int = LESSON_CAP, path: str | Path | None = None):
        self.cap = cap
        self.path = Path(path) if path else None
        self.lessons: dict[str, list[FailureLesson]] = {}

    def add(self, lesson: FailureLesson) -> bool:
        bucket = self.lessons.setdefault(lesson.key, [])
        if len(bucket) >= self.cap:
            return False  # keep the earliest mismatches
        bucket.append(lesson)
        return True

    def retrieve(self, key: str) -> list[FailureLesson]:
        return list(self.lessons.get(key, []))

    def __len__(self):
        return sum(len(v) for v in self.lessons.values())

    def __eq__(self, other):
        return isinstance(other, LongTermStore) and self.cap == other.cap and self.to_dict() == other.to_dict()

    def to_dict(self) -> dict:
        return {"cap": self.cap, "lessons": {k: [asdict(x) for x in v] for k, v in sorted(self.lessons.items())}}

    @classmethod
    def from_dict(cls, d: Mapping, path=None) -> "LongTermStore":
        store = cls(d.get("cap", LESSON_CAP), path)
        for key, items in d.get("lessons", {}).items():
            for item in items:
                store.add(FailureLesson(**item))
        return store

    def save(self, path: str | Path | None = None) -> Path:
        target = Path(path or self.path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        return target

    @classmethod
    def load(cls, path: str | Path) -> "LongTermStore":
        return cls.from_dict(json.loads(Path(path).read_text()), path)


def ltm_retrieve(store: LongTermStore | None, key: str) -> list[FailureLesson]:
    return store.retrieve(key) if store is not None else []


def render_lessons(lessons: list[FailureLesson], key: str) -> str:
    if not lessons:
        return ""
    what = "choosing the next skill" if key == SKILL_SELECTION else f"choosing parameters for {key}"
    return f"Lessons from past mistakes when {what}:\n" + "\n".join(x.render() for x in lessons)


def _read_log(prediction_log) -> list[dict]:
    if isinstance(prediction_log, (str, Path)):
        with open(prediction_log) as fh:
            return [json.loads(line) for line in fh if line.strip()]
    return list(prediction_log)


def _analysis_prompt(entry: Mapping, truth) -> Prompt:
    p = Prompt("analysis")
    p.add_text(f"A robot agent working on the task '{entry.get('instruction', '')}' "
               f"made a decision for '{entry['key']}'.")
    if entry.get("scene"):
        p.add_text("Scene at decision time:\n" + entry["scene"])
    if entry.get("subtask"):
        p.add_text(f"Subtask: {entry['subtask']}")
    p.add_text(f"Predicted answer: {entry['predicted']}\nCorrect answer: {truth}\n"
               "Explain briefly why the prediction was wrong and state a lesson for similar situations.")
    return p


def curate_lessons(prediction_log: Iterable[Mapping] | str | Path, ground_truth: Mapping, backend,
                   cap: int = LESSON_CAP, path: str | Path | None = None) -> LongTermStore:
    """Keep only erroneous predictions, each with a backend-written analysis.

    ``ground_truth`` maps prediction id to the correct answer, or to
    ``{"truth": answer, "flagged": bool}`` when a human operator reviewed it.
    """
    entries = _read_log(prediction_log)
    for e in entries:
        if str(e["id"]) not in ground_truth:
            raise KeyError(f"missing annotation for prediction {e['id']}")
    store = LongTermStore(cap, path)
    for e in entries:
        ann = ground_truth[str(e["id"])]
        if isinstance(ann, Mapping) and "truth" in ann:
            truth = ann["truth"]
            wrong = bool(ann.get("flagged", e["predicted"] != truth))
        else:
            truth, wrong = ann, e["predicted"] != ann
        if not wrong or e["predicted"] == truth:
            continue
        if len(store.retrieve(e["key"])) >= cap:
            continue
        resp = backend.complete(BackendRequest(_analysis_prompt(e, truth), "analysis",
                                               {"key": e["key"], "predicted": e["predicted"], "truth": truth,
                                                "entry": dict(e)}))
        ctx = {k: e.get(k) for k in ("instruction", "scene", "subtask", "skill") if e.get(k) is not None}
        store.add(FailureLesson(str(e["id"]), e["key"], ctx, e["predicted"], truth, resp.text.strip()))
    return store
