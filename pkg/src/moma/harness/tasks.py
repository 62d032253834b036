"""Benchmark task definitions and their instruction phrasings."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

TASK_IDS = ("retrieve_marker", "retrieve_soda", "rearrange_chairs")

# one color per phrasing family; the instruction never names the color directly
MARKER_PHRASINGS = {
    "blue": ("Bring me the marker that matches the color of a clear daytime sky.",
             "I need a marker colored like the sky on a sunny day; please fetch it for me.",
             "Could you get me the sky-colored marker?"),
    "green": ("Bring me the marker that matches the color of freshly mown grass.",
              "I need a marker colored like a summer lawn; please fetch it for me.",
              "Could you get me the grass-colored marker?"),
    "red": ("Bring me the marker that matches the color of a ripe strawberry.",
            "I need a marker colored like a stop sign; please fetch it for me.",
            "Could you get me the strawberry-colored marker?"),
}
SODA_PHRASINGS = (
    "Fetch me something fizzy to drink, but without the calories.",
    "I am watching my sugar intake; bring me a suitable soda, please.",
    "Could you find a diet soda can and bring it to me?",
)
CHAIR_PHRASINGS = (
    "Line up all the chairs of the reception along its back wall.",
    "Please tidy the reception by moving every chair to the far side of the room.",
    "Push the reception chairs against the north wall so the room is clear.",
)


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    instruction: str
    predicate: str
    params: Mapping[str, Any] = field(default_factory=dict)
    phrasing: int = 0

    def __post_init__(self):
        if not self.instruction.strip():
            raise ValueError("instruction must be non-empty")
        if self.predicate not in ("retrieve", "rearrange"):
            raise ValueError(f"unknown predicate: {self.predicate!r}")

    def predicate_spec(self) -> dict:
        return {"predicate": self.predicate, "params": dict(self.params)}


def phrasings(task_id: str, meta: Mapping | None = None) -> tuple[str, ...]:
    if task_id == "retrieve_marker":
        return MARKER_PHRASINGS[(meta or {}).get("target", {}).get("attributes", {}).get("color", "blue")]
    if task_id == "retrieve_soda":
        return SODA_PHRASINGS
    if task_id == "rearrange_chairs":
        return CHAIR_PHRASINGS
    raise ValueError(f"unknown task {task_id!r}")


def make_task(task_id: str, phrasing: int, scenario: Mapping) -> TaskSpec:
    """TaskSpec for a randomized scenario (the goal parameters live in its meta block)."""
    meta = scenario["meta"]
    text = phrasings(task_id, meta)[phrasing % 3]
    if task_id in ("retrieve_marker", "retrieve_soda"):
        return TaskSpec(task_id, text, "retrieve", {"target": meta["target"], "deliver_to": meta["deliver_to"]},
                        phrasing % 3)
    if task_id == "rearrange_chairs":
        return TaskSpec(task_id, text, "rearrange", {"region": meta["region"], "category": "chair"}, phrasing % 3)
    raise ValueError(f"unknown task {task_id!r}")


def custom_task(instruction: str, predicate: str, params: Mapping) -> TaskSpec:
    return TaskSpec("custom", instruction, predicate, dict(params))
