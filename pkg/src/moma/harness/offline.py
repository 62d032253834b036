"""Synthetic single-decision dataset for parameter prediction, and its evaluation.

Rows: pick up an object among 5-10 or 20-25 distractors, choose the push
direction for a corridor blocker, and choose the elevator call button.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Iterable, Mapping

from ..engine import EngineConfig, ParseError, build_stage2_prompt, parse_choice, parse_stage2, resolve_description
from ..percept import Candidate, Observation, annotate_markers, observe
from ..prompt import BackendRequest
from ..skills import SkillContext, default_registry
from ..world import WorldState, load_world, make_object
from . import buildings as B
from .scenarios import _sample
from .solver import _sideways

ROWS = (("pick_up_object", "5-10"), ("pick_up_object", "20-25"), ("push_object_on_ground", None),
        ("call_elevator", None))
BANDS = {"5-10": (5, 10), "20-25": (20, 25)}


def row_name(skill: str, split: str | None) -> str:
    return f"{skill} ({split} distractors)" if split else skill


@dataclass
class OfflineInstance:
    instance_id: str
    skill: str
    split: str | None
    stage_index: int
    instruction: str
    subtask: str
    observation: Observation
    candidates: list[Candidate]
    truth: Any
    chosen: tuple = ()
    mode_flags: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.truth not in [c.value for c in self.candidates]:
            raise ValueError(f"instance {self.instance_id}: ground truth not among candidates")

    def to_dict(self) -> dict:
        return {"id": self.instance_id, "skill": self.skill, "split": self.split, "stage_index": self.stage_index,
                "instruction": self.instruction, "subtask": self.subtask, "chosen": list(self.chosen),
                "observation": self.observation.to_dict(), "truth": self.truth,
                "candidates": [{"value": c.value, "label": c.label,
                                "distance": None if math.isnan(c.distance) else c.distance,
                                "bearing": c.bearing, "kind": c.kind,
                                "cell": list(c.cell) if c.cell is not None else None} for c in self.candidates]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "OfflineInstance":
        obs = Observation.from_dict(d["observation"])
        cands = []
        for c in d["candidates"]:
            dist = float("nan") if c["distance"] is None else c["distance"]
            cell = tuple(c["cell"]) if c["cell"] is not None else None
            det = obs.by_id(c["value"]) if isinstance(c["value"], str) else None
            cands.append(Candidate(c["value"], c["label"], dist, c["bearing"], c["kind"], cell, det))
        return cls(d["id"], d["skill"], d.get("split"), d["stage_index"], d["instruction"], d["subtask"], obs,
                   cands, d["truth"], tuple(d.get("chosen") or ()))


@lru_cache(maxsize=None)
def _empty_world(name: str) -> WorldState:
    return load_world(B.make_building(name))


def _world(name: str, objects: Iterable[Mapping]) -> WorldState:
    ws = _empty_world(name).copy()
    ws.objects = {o["id"]: make_object(o) for o in objects}
    return ws


def _pickup_instance(idx: int, split: str, rng: random.Random, registry) -> OfflineInstance:
    name = rng.choice(B.BUILDING_NAMES)
    task = rng.choice(("retrieve_soda", "retrieve_marker"))
    cfg = _sample(B.make_building(name), task, rng.randrange(1 << 30), 0, None, BANDS[split])
    ws = _world(name, [o for o in cfg["objects"] if o["role"] == "item"])
    floor, slot = B.find_room(name, "kitchen" if task == "retrieve_soda" else "art_studio")[0]
    ws.robot.floor, ws.robot.cell, ws.robot.heading = floor, B.landmark_cell(slot, ""), "N"
    obs = observe(ws, None, idx + 1)
    cands = registry.get("pick_up_object").candidate_generator(SkillContext(ws, obs), 0, ())
    target = cfg["meta"]["target"]
    want = "the diet soda can" if task == "retrieve_soda" else f"the {target['attributes']['color']} marker"
    return OfflineInstance(f"pickup-{split}-{idx}", "pick_up_object", split, 0,
                           f"Bring me {want}.", f"Pick up {want}.", obs, cands, "target_1")


def _push_instance(idx: int, rng: random.Random, registry) -> OfflineInstance:
    name = rng.choice(B.BUILDING_NAMES)
    floor = rng.choice((1, 2, 3))
    col = rng.choice(B.NICHE_COLS)
    kind = rng.choice(("box", "chair"))
    objs = [{"id": "blocker", "category": kind, "attributes": {}, "floor": floor, "cell": [B.CORRIDOR_ROW, col],
             "ground": True, "heavy": kind == "chair", "role": "obstacle"}]
    ws = _world(name, objs)
    east = rng.random() < 0.5
    ws.robot.floor = floor
    ws.robot.cell = (B.CORRIDOR_ROW, col - 8 if east else col + 8)
    ws.robot.heading = "E" if east else "W"
    obs = observe(ws, None, idx + 1)
    route = {(B.CORRIDOR_ROW, c) for c in range(col - 12, col + 13)}
    truth = _sideways(ws, "blocker", route)
    cands = registry.get("push_object_on_ground").candidate_generator(SkillContext(ws, obs), 1, ("blocker",))
    return OfflineInstance(f"push-{idx}", "push_object_on_ground", None, 1,
                           "Go to the elevator lobby.", f"Push the {kind} out of the corridor.", obs, cands, truth,
                           ("blocker",))


def _call_instance(idx: int, rng: random.Random, registry) -> OfflineInstance:
    name = rng.choice(B.BUILDING_NAMES)
    here = 2  # both call buttons exist only on the middle floor
    goal = rng.choice((1, 3))
    ws = _world(name, [])
    lm = ws.building.elevator_landmark(here)
    ws.robot.floor, ws.robot.cell, ws.robot.heading = here, lm.cell, lm.heading
    obs = observe(ws, None, idx + 1)
    cands = registry.get("call_elevator").candidate_generator(SkillContext(ws, obs), 0, ())
    want = "up" if goal > here else "down"
    truth = next(c.value for c in cands if c.detection.label == f"{want} button")
    return OfflineInstance(f"call-{idx}", "call_elevator", None, 0, f"Go to floor {goal}.",
                           f"Go to floor {goal} from floor {here}.", obs, cands, truth)


def generate_dataset(n: int = 120, seed: int = 0) -> list[OfflineInstance]:
    """``n`` instances spread evenly over the four rows."""
    rng = random.Random(f"offline:{seed}")
    registry = default_registry()
    out = []
    for i in range(n):
        skill, split = ROWS[i % len(ROWS)]
        if skill == "pick_up_object":
            out.append(_pickup_instance(i, split, rng, registry))
        elif skill == "push_object_on_ground":
            out.append(_push_instance(i, rng, registry))
        else:
            out.append(_call_instance(i, rng, registry))
    return out


def save_dataset(instances: Iterable[OfflineInstance], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_dict()) + "\n")
    return path


def load_dataset(path: str | Path) -> list[OfflineInstance]:
    with open(path) as fh:
        return [OfflineInstance.from_dict(json.loads(line)) for line in fh if line.strip()]


@dataclass
class OfflineReport:
    rows: dict[str, dict]
    average: float

    def to_text(self) -> str:
        lines = [f"{'skill':<44}{'n':>6}{'correct':>9}{'rate %':>9}"]
        for name, r in self.rows.items():
            lines.append(f"{name:<44}{r['n']:>6}{r['correct']:>9}{r['rate']:>9.1f}")
        lines.append(f"{'average':<44}{'':>6}{'':>9}{self.average:>9.1f}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = ["skill,n,correct,rate"]
        lines += [f"{k},{r['n']},{r['correct']},{r['rate']:.1f}" for k, r in self.rows.items()]
        lines.append(f"average,,,{self.average:.1f}")
        return "\n".join(lines) + "\n"


def predict(instance: OfflineInstance, config: EngineConfig):
    """Run one stage-2 query for the instance; returns the resolved value (None on parse failure)."""
    registry = config.registry
    skill = registry.get(instance.skill)
    obs = instance.observation
    markers, _ = annotate_markers(obs, instance.candidates)
    lessons = config.ltm.retrieve(instance.skill) if (config.ltm is not None and config.uses_ltm) else []
    prompt = build_stage2_prompt(instance.instruction, instance.subtask, skill, obs, markers, instance.candidates,
                                 lessons, config.mode, instance.stage_index, instance.chosen)
    meta = {"stage": "stage2", "skill": instance.skill, "split": instance.split, "truth_value": instance.truth,
            "candidates": instance.candidates, "markers": markers if config.som else None,
            "stage_index": instance.stage_index, "cot": config.cot}
    text = config.backend.complete(BackendRequest(prompt, "stage2", meta)).text
    try:
        if config.som:
            return markers.resolve(parse_stage2(text, markers.ids())).value
        field_name, answer = parse_choice(text)
        return resolve_description(obs, instance.candidates, field_name, answer).value
    except ParseError:
        return None


def run_offline_eval(dataset: Iterable[OfflineInstance], config: EngineConfig) -> OfflineReport:
    counts: dict[str, list[int]] = {}
    for inst in dataset:
        name = row_name(inst.skill, inst.split)
        c = counts.setdefault(name, [0, 0])
        c[0] += 1
        c[1] += int(predict(inst, config) == inst.truth)
    order = [row_name(s, sp) for s, sp in ROWS]
    rows = {}
    for name in sorted(counts, key=lambda k: (order.index(k) if k in order else len(order), k)):
        n, ok = counts[name]
        rows[name] = {"n": n, "correct": ok, "rate": round(100.0 * ok / n, 1)}
    avg = round(sum(r["rate"] for r in rows.values()) / len(rows), 1) if rows else 0.0
    return OfflineReport(rows, avg)
