"""Reactive ground-truth policy used by the oracle backends.

The policy reads the world, the current observation and the execution
history (to react to the last outcome) and returns the skill the agent
should run next with fully resolved parameter values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from . import nav
from .grid import HEADINGS, frame_to_world, world_to_frame
from .percept import Observation
from .world import PUSH_RANGE, WorldError, WorldObject, WorldState, apply_push

NAV_SKILLS = ("goto_landmark", "navigate_to_point_on_ground")


@dataclass(frozen=True)
class Action:
    subtask: str
    skill: str
    params: tuple
    goal: tuple | None = None  # navigation goal cell, when the step travels


def _last_record(stm: Sequence):
    for rec in reversed(list(stm)):
        if not getattr(rec, "aborted", False):
            return rec
    return None


def find_target(ws: WorldState, target: Mapping) -> WorldObject | None:
    found = sorted((o for o in ws.objects.values() if o.floor is not None and o.matches(target)),
                   key=lambda o: o.id)
    return found[0] if found else None


def elevator_action(ws: WorldState, goal_floor: int) -> Action:
    floor = ws.robot.floor
    subtask = f"Go to floor {goal_floor} from floor {floor}."
    if ws.robot.in_elevator:
        el = ws.building.elevators[ws.robot.in_elevator]
        panel = el.stops[floor].cab_panel
        idx = next(i for i, b in enumerate(panel.buttons) if b.action == ("floor", goal_floor))
        return Action(subtask, "use_elevator", (f"{el.id}:cab:{idx}",))
    lm = ws.building.elevator_landmark(floor)
    if ws.robot.cell != lm.cell:
        return Action(subtask, "goto_landmark", (lm.id,), lm.cell)
    el = ws.building.elevators[lm.elevator]
    want = "up" if goal_floor > floor else "down"
    panel = el.stops[floor].call_panel
    idx = next(i for i, b in enumerate(panel.buttons) if b.action == ("call", want))
    return Action(subtask, "call_elevator", (f"{el.id}:call:{floor}:{idx}",))


def _goto(ws: WorldState, lm_id: str, subtask: str) -> Action:
    return Action(subtask, "goto_landmark", (lm_id,), ws.building.landmarks[lm_id].cell)


def _retrieve_action(ws: WorldState, params: Mapping, obs: Observation) -> Action | None:
    deliver = ws.building.landmarks[params["deliver_to"]]
    held = ws.objects.get(ws.robot.held_object) if ws.robot.held_object else None
    if held is not None:
        if ws.robot.floor != deliver.floor:
            return elevator_action(ws, deliver.floor)
        return _goto(ws, deliver.id, f"Bring the {held.category} back to the {deliver.label}.")
    target = find_target(ws, params["target"])
    if target is None:
        return None
    if ws.robot.floor != target.floor:
        return elevator_action(ws, target.floor)
    det = obs.by_id(target.id)
    name = target.describe()
    if det is not None and det.kind == "object":
        if ws.distance_to_object(target) <= ws.robot.arm_reach + 1e-9:
            return Action(f"Pick up the {name}.", "pick_up_object", (target.id,))
        try:
            goal = nav.nearest_ground_point(ws, target.id)
        except WorldError:
            goal = None
        return Action(f"Move next to the {name}.", "navigate_to_point_on_ground", (target.id,), goal)
    room = ws.floor.room_of(target.cell)
    lm = ws.building.room_landmark(ws.robot.floor, room) if room else None
    if lm is not None and ws.robot.cell != lm.cell:
        return _goto(ws, lm.id, f"Go to the {lm.label} to look for the {name}.")
    return Action(f"Move next to the {name}.", "navigate_to_point_on_ground", (target.id,))


def _inside(obj: WorldObject, region) -> bool:
    floor, r0, c0, r1, c1 = region
    return obj.floor == floor and all(r0 <= r <= r1 and c0 <= c <= c1 for r, c in obj.footprint)


def _toward_region(obj: WorldObject, region) -> str:
    _, r0, c0, r1, c1 = region
    r, c = obj.cell
    if r > r1:
        return "N"
    if r < r0:
        return "S"
    return "E" if c < c0 else "W"


def _rearrange_action(ws: WorldState, params: Mapping, obs: Observation) -> Action | None:
    region = params["region"]
    category = params.get("category", "chair")
    if ws.robot.floor != region[0]:
        return elevator_action(ws, region[0])
    todo = [o for o in ws.objects.values() if o.category == category and not _inside(o, region)]
    if not todo:
        return None
    chair = min(todo, key=lambda o: (round(ws.distance_to_object(o), 9), o.id))
    frame = world_to_frame(ws.robot.heading, _toward_region(chair, region))
    det = obs.by_id(chair.id)
    subtask = f"Push the {chair.category} into the goal area."
    if det is not None and frame != "backward" and ws.distance_to_object(chair) <= PUSH_RANGE + 1e-9:
        return Action(subtask, "push_object_on_ground", (chair.id, frame))
    room = ws.building.floors[region[0]].room_of((region[1], region[2]))
    lm = ws.building.room_landmark(region[0], room) if room else None
    if lm is not None and ws.robot.cell != lm.cell:
        return _goto(ws, lm.id, f"Go to the {lm.label} to see the {category}s.")
    if det is not None:
        return Action(f"Move next to the {chair.category}.", "navigate_to_point_on_ground", (chair.id,))
    return None


def task_action(ws: WorldState, task: Mapping, obs: Observation) -> Action | None:
    if task["predicate"] == "retrieve":
        return _retrieve_action(ws, task["params"], obs)
    if task["predicate"] == "rearrange":
        return _rearrange_action(ws, task["params"], obs)
    raise WorldError(f"unknown predicate: {task['predicate']!r}")


def clearing_push(ws: WorldState, object_id: str, goal) -> str | None:
    """First push direction that moves the blocker off the way to ``goal``."""
    for direction in ("right", "left", "forward"):
        sim = ws.copy()
        try:
            out = apply_push(sim, object_id, direction)
        except WorldError:
            continue
        if not out.success:
            continue
        if goal is None:
            return direction
        try:
            path = nav.plan_for_robot(sim, tuple(goal))
        except nav.Unreachable:
            continue
        hit = nav.first_blocker(sim, path)
        if hit is None or hit[1] != object_id:
            return direction
    return None


def _free_step(ws: WorldState, order=("left", "right", "backward")) -> str | None:
    for d in order:
        dr, dc = HEADINGS[frame_to_world(ws.robot.heading, d)]
        cell = (ws.robot.cell[0] + dr, ws.robot.cell[1] + dc)
        if ws.entity_at(ws.robot.floor, cell) is None:
            return d
    return None


def oracle_action(ws: WorldState, task: Mapping, stm: Sequence, obs: Observation) -> Action | None:
    """Ground-truth next action, or None when nothing sensible remains."""
    last = _last_record(stm)
    if last is not None and not last.outcome.success:
        code = last.outcome.code
        if code == "blocked":
            entity = last.outcome.details.get("entity")
            if entity in ws.building.doors and ws.doors[entity] == "closed":
                hinge = ws.building.doors[entity].hinge_side
                side = "right" if hinge == "left" else "left"
                return Action(f"Open the closed door {entity} to get through.", "open_door", (side,))
            obj = ws.objects.get(entity)
            if obj is not None and obj.floor == ws.robot.floor and obs.by_id(entity) is not None:
                nxt = task_action(ws, task, obs)
                direction = clearing_push(ws, entity, nxt.goal if nxt else None)
                if direction is not None:
                    return Action(f"Push the {obj.category} out of the way.", "push_object_on_ground",
                                  (entity, direction))
        elif code == "wrong_side" and last.skill == "open_door":
            side = "left" if last.parameter[0]["value"] == "right" else "right"
            return Action(last.subtask, "open_door", (side,))
        elif code in ("sensor_fault", "ik_failure") and last.skill == "pick_up_object":
            step = _free_step(ws)
            if step is not None:
                return Action("Reposition the base to get a better view of the object.", "move_base", (step,))
    return task_action(ws, task, obs)


def is_navigation(skill: str) -> bool:
    return skill in NAV_SKILLS or skill == "move_base"
