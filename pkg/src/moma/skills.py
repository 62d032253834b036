"""Parameterized skill library.

Each skill is a :class:`SkillSpec` with five hooks: name, description,
parameter kinds, candidate generator and executor. Executors never raise
on agent mistakes; they return a failed :class:`Outcome` so the agent can
replan.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Callable

from . import nav
from .grid import HEADINGS, bfs_distances, frame_to_world, heading_between, neighbors4
from .percept import Candidate, Observation, bearing_deg, candidate_from_detection, detector_query
from .world import (
    PUSH_DISTANCE,
    PUSH_RANGE,
    Outcome,
    WorldError,
    WorldState,
    apply_open_door,
    apply_push,
    elevator_transition,
    press_button,
)

MOVE_BASE_STEP = 0.3
DOOR_APPROACH_RADIUS = 2.5

DIRECTION_BEARINGS = {"left": -90.0, "forward": 0.0, "right": 90.0, "backward": 180.0}


@dataclass
class SkillContext:
    ws: WorldState
    observation: Observation
    step: int = 0
    ik_failure_rate: float = 0.0


CandidateFn = Callable[[SkillContext, int, tuple], list[Candidate]]
ExecuteFn = Callable[[SkillContext, tuple], Outcome]


@dataclass(frozen=True)
class SkillSpec:
    name: str
    description: str
    parameter_kinds: tuple[str, ...]
    candidate_generator: CandidateFn
    executor: ExecuteFn
    title: str = ""
    arm: str | None = None  # annotation only; never affects outcomes

    def __post_init__(self):
        if not self.description.strip():
            raise ValueError(f"skill {self.name}: empty description")


@dataclass
class SkillInvocation:
    skill: str
    parameter: list[dict]  # one {"marker": id, "value": ...} per parameter stage
    subtask: str
    step: int

    @property
    def values(self) -> tuple:
        return tuple(p["value"] for p in self.parameter)


class SkillRegistry:
    def __init__(self, skills: list[SkillSpec] | None = None):
        self._skills: dict[str, SkillSpec] = {}
        for s in skills or []:
            self.register(s)

    def register(self, spec: SkillSpec) -> SkillSpec:
        if spec.name in self._skills:
            raise ValueError(f"skill {spec.name!r} already registered")
        self._skills[spec.name] = spec
        return spec

    def get(self, name: str) -> SkillSpec:
        return self._skills[name]

    def __contains__(self, name) -> bool:
        return name in self._skills

    def __len__(self):
        return len(self._skills)

    def names(self) -> list[str]:
        return list(self._skills)

    def subset(self, enabled: dict[str, bool]) -> "SkillRegistry":
        """Registry restricted by a run-config manifest (name -> enabled)."""
        return SkillRegistry([s for n, s in self._skills.items() if enabled.get(n, True)])

    def describe_all(self) -> str:
        if not self._skills:
            raise ValueError("no skills registered")
        return "\n\n".join(s.description for s in self._skills.values())


def describe_all(registry: SkillRegistry) -> str:
    return registry.describe_all()


def candidates(skill: SkillSpec, ws: WorldState, observation: Observation, stage: int = 0,
               chosen: tuple = ()) -> list[Candidate]:
    return skill.candidate_generator(SkillContext(ws, observation), stage, chosen)


def execute(skill: SkillSpec, ctx: SkillContext, parameter: tuple) -> Outcome:
    try:
        return skill.executor(ctx, tuple(parameter))
    except WorldError as exc:
        return Outcome.fail("precondition", str(exc))


# --------------------------------------------------------------- candidates


def _object_candidates(ctx: SkillContext, stage: int, chosen: tuple) -> list[Candidate]:
    return [candidate_from_detection(d) for d in detector_query(ctx.observation, "all objects")]


def _landmark_candidates(ctx: SkillContext, stage: int, chosen: tuple) -> list[Candidate]:
    ws = ctx.ws
    out = []
    for lm in ws.building.landmarks_on(ws.robot.floor):
        pos = ws.position(lm.cell)
        out.append(Candidate(lm.id, f"{lm.label} (floor {lm.floor})", ws.distance_to_cell(lm.cell),
                             bearing_deg(ws.robot.heading, ws.robot_position(), pos) if lm.cell != ws.robot.cell
                             else 0.0, "landmark", lm.cell))
    return out


def _direction_candidates(ctx: SkillContext, stage: int, chosen: tuple) -> list[Candidate]:
    ws = ctx.ws
    out = []
    for d in ("forward", "backward", "left", "right"):
        dr, dc = HEADINGS[frame_to_world(ws.robot.heading, d)]
        cell = (ws.robot.cell[0] + dr, ws.robot.cell[1] + dc)
        out.append(Candidate(d, f"move {d}", MOVE_BASE_STEP, DIRECTION_BEARINGS[d], "direction", cell))
    return out


def _push_candidates(ctx: SkillContext, stage: int, chosen: tuple) -> list[Candidate]:
    if stage == 0:
        return _object_candidates(ctx, stage, chosen)
    ws = ctx.ws
    obj = ws.objects.get(chosen[0]) if chosen else None
    out = []
    for d in ("forward", "left", "right"):
        dr, dc = HEADINGS[frame_to_world(ws.robot.heading, d)]
        cell = None
        if obj is not None and obj.cell is not None:
            n = round(PUSH_DISTANCE / ws.building.cell_size)
            cell = (obj.cell[0] + n * dr, obj.cell[1] + n * dc)
        out.append(Candidate(d, f"push {d}: object ends {PUSH_DISTANCE} m to the {d}" if d != "forward"
                             else f"push forward: object ends {PUSH_DISTANCE} m further ahead",
                             PUSH_DISTANCE, DIRECTION_BEARINGS[d], "direction", cell))
    return out


def _side_candidates(ctx: SkillContext, stage: int, chosen: tuple) -> list[Candidate]:
    door = _nearest_closed_door(ctx.ws)
    dist = ctx.ws.distance_to_cell(min(door.cells, key=ctx.ws.distance_to_cell)) if door else float("nan")
    return [Candidate("left", "push the door on its left side", dist, -30.0, "side"),
            Candidate("right", "push the door on its right side", dist, 30.0, "side")]


def _button_candidates(panel: str) -> CandidateFn:
    def gen(ctx: SkillContext, stage: int, chosen: tuple) -> list[Candidate]:
        return [candidate_from_detection(d) for d in detector_query(ctx.observation, "buttons")
                if d.extra.get("panel") == panel]
    return gen


# ---------------------------------------------------------------- executors


def _detection(ctx: SkillContext, entity_id: str):
    return ctx.observation.by_id(entity_id)


def _resolve_object(ctx: SkillContext, entity_id: str):
    det = _detection(ctx, entity_id)
    obj = ctx.ws.objects.get(entity_id)
    if (det is not None and det.kind == "false_positive") or obj is None or obj.floor != ctx.ws.robot.floor:
        return det, None
    return det, obj


def _goto_landmark(ctx: SkillContext, params: tuple) -> Outcome:
    ws = ctx.ws
    lm = ws.building.landmarks.get(params[0])
    if lm is None:
        return Outcome.fail("not_found", f"unknown landmark {params[0]}")
    if lm.floor != ws.robot.floor:
        return Outcome.fail("other_floor", f"landmark {lm.label} is on floor {lm.floor}; use the elevator")
    try:
        path = nav.plan_for_robot(ws, lm.cell)
    except nav.Unreachable:
        return Outcome.fail("unreachable", f"no collision-free path to {lm.label}")
    out = nav.traverse(ws, path)
    if out.success:
        ws.robot.heading = lm.heading
        out.details.update(landmark=lm.id, path_cells=len(path))
    return out


def _navigate_near(ctx: SkillContext, params: tuple) -> Outcome:
    ws = ctx.ws
    det, obj = _resolve_object(ctx, params[0])
    if obj is None:
        return Outcome.fail("not_found", f"object {params[0]} not found")
    try:
        goal = nav.nearest_ground_point(ws, obj.id)
        path = nav.plan_for_robot(ws, goal)
    except WorldError as exc:
        return Outcome.fail("unapproachable", str(exc))
    out = nav.traverse(ws, path)
    if out.success:
        target = min(obj.footprint, key=lambda c: abs(c[0] - goal[0]) + abs(c[1] - goal[1]))
        ws.robot.heading = heading_between(goal, target)
    return out


def _move_base(ctx: SkillContext, params: tuple) -> Outcome:
    ws = ctx.ws
    world_dir = frame_to_world(ws.robot.heading, params[0])
    n = max(1, round(MOVE_BASE_STEP / ws.building.cell_size))
    dr, dc = HEADINGS[world_dir]
    cell = ws.robot.cell
    for _ in range(n):
        cell = (cell[0] + dr, cell[1] + dc)
        if ws.entity_at(ws.robot.floor, cell) is not None:
            return Outcome.fail("target_occupied", "target occupied")
    ws.robot.cell = cell
    ws.robot.in_elevator = None
    return Outcome.ok(cell=list(cell))


def _pickup(ctx: SkillContext, params: tuple) -> Outcome:
    ws = ctx.ws
    det, obj = _resolve_object(ctx, params[0])
    if det is not None and math.isnan(det.distance):
        return Outcome.fail("sensor_fault", "sensor fault: unknown depth")
    if obj is None:
        return Outcome.fail("not_found", f"object {params[0]} not found")
    if ws.distance_to_object(obj) > ws.robot.arm_reach + 1e-9:
        return Outcome.fail("out_of_reach", f"{obj.category} is out of arm reach")
    if obj.heavy or not obj.graspable:
        return Outcome.fail("too_heavy", f"cannot lift {obj.category}")
    if ws.robot.held_object is not None:
        return Outcome.fail("hand_full", "gripper already holds an object")
    if ctx.ik_failure_rate > 0:
        rng = random.Random(f"{ws.rng_seed}:ik:{ctx.step}:{obj.id}")
        if rng.random() < ctx.ik_failure_rate:
            return Outcome.fail("ik_failure", "no valid inverse kinematics solution for the grasp")
    obj.floor = None
    obj.footprint = ()
    ws.robot.held_object = obj.id
    return Outcome.ok(object=obj.id)


def _push(ctx: SkillContext, params: tuple) -> Outcome:
    ws = ctx.ws
    det, obj = _resolve_object(ctx, params[0])
    if obj is None:
        return Outcome.fail("not_found", f"object {params[0]} not found")
    if not obj.pushable:
        return Outcome.fail("not_pushable", f"{obj.category} cannot be pushed")
    if ws.distance_to_object(obj) > PUSH_RANGE + 1e-9:
        return Outcome.fail("out_of_range", f"{obj.category} is farther than {PUSH_RANGE} m")
    return apply_push(ws, obj.id, params[1])


def _nearest_closed_door(ws: WorldState):
    doors = [d for i, d in ws.building.doors.items() if d.floor == ws.robot.floor and ws.doors[i] == "closed"]
    doors = [d for d in doors if min(ws.distance_to_cell(c) for c in d.cells) <= DOOR_APPROACH_RADIUS + 1e-9]
    if not doors:
        return None
    return min(doors, key=lambda d: (min(ws.distance_to_cell(c) for c in d.cells), d.id))


def _open_door(ctx: SkillContext, params: tuple) -> Outcome:
    ws = ctx.ws
    door = _nearest_closed_door(ws)
    if door is None:
        return Outcome.fail("no_door", "no closed door within reach")
    saved = (ws.robot.cell, ws.robot.heading)
    blocked = ws.blocked_grid(ws.robot.floor)
    blocked[ws.robot.cell] = False
    reach = bfs_distances(blocked, ws.robot.cell)
    cells = set(door.cells)
    options = [n for c in door.cells for n in neighbors4(c, blocked.shape) if n not in cells and n in reach]
    if not options:
        return Outcome.fail("unapproachable", f"cannot align with door {door.id}")
    spot = min(options, key=lambda c: (round(ws.distance_to_cell(c), 9), c))
    target = min(door.cells, key=lambda c: abs(c[0] - spot[0]) + abs(c[1] - spot[1]))
    ws.robot.cell, ws.robot.heading = spot, heading_between(spot, target)
    out = apply_open_door(ws, door.id, params[0])
    if not out.success:
        ws.robot.cell, ws.robot.heading = saved
    return out


def _button(ctx: SkillContext, entity_id: str):
    det = _detection(ctx, entity_id)
    if det is None or det.kind != "button":
        return None
    return det


def _call_elevator(ctx: SkillContext, params: tuple) -> Outcome:
    det = _button(ctx, params[0])
    if det is None:
        return Outcome.fail("not_found", f"button {params[0]} not visible")
    if math.isnan(det.distance):
        return Outcome.fail("sensor_fault", "sensor fault: unknown depth for the button")
    return press_button(ctx.ws, det.extra["elevator"], "call", det.extra["index"])


def _use_elevator(ctx: SkillContext, params: tuple) -> Outcome:
    det = _button(ctx, params[0])
    if det is None:
        return Outcome.fail("not_found", f"button {params[0]} not visible")
    if math.isnan(det.distance):
        return Outcome.fail("sensor_fault", "sensor fault: unknown depth for the button")
    el = det.extra["elevator"]
    pressed = press_button(ctx.ws, el, "cab", det.extra["index"])
    if not pressed.success:
        return pressed
    return elevator_transition(ctx.ws, el)


# ------------------------------------------------------------- descriptions

def _desc(name: str, arguments: str, text: str) -> str:
    return f"skill_name: {name}\narguments: {arguments}\ndescription: {text}"


def default_skills() -> list[SkillSpec]:
    return [
        SkillSpec("goto_landmark", _desc(
            "goto_landmark", "one landmark picked from the marked landmark views on this floor",
            "Drives the robot to a known landmark on the current floor, such as an office, kitchen or the "
            "elevator lobby. To reach another floor, first go to the elevator landmark."),
            ("landmark",), _landmark_candidates, _goto_landmark, "GoToLandmark"),
        SkillSpec("navigate_to_point_on_ground", _desc(
            "navigate_to_point_on_ground", "object",
            "Drives the robot to the free floor spot closest to a visible object, e.g. to stand next to the "
            "counter that holds the item you want."),
            ("detection",), _object_candidates, _navigate_near, "NavigateNearObj"),
        SkillSpec("move_base", _desc(
            "move_base", "direction",
            "Shifts the base 0.3 m forward, backward, left or right relative to the camera. Meant for small "
            "adjustments near the goal, not for travelling between rooms."),
            ("direction",), _direction_candidates, _move_base, "MoveBase"),
        SkillSpec("pick_up_object", _desc(
            "pick_up_object", "object_of_interest",
            "Grasps the chosen object with the arm. Works only for objects within arm reach and never moves the "
            "base. Heavy furniture such as chairs or tables cannot be lifted."),
            ("detection",), _object_candidates, _pickup, "Pickup", arm="left"),
        SkillSpec("push_object_on_ground", _desc(
            "push_object_on_ground", "object, direction",
            "Pushes a floor-standing object forward, left or right. Objects up to 3 m away can be pushed; the "
            "robot walks up to the object itself. Useful for clearing a blocked path or for rearranging "
            "furniture."),
            ("detection", "direction"), _push_candidates, _push, "PushObjOnGround"),
        SkillSpec("open_door", _desc(
            "open_door", "door_side",
            "Opens the closed door ahead by driving into it with the arm on the chosen side (left or right)."),
            ("side",), _side_candidates, _open_door, "OpenDoor"),
        SkillSpec("call_elevator", _desc(
            "call_elevator", "the call button matching whether the destination floor is above or below",
            "Presses a call button on the current floor and rides into the arriving cab. The subtask must name "
            "the current floor and the destination floor, e.g. 'Go to floor 3 from floor 1.'"),
            ("button",), _button_candidates("call"), _call_elevator, "CallElevator",
            arm="right"),
        SkillSpec("use_elevator", _desc(
            "use_elevator", "the cab button of the destination floor",
            "Presses a floor button inside the cab, rides to that floor and steps out into its lobby. Only "
            "usable after call_elevator. The subtask must name the destination floor."),
            ("button",), _button_candidates("cab"), _use_elevator, "UseElevator",
            arm="right"),
    ]


def default_registry() -> SkillRegistry:
    return SkillRegistry(default_skills())
