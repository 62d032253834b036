"""Full-knowledge scripted solver giving the ground-truth skill sequence of a scenario.

The solver plans forward from the true world state. It does not read the
execution history: every leg is chosen from the current state alone, and
blockages are cleared with a geometric rule (swing the obstacle sideways
into free floor, open doors on the side away from the hinge).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .. import nav
from ..grid import CLOCKWISE, COUNTER_CLOCKWISE, FREE, HEADINGS, world_to_frame
from ..percept import observe
from ..skills import SkillContext, default_registry, execute
from ..world import PUSH_DISTANCE, WorldState, check_task_success


class Unsolvable(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverStep:
    skill: str
    params: tuple


def _visible(ws: WorldState, entity_id: str) -> bool:
    return observe(ws, None, 0).by_id(entity_id) is not None


def _elevator_leg(ws: WorldState, goal_floor: int) -> SolverStep:
    here = ws.robot.floor
    if ws.robot.in_elevator:
        el = ws.building.elevators[ws.robot.in_elevator]
        i = [b.action for b in el.stops[here].cab_panel.buttons].index(("floor", goal_floor))
        return SolverStep("use_elevator", (f"{el.id}:cab:{i}",))
    lm = ws.building.elevator_landmark(here)
    if ws.robot.cell != lm.cell:
        return SolverStep("goto_landmark", (lm.id,))
    el = ws.building.elevators[lm.elevator]
    direction = "up" if goal_floor > here else "down"
    i = [b.action for b in el.stops[here].call_panel.buttons].index(("call", direction))
    return SolverStep("call_elevator", (f"{el.id}:call:{here}:{i}",))


def _next_leg(ws: WorldState, spec: Mapping) -> SolverStep:
    params = spec["params"]
    if spec["predicate"] == "retrieve":
        if ws.robot.held_object:
            home = ws.building.landmarks[params["deliver_to"]]
            if ws.robot.floor != home.floor:
                return _elevator_leg(ws, home.floor)
            return SolverStep("goto_landmark", (home.id,))
        targets = sorted((o for o in ws.objects.values() if o.floor is not None and o.matches(params["target"])),
                         key=lambda o: o.id)
        if not targets:
            raise Unsolvable("no object satisfies the target filter")
        tgt = targets[0]
        if ws.robot.floor != tgt.floor:
            return _elevator_leg(ws, tgt.floor)
        if _visible(ws, tgt.id):
            if ws.distance_to_object(tgt) <= ws.robot.arm_reach + 1e-9:
                return SolverStep("pick_up_object", (tgt.id,))
            return SolverStep("navigate_to_point_on_ground", (tgt.id,))
        lm = ws.building.room_landmark(tgt.floor, ws.floor.room_of(tgt.cell))
        if lm is None or ws.robot.cell == lm.cell:
            raise Unsolvable(f"target {tgt.id} cannot be seen from its room landmark")
        return SolverStep("goto_landmark", (lm.id,))

    floor, r0, c0, r1, c1 = params["region"]
    if ws.robot.floor != floor:
        return _elevator_leg(ws, floor)
    outside = [o for o in ws.objects.values() if o.category == params.get("category", "chair")
               and not all(r0 <= r <= r1 and c0 <= c <= c1 for r, c in o.footprint)]
    chair = min(outside, key=lambda o: (round(ws.distance_to_object(o), 9), o.id))
    r, c = chair.cell
    want = "N" if r > r1 else "S" if r < r0 else ("E" if c < c0 else "W")
    frame = world_to_frame(ws.robot.heading, want)
    if frame != "backward" and _visible(ws, chair.id):
        return SolverStep("push_object_on_ground", (chair.id, frame))
    lm = ws.building.room_landmark(floor, ws.building.floors[floor].room_of((r0, c0)))
    if ws.robot.cell == lm.cell:
        raise Unsolvable(f"chair {chair.id} cannot be pushed from the room landmark")
    return SolverStep("goto_landmark", (lm.id,))


def _sideways(ws: WorldState, object_id: str, avoid: set) -> str | None:
    """Camera-frame direction that swings the object into free floor off the route."""
    obj = ws.objects[object_id]
    grid = ws.building.floors[obj.floor].grid
    n = round(PUSH_DISTANCE / ws.building.cell_size)
    h = ws.robot.heading
    for frame, world in (("right", CLOCKWISE[h]), ("left", COUNTER_CLOCKWISE[h])):
        dr, dc = HEADINGS[world]
        cells = [(r + k * dr, c + k * dc) for r, c in obj.footprint for k in range(1, n + 1)]
        if all(grid[x] == FREE and ws.entity_at(obj.floor, x, ignore=(object_id,)) is None and x not in avoid
               for x in cells):
            return frame
    return None


def _clearing_step(ws: WorldState, entity: str, route: set) -> SolverStep:
    if entity in ws.building.doors:
        hinge = ws.building.doors[entity].hinge_side
        return SolverStep("open_door", ("right" if hinge == "left" else "left",))
    frame = _sideways(ws, entity, route)
    if frame is None:
        raise Unsolvable(f"no way to clear {entity}")
    return SolverStep("push_object_on_ground", (entity, frame))


def _goal_cell(ws: WorldState, step: SolverStep):
    if step.skill == "goto_landmark":
        return ws.building.landmarks[step.params[0]].cell
    return nav.nearest_ground_point(ws, step.params[0])


def solve(ws: WorldState, spec: Mapping, limit: int = 60) -> list[SolverStep]:
    """Shortest skill sequence the agent can follow for this scenario (zero perception noise)."""
    sim = ws.copy()
    registry = default_registry()
    plan: list[SolverStep] = []
    while not check_task_success(sim, spec):
        if len(plan) >= limit:
            raise Unsolvable(f"no plan within {limit} skills")
        step = _next_leg(sim, spec)
        route: set = set()
        if step.skill in ("goto_landmark", "navigate_to_point_on_ground"):
            try:
                route = set(nav.plan_for_robot(sim, _goal_cell(sim, step)).cells)
            except Exception as exc:
                raise Unsolvable(f"unreachable goal: {exc}") from None
        out = _run(sim, registry, step, plan)
        if out.success:
            continue
        if out.code != "blocked":
            raise Unsolvable(f"{step.skill} failed: {out.reason}")
        clear = _clearing_step(sim, out.details["entity"], route)
        out = _run(sim, registry, clear, plan)
        if not out.success:
            raise Unsolvable(f"clearing {out.details.get('entity')} failed: {out.reason}")
    return plan


def _run(sim: WorldState, registry, step: SolverStep, plan: list):
    obs = observe(sim, None, len(plan) + 1)
    out = execute(registry.get(step.skill), SkillContext(sim, obs, len(plan) + 1), step.params)
    plan.append(step)
    return out


def minimal_skill_count(ws: WorldState, spec: Mapping) -> int:
    return len(solve(ws, spec))
