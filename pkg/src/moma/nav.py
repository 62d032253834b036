"""Grid planning over floors and the landmark graph.

``plan_global`` is a 4-connected A* with a Manhattan heuristic. Movable
objects and doors are not in the planning grid; ``traverse`` discovers
them within its local horizon and hands the blockage back to the agent.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

import numpy as np

from .grid import Cell, bfs_distances, heading_between, neighbors4
from .world import Building, Outcome, WorldError, WorldState

LOCAL_HORIZON = 2.0


class Unreachable(WorldError):
    pass


@dataclass
class Path:
    cells: list[Cell]
    cell_size: float = 0.25

    @property
    def length(self) -> float:
        return len(self.cells) * self.cell_size

    def __len__(self):
        return len(self.cells)


def plan_global(grid: np.ndarray, start: Cell, goal: Cell, cell_size: float = 0.25) -> Path:
    """Shortest 4-connected path; ``grid`` is truthy where cells are blocked.

    The returned cells exclude ``start`` and end at ``goal``.
    """
    blocked = np.asarray(grid).astype(bool)
    start, goal = tuple(start), tuple(goal)
    if blocked[start] or blocked[goal]:
        raise Unreachable("unreachable: start or goal occupied")
    if start == goal:
        return Path([], cell_size)

    def h(c: Cell) -> int:
        return abs(c[0] - goal[0]) + abs(c[1] - goal[1])

    g = {start: 0}
    parent: dict[Cell, Cell] = {}
    # (f, cell) ordering gives lexicographic tie-breaking among equal f
    open_heap = [(h(start), start)]
    closed = set()
    while open_heap:
        _, cur = heapq.heappop(open_heap)
        if cur in closed:
            continue
        if cur == goal:
            break
        closed.add(cur)
        for nxt in neighbors4(cur, blocked.shape):
            if blocked[nxt] or nxt in closed:
                continue
            cand = g[cur] + 1
            if cand < g.get(nxt, 1 << 30):
                g[nxt] = cand
                parent[nxt] = cur
                heapq.heappush(open_heap, (cand + h(nxt), nxt))
    else:
        raise Unreachable(f"unreachable: no path from {start} to {goal}")
    cells = [goal]
    while cells[-1] in parent and parent[cells[-1]] != start:
        cells.append(parent[cells[-1]])
    cells.reverse()
    return Path(cells, cell_size)


def planning_grid(ws: WorldState, floor: int) -> np.ndarray:
    """Static map plus keep-out objects that cannot be pushed (e.g. wet-floor signs)."""
    blocked = ws.blocked_grid(floor, dynamic=False)
    for obj in ws.objects.values():
        if obj.floor == floor and obj.ground and not obj.pushable:
            for cell in obj.footprint:
                blocked[cell] = True
    return blocked


def plan_for_robot(ws: WorldState, goal: Cell) -> Path:
    return plan_global(planning_grid(ws, ws.robot.floor), ws.robot.cell, goal, ws.building.cell_size)


def first_blocker(ws: WorldState, path: Path, start_index: int = 0, horizon: int | None = None):
    """(index, entity id) of the first dynamic blocker on ``path[start_index:]``."""
    end = len(path.cells) if horizon is None else min(len(path.cells), start_index + horizon)
    for j in range(start_index, end):
        entity = ws.entity_at(ws.robot.floor, path.cells[j])
        if entity is not None:
            return j, entity.split(" ", 1)[-1]
    return None


def traverse(ws: WorldState, path: Path) -> Outcome:
    """Advance the robot cell by cell, halting when a blocker enters the local horizon."""
    horizon = round(LOCAL_HORIZON / ws.building.cell_size)
    for i, cell in enumerate(path.cells):
        hit = first_blocker(ws, path, i, horizon)
        if hit is not None:
            # turn toward the blocker so it is in view for the next decision
            ws.robot.heading = heading_between(ws.robot.cell, path.cells[hit[0]])
            return Outcome.fail("blocked", f"path blocked by {hit[1]}", entity=hit[1], halted_at=list(ws.robot.cell))
        ws.robot.heading = heading_between(ws.robot.cell, cell)
        ws.robot.cell = cell
        if ws.robot.in_elevator:
            ws.robot.in_elevator = None
    return Outcome.ok(cell=list(ws.robot.cell))


def nearest_ground_point(ws: WorldState, object_id: str) -> Cell:
    """Free, reachable cell next to the object, closest to the robot."""
    obj = ws.objects.get(object_id)
    if obj is None or obj.floor != ws.robot.floor:
        raise WorldError(f"object missing: {object_id}")
    blocked = ws.blocked_grid(obj.floor)
    blocked[ws.robot.cell] = False
    reach = bfs_distances(blocked, ws.robot.cell)
    fp = set(obj.footprint)
    options = {n for c in obj.footprint for n in neighbors4(c, blocked.shape)} - fp
    options = [c for c in options if c in reach]
    if not options:
        raise WorldError("object unapproachable")
    return min(options, key=lambda c: (round(ws.distance_to_cell(c), 9), c))


@dataclass
class LandmarkGraph:
    nodes: dict[str, dict]
    edges: set[frozenset] = field(default_factory=set)

    def neighbors(self, node: str) -> list[str]:
        return sorted(next(iter(e - {node})) for e in self.edges if node in e)

    def connected(self, floor: int) -> bool:
        ids = [n for n, d in self.nodes.items() if d["floor"] == floor]
        if not ids:
            return True
        seen, stack = {ids[0]}, [ids[0]]
        while stack:
            for nxt in self.neighbors(stack.pop()):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return seen >= set(ids)


def build_landmark_graph(building: Building) -> LandmarkGraph:
    """Link every same-floor landmark pair the static map connects; validate floors."""
    nodes = {lm.id: {"floor": lm.floor, "cell": lm.cell, "label": lm.label, "elevator": bool(lm.elevator)}
             for lm in building.landmarks.values()}
    graph = LandmarkGraph(nodes)
    for floor, fm in building.floors.items():
        blocked = fm.grid != 0
        lms = building.landmarks_on(floor)
        for a, b in itertools.combinations(lms, 2):
            reach = bfs_distances(blocked, a.cell)
            if b.cell in reach:
                graph.edges.add(frozenset((a.id, b.id)))
        if not graph.connected(floor):
            raise WorldError(f"landmark graph disconnected on floor {floor}")
        if len(building.floors) > 1 and building.elevator_landmark(floor) is None:
            raise WorldError(f"floor {floor} has no elevator landmark")
    return graph
