"""Static building model, dynamic world state and discrete transition rules.

Every mutating operation either succeeds and leaves the state valid, or
returns a failed :class:`Outcome` and leaves the state untouched.
Precondition violations that the agent cannot be blamed for (missing ids,
robot too far away) raise :class:`WorldError`.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping

import jsonschema
import numpy as np

from .grid import (
    FREE,
    HEADINGS,
    STATIC,
    WALL,
    Cell,
    bfs_distances,
    cell_center,
    frame_to_world,
    heading_between,
    neighbors4,
)

CELL_SIZE = 0.25
PUSH_RANGE = 3.0
PUSH_DISTANCE = 0.5
DOOR_REACH = 1.0
PANEL_REACH = 1.0

_MAP_CHARS = {".": FREE, "#": WALL, "T": STATIC}


class WorldError(Exception):
    """Configuration error or violated precondition of a world operation."""


@dataclass
class Outcome:
    success: bool
    code: str | None = None
    reason: str | None = None
    details: dict[str, Any] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.success and self.reason is not None:
            raise ValueError("successful outcome cannot carry a failure reason")
        if not self.success and not self.reason:
            raise ValueError("failed outcome needs a failure reason")

    @classmethod
    def ok(cls, flags: list[str] | None = None, **details) -> "Outcome":
        return cls(True, details=details, flags=list(flags or []))

    @classmethod
    def fail(cls, code: str, reason: str, **details) -> "Outcome":
        return cls(False, code=code, reason=reason, details=details)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "Outcome":
        return cls(d["success"], d.get("code"), d.get("reason"), dict(d.get("details") or {}),
                   list(d.get("flags") or []))


# ---------------------------------------------------------------- static model


@dataclass(frozen=True)
class FloorMap:
    floor_id: int
    grid: np.ndarray
    rooms: dict[str, tuple[int, int, int, int]]
    cell_size: float = CELL_SIZE

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.grid.shape[0] and 0 <= cell[1] < self.grid.shape[1]

    def room_of(self, cell: Cell) -> str | None:
        for name, (r0, c0, r1, c1) in self.rooms.items():
            if r0 <= cell[0] <= r1 and c0 <= cell[1] <= c1:
                return name
        return None

    def room_cells(self, name: str) -> list[Cell]:
        r0, c0, r1, c1 = self.rooms[name]
        return [(r, c) for r in range(r0, r1 + 1) for c in range(c0, c1 + 1) if self.grid[r, c] == FREE]


@dataclass(frozen=True)
class Landmark:
    id: str
    floor: int
    cell: Cell
    heading: str
    label: str
    room: str | None = None
    elevator: str | None = None


@dataclass(frozen=True)
class Button:
    label: str
    position: tuple[float, float]
    action: tuple[str, Any]  # ("call", "up"|"down") or ("floor", n)


@dataclass(frozen=True)
class ButtonPanel:
    cell: Cell
    buttons: tuple[Button, ...]


@dataclass(frozen=True)
class ElevatorStop:
    floor: int
    landmark: str
    cab_cell: Cell
    cab_heading: str
    call_panel: ButtonPanel
    cab_panel: ButtonPanel


@dataclass(frozen=True)
class Elevator:
    id: str
    stops: dict[int, ElevatorStop]

    @property
    def served_floors(self) -> list[int]:
        return sorted(self.stops)


@dataclass(frozen=True)
class DoorSpec:
    id: str
    floor: int
    cells: tuple[Cell, ...]
    hinge_side: str


@dataclass(frozen=True)
class Building:
    name: str
    floors: dict[int, FloorMap]
    landmarks: dict[str, Landmark]
    elevators: dict[str, Elevator]
    doors: dict[str, DoorSpec]
    cell_size: float = CELL_SIZE

    def landmarks_on(self, floor: int) -> list[Landmark]:
        return [lm for lm in self.landmarks.values() if lm.floor == floor]

    def elevator_landmark(self, floor: int) -> Landmark | None:
        for lm in self.landmarks_on(floor):
            if lm.elevator:
                return lm
        return None

    def room_landmark(self, floor: int, room: str) -> Landmark | None:
        for lm in self.landmarks_on(floor):
            if lm.room == room and not lm.elevator:
                return lm
        return None


# --------------------------------------------------------------- dynamic state


@dataclass
class WorldObject:
    id: str
    category: str
    attributes: dict[str, str]
    floor: int | None
    footprint: tuple[Cell, ...]
    offset: tuple[float, float] = (0.0, 0.0)
    graspable: bool = True
    heavy: bool = False
    delicate: bool = False
    pushable: bool = True
    ground: bool = False  # True: stands on the floor and blocks motion
    role: str = "item"

    @property
    def cell(self) -> Cell | None:
        return self.footprint[0] if self.footprint else None

    @property
    def held(self) -> bool:
        return self.floor is None

    def describe(self) -> str:
        attrs = ", ".join(f"{k}={v}" for k, v in sorted(self.attributes.items()))
        return f"{self.category} ({attrs})" if attrs else self.category

    def matches(self, target: Mapping) -> bool:
        if target.get("category") and self.category != target["category"]:
            return False
        return all(str(self.attributes.get(k)) == str(v) for k, v in (target.get("attributes") or {}).items())


@dataclass
class RobotState:
    floor: int
    cell: Cell
    heading: str
    held_object: str | None = None
    arm_reach: float = 0.8
    in_elevator: str | None = None


@dataclass
class ElevatorState:
    cab_floor: int
    called_direction: str | None = None
    selected_floor: int | None = None


@dataclass
class WorldState:
    building: Building
    objects: dict[str, WorldObject]
    doors: dict[str, str]
    elevators: dict[str, ElevatorState]
    robot: RobotState
    rng_seed: int = 0

    def __deepcopy__(self, memo):
        # the building is immutable and shared between copies
        memo[id(self.building)] = self.building
        cls = self.__class__
        new = cls.__new__(cls)
        for k, v in self.__dict__.items():
            setattr(new, k, copy.deepcopy(v, memo))
        return new

    def copy(self) -> "WorldState":
        return copy.deepcopy(self)

    # ------------------------------------------------------------ geometry

    @property
    def floor(self) -> FloorMap:
        return self.building.floors[self.robot.floor]

    def position(self, cell: Cell, offset=(0.0, 0.0)) -> tuple[float, float]:
        x, y = cell_center(cell, self.building.cell_size)
        return x + offset[0], y + offset[1]

    def robot_position(self) -> tuple[float, float]:
        return self.position(self.robot.cell)

    def object_position(self, obj: WorldObject) -> tuple[float, float]:
        return self.position(obj.cell, obj.offset)

    def distance_to_cell(self, cell: Cell) -> float:
        rx, ry = self.robot_position()
        x, y = self.position(cell)
        return math.hypot(x - rx, y - ry)

    def distance_to_object(self, obj: WorldObject) -> float:
        rx, ry = self.robot_position()
        x, y = self.object_position(obj)
        return math.hypot(x - rx, y - ry)

    def blocker_map(self, floor: int) -> dict[Cell, str]:
        """Cells occupied by ground objects or closed doors, mapped to an entity name."""
        occupied: dict[Cell, str] = {}
        for obj in self.objects.values():
            if obj.floor == floor and obj.ground:
                for cell in obj.footprint:
                    occupied[cell] = f"object {obj.id}"
        for door_id, state in self.doors.items():
            spec = self.building.doors[door_id]
            if spec.floor == floor and state == "closed":
                for cell in spec.cells:
                    occupied[cell] = f"door {door_id}"
        return occupied

    def blocked_grid(self, floor: int, dynamic: bool = True, ignore: tuple[str, ...] = ()) -> np.ndarray:
        """Boolean grid of cells the robot cannot enter."""
        blocked = self.building.floors[floor].grid != FREE
        if dynamic:
            ignored = {f"object {i}" for i in ignore} | {f"door {i}" for i in ignore}
            for cell, entity in self.blocker_map(floor).items():
                if entity not in ignored:
                    blocked[cell] = True
        return blocked

    def entity_at(self, floor: int, cell: Cell, ignore: tuple[str, ...] = ()) -> str | None:
        """Name of whatever makes ``cell`` impassable, or None."""
        fm = self.building.floors[floor]
        if not fm.in_bounds(cell) or fm.grid[cell] == WALL:
            return "wall"
        if fm.grid[cell] == STATIC:
            return "static obstacle"
        entity = self.blocker_map(floor).get(cell)
        if entity and entity.split(" ", 1)[1] not in ignore:
            return entity
        return None

    # --------------------------------------------------------- serialization

    def to_dict(self) -> dict:
        return {
            "objects": {k: asdict(v) for k, v in sorted(self.objects.items())},
            "doors": dict(sorted(self.doors.items())),
            "elevators": {k: asdict(v) for k, v in sorted(self.elevators.items())},
            "robot": asdict(self.robot),
            "rng_seed": self.rng_seed,
        }

    def state_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def check_invariants(self) -> None:
        """Raise WorldError if any dynamic invariant is broken."""
        seen: dict[tuple[int, Cell], str] = {}
        for obj in self.objects.values():
            if obj.floor is None:
                continue
            fm = self.building.floors.get(obj.floor)
            if fm is None:
                raise WorldError(f"object {obj.id} on unknown floor {obj.floor}")
            if obj.heavy and obj.graspable:
                raise WorldError(f"object {obj.id} is heavy and graspable")
            for cell in obj.footprint:
                if not fm.in_bounds(cell) or fm.grid[cell] == WALL:
                    raise WorldError(f"object {obj.id} footprint outside free space at {cell}")
                if obj.ground and fm.grid[cell] != FREE:
                    raise WorldError(f"ground object {obj.id} on occupied cell {cell}")
                key = (obj.floor, cell)
                if key in seen:
                    raise WorldError(f"footprint overlap: {seen[key]} and {obj.id}")
                seen[key] = obj.id
        held = [o.id for o in self.objects.values() if o.floor is None]
        if len(held) > 1 or (held and held[0] != self.robot.held_object):
            raise WorldError("held object bookkeeping inconsistent")
        r = self.robot
        if self.building.floors[r.floor].grid[r.cell] != FREE:
            raise WorldError(f"robot on occupied cell {r.cell}")
        if (r.floor, r.cell) in seen and self.objects[seen[(r.floor, r.cell)]].ground:
            raise WorldError(f"robot inside footprint of {seen[(r.floor, r.cell)]}")


# ------------------------------------------------------------------- loading

_CELL = {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2}
_HEADING = {"enum": ["N", "E", "S", "W"]}

SCENARIO_SCHEMA: dict = {
    "type": "object",
    "required": ["floors", "landmarks", "elevators", "doors", "objects", "robot_start"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "cell_size": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer"},
        "meta": {"type": "object"},
        "floors": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "map"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "integer"},
                    "map": {"type": "array", "minItems": 1, "items": {"type": "string", "pattern": "^[.#T]+$"}},
                    "rooms": {
                        "type": "object",
                        "additionalProperties": {
                            "type": "array", "items": {"type": "integer"}, "minItems": 4, "maxItems": 4,
                        },
                    },
                },
            },
        },
        "landmarks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "floor", "cell", "heading", "label"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string"},
                    "floor": {"type": "integer"},
                    "cell": _CELL,
                    "heading": _HEADING,
                    "label": {"type": "string", "minLength": 1},
                    "room": {"type": "string"},
                    "elevator": {"type": "string"},
                },
            },
        },
        "elevators": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "stops"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string"},
                    "cab_floor": {"type": "integer"},
                    "stops": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "object",
                            "required": ["floor", "landmark", "cab_cell", "cab_heading", "call_panel_cell",
                                         "cab_panel_cell"],
                            "additionalProperties": False,
                            "properties": {
                                "floor": {"type": "integer"},
                                "landmark": {"type": "string"},
                                "cab_cell": _CELL,
                                "cab_heading": _HEADING,
                                "call_panel_cell": _CELL,
                                "cab_panel_cell": _CELL,
                            },
                        },
                    },
                },
            },
        },
        "doors": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "floor", "cells", "hinge_side"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string"},
                    "floor": {"type": "integer"},
                    "cells": {"type": "array", "items": _CELL, "minItems": 1},
                    "hinge_side": {"enum": ["left", "right"]},
                    "state": {"enum": ["open", "closed"]},
                },
            },
        },
        "objects": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "category", "floor", "cell"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string"},
                    "category": {"type": "string", "minLength": 1},
                    "attributes": {"type": "object", "additionalProperties": {"type": "string"}},
                    "floor": {"type": "integer"},
                    "cell": _CELL,
                    "footprint": {"type": "array", "items": _CELL},
                    "offset": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                    "graspable": {"type": "boolean"},
                    "heavy": {"type": "boolean"},
                    "delicate": {"type": "boolean"},
                    "pushable": {"type": "boolean"},
                    "ground": {"type": "boolean"},
                    "role": {"type": "string"},
                },
            },
        },
        "robot_start": {
            "type": "object",
            "required": ["floor", "heading"],
            "additionalProperties": False,
            "properties": {
                "floor": {"type": "integer"},
                "cell": _CELL,
                "landmark": {"type": "string"},
                "heading": _HEADING,
                "arm_reach": {"type": "number", "exclusiveMinimum": 0},
            },
        },
    },
}


def _call_panel(cell: Cell, floor: int, floors: list[int]) -> ButtonPanel:
    buttons = []
    if floor < max(floors):
        buttons.append(Button("up", (0.0, 1.1), ("call", "up")))
    if floor > min(floors):
        buttons.append(Button("down", (0.0, 0.9), ("call", "down")))
    return ButtonPanel(cell, tuple(buttons))


def _cab_panel(cell: Cell, floors: list[int]) -> ButtonPanel:
    return ButtonPanel(cell, tuple(
        Button(str(f), (0.0, 0.8 + 0.12 * i), ("floor", f)) for i, f in enumerate(sorted(floors))
    ))


def load_world(config: str | Mapping, seed: int | None = None) -> WorldState:
    """Build a validated :class:`WorldState` from a JSON scenario (text or parsed)."""
    if isinstance(config, str):
        try:
            config = json.loads(config)
        except json.JSONDecodeError as exc:
            raise WorldError(f"schema violation: not valid JSON ({exc})") from exc
    try:
        jsonschema.validate(config, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise WorldError(f"schema violation at {where}: {exc.message}") from None

    cell_size = float(config.get("cell_size", CELL_SIZE))
    floors: dict[int, FloorMap] = {}
    for f in config["floors"]:
        rows = f["map"]
        if len({len(r) for r in rows}) != 1:
            raise WorldError(f"floor {f['id']}: grid is not rectangular")
        grid = np.array([[_MAP_CHARS[ch] for ch in row] for row in rows], dtype=np.int8)
        if f["id"] in floors:
            raise WorldError(f"duplicate floor id {f['id']}")
        rooms = {k: tuple(v) for k, v in (f.get("rooms") or {}).items()}
        floors[f["id"]] = FloorMap(f["id"], grid, rooms, cell_size)
    _check_rooms_disjoint(floors)

    def free_cell(floor: int, cell, what: str) -> Cell:
        if floor not in floors:
            raise WorldError(f"{what}: unknown floor {floor}")
        cell = tuple(cell)
        fm = floors[floor]
        if not fm.in_bounds(cell) or fm.grid[cell] != FREE:
            raise WorldError(f"{what}: cell {cell} on floor {floor} is not free")
        return cell

    landmarks: dict[str, Landmark] = {}
    for lm in config["landmarks"]:
        if lm["id"] in landmarks:
            raise WorldError(f"duplicate landmark id {lm['id']}")
        cell = free_cell(lm["floor"], lm["cell"], f"landmark {lm['id']}")
        landmarks[lm["id"]] = Landmark(lm["id"], lm["floor"], cell, lm["heading"], lm["label"],
                                       lm.get("room"), lm.get("elevator"))

    elevators: dict[str, Elevator] = {}
    elevator_states: dict[str, ElevatorState] = {}
    for el in config["elevators"]:
        served = [s["floor"] for s in el["stops"]]
        if len(set(served)) != len(served):
            raise WorldError(f"elevator {el['id']}: duplicate stop floors")
        stops = {}
        for s in el["stops"]:
            if s["landmark"] not in landmarks:
                raise WorldError(f"elevator {el['id']}: unknown landmark {s['landmark']}")
            cab = free_cell(s["floor"], s["cab_cell"], f"elevator {el['id']} cab")
            stops[s["floor"]] = ElevatorStop(
                s["floor"], s["landmark"], cab, s["cab_heading"],
                _call_panel(tuple(s["call_panel_cell"]), s["floor"], served),
                _cab_panel(tuple(s["cab_panel_cell"]), served),
            )
        elevators[el["id"]] = Elevator(el["id"], stops)
        elevator_states[el["id"]] = ElevatorState(el.get("cab_floor", min(served)))

    doors: dict[str, DoorSpec] = {}
    door_states: dict[str, str] = {}
    for d in config["doors"]:
        cells = tuple(free_cell(d["floor"], c, f"door {d['id']}") for c in d["cells"])
        doors[d["id"]] = DoorSpec(d["id"], d["floor"], cells, d["hinge_side"])
        door_states[d["id"]] = d.get("state", "closed")

    building = Building(config.get("name", "building"), floors, landmarks, elevators, doors, cell_size)
    _check_building(building)

    objects: dict[str, WorldObject] = {}
    for o in config["objects"]:
        if o["id"] in objects:
            raise WorldError(f"duplicate object id {o['id']}")
        objects[o["id"]] = make_object(o)

    rs = config["robot_start"]
    if "landmark" in rs:
        lm = landmarks.get(rs["landmark"])
        if lm is None:
            raise WorldError(f"robot_start: unknown landmark {rs['landmark']}")
        start_cell = lm.cell
    elif "cell" in rs:
        start_cell = tuple(rs["cell"])
    else:
        raise WorldError("schema violation at robot_start: needs 'cell' or 'landmark'")
    start_cell = free_cell(rs["floor"], start_cell, "robot_start")
    robot = RobotState(rs["floor"], start_cell, rs["heading"], arm_reach=rs.get("arm_reach", 0.8))

    ws = WorldState(building, objects, door_states, elevator_states, robot,
                    seed if seed is not None else config.get("seed", 0))
    ws.check_invariants()
    return ws


def make_object(o: Mapping) -> WorldObject:
    """WorldObject from one scenario ``objects`` entry (footprint given relative to ``cell``)."""
    anchor = tuple(o["cell"])
    rel = [tuple(c) for c in o.get("footprint", [[0, 0]])]
    footprint = tuple((anchor[0] + dr, anchor[1] + dc) for dr, dc in rel)
    heavy = o.get("heavy", False)
    return WorldObject(
        id=o["id"], category=o["category"], attributes=dict(o.get("attributes") or {}),
        floor=o["floor"], footprint=footprint, offset=tuple(o.get("offset", (0.0, 0.0))),
        graspable=o.get("graspable", not heavy), heavy=heavy, delicate=o.get("delicate", False),
        pushable=o.get("pushable", True), ground=o.get("ground", False), role=o.get("role", "item"),
    )


def _check_rooms_disjoint(floors: dict[int, FloorMap]) -> None:
    for fm in floors.values():
        owner: dict[Cell, str] = {}
        for name in fm.rooms:
            for cell in fm.room_cells(name):
                if cell in owner:
                    raise WorldError(f"floor {fm.floor_id}: rooms {owner[cell]} and {name} overlap")
                owner[cell] = name


def _check_building(b: Building) -> None:
    for el in b.elevators.values():
        for floor, stop in el.stops.items():
            if not stop.call_panel.buttons:
                raise WorldError(f"elevator {el.id}: no call button on floor {floor}")
            floors_on_panel = sorted(btn.action[1] for btn in stop.cab_panel.buttons)
            if floors_on_panel != el.served_floors:
                raise WorldError(f"elevator {el.id}: cab panel does not list every served floor")
            if b.landmarks[stop.landmark].floor != floor:
                raise WorldError(f"elevator {el.id}: landing landmark on wrong floor")


# --------------------------------------------------------------- transitions


def _approach_cell(ws: WorldState, obj: WorldObject, world_dir: str, swept: set[Cell]) -> Cell | None:
    """Where the robot stands to push ``obj`` toward ``world_dir``.

    Prefer the cell directly behind the object; otherwise the nearest
    reachable free neighbour that is not in the swept area.
    """
    floor = obj.floor
    blocked = ws.blocked_grid(floor)
    reach = bfs_distances(blocked, ws.robot.cell)
    dr, dc = HEADINGS[world_dir]
    fp = set(obj.footprint)
    behind = [(r - dr, c - dc) for r, c in obj.footprint if (r - dr, c - dc) not in fp]
    for cell in sorted(behind):
        if cell in reach and cell not in swept:
            return cell
    options = {n for cell in obj.footprint for n in neighbors4(cell, blocked.shape)} - fp - swept
    options = [c for c in options if c in reach]
    if not options:
        return None
    return min(options, key=lambda c: (round(ws.distance_to_cell(c), 9), c))


def push_swept_cells(obj: WorldObject, world_dir: str, n_cells: int) -> list[Cell]:
    dr, dc = HEADINGS[world_dir]
    out = []
    for k in range(1, n_cells + 1):
        for r, c in obj.footprint:
            cell = (r + k * dr, c + k * dc)
            if cell not in out:
                out.append(cell)
    return out


def apply_push(ws: WorldState, object_id: str, direction: str, distance: float = PUSH_DISTANCE) -> Outcome:
    """Push a ground object ``distance`` meters in the robot's camera frame."""
    obj = ws.objects.get(object_id)
    if obj is None or obj.floor != ws.robot.floor:
        raise WorldError(f"object missing: {object_id}")
    if direction not in ("forward", "left", "right"):
        raise WorldError(f"invalid push direction {direction!r}")
    if not obj.pushable:
        raise WorldError(f"object not pushable: {object_id}")
    if ws.distance_to_object(obj) > PUSH_RANGE + 1e-9:
        raise WorldError(f"object out of push range: {object_id}")

    world_dir = frame_to_world(ws.robot.heading, direction)
    n_cells = max(1, round(distance / ws.building.cell_size))
    swept = push_swept_cells(obj, world_dir, n_cells)
    fp = set(obj.footprint)
    approach = _approach_cell(ws, obj, world_dir, set(swept))
    if approach is None:
        return Outcome.fail("approach_blocked", f"no free approach cell next to {object_id}")
    for cell in swept:
        if cell in fp:
            continue
        hit = ws.entity_at(obj.floor, cell, ignore=(object_id,))
        if hit is None and cell == approach:
            hit = "robot"
        if hit is None:
            # tabletop items sit on furniture cells, which already report as static
            for other in ws.objects.values():
                if other.id != object_id and other.floor == obj.floor and cell in other.footprint:
                    hit = f"object {other.id}"
                    break
        if hit is not None:
            return Outcome.fail("collision", f"collision with {hit}", entity=hit, object=object_id)

    dr, dc = HEADINGS[world_dir]
    obj.footprint = tuple((r + n_cells * dr, c + n_cells * dc) for r, c in obj.footprint)
    facing = heading_between(approach, min(fp, key=lambda c: abs(c[0] - approach[0]) + abs(c[1] - approach[1])))
    _move_robot(ws, approach, facing)
    flags = ["semantic_violation"] if obj.delicate else []
    return Outcome.ok(flags=flags, object=object_id, direction=world_dir, cells=n_cells)


def apply_open_door(ws: WorldState, door_id: str, side: str) -> Outcome:
    spec = ws.building.doors.get(door_id)
    if spec is None or spec.floor != ws.robot.floor:
        raise WorldError(f"door missing: {door_id}")
    if side not in ("left", "right"):
        raise WorldError(f"invalid door side {side!r}")
    nearest = min(spec.cells, key=ws.distance_to_cell)
    if ws.distance_to_cell(nearest) > DOOR_REACH + 1e-9:
        raise WorldError(f"too far from door {door_id}")
    if heading_between(ws.robot.cell, nearest) != ws.robot.heading:
        raise WorldError(f"robot not facing door {door_id}")
    if ws.doors[door_id] == "open":
        return Outcome.ok(door=door_id, already_open=True)
    # pushing on the hinge side only presses the door into its frame
    if side == spec.hinge_side:
        return Outcome.fail("wrong_side", "wrong side", door=door_id, side=side)
    ws.doors[door_id] = "open"
    return Outcome.ok(door=door_id, side=side)


def _panel_distance(ws: WorldState, panel: ButtonPanel) -> float:
    return ws.distance_to_cell(panel.cell)


def press_button(ws: WorldState, elevator_id: str, panel: str, button_index: int) -> Outcome:
    """Press a call-panel ("call") or in-cab ("cab") button."""
    el = ws.building.elevators.get(elevator_id)
    if el is None:
        raise WorldError(f"elevator missing: {elevator_id}")
    stop = el.stops.get(ws.robot.floor)
    state = ws.elevators[elevator_id]
    in_cab = ws.robot.in_elevator == elevator_id
    if stop is None:
        raise WorldError("wrong panel: elevator does not serve this floor")
    if panel == "call":
        if in_cab or _panel_distance(ws, stop.call_panel) > PANEL_REACH + 1e-9:
            raise WorldError("wrong panel: call panel not within reach")
        buttons = stop.call_panel.buttons
    elif panel == "cab":
        if not in_cab:
            raise WorldError("wrong panel: robot is not inside the elevator")
        buttons = stop.cab_panel.buttons
    else:
        raise WorldError(f"wrong panel: {panel!r}")
    if not 0 <= button_index < len(buttons):
        raise WorldError(f"no button {button_index} on {panel} panel")
    kind, value = buttons[button_index].action
    if kind == "call":
        state.cab_floor = ws.robot.floor
        state.called_direction = value
        state.selected_floor = None
        _move_robot(ws, stop.cab_cell, stop.cab_heading)
        ws.robot.in_elevator = elevator_id
        return Outcome.ok(elevator=elevator_id, called=value)
    state.selected_floor = value
    return Outcome.ok(elevator=elevator_id, selected=value)


def elevator_transition(ws: WorldState, elevator_id: str) -> Outcome:
    el = ws.building.elevators.get(elevator_id)
    if el is None:
        raise WorldError(f"elevator missing: {elevator_id}")
    if ws.robot.in_elevator != elevator_id:
        raise WorldError("robot not inside the elevator")
    state = ws.elevators[elevator_id]
    if state.selected_floor is None:
        raise WorldError("no floor selected")
    target = state.selected_floor
    here = ws.robot.floor
    going = state.called_direction
    wrong = (going == "up" and target <= here) or (going == "down" and target >= here)
    if wrong:
        landing = ws.building.landmarks[el.stops[here].landmark]
        _move_robot(ws, landing.cell, landing.heading)
        state.called_direction = state.selected_floor = None
        return Outcome.fail("wrong_button", f"wrong button: elevator called going {going} but floor {target} "
                            f"selected from floor {here}", elevator=elevator_id, selected=target)
    landing = ws.building.landmarks[el.stops[target].landmark]
    ws.robot.floor = target
    _move_robot(ws, landing.cell, landing.heading)
    state.cab_floor = target
    state.called_direction = state.selected_floor = None
    return Outcome.ok(elevator=elevator_id, floor=target)


def _move_robot(ws: WorldState, cell: Cell, heading: str | None = None) -> None:
    ws.robot.cell = tuple(cell)
    if heading:
        ws.robot.heading = heading
    if ws.robot.in_elevator:
        stop = ws.building.elevators[ws.robot.in_elevator].stops.get(ws.robot.floor)
        if stop is None or stop.cab_cell != ws.robot.cell:
            ws.robot.in_elevator = None


# ------------------------------------------------------------- task checking


def check_task_success(ws: WorldState, task_spec: Mapping) -> bool:
    """Evaluate a goal predicate (``retrieve`` or ``rearrange``) on ``ws``."""
    predicate = task_spec.get("predicate")
    params = task_spec.get("params") or {}
    if predicate == "retrieve":
        lm = ws.building.landmarks[params["deliver_to"]]
        held = ws.objects.get(ws.robot.held_object) if ws.robot.held_object else None
        return (held is not None and held.matches(params["target"])
                and ws.robot.floor == lm.floor and ws.robot.cell == lm.cell)
    if predicate == "rearrange":
        floor, r0, c0, r1, c1 = params["region"]
        items = [o for o in ws.objects.values() if o.category == params.get("category", "chair")]
        if not items:
            return False
        headings = {o.attributes.get("facing") for o in items}
        inside = all(o.floor == floor and all(r0 <= r <= r1 and c0 <= c <= c1 for r, c in o.footprint)
                     for o in items)
        return inside and len(headings) == 1
    raise WorldError(f"unknown predicate: {predicate!r}")
