"""Three-floor building templates shipped with the benchmark.

Every floor shares one layout: three rooms along the north side, a one-cell
corridor below them with two shallow niches, and an elevator lobby in the
south-east corner. Buildings differ in which room sits where.
"""

from __future__ import annotations

import json
from importlib import resources

ROWS, COLS = 18, 60
ROOM_SLOTS = {0: (1, 19, 10), 1: (21, 39, 30), 2: (41, 58, 50)}  # slot -> (c0, c1, doorway col)
NICHE_COLS = (20, 40)
CORRIDOR_ROW = 11
LOBBY = (12, 54, 15, 58)
LANDING = (15, 56)
CAB = (16, 56)
CALL_PANEL = (16, 55)
CAB_PANEL = (17, 56)
OPEN_ROOMS = ("reception",)  # rooms without tables

LAYOUTS = {
    "B1": {1: ("reception", "office", "storage"), 2: ("kitchen", "lab", "lounge"),
           3: ("art_studio", "library", "office")},
    "B2": {1: ("kitchen", "mailroom", "reception"), 2: ("office", "lab", "conference"),
           3: ("lounge", "art_studio", "study")},
    "B3": {1: ("office", "reception", "lounge"), 2: ("library", "study", "storage"),
           3: ("kitchen", "lab", "art_studio")},
}
BUILDING_NAMES = tuple(LAYOUTS)


def table_cells(slot: int) -> list[tuple[int, int]]:
    d = ROOM_SLOTS[slot][2]
    return [(2, c) for c in range(d - 7, d + 8)] + [(4, c) for c in range(d - 5, d + 6)]


def landmark_cell(slot: int, room: str) -> tuple[int, int]:
    d = ROOM_SLOTS[slot][2]
    # open rooms keep their landmark by the door so the whole floor is in view
    return (9, d) if room in OPEN_ROOMS else (7, d)


def _floor_map(rooms: tuple[str, ...]) -> list[str]:
    grid = [["#"] * COLS for _ in range(ROWS)]
    for r in range(1, 10):
        for slot, (c0, c1, _) in ROOM_SLOTS.items():
            for c in range(c0, c1 + 1):
                grid[r][c] = "."
    for slot, room in enumerate(rooms):
        if room not in OPEN_ROOMS:
            for r, c in table_cells(slot):
                grid[r][c] = "T"
    for _, _, d in ROOM_SLOTS.values():
        grid[10][d] = "."
    for c in range(1, COLS - 1):
        grid[CORRIDOR_ROW][c] = "."
    for r in (12, 13):
        for c in NICHE_COLS:
            grid[r][c] = "."
    for r in range(LOBBY[0], LOBBY[2] + 1):
        for c in range(LOBBY[1], LOBBY[3] + 1):
            grid[r][c] = "."
    grid[CAB[0]][CAB[1]] = "."
    return ["".join(row) for row in grid]


def make_building(name: str) -> dict:
    """Scenario config (no objects yet) for one of the named layouts."""
    layout = LAYOUTS[name]
    floors, landmarks, doors, stops = [], [], [], []
    for fid, rooms in layout.items():
        spec = {name_: [1, c0, 9, c1] for name_, (c0, c1, _) in zip(rooms, ROOM_SLOTS.values())}
        spec["corridor"] = [10, 1, CORRIDOR_ROW, COLS - 2]
        spec["lobby"] = [LOBBY[0], LOBBY[1], CAB[0], LOBBY[3]]
        floors.append({"id": fid, "map": _floor_map(rooms), "rooms": spec})
        for slot, room in enumerate(rooms):
            landmarks.append({"id": f"f{fid}_{room}", "floor": fid, "cell": list(landmark_cell(slot, room)),
                              "heading": "N", "label": room.replace("_", " "), "room": room})
            doors.append({"id": f"door_f{fid}_{room}", "floor": fid, "cells": [[10, ROOM_SLOTS[slot][2]]],
                          "hinge_side": "left", "state": "open"})
        landmarks.append({"id": f"f{fid}_elevator", "floor": fid, "cell": list(LANDING), "heading": "S",
                          "label": "elevator lobby", "room": "lobby", "elevator": "elevator_1"})
        stops.append({"floor": fid, "landmark": f"f{fid}_elevator", "cab_cell": list(CAB), "cab_heading": "S",
                      "call_panel_cell": list(CALL_PANEL), "cab_panel_cell": list(CAB_PANEL)})
    first = layout[1]
    start_room = next(r for r in first if r not in OPEN_ROOMS)
    return {
        "name": name, "cell_size": 0.25, "seed": 0,
        "meta": {"building": name},
        "floors": floors, "landmarks": landmarks,
        "elevators": [{"id": "elevator_1", "cab_floor": 1, "stops": stops}],
        "doors": doors, "objects": [],
        "robot_start": {"floor": 1, "landmark": f"f1_{start_room}", "heading": "N"},
    }


def room_slot(building: str, floor: int, room: str) -> int:
    return LAYOUTS[building][floor].index(room)


def find_room(building: str, room: str) -> list[tuple[int, int]]:
    """(floor, slot) pairs holding a room with this name."""
    return [(f, rooms.index(room)) for f, rooms in LAYOUTS[building].items() if room in rooms]


def load_building(name: str) -> dict:
    """Shipped JSON copy of a building template."""
    text = resources.files("moma.data").joinpath("buildings", f"{name}.json").read_text()
    return json.loads(text)


def export_buildings(directory) -> list:
    from pathlib import Path

    out = []
    for name in BUILDING_NAMES:
        path = Path(directory) / f"{name}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(make_building(name), indent=1) + "\n")
        out.append(path)
    return out
