"""Shared fixtures: a small open-plan building with one elevator."""

from __future__ import annotations

import copy

import pytest

from moma.world import load_world

ROWS, COLS = 10, 16


def floor_map(walls=()) -> list[str]:
    rows = []
    for r in range(ROWS):
        row = []
        for c in range(COLS):
            edge = r in (0, ROWS - 1) or c in (0, COLS - 1)
            row.append("#" if edge or (r, c) in walls else ".")
        rows.append("".join(row))
    return rows


def small_config(n_floors: int = 2, objects=(), doors=(), robot=None, walls=()) -> dict:
    """Open rectangle per floor; elevator lobby at the east wall (landing (4, 13), cab (4, 14))."""
    floors, landmarks, stops = [], [], []
    for f in range(1, n_floors + 1):
        m = floor_map(walls)
        # carve the cab into the east wall
        m[4] = m[4][:COLS - 1] + "."
        floors.append({"id": f, "map": m, "rooms": {"hall": [1, 1, 8, 12]}})
        landmarks.append({"id": f"f{f}_hall", "floor": f, "cell": [2, 2], "heading": "E", "label": f"hall {f}",
                          "room": "hall"})
        landmarks.append({"id": f"f{f}_elevator", "floor": f, "cell": [4, 13], "heading": "E",
                          "label": f"elevator lobby {f}", "elevator": "el"})
        stops.append({"floor": f, "landmark": f"f{f}_elevator", "cab_cell": [4, 14], "cab_heading": "W",
                      "call_panel_cell": [3, 14], "cab_panel_cell": [5, 15]})
    return {
        "name": "small", "seed": 0, "floors": floors, "landmarks": landmarks,
        "elevators": [{"id": "el", "stops": stops}], "doors": list(doors), "objects": list(objects),
        "robot_start": robot or {"floor": 1, "cell": [5, 5], "heading": "E"},
    }


def obj(oid, category="box", cell=(5, 8), floor=1, **kw) -> dict:
    d = {"id": oid, "category": category, "floor": floor, "cell": list(cell)}
    if category in ("box", "chair", "wet floor sign"):
        d["ground"] = True
    if category == "chair":
        d["heavy"] = True
    d.update(kw)
    return d


@pytest.fixture
def make_world():
    def build(**kw):
        return load_world(copy.deepcopy(small_config(**kw)))
    return build
