from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import obj
from moma import nav
from moma.harness import buildings as B
from moma.world import WorldError, load_world


def bfs_len(grid, start, goal):
    """Reference shortest 4-connected path length (cells), or None."""
    h, w = grid.shape
    dist = {start: 0}
    q = deque([start])
    while q:
        r, c = q.popleft()
        if (r, c) == goal:
            return dist[(r, c)]
        for nr, nc in ((r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)):
            if 0 <= nr < h and 0 <= nc < w and not grid[nr, nc] and (nr, nc) not in dist:
                dist[(nr, nc)] = dist[(r, c)] + 1
                q.append((nr, nc))
    return None


def random_case(seed, size=20, density=0.2):
    rng = np.random.default_rng(seed)
    grid = rng.random((size, size)) < density
    free = np.argwhere(~grid)
    s, g = free[rng.choice(len(free), 2, replace=False)]
    return grid, tuple(map(int, s)), tuple(map(int, g))


def test_start_equals_goal():
    p = nav.plan_global(np.zeros((5, 5), bool), (2, 2), (2, 2))
    assert p.cells == [] and p.length == 0


def test_empty_grid_manhattan():
    p = nav.plan_global(np.zeros((10, 10), bool), (0, 0), (9, 9))
    assert len(p) == 18


def test_matches_bfs_on_random_grids():
    checked = 0
    for seed in range(50):
        grid, s, g = random_case(seed)
        ref = bfs_len(grid, s, g)
        if ref is None:
            with pytest.raises(nav.Unreachable):
                nav.plan_global(grid, s, g)
            continue
        path = nav.plan_global(grid, s, g)
        assert len(path) == ref
        checked += 1
    assert checked > 30


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.0, 0.4))
def test_path_valid_and_optimal(seed, density):
    grid, s, g = random_case(seed, 12, density)
    ref = bfs_len(grid, s, g)
    if ref is None:
        return
    path = nav.plan_global(grid, s, g)
    assert len(path) == ref
    prev = s
    for cell in path.cells:
        assert abs(cell[0] - prev[0]) + abs(cell[1] - prev[1]) == 1
        assert not grid[cell]
        prev = cell
    assert prev == g


def test_plan_is_deterministic():
    grid, s, g = random_case(7)
    assert nav.plan_global(grid, s, g).cells == nav.plan_global(grid, s, g).cells


def test_traverse_clear(make_world):
    ws = make_world()
    out = nav.traverse(ws, nav.plan_for_robot(ws, (5, 12)))
    assert out.success and ws.robot.cell == (5, 12)


def test_traverse_blocked_by_box_two_meters_short(make_world):
    ws = make_world(objects=[obj("box_2", cell=(5, 13))], robot={"floor": 1, "cell": [5, 1], "heading": "E"})
    path = nav.plan_for_robot(ws, (5, 14))
    out = nav.traverse(ws, path)
    assert out.reason == "path blocked by box_2"
    assert ws.robot.cell == (5, 5)  # 8 cells = 2.0 m before the box
    assert ws.robot.cell in path.cells


def test_traverse_blocked_by_closed_door(make_world):
    walls = {(r, 8) for r in range(1, 9) if r != 5}
    ws = make_world(walls=walls, doors=[{"id": "door_1", "floor": 1, "cells": [[5, 8]], "hinge_side": "left"}],
                    robot={"floor": 1, "cell": [5, 2], "heading": "E"})
    out = nav.traverse(ws, nav.plan_for_robot(ws, (5, 12)))
    assert out.reason == "path blocked by door_1"


def test_nearest_ground_point_one_free_side(make_world):
    # box in the north-west corner pocket: only its south side is free
    ws = make_world(objects=[obj("box_1", cell=(1, 2)), obj("box_2", cell=(1, 1)), obj("box_3", cell=(1, 3))],
                    robot={"floor": 1, "cell": [5, 5], "heading": "N"})
    assert nav.nearest_ground_point(ws, "box_1") == (2, 2)


def test_nearest_ground_point_enclosed(make_world):
    walls = {(4, 8), (6, 8), (5, 7), (5, 9)}
    ws = make_world(walls=walls, objects=[obj("box_1", cell=(5, 8))], robot={"floor": 1, "cell": [2, 2],
                                                                               "heading": "E"})
    with pytest.raises(WorldError, match="object unapproachable"):
        nav.nearest_ground_point(ws, "box_1")


def test_nearest_ground_point_tie_break(make_world):
    # robot directly west of the box two cells away: north and south neighbours are equidistant
    ws = make_world(objects=[obj("box_1", cell=(5, 8)), obj("box_w", cell=(5, 7))],
                    robot={"floor": 1, "cell": [5, 6], "heading": "E"})
    ws.objects["box_w"].footprint = ((5, 9),)  # free the west side again but keep east blocked
    assert nav.nearest_ground_point(ws, "box_1") == (5, 7)
    ws.objects["box_w"].footprint = ((5, 7),)
    assert nav.nearest_ground_point(ws, "box_1") == (4, 8)  # (4,8) < (6,8)


def test_landmark_graph_shipped_buildings():
    for name in B.BUILDING_NAMES:
        ws = load_world(B.load_building(name))
        graph = nav.build_landmark_graph(ws.building)
        for d in ws.doors:
            ws.doors[d] = "open"
        for floor in ws.building.floors:
            assert graph.connected(floor)
            lms = ws.building.landmarks_on(floor)
            grid = ws.blocked_grid(floor)
            for a in lms:
                for b in lms:
                    nav.plan_global(grid, a.cell, b.cell)
