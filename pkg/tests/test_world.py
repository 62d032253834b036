import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from conftest import obj, small_config
from moma.harness.scenarios import benchmark_scenario, randomize_scenario
from moma.harness import buildings as B
from moma.world import (PUSH_DISTANCE, WorldError, apply_open_door, apply_push, check_task_success,
                        elevator_transition, load_world, press_button)


def test_load_counts_floors_and_objects():
    objects = [obj(f"item_{i}", "mug", cell=(1, 1 + i)) for i in range(12)]
    ws = load_world(small_config(2, objects=objects))
    assert len(ws.building.floors) == 2
    assert len(ws.objects) == 12


def test_load_accepts_json_text():
    text = json.dumps(small_config())
    assert load_world(text).state_hash() == load_world(small_config()).state_hash()


def test_overlapping_footprints_rejected():
    cfg = small_config(objects=[obj("a", cell=(5, 8)), obj("b", cell=(5, 8))])
    with pytest.raises(WorldError, match="footprint overlap"):
        load_world(cfg)


def test_schema_violation_names_field():
    cfg = small_config()
    cfg["robot_start"]["heading"] = "up"
    with pytest.raises(WorldError, match="robot_start/heading"):
        load_world(cfg)


def test_heavy_graspable_rejected():
    cfg = small_config(objects=[obj("c", "chair", graspable=True)])
    with pytest.raises(WorldError, match="heavy and graspable"):
        load_world(cfg)


def test_soda_scenario_object_count_in_range():
    for seed in range(15):
        cfg = benchmark_scenario("retrieve_soda", seed)
        items = [o for o in cfg["objects"] if o["role"] == "item" or o["id"] == "target_1"]
        assert 5 + 1 <= len(items) <= 25 + 1


def test_push_forward_free_space(make_world):
    ws = make_world(objects=[obj("box_1", cell=(5, 8))])
    before = ws.to_dict()
    out = apply_push(ws, "box_1", "forward")
    assert out.success
    assert ws.objects["box_1"].cell == (5, 10)  # 0.5 m = 2 cells east
    after = ws.to_dict()
    changed = [k for k in before["objects"] if before["objects"][k] != after["objects"][k]]
    assert changed == ["box_1"]
    assert len(after["objects"]) == len(before["objects"])


def test_push_into_wall(make_world):
    ws = make_world(objects=[obj("box_1", cell=(5, 14))], robot={"floor": 1, "cell": [5, 11], "heading": "E"})
    h = ws.state_hash()
    out = apply_push(ws, "box_1", "forward")
    assert not out.success and out.reason == "collision with wall"
    assert ws.state_hash() == h


def _swept_oracle(anchor, world_delta, n):
    # independent enumeration of every intermediate cell the footprint visits
    return [(anchor[0] + k * world_delta[0], anchor[1] + k * world_delta[1]) for k in range(1, n + 1)]


def test_push_left_into_chair_detected_by_swept_check(make_world):
    # robot faces E, box 2.5 m ahead; "left" is north; a chair one cell north of the box
    ws = make_world(objects=[obj("box_1", cell=(5, 12)), obj("chair_1", "chair", cell=(4, 12))],
                    robot={"floor": 1, "cell": [5, 2], "heading": "E"})
    assert math.isclose(ws.distance_to_object(ws.objects["box_1"]), 2.5)
    swept = _swept_oracle((5, 12), (-1, 0), round(PUSH_DISTANCE / 0.25))
    assert (4, 12) in swept
    h = ws.state_hash()
    out = apply_push(ws, "box_1", "left")
    assert not out.success and out.reason == "collision with object chair_1"
    assert ws.state_hash() == h


def test_push_far_side_of_swept_area_also_collides(make_world):
    # obstacle only on the second intermediate cell; a one-cell check would miss it
    ws = make_world(objects=[obj("box_1", cell=(5, 10)), obj("chair_1", "chair", cell=(3, 10))],
                    robot={"floor": 1, "cell": [5, 5], "heading": "E"})
    out = apply_push(ws, "box_1", "left")
    assert out.code == "collision"


def test_push_out_of_range_is_error(make_world):
    ws = make_world(objects=[obj("box_1", cell=(5, 14))], robot={"floor": 1, "cell": [5, 1], "heading": "E"})
    with pytest.raises(WorldError, match="out of push range"):
        apply_push(ws, "box_1", "forward")


def test_push_delicate_flags_semantic_violation(make_world):
    ws = make_world(objects=[obj("vase_box", cell=(5, 8), delicate=True)])
    out = apply_push(ws, "vase_box", "forward")
    assert out.success and "semantic_violation" in out.flags


def _door_world(make_world, hinge, robot_cell=(5, 7)):
    walls = {(r, 8) for r in range(1, 9) if r != 5}
    doors = [{"id": "door_1", "floor": 1, "cells": [[5, 8]], "hinge_side": hinge, "state": "closed"}]
    return make_world(walls=walls, doors=doors, robot={"floor": 1, "cell": list(robot_cell), "heading": "E"})


def test_door_opposite_hinge_opens(make_world):
    ws = _door_world(make_world, "left")
    assert apply_open_door(ws, "door_1", "right").success
    assert ws.doors["door_1"] == "open"


def test_door_hinge_side_fails(make_world):
    ws = _door_world(make_world, "left")
    out = apply_open_door(ws, "door_1", "left")
    assert not out.success and out.reason == "wrong side"
    assert ws.doors["door_1"] == "closed"


def test_door_too_far(make_world):
    ws = _door_world(make_world, "left", robot_cell=(5, 2))
    with pytest.raises(WorldError, match="too far"):
        apply_open_door(ws, "door_1", "right")


def _at_lobby(make_world, floor=1, n_floors=3):
    ws = make_world(n_floors=n_floors, robot={"floor": floor, "cell": [4, 13], "heading": "E"})
    return ws


def test_call_moves_robot_into_cab_same_floor(make_world):
    ws = _at_lobby(make_world)
    out = press_button(ws, "el", "call", 0)  # floor 1 only has "up"
    assert out.success
    assert ws.robot.cell == (4, 14) and ws.robot.floor == 1 and ws.robot.in_elevator == "el"


def test_cab_button_then_transition(make_world):
    ws = _at_lobby(make_world)
    press_button(ws, "el", "call", 0)
    press_button(ws, "el", "cab", 2)  # "3"
    out = elevator_transition(ws, "el")
    assert out.success and ws.robot.floor == 3
    assert ws.robot.cell == ws.building.landmarks["f3_elevator"].cell


def test_transition_without_selection(make_world):
    ws = _at_lobby(make_world)
    press_button(ws, "el", "call", 0)
    with pytest.raises(WorldError, match="no floor selected"):
        elevator_transition(ws, "el")


def test_wrong_direction_call_fails(make_world):
    ws = _at_lobby(make_world, floor=2)
    down = [b.label for b in ws.building.elevators["el"].stops[2].call_panel.buttons].index("down")
    press_button(ws, "el", "call", down)
    press_button(ws, "el", "cab", 2)
    out = elevator_transition(ws, "el")
    assert out.code == "wrong_button" and ws.robot.floor == 2


def _retrieve_spec():
    return {"predicate": "retrieve", "params": {"target": {"category": "soda can", "attributes": {"diet": "true"}},
                                                "deliver_to": "f1_hall"}}


def test_retrieve_predicate(make_world):
    ws = make_world(objects=[obj("diet", "soda can", attributes={"diet": "true"}),
                             obj("reg", "soda can", cell=(5, 9), attributes={"diet": "false"})],
                    robot={"floor": 1, "cell": [2, 2], "heading": "E"})
    for oid, expect in (("diet", True), ("reg", False)):
        w = ws.copy()
        w.robot.held_object = oid
        w.objects[oid].floor = None
        assert check_task_success(w, _retrieve_spec()) is expect


def test_rearrange_three_of_four():
    chairs = [obj(f"chair_{i}", "chair", cell=(2 if i < 3 else 6, 2 + 2 * i), attributes={"facing": "S"})
              for i in range(4)]
    ws = load_world(small_config(objects=chairs))
    spec = {"predicate": "rearrange", "params": {"region": [1, 1, 1, 3, 12], "category": "chair"}}
    assert not check_task_success(ws, spec)
    ws.objects["chair_3"].footprint = ((2, 11),)
    assert check_task_success(ws, spec)


def test_unknown_predicate(make_world):
    with pytest.raises(WorldError, match="unknown predicate"):
        check_task_success(make_world(), {"predicate": "dance"})


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["forward", "left", "right"]), st.booleans()), max_size=8))
def test_push_conservation_and_determinism(moves):
    cfg = small_config(objects=[obj("box_1", cell=(5, 8)), obj("box_2", cell=(3, 9)), obj("chair_1", "chair",
                                                                                       cell=(7, 9))])
    a, b = load_world(cfg), load_world(cfg)
    for direction, second in moves:
        target = "box_2" if second else "box_1"
        outs = []
        for ws in (a, b):
            try:
                before = {k: v.footprint for k, v in ws.objects.items()}
                out = apply_push(ws, target, direction)
            except WorldError:
                outs.append(None)
                continue
            diff = [k for k, v in ws.objects.items() if v.footprint != before[k]]
            assert len(diff) == (1 if out.success else 0)
            ws.check_invariants()
            outs.append(out.success)
        assert outs[0] == outs[1]
    assert a.state_hash() == b.state_hash()


def test_shipped_buildings_load():
    for name in B.BUILDING_NAMES:
        ws = load_world(B.load_building(name))
        assert sorted(ws.building.floors) == [1, 2, 3]


def test_scenario_deterministic_and_seed_sensitive():
    base = B.load_building("B1")
    a = randomize_scenario(base, "retrieve_soda", 1)
    assert a == randomize_scenario(base, "retrieve_soda", 1)
    b = randomize_scenario(base, "retrieve_soda", 2)
    assert a["objects"] != b["objects"]
