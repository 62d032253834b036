"""Seeded scenario randomization on top of a building template."""

from __future__ import annotations

import copy
import json
import random
from typing import Mapping

from ..world import WorldError, load_world
from . import buildings as B
from .solver import Unsolvable, solve
from .tasks import make_task

MAX_ATTEMPTS = 100
DISTRACTOR_RANGE = (5, 25)
SODA_BRANDS = ("cola", "dr pepper", "lemon lime", "root beer")
MARKER_COLORS = ("blue", "green", "red")
OTHER_MARKER_COLORS = ("black", "yellow", "purple", "pink")
CLUTTER = (("mug", {"color": "white"}), ("mug", {"color": "black"}), ("cup", {"material": "paper"}),
           ("bottle", {"content": "water"}), ("apple", {"color": "red"}), ("banana", {}), ("book", {}),
           ("notebook", {"color": "blue"}), ("stapler", {}), ("scissors", {}), ("sponge", {"color": "yellow"}),
           ("bowl", {}), ("plate", {}), ("tape", {}), ("napkin", {}))
TASK_ROOMS = {"retrieve_soda": "kitchen", "retrieve_marker": "art_studio", "rearrange_chairs": "reception"}


class DegenerateScenario(RuntimeError):
    pass


def _item(oid: str, category: str, attrs: dict, floor: int, cell) -> dict:
    return {"id": oid, "category": category, "attributes": dict(attrs), "floor": floor, "cell": list(cell),
            "role": "item"}


def _distractor_pool(task_id: str, rng: random.Random, target: dict) -> list[tuple[str, dict]]:
    pool: list[tuple[str, dict]] = []
    if task_id == "retrieve_soda":
        brand = target["attributes"]["brand"]
        pool.append(("soda can", {"brand": brand, "diet": "false"}))  # same brand, full sugar
        pool += [("soda can", {"brand": b, "diet": "false"}) for b in SODA_BRANDS if b != brand]
    elif task_id == "retrieve_marker":
        color = target["attributes"]["color"]
        pool += [("marker", {"color": c}) for c in MARKER_COLORS + OTHER_MARKER_COLORS if c != color]
    rest = list(CLUTTER) + [("soda can", {"brand": rng.choice(SODA_BRANDS), "diet": "false"})]
    rng.shuffle(rest)
    return pool + rest


def _sample(base: Mapping, task_id: str, seed: int, attempt: int, cross_floor: bool | None,
            distractors: tuple[int, int] = DISTRACTOR_RANGE) -> dict:
    rng = random.Random(f"scenario:{base['name']}:{task_id}:{seed}:{attempt}")
    cfg = copy.deepcopy(dict(base))
    name = cfg["name"]
    layout = B.LAYOUTS[name]
    room = TASK_ROOMS[task_id]
    places = B.find_room(name, room)
    goal_floor, goal_slot = places[0]
    floors = sorted(layout)

    if cross_floor is None:
        cross_floor = rng.random() < 0.5
    start_floors = [f for f in floors if f != goal_floor] if cross_floor else floors
    start_floor = rng.choice(start_floors)
    start_rooms = [(s, r) for s, r in enumerate(layout[start_floor])
                   if not (start_floor == goal_floor and s == goal_slot)]
    start_slot, start_room = rng.choice(start_rooms)
    start_lm = f"f{start_floor}_{start_room}"
    cfg["robot_start"] = {"floor": start_floor, "landmark": start_lm, "heading": "N"}
    cfg["seed"] = seed

    objects: list[dict] = []
    meta = {"building": name, "task_id": task_id, "seed": seed, "attempt": attempt, "start_floor": start_floor,
            "start_landmark": start_lm, "goal_floor": goal_floor, "cross_floor": start_floor != goal_floor}

    # target + distractors
    n = rng.randint(*distractors)
    if task_id == "rearrange_chairs":
        d = B.ROOM_SLOTS[goal_slot][2]
        cols = sorted(rng.sample([d - 6, d - 4, d - 2, d, d + 2, d + 4, d + 6], 4))
        for i, c in enumerate(cols, 1):
            objects.append({"id": f"chair_{i}", "category": "chair", "attributes": {"facing": "S"},
                            "floor": goal_floor, "cell": [5, c], "heavy": True, "ground": True, "role": "chair"})
        c0, c1 = B.ROOM_SLOTS[goal_slot][:2]
        meta["region"] = [goal_floor, 1, c0, 3, c1]
        spots = [(goal_floor, cell) for s, r in enumerate(layout[goal_floor]) if r not in B.OPEN_ROOMS
                 for cell in B.table_cells(s)]
        target = None
    else:
        if task_id == "retrieve_soda":
            target = {"category": "soda can", "attributes": {"brand": rng.choice(SODA_BRANDS), "diet": "true"}}
            filt = {"category": "soda can", "attributes": {"diet": "true"}}
        else:
            color = rng.choice(MARKER_COLORS)
            target = {"category": "marker", "attributes": {"color": color}}
            filt = {"category": "marker", "attributes": {"color": color}}
        spots = [(goal_floor, cell) for cell in B.table_cells(goal_slot)]
        meta["target"] = filt
        meta["deliver_to"] = start_lm
    rng.shuffle(spots)
    n = min(n, len(spots) - (1 if target else 0))
    if target is not None:
        f, cell = spots.pop()
        objects.append(_item("target_1", target["category"], target["attributes"], f, cell))
    pool = _distractor_pool(task_id, rng, target or {})
    for i in range(n):
        f, cell = spots.pop()
        cat, attrs = pool[i % len(pool)]
        objects.append(_item(f"item_{i + 1}", cat, attrs, f, cell))
    meta["n_distractors"] = n

    # obstacles on the way between a room doorway and the elevator lobby
    obstacles = []
    for floor, slot in dict.fromkeys([(start_floor, start_slot), (goal_floor, goal_slot)]):
        d = B.ROOM_SLOTS[slot][2]
        cols = [c for c in B.NICHE_COLS if c > d]
        if cols and rng.random() < 0.6:
            c = rng.choice(cols)
            kinds = ("box",) if task_id == "rearrange_chairs" else ("box", "chair")
            kind = rng.choice(kinds)
            oid = f"{kind}_obstacle_{floor}"
            if any(o["id"] == oid for o in objects):
                continue
            objects.append({"id": oid, "category": kind, "attributes": {"material": "cardboard"} if kind == "box"
                            else {"facing": "E"}, "floor": floor, "cell": [B.CORRIDOR_ROW, c],
                            "heavy": kind == "chair", "ground": True, "role": "obstacle"})
            obstacles.append(oid)
    for door in cfg["doors"]:
        door["hinge_side"] = rng.choice(("left", "right"))
        key = (door["floor"], door["id"].split("_", 2)[2])
        involved = key in {(start_floor, start_room), (goal_floor, room)}
        if rng.random() < (0.5 if involved else 0.3):
            door["state"] = "closed"
            if involved:
                obstacles.append(door["id"])
    if rng.random() < 0.5:
        # wet-floor sign in an uninvolved room, clear of the landmark-door lane
        spots = [(f, s) for f in floors for s, r in enumerate(layout[f])
                 if (f, s) not in {(start_floor, start_slot), (goal_floor, goal_slot)}]
        f, s = rng.choice(spots)
        d = B.ROOM_SLOTS[s][2]
        objects.append({"id": "wet_sign_1", "category": "wet floor sign", "attributes": {"color": "yellow"},
                        "floor": f, "cell": [8, d + rng.choice((-4, 4))], "ground": True, "pushable": False,
                        "graspable": False, "role": "obstacle"})
        obstacles.append("wet_sign_1")
    meta["obstacles"] = obstacles
    cfg["objects"] = objects
    cfg["meta"] = meta
    return cfg


def randomize_scenario(base: Mapping, task_id: str, seed: int, cross_floor: bool | None = True,
                       validate: bool = True) -> dict:
    """Seeded scenario for ``task_id``; retries until the scripted solver finds a plan."""
    if task_id not in TASK_ROOMS:
        raise ValueError(f"unknown task {task_id!r}")
    for attempt in range(MAX_ATTEMPTS):
        cfg = _sample(base, task_id, seed, attempt, cross_floor)
        if not validate:
            return cfg
        try:
            ws = load_world(cfg)
            solve(ws, make_task(task_id, 0, cfg).predicate_spec())
        except (Unsolvable, WorldError):
            continue
        return cfg
    raise DegenerateScenario("degenerate scenario: no solvable sample after 100 attempts")


def scenario_bytes(cfg: Mapping) -> bytes:
    return json.dumps(cfg, sort_keys=True).encode()


def benchmark_scenario(task_id: str, seed: int, building: str | None = None, cross_floor: bool | None = True) -> dict:
    name = building or (B.BUILDING_NAMES[seed % len(B.BUILDING_NAMES)] if task_id != "rearrange_chairs" else "B1")
    return randomize_scenario(B.load_building(name), task_id, seed, cross_floor)
