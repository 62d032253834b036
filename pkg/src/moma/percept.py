"""Simulated open-vocabulary perception and Set-of-Mark annotation."""

from __future__ import annotations

import hashlib
import io
import json
import math
import random
import re
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .grid import CLOCKWISE, HEADINGS, WALL, Cell
from .world import WorldState

FOV_DEG = 120.0
VIEW_RANGE = 6.0
MAX_MARKERS = 50

CATEGORY_WORDS: dict[str, set[str]] = {
    "soda can": {"soda", "sodas", "can", "cans", "drink", "drinks", "pop", "cola", "coke", "pepper", "sprite",
                 "fizzy", "beverage"},
    "marker": {"marker", "markers", "pen", "pens", "highlighter"},
    "chair": {"chair", "chairs", "seat", "seating"},
    "box": {"box", "boxes", "cardboard", "carton"},
    "wet floor sign": {"sign", "signs", "cone"},
    "mug": {"mug", "mugs"},
    "cup": {"cup", "cups"},
    "bottle": {"bottle", "bottles", "water"},
    "apple": {"apple", "apples"},
    "banana": {"banana", "bananas"},
    "book": {"book", "books"},
    "notebook": {"notebook", "notebooks"},
    "stapler": {"stapler"},
    "scissors": {"scissors"},
    "sponge": {"sponge", "sponges"},
    "bowl": {"bowl", "bowls"},
    "plate": {"plate", "plates"},
    "tape": {"tape"},
    "vase": {"vase", "vases"},
    "napkin": {"napkin", "napkins", "tissue"},
}
# words the detector cannot ground: instance attributes, never categories
ATTRIBUTE_WORDS = {"diet", "regular", "sugar", "free", "zero", "low", "calorie", "calories", "red", "blue", "green",
                   "black", "yellow", "purple", "pink", "white", "large", "small", "dr", "classic", "light"}
DISTRACTOR_VOCAB = sorted(CATEGORY_WORDS)


class MarkerOverflow(ValueError):
    pass


@dataclass(frozen=True)
class PerceptionNoiseConfig:
    false_negative_rate: float = 0.0
    false_positive_rate: float = 0.0
    label_confusion_rate: float = 0.0
    nan_depth_rate: float = 0.0
    seed: int = 0
    # viewpoints (floor, row, col) where depth of every object reads NaN
    nan_depth_viewpoints: tuple[tuple[int, int, int], ...] = ()

    def __post_init__(self):
        for name in ("false_negative_rate", "false_positive_rate", "label_confusion_rate", "nan_depth_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


@dataclass
class Detection:
    entity_id: str
    label: str
    kind: str  # object | door | button | false_positive
    distance: float
    bearing: float
    cell: Cell
    confidence: float = 1.0
    appearance: str = ""
    panel_position: tuple[float, float] | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def category(self) -> str:
        return self.label

    def distance_text(self) -> str:
        if math.isnan(self.distance):
            return "distance: unknown (sensor fault)"
        return f"{self.distance:.1f} m"

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["cell"] = list(self.cell)
        d["distance"] = None if math.isnan(self.distance) else self.distance
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Detection":
        d = dict(d)
        d["cell"] = tuple(d["cell"])
        d["distance"] = float("nan") if d["distance"] is None else d["distance"]
        if d.get("panel_position") is not None:
            d["panel_position"] = tuple(d["panel_position"])
        return cls(**d)


@dataclass
class Observation:
    step: int
    floor: int
    robot_cell: Cell
    robot_heading: str
    detections: list[Detection]
    grid: np.ndarray | None = None
    in_elevator: str | None = None
    location: str = ""

    def by_id(self, entity_id: str) -> Detection | None:
        for d in self.detections:
            if d.entity_id == entity_id:
                return d
        return None

    def scene_table(self) -> str:
        """Structured-text twin of the scene image."""
        lines = [f"Scene on floor {self.floor} ({self.location or 'unknown location'}), "
                 f"robot facing {self.robot_heading}:"]
        if not self.detections:
            lines.append("  (no foreground objects detected)")
        for i, d in enumerate(sorted(self.detections, key=_sort_key), 1):
            look = f" [{d.appearance}]" if d.appearance else ""
            lines.append(f"  S{i}: {d.label}{look}, {d.distance_text()}, bearing {d.bearing:+.0f} deg")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"step": self.step, "floor": self.floor, "robot_cell": list(self.robot_cell),
                "robot_heading": self.robot_heading, "in_elevator": self.in_elevator, "location": self.location,
                "detections": [d.to_dict() for d in self.detections]}

    @classmethod
    def from_dict(cls, d: dict, grid: np.ndarray | None = None) -> "Observation":
        return cls(d["step"], d["floor"], tuple(d["robot_cell"]), d["robot_heading"],
                   [Detection.from_dict(x) for x in d["detections"]], grid, d.get("in_elevator"),
                   d.get("location", ""))


def _sort_key(d) -> tuple:
    dist = d.distance if not math.isnan(d.distance) else math.inf
    return (round(dist, 9), round(d.bearing, 6), d.label, str(getattr(d, "entity_id", getattr(d, "value", ""))))


def bearing_deg(ws_heading: str, src: tuple[float, float], dst: tuple[float, float]) -> float:
    fr, fc = HEADINGS[ws_heading]
    rr, rc = HEADINGS[CLOCKWISE[ws_heading]]
    vx, vy = dst[0] - src[0], dst[1] - src[1]  # x along columns, y along rows
    forward = vy * fr + vx * fc
    right = vy * rr + vx * rc
    return math.degrees(math.atan2(right, forward))


def _line_of_sight(ws: WorldState, floor: int, src: tuple[float, float], dst: tuple[float, float],
                   target: Cell) -> bool:
    cs = ws.building.cell_size
    fm = ws.building.floors[floor]
    closed = {c for c, e in ws.blocker_map(floor).items() if e.startswith("door")}
    n = max(2, int(math.hypot(dst[0] - src[0], dst[1] - src[1]) / cs * 4) + 1)
    for k in range(1, n):
        t = k / n
        x = src[0] + t * (dst[0] - src[0])
        y = src[1] + t * (dst[1] - src[1])
        cell = (int(y // cs), int(x // cs))
        if cell == target:
            continue
        if fm.grid[cell] == WALL or cell in closed:
            return False
    return True


def _visible(ws: WorldState, pos: tuple[float, float], cell: Cell) -> tuple[bool, float, float]:
    src = ws.robot_position()
    dist = math.hypot(pos[0] - src[0], pos[1] - src[1])
    bearing = bearing_deg(ws.robot.heading, src, pos)
    if dist > VIEW_RANGE or abs(bearing) > FOV_DEG / 2 + 1e-9:
        return False, dist, bearing
    return _line_of_sight(ws, ws.robot.floor, src, pos, cell), dist, bearing


def ground_truth_entities(ws: WorldState) -> list[Detection]:
    """Noise-free detections of everything in the field of view."""
    floor = ws.robot.floor
    out: list[Detection] = []
    if ws.robot.in_elevator:
        el = ws.building.elevators[ws.robot.in_elevator]
        panel = el.stops[floor].cab_panel
        base = ws.distance_to_cell(panel.cell)
        for i, btn in enumerate(panel.buttons):
            out.append(Detection(f"{el.id}:cab:{i}", f"{btn.label} button", "button",
                                 math.hypot(base, btn.position[0]), 0.0, panel.cell, panel_position=btn.position,
                                 extra={"elevator": el.id, "panel": "cab", "index": i}))
        return out
    for obj in ws.objects.values():
        if obj.floor != floor:
            continue
        ok, dist, bearing = _visible(ws, ws.object_position(obj), obj.cell)
        if ok:
            out.append(Detection(obj.id, obj.category, "object", dist, bearing, obj.cell,
                                 appearance=", ".join(f"{k}={v}" for k, v in sorted(obj.attributes.items()))))
    for door_id, spec in ws.building.doors.items():
        if spec.floor != floor:
            continue
        cell = spec.cells[0]
        ok, dist, bearing = _visible(ws, ws.position(cell), cell)
        if ok:
            out.append(Detection(door_id, "door", "door", dist, bearing, cell, appearance=ws.doors[door_id]))
    for el in ws.building.elevators.values():
        stop = el.stops.get(floor)
        if stop is None:
            continue
        panel = stop.call_panel
        ok, dist, bearing = _visible(ws, ws.position(panel.cell), panel.cell)
        if ok:
            for i, btn in enumerate(panel.buttons):
                out.append(Detection(f"{el.id}:call:{floor}:{i}", f"{btn.label} button", "button",
                                     math.hypot(dist, btn.position[0]), bearing, panel.cell,
                                     panel_position=btn.position,
                                     extra={"elevator": el.id, "panel": "call", "index": i}))
    return out


def _location(ws: WorldState) -> str:
    if ws.robot.in_elevator:
        return f"inside elevator {ws.robot.in_elevator}"
    for lm in ws.building.landmarks_on(ws.robot.floor):
        if lm.cell == ws.robot.cell:
            return f"at landmark {lm.label}"
    room = ws.floor.room_of(ws.robot.cell)
    return f"in {room}" if room else "in corridor"


def observe(ws: WorldState, noise: PerceptionNoiseConfig | None = None, step: int = 0) -> Observation:
    noise = noise or PerceptionNoiseConfig()
    viewpoint = (ws.robot.floor, *ws.robot.cell)
    forced_nan = viewpoint in {tuple(v) for v in noise.nan_depth_viewpoints}
    detections = []
    for det in ground_truth_entities(ws):
        rng = random.Random(f"{noise.seed}:{ws.rng_seed}:{step}:{det.entity_id}")
        if rng.random() < noise.false_negative_rate:
            continue
        if det.kind == "object" and rng.random() < noise.label_confusion_rate:
            det.label = rng.choice([c for c in DISTRACTOR_VOCAB if c != det.label])
            det.confidence = 0.5
        if det.kind in ("object", "button") and (rng.random() < noise.nan_depth_rate
                                                  or (forced_nan and det.kind == "object")):
            det.distance = float("nan")
        detections.append(det)
    for k in range(3):
        rng = random.Random(f"{noise.seed}:{ws.rng_seed}:{step}:fp:{k}")
        if rng.random() < noise.false_positive_rate:
            label = rng.choice(DISTRACTOR_VOCAB)
            cell = (ws.robot.cell[0] + rng.randint(-4, 4), ws.robot.cell[1] + rng.randint(-4, 4))
            detections.append(Detection(f"fp:{step}:{k}", label, "false_positive", rng.uniform(0.5, VIEW_RANGE),
                                        rng.uniform(-60, 60), cell, confidence=0.3))
    detections.sort(key=_sort_key)
    return Observation(step, ws.robot.floor, ws.robot.cell, ws.robot.heading, detections,
                       ws.building.floors[ws.robot.floor].grid, ws.robot.in_elevator, _location(ws))


def _tokens(text: str) -> list[str]:
    return re.findall(r"[a-z0-9]+", text.lower())


def detector_query(observation: Observation, text_prompt: str) -> list[Detection]:
    """Keyword-grounded detection filter; attribute words never narrow the result."""
    if not text_prompt.strip():
        raise ValueError("text_prompt must be non-empty")
    tokens = set(_tokens(text_prompt))
    kinds: set[str] = set()
    categories: set[str] = set()
    if tokens & {"button", "buttons"}:
        kinds.add("button")
    if tokens & {"door", "doors"}:
        kinds.add("door")
    if tokens & {"object", "objects", "everything"}:
        kinds.update({"object", "false_positive"})
    for cat, words in CATEGORY_WORDS.items():
        if tokens & words:
            categories.add(cat)
    out = []
    for d in observation.detections:
        if d.kind in kinds or (d.kind in ("object", "false_positive") and d.label in categories):
            out.append(d)
    return out


# ------------------------------------------------------------------ markers


@dataclass
class Candidate:
    value: Any
    label: str
    distance: float = float("nan")
    bearing: float = 0.0
    kind: str = "object"
    cell: Cell | None = None
    detection: Detection | None = None

    def annotation(self) -> str:
        if math.isnan(self.distance):
            dist = "distance: unknown (sensor fault)"
        else:
            dist = f"{self.distance:.1f} m"
        return f"{self.label} - {dist}"


@dataclass
class Marker:
    marker_id: int
    candidate: Candidate
    text: str


@dataclass
class MarkerSet:
    markers: list[Marker]

    def ids(self) -> list[int]:
        return [m.marker_id for m in self.markers]

    def resolve(self, marker_id: int) -> Candidate:
        for m in self.markers:
            if m.marker_id == marker_id:
                return m.candidate
        raise KeyError(marker_id)

    def id_for(self, value) -> int | None:
        for m in self.markers:
            if m.candidate.value == value:
                return m.marker_id
        return None

    def table(self) -> str:
        return "\n".join(f"[{m.marker_id}] {m.text}" for m in self.markers)

    def __len__(self):
        return len(self.markers)


def candidate_from_detection(d: Detection, value=None) -> Candidate:
    label = f"{d.label} ({d.appearance})" if d.appearance and d.kind == "object" else d.label
    return Candidate(d.entity_id if value is None else value, label, d.distance, d.bearing, d.kind, d.cell, d)


def annotate_markers(observation: Observation, candidates: list[Candidate]) -> tuple[MarkerSet, "SceneImage"]:
    """Assign ids 1..n ordered by (distance, bearing) and render the annotated scene."""
    if len(candidates) > MAX_MARKERS:
        raise MarkerOverflow(f"marker overflow: {len(candidates)} candidates > {MAX_MARKERS}")
    ordered = sorted(candidates, key=_sort_key)
    markers = MarkerSet([Marker(i, c, c.annotation()) for i, c in enumerate(ordered, 1)])
    return markers, SceneImage(observation, markers)


# ---------------------------------------------------------------- rendering

_COLORS = {0: (245, 245, 245), 1: (40, 40, 40), 2: (150, 110, 70)}
_KIND_COLORS = {"object": (220, 60, 60), "door": (60, 160, 60), "button": (230, 180, 0),
                "false_positive": (220, 60, 60)}
_PX = 6
_CROP = 24


class SceneImage:
    """Schematic top-down raster of an observation, optionally with markers.

    The digest is computed from the render inputs, so prompts can be hashed
    without rasterizing.
    """

    def __init__(self, observation: Observation, markers: MarkerSet | None = None):
        self.observation = observation
        self.markers = markers

    def _inputs(self) -> dict:
        obs = self.observation
        marks = []
        if self.markers is not None:
            for m in self.markers.markers:
                c = m.candidate
                marks.append([m.marker_id, list(c.cell) if c.cell else None, c.kind, round(c.bearing, 6)])
        return {"obs": obs.to_dict(), "markers": marks}

    @property
    def digest(self) -> str:
        blob = json.dumps(self._inputs(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def array(self) -> np.ndarray:
        from PIL import Image, ImageDraw

        obs = self.observation
        r0, c0 = obs.robot_cell[0] - _CROP, obs.robot_cell[1] - _CROP
        size = (2 * _CROP + 1) * _PX
        img = Image.new("RGB", (size, size), (0, 0, 0))
        draw = ImageDraw.Draw(img)
        if obs.grid is not None:
            g = obs.grid
            for r in range(2 * _CROP + 1):
                for c in range(2 * _CROP + 1):
                    gr, gc = r0 + r, c0 + c
                    if 0 <= gr < g.shape[0] and 0 <= gc < g.shape[1]:
                        color = _COLORS[int(g[gr, gc])]
                        draw.rectangle([c * _PX, r * _PX, (c + 1) * _PX - 1, (r + 1) * _PX - 1], fill=color)

        def box(cell, color):
            r, c = cell[0] - r0, cell[1] - c0
            draw.rectangle([c * _PX + 1, r * _PX + 1, (c + 1) * _PX - 2, (r + 1) * _PX - 2], fill=color)

        for d in obs.detections:
            box(d.cell, _KIND_COLORS.get(d.kind, (200, 0, 200)))
        box(obs.robot_cell, (40, 90, 220))
        if self.markers is not None:
            for m in self.markers.markers:
                cell = m.candidate.cell
                if cell is None:
                    # direction / side markers are drawn as arrow endpoints around the robot
                    dr, dc = _arrow_offset(obs.robot_heading, m.candidate.bearing)
                    cell = (obs.robot_cell[0] + dr, obs.robot_cell[1] + dc)
                x, y = (cell[1] - c0) * _PX, (cell[0] - r0) * _PX
                draw.text((x + 1, y - 2), str(m.marker_id), fill=(0, 0, 255))
        return np.asarray(img)

    def png(self) -> bytes:
        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(self.array()).save(buf, format="PNG")
        return buf.getvalue()


def _arrow_offset(heading: str, bearing: float) -> Cell:
    fr, fc = HEADINGS[heading]
    rr, rc = HEADINGS[CLOCKWISE[heading]]
    a = math.radians(bearing)
    f, r = math.cos(a) * 2, math.sin(a) * 2
    return round(f * fr + r * rr), round(f * fc + r * rc)
