"""Small helpers shared by the world model and the planners."""

from __future__ import annotations

from collections import deque
from typing import Iterator

import numpy as np

Cell = tuple[int, int]

FREE, WALL, STATIC = 0, 1, 2

# row/col deltas; rows grow southward
HEADINGS: dict[str, Cell] = {"N": (-1, 0), "E": (0, 1), "S": (1, 0), "W": (0, -1)}
CLOCKWISE = {"N": "E", "E": "S", "S": "W", "W": "N"}
COUNTER_CLOCKWISE = {v: k for k, v in CLOCKWISE.items()}
OPPOSITE = {"N": "S", "S": "N", "E": "W", "W": "E"}


def frame_to_world(heading: str, direction: str) -> str:
    """Map a camera-frame direction to a world heading."""
    if direction == "forward":
        return heading
    if direction == "right":
        return CLOCKWISE[heading]
    if direction == "left":
        return COUNTER_CLOCKWISE[heading]
    if direction == "backward":
        return OPPOSITE[heading]
    raise ValueError(f"unknown direction {direction!r}")


def world_to_frame(heading: str, world: str) -> str:
    for d in ("forward", "left", "right", "backward"):
        if frame_to_world(heading, d) == world:
            return d
    raise ValueError(world)


def heading_between(a: Cell, b: Cell) -> str:
    """Cardinal heading that best points from cell a to cell b."""
    dr, dc = b[0] - a[0], b[1] - a[1]
    if abs(dr) >= abs(dc) and dr != 0:
        return "S" if dr > 0 else "N"
    return "E" if dc > 0 else "W"


def neighbors4(cell: Cell, shape: tuple[int, int]) -> Iterator[Cell]:
    r, c = cell
    # fixed expansion order keeps every search deterministic
    for dr, dc in ((-1, 0), (0, -1), (0, 1), (1, 0)):
        nr, nc = r + dr, c + dc
        if 0 <= nr < shape[0] and 0 <= nc < shape[1]:
            yield nr, nc


def bfs_distances(blocked: np.ndarray, start: Cell) -> dict[Cell, int]:
    """Unit-cost 4-connected distances from ``start`` over unblocked cells."""
    if blocked[start]:
        return {}
    dist = {start: 0}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        for nxt in neighbors4(cur, blocked.shape):
            if nxt not in dist and not blocked[nxt]:
                dist[nxt] = dist[cur] + 1
                queue.append(nxt)
    return dist


def cell_center(cell: Cell, cell_size: float) -> tuple[float, float]:
    """(x, y) of a cell center in meters; x follows columns, y follows rows."""
    return ((cell[1] + 0.5) * cell_size, (cell[0] + 0.5) * cell_size)
