"""Maze paths: text-grid mazes, path validation, DFS generation, BFS solving and the path prompt.

Cells are addressed by 1-based ``(row, col)`` pairs, matching the indices
drawn on the grid overlay.
"""

from __future__ import annotations

import json
import random
import re
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import InvalidInputError
from ..quantize import GridSpec
from ..raster import OverlayStyle, RasterImage, draw_grid
from .base import TaskAdapter, TaskInstance

WALL, CORRIDOR, START, GOAL = "#", ".", "S", "E"
Cell = tuple[int, int]

COLORS = {
    WALL: (0, 0, 0, 255),
    CORRIDOR: (40, 90, 230, 255),
    START: (0, 190, 0, 255),
    GOAL: (220, 0, 0, 255),
}


@dataclass(frozen=True)
class MazeModel:
    rows: tuple[str, ...]

    def __post_init__(self):
        rows = tuple(self.rows)
        object.__setattr__(self, "rows", rows)
        if len(rows) < 2 or any(len(r) != len(rows[0]) for r in rows) or len(rows[0]) < 2:
            raise InvalidInputError("maze must be a rectangular grid of at least 2x2")
        chars = "".join(rows)
        if set(chars) - {WALL, CORRIDOR, START, GOAL}:
            raise InvalidInputError(f"unexpected maze characters {set(chars) - set('#.SE')}")
        if chars.count(START) != 1 or chars.count(GOAL) != 1:
            raise InvalidInputError("maze needs exactly one S and one E")

    @classmethod
    def parse(cls, text: str) -> MazeModel:
        return cls(tuple(line.strip() for line in text.strip().splitlines() if line.strip()))

    @classmethod
    def load(cls, path: str | Path) -> MazeModel:
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    def dump(self) -> str:
        return "\n".join(self.rows) + "\n"

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def n_cols(self) -> int:
        return len(self.rows[0])

    def at(self, cell: Cell) -> str:
        r, c = cell
        return self.rows[r - 1][c - 1]

    def inside(self, cell: Cell) -> bool:
        r, c = cell
        return 1 <= r <= self.n_rows and 1 <= c <= self.n_cols

    def traversable(self, cell: Cell) -> bool:
        return self.inside(cell) and self.at(cell) != WALL

    def _find(self, ch: str) -> Cell:
        for r, row in enumerate(self.rows, start=1):
            c = row.find(ch)
            if c >= 0:
                return r, c + 1
        raise AssertionError("unreachable")

    @property
    def start(self) -> Cell:
        return self._find(START)

    @property
    def goal(self) -> Cell:
        return self._find(GOAL)

    def neighbours(self, cell: Cell) -> list[Cell]:
        r, c = cell
        return [n for n in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)) if self.traversable(n)]


def adjacent(a: Cell, b: Cell) -> bool:
    return abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1


@dataclass
class MazePath:
    """A path as a full cell sequence or as critical points (start, turns, end).

    ``checks`` optionally holds the per-step True/False corridor checks that
    came with the path, one per intermediate cell or one per cell.
    """

    cells: list[Cell] | None = None
    critical_points: list[Cell] | None = None
    checks: list[bool] | None = None

    def __post_init__(self):
        if (self.cells is None) == (self.critical_points is None):
            raise InvalidInputError("give exactly one of cells or critical_points")
        seq = self.cells if self.cells is not None else self.critical_points
        if not seq:
            raise InvalidInputError("path is empty")
        if self.cells is not None:
            self.cells = [tuple(c) for c in self.cells]
        else:
            self.critical_points = [tuple(c) for c in self.critical_points]

    def cell_sequence(self) -> list[Cell]:
        if self.cells is not None:
            return list(self.cells)
        return expand_critical_points(self.critical_points)


class StructuralError(InvalidInputError):
    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


def expand_critical_points(points: Sequence[Cell]) -> list[Cell]:
    """Unit steps along the axis-aligned segments joining consecutive points."""
    points = [tuple(p) for p in points]
    cells = [points[0]]
    for i in range(1, len(points)):
        (r0, c0), (r1, c1) = points[i - 1], points[i]
        if r0 != r1 and c0 != c1:
            raise StructuralError(f"critical points {i - 1} and {i} are not on a common row or column", i)
        dr = (r1 > r0) - (r1 < r0)
        dc = (c1 > c0) - (c1 < c0)
        r, c = r0, c0
        while (r, c) != (r1, c1):
            r, c = r + dr, c + dc
            cells.append((r, c))
    return cells


def extract_critical_points(cells: Sequence[Cell]) -> list[Cell]:
    """Start, every cell where the direction changes, and end."""
    cells = [tuple(c) for c in cells]
    if len(cells) <= 2:
        return cells
    out = [cells[0]]
    for prev, cur, nxt in zip(cells, cells[1:], cells[2:]):
        if (cur[0] - prev[0], cur[1] - prev[1]) != (nxt[0] - cur[0], nxt[1] - cur[1]):
            out.append(cur)
    out.append(cells[-1])
    return out


@dataclass(frozen=True)
class PathCheck:
    valid: bool
    step: int | None = None
    reason: str = ""
    structural: bool = False

    def __bool__(self):
        return self.valid


def validate_maze_path(maze: MazeModel, path: MazePath | Sequence[Cell]) -> PathCheck:
    """Check a path runs S to E through traversable, 4-adjacent cells.

    Returns the first violation. ``step`` indexes the cell sequence, or the
    critical point list when the critical points themselves are malformed.
    """
    if not isinstance(path, MazePath):
        path = MazePath(cells=list(path))
    try:
        cells = path.cell_sequence()
    except StructuralError as exc:
        return PathCheck(False, exc.index, str(exc), structural=True)
    if cells[0] != maze.start:
        return PathCheck(False, 0, f"path starts at {cells[0]}, not at S {maze.start}")
    for i in range(1, len(cells)):
        cur = cells[i]
        if not maze.inside(cur):
            return PathCheck(False, i, f"{cur} is outside the maze")
        if not adjacent(cells[i - 1], cur):
            return PathCheck(False, i, f"{cells[i - 1]} -> {cur} is not a single 4-neighbour step")
        if maze.at(cur) == WALL:
            return PathCheck(False, i, f"{cur} is a wall")
    if cells[-1] != maze.goal:
        return PathCheck(False, len(cells) - 1, f"path ends at {cells[-1]}, not at E {maze.goal}")
    return PathCheck(True)


# --------------------------------------------------------------------------
# generation and solving


def generate_maze(rows: int, cols: int, rng: random.Random | int | None = None) -> MazeModel:
    """Randomised depth-first carving on the odd lattice, walls on the border.

    S is the top-left carved cell and E the carved cell farthest from it, so
    the two are always connected.
    """
    if rows < 3 or cols < 3 or max(rows, cols) < 5:
        # fewer than two lattice cells would put S and E on the same square
        raise InvalidInputError("carved mazes need at least 3x5 or 5x3 cells")
    if not isinstance(rng, random.Random):
        rng = random.Random(rng)
    grid = [[WALL] * cols for _ in range(rows)]
    start = (1, 1)  # 0-based
    grid[1][1] = CORRIDOR
    stack = [start]
    while stack:
        r, c = stack[-1]
        options = [(r + dr, c + dc, r + dr // 2, c + dc // 2)
                   for dr, dc in ((-2, 0), (2, 0), (0, -2), (0, 2))
                   if 1 <= r + dr < rows - 1 and 1 <= c + dc < cols - 1 and grid[r + dr][c + dc] == WALL]
        if not options:
            stack.pop()
            continue
        nr, nc, wr, wc = rng.choice(options)
        grid[wr][wc] = CORRIDOR
        grid[nr][nc] = CORRIDOR
        stack.append((nr, nc))
    grid[1][1] = START
    dist = _bfs_distances(grid, (1, 1))
    far = max(dist, key=lambda cell: (dist[cell], -cell[0], -cell[1]))
    grid[far[0]][far[1]] = GOAL
    return MazeModel(tuple("".join(r) for r in grid))


def _bfs_distances(grid, src) -> dict:
    rows, cols = len(grid), len(grid[0])
    dist = {src: 0}
    q = deque([src])
    while q:
        r, c = q.popleft()
        for n in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= n[0] < rows and 0 <= n[1] < cols and grid[n[0]][n[1]] != WALL and n not in dist:
                dist[n] = dist[(r, c)] + 1
                q.append(n)
    return dist


def bfs_path(maze: MazeModel) -> list[Cell] | None:
    """Shortest S->E path as 1-based cells, or None if E is unreachable."""
    start, goal = maze.start, maze.goal
    prev = {start: None}
    q = deque([start])
    while q:
        cur = q.popleft()
        if cur == goal:
            break
        for n in maze.neighbours(cur):
            if n not in prev:
                prev[n] = cur
                q.append(n)
    if goal not in prev:
        return None
    path = [goal]
    while prev[path[-1]] is not None:
        path.append(prev[path[-1]])
    return path[::-1]


def render_maze(maze: MazeModel, cell_px: int = 10) -> RasterImage:
    """Colour-coded maze image: S green, E red, corridor blue, walls black."""
    px = np.zeros((maze.n_rows * cell_px, maze.n_cols * cell_px, 4), dtype=np.uint8)
    for r, row in enumerate(maze.rows):
        for c, ch in enumerate(row):
            px[r * cell_px:(r + 1) * cell_px, c * cell_px:(c + 1) * cell_px] = COLORS[ch]
    return RasterImage(px)


def maze_overlay(maze: MazeModel, cell_px: int = 10, style: OverlayStyle | None = None) -> RasterImage:
    img = render_maze(maze, cell_px)
    spec = GridSpec(maze.n_rows, maze.n_cols, img.width, img.height)
    return draw_grid(img, spec, style or OverlayStyle(line_thickness=1, index_labels=cell_px >= 12))


# --------------------------------------------------------------------------
# prompting


PATH_PROMPT = (
    "The image shows a maze on a {rows}x{cols} grid with 1-based (row, col) cell indices. "
    "The start cell S is green, the goal E is red, corridor cells are blue and walls are black. "
    "Find a path from S to E moving one cell up, down, left or right at a time through corridor cells.\n"
    "Reply with JSON only: {{\"path\": [[row, col], ...]}} listing every cell on the path from S to E."
)
CHECKS_SUFFIX = (
    "\nAlso include \"checks\": a list parallel to \"path\" where entry i answers True or False to: "
    "is cell i on the proposed path blue (or the S/E endpoint)? "
    "Reply as {\"path\": [[row, col], ...], \"checks\": [true, ...]}."
)


def maze_prompt(rows: int, cols: int, with_checks: bool = True) -> str:
    """Path request for a gridded maze image; ``with_checks`` adds per-step True/False checks."""
    text = PATH_PROMPT.format(rows=rows, cols=cols)
    return text + CHECKS_SUFFIX if with_checks else text


@dataclass
class MazeReply:
    path: MazePath | None
    parse_failure: bool = False
    self_rejected: bool = False
    reason: str = ""


def _json_object(raw: str):
    start, end = raw.find("{"), raw.rfind("}")
    if start < 0 or end <= start:
        raise ValueError("no JSON object in reply")
    return json.loads(raw[start:end + 1])


def _as_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    if isinstance(v, str) and v.strip().lower() in ("true", "false"):
        return v.strip().lower() == "true"
    raise ValueError(f"check value {v!r} is not True/False")


def parse_maze_reply(raw: str, expect_checks: bool = True) -> MazeReply:
    """Parse a ``{"path": ..., "checks": ...}`` reply.

    Any False check marks the attempt self-rejected. Missing or misaligned
    checks (when expected) and malformed paths are parse failures.
    """
    try:
        obj = _json_object(raw)
        cells = [tuple(int(v) for v in cell) for cell in obj["path"]]
        if not cells or any(len(c) != 2 for c in cells):
            raise ValueError("path cells must be [row, col] pairs")
        checks = None
        if expect_checks:
            if "checks" not in obj:
                raise ValueError("missing checks list")
            checks = [_as_bool(v) for v in obj["checks"]]
            if len(checks) not in (len(cells), max(0, len(cells) - 2)):
                raise ValueError(f"{len(checks)} checks for a {len(cells)}-cell path")
        path = MazePath(cells=cells, checks=checks)
    except (ValueError, KeyError, TypeError, InvalidInputError) as exc:
        return MazeReply(None, parse_failure=True, reason=str(exc))
    rejected = bool(checks) and not all(checks)
    return MazeReply(path, self_rejected=rejected, reason="a per-step check answered False" if rejected else "")


def score_maze_reply(maze: MazeModel, reply: MazeReply) -> tuple[bool, dict]:
    if reply.parse_failure:
        return False, {"parse_failure": True, "reason": reply.reason}
    if reply.self_rejected:
        return False, {"self_rejected": True}
    check = validate_maze_path(maze, reply.path)
    return check.valid, {"step": check.step, "reason": check.reason}


class MazeAdapter(TaskAdapter):
    """Maze items have no shortlist; the harness calls :meth:`prompt` and :meth:`score` directly."""

    kind = "spatial-maze"

    def maze(self, inst: TaskInstance) -> MazeModel:
        return inst.source["maze"]

    def prompt(self, inst: TaskInstance, with_checks: bool) -> str:
        m = self.maze(inst)
        return maze_prompt(m.n_rows, m.n_cols, with_checks)

    def score(self, inst: TaskInstance, raw: str, with_checks: bool) -> tuple[bool, dict]:
        return score_maze_reply(self.maze(inst), parse_maze_reply(raw, with_checks))
