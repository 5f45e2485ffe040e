"""ASCII mazes with wall-bump damage, as an episodic env and as an exact model.

State numbering for a maze with ``n`` non-goal open cells (``.`` and ``S``)::

    0 .. n-1   open cells in row-major order
    n          goal (absorbing, zero reward afterwards)
    n + 1      damage state s_D (absorbing)

Actions are ``0=up, 1=down, 2=right, 3=left``.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

from .cmdp import Outcome, TabularCmdp

UP, DOWN, RIGHT, LEFT = 0, 1, 2, 3
ACTIONS = (UP, DOWN, RIGHT, LEFT)
ACTION_NAMES = ("up", "down", "right", "left")
_MOVES = ((0, -1), (0, 1), (1, 0), (-1, 0))

GOAL_REWARD = 10.0
DEFAULT_STEP_CAP = 100


class MazeParseError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class RestartMode(str, Enum):
    PRECEDING_STATE = "preceding"
    FIXED_START = "fixed"


@dataclass(frozen=True)
class MazeSpec:
    width: int
    height: int
    rows: tuple[str, ...]
    start: tuple[int, int]
    goal: tuple[int, int]

    def cell(self, x: int, y: int) -> str:
        if not (0 <= x < self.width and 0 <= y < self.height):
            return "#"
        return self.rows[y][x]

    @property
    def open_cells(self) -> list[tuple[int, int]]:
        """Non-goal walkable cells in row-major order (their state ids)."""
        return [
            (x, y)
            for y in range(self.height)
            for x in range(self.width)
            if self.rows[y][x] in ".S"
        ]

    def __str__(self) -> str:
        return "\n".join(self.rows)


def parse_maze(text: str) -> MazeSpec:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    lines = [ln.rstrip("\r") for ln in lines]
    if not lines or not lines[0]:
        raise MazeParseError("empty maze", 1, 1)
    width = len(lines[0])
    start = goal = None
    for y, row in enumerate(lines):
        if len(row) != width:
            raise MazeParseError(
                f"ragged rows: expected width {width}, got {len(row)}", y + 1, min(len(row), width) + 1
            )
        for x, ch in enumerate(row):
            if ch not in "#.SG":
                raise MazeParseError(f"illegal character {ch!r}", y + 1, x + 1)
            if ch == "S":
                if start is not None:
                    raise MazeParseError("multiple Start cells", y + 1, x + 1)
                start = (x, y)
            elif ch == "G":
                if goal is not None:
                    raise MazeParseError("multiple Goal cells", y + 1, x + 1)
                goal = (x, y)
    if start is None:
        raise MazeParseError("no Start cell", len(lines), 1)
    if goal is None:
        raise MazeParseError("no Goal cell", len(lines), 1)
    return MazeSpec(width, len(lines), tuple(lines), start, goal)


def load_maze(path: str | Path) -> MazeSpec:
    return parse_maze(Path(path).read_text(encoding="utf-8"))


def shipped_maze() -> MazeSpec:
    """The shipped corridor-versus-detour maze."""
    return parse_maze(resources.files("assured_rl.data").joinpath("paper_maze.txt").read_text("utf-8"))


class _Layout:
    """Precomputed deterministic successor table shared by env and export."""

    def __init__(self, spec: MazeSpec):
        self.spec = spec
        self.cells = spec.open_cells
        self.index = {c: i for i, c in enumerate(self.cells)}
        self.goal_state = len(self.cells)
        self.damage_state = len(self.cells) + 1
        self.n_states = len(self.cells) + 2
        self.start_state = self.index[spec.start]
        # succ[s][a] = (s_next, reward, damage) for open cells
        self.succ: list[tuple[tuple[int, float, int], ...]] = []
        for x, y in self.cells:
            row = []
            for dx, dy in _MOVES:
                ch = spec.cell(x + dx, y + dy)
                if ch == "#":
                    row.append((self.damage_state, 0.0, 1))
                elif ch == "G":
                    row.append((self.goal_state, GOAL_REWARD, 0))
                else:
                    row.append((self.index[(x + dx, y + dy)], 0.0, 0))
            self.succ.append(tuple(row))


class GridEnv:
    """Episodic maze.  A bump ends the episode in ``s_D`` with ``d = 1``.

    After a bump, ``reset`` resumes from the cell the agent bumped from when
    ``restart_mode`` is PRECEDING_STATE; goal, truncation, and FIXED_START
    always go back to Start.  With ``exploring_starts`` every reset draws a
    uniformly random open cell instead.
    """

    n_actions = 4

    def __init__(
        self,
        spec: MazeSpec,
        step_cap: int = DEFAULT_STEP_CAP,
        restart_mode: RestartMode = RestartMode.PRECEDING_STATE,
        exploring_starts: bool = False,
    ):
        self.spec = spec
        self.step_cap = step_cap
        self.restart_mode = RestartMode(restart_mode)
        self.exploring_starts = exploring_starts
        self._layout = _Layout(spec)
        self.n_states = self._layout.n_states
        self.goal_state = self._layout.goal_state
        self.damage_state = self._layout.damage_state
        self.start_state = self._layout.start_state
        self.terminal_states = frozenset((self.goal_state, self.damage_state))
        self.current = self.start_state
        self.previous = self.start_state
        self.steps_this_episode = 0
        self.done = False
        self._bumped = False

    def reset(self, rng: random.Random | None = None) -> int:
        if self.exploring_starts:
            if rng is None:
                raise ValueError("exploring starts need a random source")
            s = rng.randrange(len(self._layout.cells))
        elif self._bumped and self.restart_mode is RestartMode.PRECEDING_STATE:
            s = self.previous
        else:
            s = self.start_state
        self.current = self.previous = s
        self.steps_this_episode = 0
        self.done = False
        self._bumped = False
        return s

    def step(self, a: int) -> tuple[int, float, int, bool]:
        if self.done:
            raise RuntimeError("step() called on a finished episode; call reset() first")
        if not 0 <= a < 4:
            raise ValueError(f"action {a} out of range")
        s = self.current
        s_next, r, d = self._layout.succ[s][a]
        self.steps_this_episode += 1
        self.previous = s
        self.current = s_next
        if d:
            self._bumped = True
            self.done = True
        elif s_next == self.goal_state or self.steps_this_episode >= self.step_cap:
            self.done = True
        return s_next, r, d, self.done

    def cell_of(self, s: int) -> tuple[int, int] | None:
        if s < len(self._layout.cells):
            return self._layout.cells[s]
        if s == self.goal_state:
            return self.spec.goal
        return None

    def state_of(self, cell: tuple[int, int]) -> int:
        if cell == self.spec.goal:
            return self.goal_state
        return self._layout.index[cell]


def to_cmdp(spec: MazeSpec, restart_mode: RestartMode = RestartMode.PRECEDING_STATE) -> TabularCmdp:
    """Exact deterministic model of the maze with a point-mass start on Start.

    ``restart_mode`` shapes episodes, not one-step dynamics, so the exported
    kernel does not depend on it; it is accepted for interface symmetry.
    """
    RestartMode(restart_mode)
    lay = _Layout(spec)
    table = []
    for row in lay.succ:
        table.append([[Outcome(1.0, s_next, r, d)] for s_next, r, d in row])
    for terminal in (lay.goal_state, lay.damage_state):
        table.append([[Outcome(1.0, terminal, 0.0, 0)] for _ in ACTIONS])
    start = [0.0] * lay.n_states
    start[lay.start_state] = 1.0
    return TabularCmdp(
        lay.n_states, 4, lay.damage_state, table, start, terminal_states=(lay.goal_state,)
    )


def bump_pairs(spec: MazeSpec, reachable_only: bool = True) -> set[tuple[int, int]]:
    """Pairs ``(s, a)`` whose move hits a wall or the border.

    With ``reachable_only`` only cells reachable from Start without passing
    through the goal are counted.
    """
    lay = _Layout(spec)
    if reachable_only:
        cells = _reachable(lay)
    else:
        cells = set(range(len(lay.cells)))
    return {(s, a) for s in cells for a in ACTIONS if lay.succ[s][a][2] == 1}


def _reachable(lay: _Layout) -> set[int]:
    seen = {lay.start_state}
    queue = deque(seen)
    while queue:
        s = queue.popleft()
        for s_next, _, d in lay.succ[s]:
            if not d and s_next < len(lay.cells) and s_next not in seen:
                seen.add(s_next)
                queue.append(s_next)
    return seen


def shortest_path(spec: MazeSpec) -> list[tuple[int, int]]:
    """Breadth-first Start-to-Goal cell path (both ends included)."""
    lay = _Layout(spec)
    parent: dict[int, int | None] = {lay.start_state: None}
    queue = deque([lay.start_state])
    while queue:
        s = queue.popleft()
        for s_next, _, d in lay.succ[s]:
            if d or s_next in parent:
                continue
            parent[s_next] = s
            if s_next == lay.goal_state:
                queue.clear()
                break
            queue.append(s_next)
    if lay.goal_state not in parent:
        raise ValueError("goal is unreachable from start")
    path, s = [], lay.goal_state
    while s is not None:
        path.append(spec.goal if s == lay.goal_state else lay.cells[s])
        s = parent[s]
    return path[::-1]


def random_maze(width: int, height: int, wall_density: float, rng: random.Random) -> MazeSpec:
    """Random maze without a border row; off-grid moves are bumps anyway."""
    grid = [["#" if rng.random() < wall_density else "." for _ in range(width)] for _ in range(height)]
    cells = [(x, y) for y in range(height) for x in range(width)]
    (sx, sy), (gx, gy) = rng.sample(cells, 2)
    grid[sy][sx] = "S"
    grid[gy][gx] = "G"
    return parse_maze("\n".join("".join(r) for r in grid))
