"""Gridworld mechanics shared by the three environments.

Grids are arrays of cell codes indexed ``cells[y, x]`` with (0, 0) at the
top-left; the border is always wall. The agent occupies one cell with a
heading and may carry one item. Observations are egocentric crops with
the agent at the bottom-center facing up, encoded as a
view x view x 3 integer tensor (cell kind, color, state).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# cell codes (grid storage)
CELL_EMPTY = 0
CELL_WALL = 1
CELL_BALL = 2
CELL_LAVA = 3
CELL_KEY = 4
CELL_DOOR_LOCKED = 5
CELL_DOOR_OPEN = 6
CELL_GOAL = 7

# observation channel 0: kind ids (doors collapse to one kind; channel 2
# carries the lock state)
KIND_EMPTY = 0
KIND_WALL = 1
KIND_BALL = 2
KIND_LAVA = 3
KIND_KEY = 4
KIND_DOOR = 5
KIND_GOAL = 6

# observation channel 2: state ids
STATE_NONE = 0
STATE_OPEN = 1
STATE_LOCKED = 2

_KIND_OF_CELL = np.array([KIND_EMPTY, KIND_WALL, KIND_BALL, KIND_LAVA,
                          KIND_KEY, KIND_DOOR, KIND_DOOR, KIND_GOAL], dtype=np.int8)
# single fixed palette: 0 none, 1 grey, 2 blue, 3 red, 4 yellow, 5 green
_COLOR_OF_CELL = np.array([0, 1, 2, 3, 4, 4, 4, 5], dtype=np.int8)
_STATE_OF_CELL = np.array([STATE_NONE, STATE_NONE, STATE_NONE, STATE_NONE,
                           STATE_NONE, STATE_LOCKED, STATE_OPEN, STATE_NONE],
                          dtype=np.int8)

# headings: 0 north, 1 east, 2 south, 3 west (y grows downward)
HEADING_N, HEADING_E, HEADING_S, HEADING_W = 0, 1, 2, 3
_DX = (0, 1, 0, -1)
_DY = (-1, 0, 1, 0)

# actions; each environment exposes a prefix of this list
ACT_LEFT = 0
ACT_RIGHT = 1
ACT_FORWARD = 2
ACT_PICKUP = 3
ACT_TOGGLE = 4

ENV_COLLECT = "collect"
ENV_LAVA_CROSSING = "lava_crossing"
ENV_DOOR_KEY = "door_key"

ACTION_COUNT = {ENV_COLLECT: 4, ENV_LAVA_CROSSING: 3, ENV_DOOR_KEY: 5}

NO_ITEM = -1

# forward movement is blocked by these (lava and goal are enterable)
_BLOCKING = {CELL_WALL, CELL_BALL, CELL_KEY, CELL_DOOR_LOCKED}

_RENDER_CHARS = {CELL_EMPTY: ".", CELL_WALL: "#", CELL_BALL: "o", CELL_LAVA: "~",
                 CELL_KEY: "k", CELL_DOOR_LOCKED: "D", CELL_DOOR_OPEN: "d",
                 CELL_GOAL: "G"}
_AGENT_CHARS = "^>v<"


@dataclass
class GridState:
    env_id: str
    width: int
    height: int
    cells: np.ndarray
    x: int
    y: int
    heading: int
    view_size: int
    max_steps: int
    carrying: int = NO_ITEM
    step_count: int = 0
    terminated: bool = False
    truncated: bool = False
    balls_remaining: int = 0
    mode_centers: list[tuple[int, int]] = field(default_factory=list)
    door_pos: tuple[int, int] | None = None

    @property
    def action_count(self) -> int:
        return ACTION_COUNT[self.env_id]

    @property
    def done(self) -> bool:
        return self.terminated or self.truncated


@dataclass
class EnvOutcome:
    obs: np.ndarray
    reward: float
    terminated: bool
    truncated: bool
    info: dict


_VIEW_GRIDS: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}


def _view_offsets(view_size: int, heading: int):
    """World-coordinate offsets for each view cell, cached per heading."""
    key = (view_size, heading)
    if key not in _VIEW_GRIDS:
        half = view_size // 2
        rows, cols = np.mgrid[0:view_size, 0:view_size]
        fwd = (view_size - 1) - rows        # cells in front of the agent
        lat = cols - half                   # cells to the agent's right
        fx, fy = _DX[heading], _DY[heading]
        right = (heading + 1) % 4
        rx, ry = _DX[right], _DY[right]
        _VIEW_GRIDS[key] = (fwd * fx + lat * rx, fwd * fy + lat * ry)
    return _VIEW_GRIDS[key]


def egocentric_view(state: GridState, view_size: int | None = None) -> np.ndarray:
    """Agent-centered partial view; out-of-grid cells read as wall, and the
    agent's own cell shows the carried item (or empty)."""
    v = state.view_size if view_size is None else view_size
    if v % 2 != 1:
        raise ValueError(f"view size must be odd, got {v}")
    off_x, off_y = _view_offsets(v, state.heading)
    wx = state.x + off_x
    wy = state.y + off_y
    inside = (wx >= 0) & (wx < state.width) & (wy >= 0) & (wy < state.height)
    crop = np.full((v, v), CELL_WALL, dtype=np.int8)
    crop[inside] = state.cells[wy[inside], wx[inside]]
    crop[v - 1, v // 2] = state.carrying if state.carrying != NO_ITEM else CELL_EMPTY
    view = np.empty((v, v, 3), dtype=np.int8)
    view[..., 0] = _KIND_OF_CELL[crop]
    view[..., 1] = _COLOR_OF_CELL[crop]
    view[..., 2] = _STATE_OF_CELL[crop]
    return view


def forward_cell(state: GridState) -> tuple[int, int]:
    return state.x + _DX[state.heading], state.y + _DY[state.heading]


def success_reward(state: GridState) -> float:
    return 1.0 - 0.9 * state.step_count / state.max_steps


def step(state: GridState, action: int) -> EnvOutcome:
    """Advance the environment by one action; mutates ``state``."""
    if state.done:
        raise RuntimeError("cannot act on a finished episode")
    if not 0 <= action < state.action_count:
        raise ValueError(f"action {action} invalid for {state.env_id} "
                         f"({state.action_count} actions)")
    state.step_count += 1
    reward = 0.0
    info: dict = {}

    if action == ACT_LEFT:
        state.heading = (state.heading - 1) % 4
    elif action == ACT_RIGHT:
        state.heading = (state.heading + 1) % 4
    elif action == ACT_FORWARD:
        tx, ty = forward_cell(state)
        target = state.cells[ty, tx]
        if target not in _BLOCKING:
            state.x, state.y = tx, ty
            if target == CELL_LAVA:
                state.terminated = True
                info["lava_death"] = True
            elif target == CELL_GOAL:
                state.terminated = True
                reward = success_reward(state)
                info["success"] = True
    elif action == ACT_PICKUP:
        tx, ty = forward_cell(state)
        target = state.cells[ty, tx]
        if target == CELL_BALL:
            state.cells[ty, tx] = CELL_EMPTY
            state.balls_remaining -= 1
            reward = 1.0
            info["picked_ball_at"] = (tx, ty)
            if state.balls_remaining == 0:
                state.terminated = True
                info["success"] = True
        elif target == CELL_KEY and state.carrying == NO_ITEM:
            state.cells[ty, tx] = CELL_EMPTY
            state.carrying = CELL_KEY
            info["picked_key"] = True
    elif action == ACT_TOGGLE:
        tx, ty = forward_cell(state)
        if state.cells[ty, tx] == CELL_DOOR_LOCKED and state.carrying == CELL_KEY:
            state.cells[ty, tx] = CELL_DOOR_OPEN
            info["opened_door"] = True

    if not state.terminated and state.step_count >= state.max_steps:
        state.truncated = True

    return EnvOutcome(obs=egocentric_view(state), reward=reward,
                      terminated=state.terminated, truncated=state.truncated,
                      info=info)


def render(state: GridState) -> str:
    """Deterministic ASCII dump, one character per cell."""
    lines = []
    for y in range(state.height):
        row = [_RENDER_CHARS[int(c)] for c in state.cells[y]]
        if y == state.y:
            row[state.x] = _AGENT_CHARS[state.heading]
        lines.append("".join(row))
    return "\n".join(lines)


def parse(text: str, env_id: str, *, view_size: int = 7, max_steps: int = 150) -> GridState:
    """Inverse of render(); the agent character carries its heading."""
    rows = [line for line in text.strip("\n").splitlines()]
    height, width = len(rows), len(rows[0])
    chars_to_cell = {c: k for k, c in _RENDER_CHARS.items()}
    cells = np.zeros((height, width), dtype=np.int8)
    pose = None
    balls = 0
    door = None
    for y, line in enumerate(rows):
        for x, ch in enumerate(line):
            if ch in _AGENT_CHARS:
                pose = (x, y, _AGENT_CHARS.index(ch))
                cells[y, x] = CELL_EMPTY
                continue
            cells[y, x] = chars_to_cell[ch]
            if cells[y, x] == CELL_BALL:
                balls += 1
            elif cells[y, x] in (CELL_DOOR_LOCKED, CELL_DOOR_OPEN):
                door = (x, y)
    if pose is None:
        raise ValueError("map has no agent character (^ > v <)")
    return GridState(env_id=env_id, width=width, height=height, cells=cells,
                     x=pose[0], y=pose[1], heading=pose[2], view_size=view_size,
                     max_steps=max_steps, balls_remaining=balls, door_pos=door)
