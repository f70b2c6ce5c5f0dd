"""Procedural generation of the three environments.

* ``collect``: a walled grid where balls are scattered around a handful of
  mode centers (Gaussian offsets, rejection-sampled onto free cells); the
  centers themselves are rejection-sampled to respect a minimum pairwise
  distance.
* ``lava_crossing``: a 9x9 grid with two full lava streams (one vertical,
  one horizontal), each pierced by one gap; layouts are resampled until a
  safe path from start to goal exists.
* ``door_key``: an 8x8 grid split by a wall with one locked door; key and
  agent start on one side, the goal on the other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import (CELL_BALL, CELL_DOOR_LOCKED, CELL_EMPTY, CELL_GOAL, CELL_KEY,
                   CELL_LAVA, CELL_WALL, ENV_COLLECT, ENV_DOOR_KEY,
                   ENV_LAVA_CROSSING, GridState, egocentric_view)

MAX_REJECTION_ATTEMPTS = 10 ** 5


class GenerationError(ValueError):
    """Raised when rejection sampling cannot satisfy the configuration."""


@dataclass
class CollectConfig:
    grid_size: int = 15
    view_size: int = 5
    n_modes: int = 2
    min_mode_dist: float = 10.0
    n_balls: int = 12
    sigma: float = 2.0
    max_steps: int = 150


@dataclass
class EnvSpec:
    """Environment id plus its generation parameters."""

    env_id: str
    max_steps: int = 150
    view_size: int = 7
    collect: CollectConfig | None = None

    @classmethod
    def for_collect(cls, cfg: CollectConfig | None = None) -> "EnvSpec":
        cfg = cfg or CollectConfig()
        return cls(env_id=ENV_COLLECT, max_steps=cfg.max_steps,
                   view_size=cfg.view_size, collect=cfg)

    @classmethod
    def for_crossing(cls, max_steps: int = 150) -> "EnvSpec":
        return cls(env_id=ENV_LAVA_CROSSING, max_steps=max_steps)

    @classmethod
    def for_doorkey(cls, max_steps: int = 150) -> "EnvSpec":
        return cls(env_id=ENV_DOOR_KEY, max_steps=max_steps)


def _walled_grid(width: int, height: int) -> np.ndarray:
    cells = np.full((height, width), CELL_EMPTY, dtype=np.int8)
    cells[0, :] = CELL_WALL
    cells[-1, :] = CELL_WALL
    cells[:, 0] = CELL_WALL
    cells[:, -1] = CELL_WALL
    return cells


def _sample_mode_centers(cfg: CollectConfig, rng: np.random.Generator):
    size = cfg.grid_size
    for _ in range(MAX_REJECTION_ATTEMPTS):
        centers = [(int(rng.integers(1, size - 1)), int(rng.integers(1, size - 1)))
                   for _ in range(cfg.n_modes)]
        ok = all(
            np.hypot(a[0] - b[0], a[1] - b[1]) >= cfg.min_mode_dist
            for i, a in enumerate(centers) for b in centers[i + 1:]
        )
        if ok:
            return centers
    raise GenerationError(
        f"could not place {cfg.n_modes} mode centers at pairwise distance "
        f">= {cfg.min_mode_dist} on a {size}x{size} grid "
        f"within {MAX_REJECTION_ATTEMPTS} attempts")


def gen_collect(cfg: CollectConfig, rng: np.random.Generator) -> GridState:
    size = cfg.grid_size
    cells = _walled_grid(size, size)
    centers = _sample_mode_centers(cfg, rng)
    agent_x = int(rng.integers(1, size - 1))
    agent_y = int(rng.integers(1, size - 1))
    heading = int(rng.integers(0, 4))

    placed = 0
    attempts = 0
    while placed < cfg.n_balls:
        attempts += 1
        if attempts > MAX_REJECTION_ATTEMPTS:
            raise GenerationError(
                f"could not scatter {cfg.n_balls} balls around the modes "
                f"within {MAX_REJECTION_ATTEMPTS} attempts")
        cx, cy = centers[int(rng.integers(0, cfg.n_modes))]
        dx, dy = rng.normal(0.0, cfg.sigma, size=2)
        bx, by = int(round(cx + dx)), int(round(cy + dy))
        if not (1 <= bx < size - 1 and 1 <= by < size - 1):
            continue
        if cells[by, bx] != CELL_EMPTY or (bx, by) == (agent_x, agent_y):
            continue
        cells[by, bx] = CELL_BALL
        placed += 1

    return GridState(env_id=ENV_COLLECT, width=size, height=size, cells=cells,
                     x=agent_x, y=agent_y, heading=heading,
                     view_size=cfg.view_size, max_steps=cfg.max_steps,
                     balls_remaining=cfg.n_balls, mode_centers=centers)


def _crossing_layout(rng: np.random.Generator):
    """One vertical and one horizontal lava stream with one gap each; the
    order of the two orientations is randomized."""
    size = 9
    vertical_first = bool(rng.integers(0, 2))
    col = int(rng.integers(2, size - 2))
    gap_row = int(rng.integers(1, size - 1))
    row = int(rng.integers(2, size - 2))
    gap_col = int(rng.integers(1, size - 1))
    v_stream = {(col, y) for y in range(1, size - 1)} - {(col, gap_row)}
    h_stream = {(x, row) for x in range(1, size - 1)} - {(gap_col, row)}
    return (v_stream | h_stream) if vertical_first else (h_stream | v_stream)


def _crossing_solvable(cells: np.ndarray, start, goal) -> bool:
    height, width = cells.shape
    seen = {start}
    frontier = [start]
    while frontier:
        x, y = frontier.pop()
        if (x, y) == goal:
            return True
        for nx, ny in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            if (nx, ny) in seen:
                continue
            if cells[ny, nx] in (CELL_EMPTY, CELL_GOAL):
                seen.add((nx, ny))
                frontier.append((nx, ny))
    return False


def gen_lava_crossing(rng: np.random.Generator, max_steps: int = 150) -> GridState:
    size = 9
    for _ in range(MAX_REJECTION_ATTEMPTS):
        cells = _walled_grid(size, size)
        for x, y in _crossing_layout(rng):
            cells[y, x] = CELL_LAVA
        cells[size - 2, size - 2] = CELL_GOAL
        if _crossing_solvable(cells, (1, 1), (size - 2, size - 2)):
            return GridState(env_id=ENV_LAVA_CROSSING, width=size, height=size,
                             cells=cells, x=1, y=1, heading=1,  # top-left, facing east
                             view_size=7, max_steps=max_steps)
    raise GenerationError("could not generate a solvable crossing layout")


def gen_doorkey(rng: np.random.Generator, max_steps: int = 150) -> GridState:
    size = 8
    cells = _walled_grid(size, size)
    split = int(rng.integers(2, size - 2))        # dividing wall column
    door_y = int(rng.integers(1, size - 1))
    cells[1:size - 1, split] = CELL_WALL
    cells[door_y, split] = CELL_DOOR_LOCKED
    cells[size - 2, size - 2] = CELL_GOAL

    def left_cell():
        return int(rng.integers(1, split)), int(rng.integers(1, size - 1))

    key_x, key_y = left_cell()
    cells[key_y, key_x] = CELL_KEY
    while True:
        agent_x, agent_y = left_cell()
        if (agent_x, agent_y) != (key_x, key_y):
            break
    heading = int(rng.integers(0, 4))

    return GridState(env_id=ENV_DOOR_KEY, width=size, height=size, cells=cells,
                     x=agent_x, y=agent_y, heading=heading, view_size=7,
                     max_steps=max_steps, door_pos=(split, door_y))


def reset(spec: EnvSpec, rng: np.random.Generator):
    """Fresh episode: returns (state, first observation)."""
    if spec.env_id == ENV_COLLECT:
        state = gen_collect(spec.collect or CollectConfig(max_steps=spec.max_steps),
                            rng)
    elif spec.env_id == ENV_LAVA_CROSSING:
        state = gen_lava_crossing(rng, max_steps=spec.max_steps)
    elif spec.env_id == ENV_DOOR_KEY:
        state = gen_doorkey(rng, max_steps=spec.max_steps)
    else:
        raise ValueError(f"unknown environment id {spec.env_id!r}")
    return state, egocentric_view(state)
