"""Independent oracles shared by the unit and acceptance tests.

These deliberately avoid the package's action-proposal / training code:
path finding is a plain breadth-first search over the raw grid, and the
scripted solvers plan from full state.
"""

import numpy as np

from qarbiter.envs import (ACT_FORWARD, ACT_LEFT, ACT_PICKUP, ACT_RIGHT,
                           ACT_TOGGLE, CELL_DOOR_LOCKED, CELL_DOOR_OPEN,
                           CELL_EMPTY, CELL_GOAL, CELL_KEY, step)

_DX = (0, 1, 0, -1)
_DY = (-1, 0, 1, 0)


def bfs_path(cells, start, goals, passable):
    """Shortest 4-neighbor path from start to any goal cell, walking only
    cells whose code is in ``passable``. Returns the cell list or None."""
    goals = set(goals)
    prev = {start: None}
    frontier = [start]
    while frontier:
        nxt = []
        for x, y in frontier:
            if (x, y) in goals:
                path = [(x, y)]
                while prev[path[-1]] is not None:
                    path.append(prev[path[-1]])
                return path[::-1]
            for d in range(4):
                nb = (x + _DX[d], y + _DY[d])
                if nb in prev:
                    continue
                if nb in goals or cells[nb[1], nb[0]] in passable:
                    prev[nb] = (x, y)
                    nxt.append(nb)
        frontier = nxt
    return None


def flood_reachable(cells, start, passable):
    seen = {start}
    frontier = [start]
    while frontier:
        x, y = frontier.pop()
        for d in range(4):
            nb = (x + _DX[d], y + _DY[d])
            if nb not in seen and cells[nb[1], nb[0]] in passable:
                seen.add(nb)
                frontier.append(nb)
    return seen


class Planner:
    """Turn cell paths into (left/right/forward) action sequences while
    tracking the pose."""

    def __init__(self, x, y, heading):
        self.x, self.y, self.heading = x, y, heading
        self.actions = []

    def rotate_to(self, heading):
        diff = (heading - self.heading) % 4
        if diff == 1:
            self.actions.append(ACT_RIGHT)
        elif diff == 3:
            self.actions.append(ACT_LEFT)
        elif diff == 2:
            self.actions.extend([ACT_RIGHT, ACT_RIGHT])
        self.heading = heading

    def face(self, cell):
        dx, dy = cell[0] - self.x, cell[1] - self.y
        self.rotate_to({(0, -1): 0, (1, 0): 1, (0, 1): 2, (-1, 0): 3}[(dx, dy)])

    def walk(self, path):
        for cell in path[1:]:
            self.face(cell)
            self.actions.append(ACT_FORWARD)
            self.x, self.y = cell


def plan_doorkey_solution(state):
    """Action list solving a door-key instance: reach the key, pick it up,
    open the door, reach the goal. Returns None if planning fails."""
    cells = state.cells
    key_pos = tuple(int(v) for v in np.argwhere(cells == CELL_KEY)[0][::-1])
    door_pos = state.door_pos
    goal_pos = tuple(int(v) for v in np.argwhere(cells == CELL_GOAL)[0][::-1])
    planner = Planner(state.x, state.y, state.heading)

    def neighbors(cell):
        return [(cell[0] + _DX[d], cell[1] + _DY[d]) for d in range(4)]

    # to a free cell next to the key
    stand = [c for c in neighbors(key_pos) if cells[c[1], c[0]] == CELL_EMPTY]
    path = bfs_path(cells, (state.x, state.y), stand, {CELL_EMPTY})
    if path is None:
        return None
    planner.walk(path)
    planner.face(key_pos)
    planner.actions.append(ACT_PICKUP)

    # to a free cell next to the door, then open it
    stand = [c for c in neighbors(door_pos)
             if cells[c[1], c[0]] in (CELL_EMPTY, CELL_KEY)]
    path = bfs_path(cells, (planner.x, planner.y), stand, {CELL_EMPTY, CELL_KEY})
    if path is None:
        return None
    planner.walk(path)
    planner.face(door_pos)
    planner.actions.append(ACT_TOGGLE)

    # through the door (locked on the planning grid, open at execution time)
    path = bfs_path(cells, (planner.x, planner.y), [goal_pos],
                    {CELL_EMPTY, CELL_KEY, CELL_DOOR_LOCKED, CELL_DOOR_OPEN})
    if path is None:
        return None
    planner.walk(path)
    return planner.actions


def plan_crossing_solution(state):
    """Action list walking the safe path of a lava-crossing instance."""
    goal_pos = tuple(int(v) for v in np.argwhere(state.cells == CELL_GOAL)[0][::-1])
    path = bfs_path(state.cells, (state.x, state.y), [goal_pos], {CELL_EMPTY})
    if path is None:
        return None
    planner = Planner(state.x, state.y, state.heading)
    planner.walk(path)
    return planner.actions


def run_actions(state, actions):
    """Execute a planned action list; returns (outcomes, total_reward)."""
    outcomes = []
    total = 0.0
    for action in actions:
        out = step(state, action)
        outcomes.append(out)
        total += out.reward
        if out.terminated or out.truncated:
            break
    return outcomes, total
