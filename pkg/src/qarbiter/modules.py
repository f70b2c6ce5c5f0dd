"""Knowledge modules: heterogeneous action proposers the arbiter selects
among. Each module maps its own input slice (observation, pose, external
knowledge, or a visit memory) to exactly one action per step.

Proposals are deterministic, read-only queries; per-step bookkeeping
(visit counts, reached-center marking) happens in ``observe``, which the
training loop calls once per step before collecting proposals. Updatable
modules additionally accept shared transitions carrying their own modular
reward and train a small Q-network from them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs.grid import (ACT_FORWARD, ACT_LEFT, ACT_PICKUP, ACT_RIGHT,
                        ACT_TOGGLE, KIND_BALL, KIND_DOOR, KIND_EMPTY, KIND_GOAL,
                        KIND_KEY, KIND_LAVA, KIND_WALL, STATE_LOCKED, EnvOutcome)
from .nn import (AdamState, QNetwork, adam_step, clone_network, greedy_action,
                 q_forward, soft_update, td_loss_and_grads, td_targets)
from .replay import Transition, UniformBuffer, transition_batch_arrays


@dataclass
class ModuleContext:
    """Per-step inputs a module may draw from."""

    obs: np.ndarray
    x: int
    y: int
    heading: int
    carrying: bool
    grid_width: int
    grid_height: int
    mode_centers: list[tuple[int, int]]


# -- pure proposal rules ------------------------------------------------------

def _nearest_visible(obs: np.ndarray, kind: int, state: int | None = None):
    """(row, col) of the nearest view cell of the given kind, by Manhattan
    distance from the agent cell; ties resolve to the upper-left."""
    v = obs.shape[0]
    agent = (v - 1, v // 2)
    match = obs[..., 0] == kind
    if state is not None:
        match &= obs[..., 2] == state
    hits = np.argwhere(match)
    if len(hits) == 0:
        return None
    dist = np.abs(hits[:, 0] - agent[0]) + np.abs(hits[:, 1] - agent[1])
    order = np.lexsort((hits[:, 1], hits[:, 0], dist))
    return tuple(hits[order[0]])


def _walkable(cell: np.ndarray) -> bool:
    return cell[0] in (KIND_EMPTY, KIND_GOAL, KIND_LAVA) or (
        cell[0] == KIND_DOOR and cell[2] != STATE_LOCKED)


def _steer_toward(obs: np.ndarray, kind: int, reach_action: int,
                  state: int | None = None) -> int:
    """Steering shared by the rules: act on the target when it is directly
    ahead; close the forward gap while the way is open; otherwise rotate
    toward the target's column. With nothing visible, move forward,
    rotating right to get off walls."""
    v = obs.shape[0]
    center = v // 2
    ahead = obs[v - 2, center]
    if ahead[0] == kind and (state is None or ahead[2] == state):
        return reach_action
    open_ahead = _walkable(ahead)
    target = _nearest_visible(obs, kind, state)
    if target is None:
        return ACT_FORWARD if open_ahead else ACT_RIGHT
    in_front = target[0] < v - 1
    if in_front and open_ahead:
        return ACT_FORWARD
    if target[1] < center:
        return ACT_LEFT
    if target[1] > center:
        return ACT_RIGHT
    return ACT_RIGHT  # target in this column but the way is shut: sidestep


def propose_rule_pickup(obs: np.ndarray) -> int:
    """Pick up a ball when it is directly ahead; otherwise steer toward the
    nearest visible ball; otherwise keep moving."""
    return _steer_toward(obs, KIND_BALL, ACT_PICKUP)


def propose_avoid_lava(obs: np.ndarray) -> int:
    """Never step into lava: go forward while the cell ahead is safe and
    walkable, otherwise rotate right."""
    v = obs.shape[0]
    ahead = obs[v - 2, v // 2]
    if ahead[0] == KIND_LAVA:
        return ACT_RIGHT
    walkable = ahead[0] in (KIND_EMPTY, KIND_GOAL) or (
        ahead[0] == KIND_DOOR and ahead[2] != STATE_LOCKED)
    return ACT_FORWARD if walkable else ACT_RIGHT


def propose_get_key(obs: np.ndarray, carrying: bool) -> int:
    """Subgoal rule: fetch the key first, then head for the locked door and
    open it. Once the door is open (or nothing relevant is visible) the
    rule hands off by proposing forward."""
    if not carrying:
        return _steer_toward(obs, KIND_KEY, ACT_PICKUP)
    return _steer_toward(obs, KIND_DOOR, ACT_TOGGLE, state=STATE_LOCKED)


_DX = (0, 1, 0, -1)
_DY = (-1, 0, 1, 0)


def propose_goto_mode(target: tuple[int, int], x: int, y: int, heading: int) -> int:
    """Greedy step toward a target cell: forward when it shrinks the
    Manhattan distance, otherwise rotate toward the axis with the larger
    coordinate gap (left on a dead 180-degree tie)."""
    dx, dy = target[0] - x, target[1] - y
    fx, fy = _DX[heading], _DY[heading]
    if dx * fx + dy * fy > 0:
        return ACT_FORWARD
    if abs(dx) >= abs(dy) and dx != 0:
        desired = 1 if dx > 0 else 3
    else:
        desired = 2 if dy > 0 else 0
    diff = (desired - heading) % 4
    return ACT_RIGHT if diff == 1 else ACT_LEFT


def propose_explore(counts: np.ndarray, obs: np.ndarray, x: int, y: int,
                    heading: int) -> int:
    """Head for the least-visited reachable neighbor among {ahead, after a
    left turn, after a right turn}; ties prefer forward, then left."""
    v = obs.shape[0]
    center = v // 2
    # (action, view cell of the would-be target, world delta)
    lh, rh = (heading - 1) % 4, (heading + 1) % 4
    options = [
        (ACT_FORWARD, obs[v - 2, center], (_DX[heading], _DY[heading])),
        (ACT_LEFT, obs[v - 1, center - 1], (_DX[lh], _DY[lh])),
        (ACT_RIGHT, obs[v - 1, center + 1], (_DX[rh], _DY[rh])),
    ]
    best_action, best_count = None, None
    for action, cell, (dx, dy) in options:
        blocked = cell[0] in (KIND_WALL, KIND_BALL, KIND_KEY) or (
            cell[0] == KIND_DOOR and cell[2] == STATE_LOCKED)
        if blocked:
            continue
        count = counts[y + dy, x + dx]
        if best_count is None or count < best_count:
            best_action, best_count = action, count
    return ACT_LEFT if best_action is None else best_action


# -- module objects -----------------------------------------------------------

class KnowledgeModule:
    """Base module: proposes one action per step; frozen by default."""

    kind = "abstract"
    updatable = False

    def __init__(self, module_id: int, reward_fn=None):
        self.id = module_id
        self.reward_fn = reward_fn
        self.ignored_updates = 0

    def propose(self, ctx: ModuleContext) -> int:
        raise NotImplementedError

    def begin_episode(self, ctx: ModuleContext) -> None:
        pass

    def observe(self, ctx: ModuleContext) -> None:
        pass

    def compute_reward(self, ctx: ModuleContext, action: int, outcome: EnvOutcome) -> float:
        if self.reward_fn is None:
            return outcome.reward
        return self.reward_fn(ctx, action, outcome)

    def offer_transition(self, transition: Transition) -> bool:
        """Shared-experience hook; frozen modules count and drop it."""
        self.ignored_updates += 1
        return False

    def train_step(self, rng: np.random.Generator) -> float | None:
        return None


class RulePickupModule(KnowledgeModule):
    kind = "rule_pickup"

    def propose(self, ctx):
        return propose_rule_pickup(ctx.obs)


class AvoidLavaModule(KnowledgeModule):
    kind = "avoid_lava"

    def propose(self, ctx):
        return propose_avoid_lava(ctx.obs)


class GetKeyModule(KnowledgeModule):
    kind = "get_key"

    def propose(self, ctx):
        return propose_get_key(ctx.obs, ctx.carrying)


class GotoModeModule(KnowledgeModule):
    """Walks to the nearest not-yet-reached mode center, cycling once all
    have been visited. Marking happens in observe(); propose() is pure."""

    kind = "goto_mode"

    def __init__(self, module_id: int, reward_fn=None):
        super().__init__(module_id, reward_fn)
        self.centers: list[tuple[int, int]] = []
        self.visited: set[int] = set()

    def begin_episode(self, ctx):
        self.centers = list(ctx.mode_centers)
        self.visited = set()

    def observe(self, ctx):
        for i, c in enumerate(self.centers):
            if i not in self.visited and (ctx.x, ctx.y) == c:
                self.visited.add(i)
        if self.centers and len(self.visited) == len(self.centers):
            self.visited = set()

    def _target(self, ctx):
        best, best_d = None, None
        for i, (cx, cy) in enumerate(self.centers):
            if i in self.visited:
                continue
            d = abs(cx - ctx.x) + abs(cy - ctx.y)
            if best_d is None or d < best_d:
                best, best_d = (cx, cy), d
        return best

    def propose(self, ctx):
        target = self._target(ctx)
        if target is None or target == (ctx.x, ctx.y):
            return ACT_FORWARD
        return propose_goto_mode(target, ctx.x, ctx.y, ctx.heading)


class ExploreModule(KnowledgeModule):
    """Per-episode visit counting drives a move-to-least-visited rule."""

    kind = "explore"

    def __init__(self, module_id: int, reward_fn=None):
        super().__init__(module_id, reward_fn)
        self.counts: np.ndarray | None = None

    def begin_episode(self, ctx):
        self.counts = np.zeros((ctx.grid_height, ctx.grid_width), dtype=np.int64)

    def observe(self, ctx):
        self.counts[ctx.y, ctx.x] += 1

    def propose(self, ctx):
        return propose_explore(self.counts, ctx.obs, ctx.x, ctx.y, ctx.heading)


class OracleModule(KnowledgeModule):
    """Frozen pre-trained policy: greedy over its Q-network, never updated."""

    kind = "oracle"

    def __init__(self, module_id: int, net: QNetwork, reward_fn=None):
        super().__init__(module_id, reward_fn)
        self.net = net

    def propose(self, ctx):
        return greedy_action(self.net, ctx.obs)


class LearnableModule(KnowledgeModule):
    """DQN learner fed by shared experience with its own modular reward."""

    kind = "learnable"
    updatable = True

    def __init__(self, module_id: int, net: QNetwork, *, buffer_size: int,
                 batch_size: int, lr: float, tau: float, gamma: float,
                 reward_fn=None):
        super().__init__(module_id, reward_fn)
        self.net = net
        self.target = clone_network(net)
        self.buffer = UniformBuffer(buffer_size)
        self.adam = AdamState.for_params(net.param_arrays())
        self.batch_size = batch_size
        self.lr = lr
        self.tau = tau
        self.gamma = gamma

    def propose(self, ctx):
        return greedy_action(self.net, ctx.obs)

    def offer_transition(self, transition: Transition) -> bool:
        self.buffer.push(transition)
        return True

    def train_step(self, rng: np.random.Generator) -> float | None:
        if len(self.buffer) < self.batch_size:
            return None
        batch = self.buffer.sample(self.batch_size, rng)
        obs, actions, rewards, next_obs, dones = transition_batch_arrays(batch)
        targets = td_targets(rewards, dones, next_obs, self.target, self.gamma)
        loss, grads = td_loss_and_grads(self.net, obs, actions, targets)
        adam_step(self.net.param_arrays(), grads, self.adam, self.lr)
        soft_update(self.net, self.target, self.tau)
        return loss


# -- modular reward functions -------------------------------------------------

def reward_global(ctx, action, outcome) -> float:
    return outcome.reward


def reward_lava_penalty(ctx, action, outcome) -> float:
    """-1 for ending the episode in lava, 0 otherwise."""
    return -1.0 if outcome.info.get("lava_death") else 0.0


def reward_first_visit(ctx, action, outcome) -> float:
    """+1 the first time a cell is entered this episode."""
    return 1.0 if outcome.info.get("first_visit") else 0.0


def reward_key_then_global(ctx, action, outcome) -> float:
    """+0.5 once, on key pickup; the global reward from then on."""
    if outcome.info.get("picked_key"):
        return 0.5
    if ctx.carrying:
        return outcome.reward
    return 0.0


def make_reward_nearest_mode(mode_index: int):
    """Credit a pickup to the module whose mode center is nearest to the
    collected ball (ties to the lower index)."""

    def reward(ctx, action, outcome) -> float:
        pos = outcome.info.get("picked_ball_at")
        if pos is None:
            return 0.0
        dists = [np.hypot(cx - pos[0], cy - pos[1]) for cx, cy in ctx.mode_centers]
        return outcome.reward if int(np.argmin(dists)) == mode_index else 0.0

    return reward


REWARD_FNS = {
    "global": reward_global,
    "lava_penalty": reward_lava_penalty,
    "first_visit": reward_first_visit,
    "key_then_global": reward_key_then_global,
    "nearest_mode_0": make_reward_nearest_mode(0),
    "nearest_mode_1": make_reward_nearest_mode(1),
}
