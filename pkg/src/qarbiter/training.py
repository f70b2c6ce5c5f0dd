"""Training loops and evaluation.

One loop per agent family:

* ``train_amrl``  -- arbitrated agents (global-reward, module-reward-sum,
  and memory-augmented variants): every module proposes each step, the
  selector picks one, the executed transition is shared with every
  updatable module under its own modular reward.
* ``train_dqn`` / ``train_drqn`` -- plain Q-learning baselines.
* ``train_dqn_k`` -- the knowledge-embedder baseline that consumes the
  mode coordinates alongside the observation.

All loops: one global epsilon schedule decayed per episode, learning
gated to one optimization step every ``update_freq`` environment steps,
warm-up until the relevant buffer can produce a batch.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass

import numpy as np

from .arbitration import MemSelector, SelectionRecord, Selector, SelectorHyper
from .envs import ENV_COLLECT, EnvSpec, reset, step
from .envs.grid import NO_ITEM, GridState
from .modules import KnowledgeModule, ModuleContext
from .nn import (AdamState, KnowledgeEmbedderNet, QNetwork, RecurrentQNetwork,
                 adam_step, clone_network, greedy_action, soft_update)
from .nn.networks import encode_obs
from .nn.qlearning import (k_td_loss_and_grads, k_td_targets,
                           sequence_td_loss_and_grads, sequence_td_targets,
                           td_loss_and_grads, td_targets)
from .replay import (EpisodeBuffer, EpisodeRecord, Transition, UniformBuffer,
                     sequence_batch_arrays, transition_batch_arrays)


@dataclass
class EpsilonSchedule:
    """Exponential per-episode decay with a floor."""

    decay: float
    eps_start: float = 1.0
    eps_min: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.decay < 1.0:
            raise ValueError(f"decay must lie in (0, 1), got {self.decay}")

    def value(self, episode: int) -> float:
        return max(self.eps_min, self.eps_start * self.decay ** episode)


def epsilon_at(schedule: EpsilonSchedule, episode: int) -> float:
    return schedule.value(episode)


class AgentKind(str, enum.Enum):
    DQN = "dqn"
    DRQN = "drqn"
    DQN_K = "dqn_k"
    AMRL = "amrl"
    AMRL_DS = "amrl_ds"
    AMRL_MEM = "amrl_mem"


def make_context(state: GridState, obs: np.ndarray) -> ModuleContext:
    return ModuleContext(obs=obs, x=state.x, y=state.y, heading=state.heading,
                         carrying=state.carrying != NO_ITEM,
                         grid_width=state.width, grid_height=state.height,
                         mode_centers=state.mode_centers)


def knowledge_vector(state: GridState) -> np.ndarray:
    """Mode coordinates flattened and normalized by the grid size."""
    flat = np.array([c for center in state.mode_centers for c in center],
                    dtype=np.float64)
    return flat / state.width


def _metrics_row(episode, ep_return, steps, epsilon, window, info_flags):
    window.append(ep_return)
    return {
        "episode": episode,
        "ret": ep_return,
        "steps": steps,
        "moving_avg_30": float(np.mean(window)),
        "epsilon": epsilon,
        "balls_collected": info_flags.get("balls_collected", 0),
        "lava_death": int(info_flags.get("lava_death", False)),
        "success": int(info_flags.get("success", False)),
    }


@dataclass
class AMRLAgent:
    """Module roster plus selector; ``reward_mode`` picks the selector's
    training signal (the global task reward, or the sum of all modular
    rewards)."""

    modules: list[KnowledgeModule]
    selector: Selector | MemSelector
    reward_mode: str = "global"

    def __post_init__(self):
        if self.reward_mode not in ("global", "module_sum"):
            raise ValueError(f"unknown reward mode {self.reward_mode!r}")
        if not self.modules:
            raise ValueError("module roster is empty")
        if self.selector.module_count != len(self.modules):
            raise ValueError(
                f"selector arbitrates {self.selector.module_count} modules "
                f"but the roster has {len(self.modules)}")


def train_amrl(agent: AMRLAgent, env_spec: EnvSpec, schedule: EpsilonSchedule,
               episodes: int, rng: np.random.Generator, *,
               trace=None, on_step=None, stop_fn=None, collect_records=False):
    """Arbitrated training; returns (metrics rows, selection records)."""
    selector = agent.selector
    modules = agent.modules
    update_freq = selector.hyper.update_freq
    is_mem = isinstance(selector, MemSelector)
    window = deque(maxlen=30)
    metrics = []
    records = [] if collect_records else None
    total_steps = 0

    for episode in range(episodes):
        epsilon = schedule.value(episode)
        state, obs = reset(env_spec, rng)
        ctx = make_context(state, obs)
        if is_mem:
            selector.begin_episode()
        for module in modules:
            module.begin_episode(ctx)
        visited = {(state.x, state.y)}
        ep_return = 0.0
        flags = {"balls_collected": 0}
        t = 0

        while True:
            for module in modules:
                module.observe(ctx)
            proposals = [module.propose(ctx) for module in modules]
            hidden_zero = selector.hidden_is_zero if is_mem else None
            chosen = selector.select(obs, epsilon, rng)
            action = proposals[chosen]

            outcome = step(state, action)
            pos = (state.x, state.y)
            outcome.info["first_visit"] = pos not in visited
            visited.add(pos)
            done = outcome.terminated

            rewards = [module.compute_reward(ctx, action, outcome)
                       for module in modules]
            for module, r_i in zip(modules, rewards):
                module.offer_transition(Transition(
                    obs=obs, action=action, reward=r_i,
                    next_obs=outcome.obs, done=done))

            r_star = outcome.reward
            selector_reward = (r_star if agent.reward_mode == "global"
                               else float(sum(rewards)))
            selector.store(Transition(obs=obs, action=chosen,
                                      reward=selector_reward,
                                      next_obs=outcome.obs, done=done))

            record = SelectionRecord(episode=episode, t=t, chosen=chosen,
                                     proposals=proposals, executed=action,
                                     epsilon=epsilon, r_star=r_star,
                                     hidden_was_zero=hidden_zero)
            if trace is not None:
                trace.write(record)
            if records is not None:
                records.append(record)
            if on_step is not None:
                on_step(record)

            total_steps += 1
            if total_steps % update_freq == 0:
                selector.train_step(rng)
                for module in modules:
                    if module.updatable:
                        module.train_step(rng)

            ep_return += r_star
            t += 1
            flags["balls_collected"] += int("picked_ball_at" in outcome.info)
            flags["lava_death"] = flags.get("lava_death") or outcome.info.get("lava_death", False)
            flags["success"] = flags.get("success") or outcome.info.get("success", False)

            obs = outcome.obs
            ctx = make_context(state, obs)
            if outcome.terminated or outcome.truncated:
                break

        selector.end_episode()
        row = _metrics_row(episode, ep_return, t, epsilon, window, flags)
        metrics.append(row)
        if stop_fn is not None and stop_fn(row):
            break
    return metrics, records


@dataclass
class DQNHyper:
    lr: float
    batch_size: int
    tau: float
    update_freq: int
    buffer_size: int
    gamma: float = 0.99
    seq_len: int | None = None  # recurrent only


class DQNAgent:
    """Plain deep Q-learning over environment actions."""

    def __init__(self, net: QNetwork, hyper: DQNHyper):
        self.net = net
        self.target = clone_network(net)
        self.buffer = UniformBuffer(hyper.buffer_size)
        self.adam = AdamState.for_params(net.param_arrays())
        self.hyper = hyper

    def act(self, obs: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
        if rng.random() < epsilon:
            return int(rng.integers(0, self.net.action_count))
        return greedy_action(self.net, obs)

    def train_step(self, rng: np.random.Generator) -> float | None:
        if len(self.buffer) < self.hyper.batch_size:
            return None
        batch = self.buffer.sample(self.hyper.batch_size, rng)
        obs, actions, rewards, next_obs, dones = transition_batch_arrays(batch)
        targets = td_targets(rewards, dones, next_obs, self.target, self.hyper.gamma)
        loss, grads = td_loss_and_grads(self.net, obs, actions, targets)
        adam_step(self.net.param_arrays(), grads, self.adam, self.hyper.lr)
        soft_update(self.net, self.target, self.hyper.tau)
        return loss


def train_dqn(agent: DQNAgent, env_spec: EnvSpec, schedule: EpsilonSchedule,
              episodes: int, rng: np.random.Generator, *, stop_fn=None,
              on_episode=None):
    window = deque(maxlen=30)
    metrics = []
    total_steps = 0
    for episode in range(episodes):
        epsilon = schedule.value(episode)
        state, obs = reset(env_spec, rng)
        ep_return = 0.0
        flags = {"balls_collected": 0}
        t = 0
        while True:
            action = agent.act(obs, epsilon, rng)
            outcome = step(state, action)
            agent.buffer.push(Transition(obs=obs, action=action,
                                         reward=outcome.reward,
                                         next_obs=outcome.obs,
                                         done=outcome.terminated))
            total_steps += 1
            if total_steps % agent.hyper.update_freq == 0:
                agent.train_step(rng)
            ep_return += outcome.reward
            t += 1
            flags["balls_collected"] += int("picked_ball_at" in outcome.info)
            flags["lava_death"] = flags.get("lava_death") or outcome.info.get("lava_death", False)
            flags["success"] = flags.get("success") or outcome.info.get("success", False)
            obs = outcome.obs
            if outcome.terminated or outcome.truncated:
                break
        row = _metrics_row(episode, ep_return, t, epsilon, window, flags)
        metrics.append(row)
        if on_episode is not None:
            on_episode(row, agent)
        if stop_fn is not None and stop_fn(row):
            break
    return metrics


class DRQNAgent:
    """Recurrent Q-learning with episodic replay and per-episode hidden reset."""

    def __init__(self, net: RecurrentQNetwork, hyper: DQNHyper):
        if hyper.seq_len is None:
            raise ValueError("recurrent agent needs hyper.seq_len")
        self.net = net
        self.target = clone_network(net)
        self.buffer = EpisodeBuffer(hyper.buffer_size, min_seq=hyper.seq_len)
        self.adam = AdamState.for_params(net.param_arrays())
        self.hyper = hyper
        self.hidden = net.zero_hidden()

    def begin_episode(self) -> None:
        self.hidden = self.net.zero_hidden()

    def act(self, obs: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
        q, self.hidden = self.net.step(obs, *self.hidden)
        if rng.random() < epsilon:
            return int(rng.integers(0, self.net.action_count))
        return int(np.argmax(q))

    def train_step(self, rng: np.random.Generator) -> float | None:
        if len(self.buffer) == 0:
            return None
        batch = self.buffer.sample_sequences(self.hyper.batch_size,
                                             self.hyper.seq_len, rng)
        obs, actions, rewards, next_obs, dones = sequence_batch_arrays(batch)
        targets = sequence_td_targets(self.target, next_obs, rewards, dones,
                                      self.hyper.gamma)
        loss, grads = sequence_td_loss_and_grads(self.net, obs, actions, targets)
        adam_step(self.net.param_arrays(), grads, self.adam, self.hyper.lr)
        soft_update(self.net, self.target, self.hyper.tau)
        return loss


def train_drqn(agent: DRQNAgent, env_spec: EnvSpec, schedule: EpsilonSchedule,
               episodes: int, rng: np.random.Generator, *, stop_fn=None):
    window = deque(maxlen=30)
    metrics = []
    total_steps = 0
    for episode in range(episodes):
        epsilon = schedule.value(episode)
        state, obs = reset(env_spec, rng)
        agent.begin_episode()
        transitions = []
        ep_return = 0.0
        flags = {"balls_collected": 0}
        t = 0
        while True:
            action = agent.act(obs, epsilon, rng)
            outcome = step(state, action)
            transitions.append(Transition(obs=obs, action=action,
                                          reward=outcome.reward,
                                          next_obs=outcome.obs,
                                          done=outcome.terminated))
            total_steps += 1
            if total_steps % agent.hyper.update_freq == 0:
                agent.train_step(rng)
            ep_return += outcome.reward
            t += 1
            flags["balls_collected"] += int("picked_ball_at" in outcome.info)
            flags["lava_death"] = flags.get("lava_death") or outcome.info.get("lava_death", False)
            flags["success"] = flags.get("success") or outcome.info.get("success", False)
            obs = outcome.obs
            if outcome.terminated or outcome.truncated:
                break
        agent.buffer.store_episode(EpisodeRecord(transitions))
        row = _metrics_row(episode, ep_return, t, epsilon, window, flags)
        metrics.append(row)
        if stop_fn is not None and stop_fn(row):
            break
    return metrics


class DQNkAgent:
    """DQN over the two-branch network; transitions carry the episode's
    knowledge vector as auxiliary input."""

    def __init__(self, net: KnowledgeEmbedderNet, hyper: DQNHyper):
        self.net = net
        self.target = clone_network(net)
        self.buffer = UniformBuffer(hyper.buffer_size)
        self.adam = AdamState.for_params(net.param_arrays())
        self.hyper = hyper

    def act(self, obs, know, epsilon, rng) -> int:
        if rng.random() < epsilon:
            return int(rng.integers(0, self.net.action_count))
        q = self.net.forward(encode_obs(np.asarray(obs)[None]), know[None])[0]
        return int(np.argmax(q))

    def train_step(self, rng) -> float | None:
        if len(self.buffer) < self.hyper.batch_size:
            return None
        batch = self.buffer.sample(self.hyper.batch_size, rng)
        obs, actions, rewards, next_obs, dones = transition_batch_arrays(batch)
        know = np.stack([t.aux for t in batch])
        targets = k_td_targets(rewards, dones, next_obs, know, self.target,
                               self.hyper.gamma)
        loss, grads = k_td_loss_and_grads(self.net, obs, know, actions, targets)
        adam_step(self.net.param_arrays(), grads, self.adam, self.hyper.lr)
        soft_update(self.net, self.target, self.hyper.tau)
        return loss


def train_dqn_k(agent: DQNkAgent, env_spec: EnvSpec, schedule: EpsilonSchedule,
                episodes: int, rng: np.random.Generator, *, stop_fn=None):
    if env_spec.env_id != ENV_COLLECT:
        raise ValueError("the knowledge-embedder baseline is defined only for "
                         "the collect environment")
    window = deque(maxlen=30)
    metrics = []
    total_steps = 0
    for episode in range(episodes):
        epsilon = schedule.value(episode)
        state, obs = reset(env_spec, rng)
        know = knowledge_vector(state)
        ep_return = 0.0
        flags = {"balls_collected": 0}
        t = 0
        while True:
            action = agent.act(obs, know, epsilon, rng)
            outcome = step(state, action)
            agent.buffer.push(Transition(obs=obs, action=action,
                                         reward=outcome.reward,
                                         next_obs=outcome.obs,
                                         done=outcome.terminated, aux=know))
            total_steps += 1
            if total_steps % agent.hyper.update_freq == 0:
                agent.train_step(rng)
            ep_return += outcome.reward
            t += 1
            flags["balls_collected"] += int("picked_ball_at" in outcome.info)
            obs = outcome.obs
            if outcome.terminated or outcome.truncated:
                break
        row = _metrics_row(episode, ep_return, t, epsilon, window, flags)
        metrics.append(row)
        if stop_fn is not None and stop_fn(row):
            break
    return metrics


# -- greedy evaluation --------------------------------------------------------

@dataclass
class EvalStats:
    episodes: int
    mean_return: float
    mean_steps: float
    success_rate: float
    mean_balls: float
    lava_deaths: int


class DQNPolicy:
    def __init__(self, net):
        self.net = net

    def begin_episode(self, state, obs):
        pass

    def act(self, state, obs) -> int:
        return greedy_action(self.net, obs)


class DRQNPolicy:
    def __init__(self, net):
        self.net = net
        self.hidden = net.zero_hidden()

    def begin_episode(self, state, obs):
        self.hidden = self.net.zero_hidden()

    def act(self, state, obs) -> int:
        q, self.hidden = self.net.step(obs, *self.hidden)
        return int(np.argmax(q))


class DQNkPolicy:
    def __init__(self, net):
        self.net = net
        self.know = None

    def begin_episode(self, state, obs):
        self.know = knowledge_vector(state)

    def act(self, state, obs) -> int:
        q = self.net.forward(encode_obs(np.asarray(obs)[None]), self.know[None])[0]
        return int(np.argmax(q))


class ModulePolicy:
    """A single knowledge module acting alone."""

    def __init__(self, module: KnowledgeModule):
        self.module = module

    def begin_episode(self, state, obs):
        self.module.begin_episode(make_context(state, obs))

    def act(self, state, obs) -> int:
        ctx = make_context(state, obs)
        self.module.observe(ctx)
        return self.module.propose(ctx)


class AMRLPolicy:
    """Greedy arbitration: the selector picks, the chosen module acts."""

    def __init__(self, agent: AMRLAgent):
        self.agent = agent
        self._greedy_rng = np.random.default_rng(0)  # epsilon=0: never consulted for draws

    def begin_episode(self, state, obs):
        ctx = make_context(state, obs)
        if isinstance(self.agent.selector, MemSelector):
            self.agent.selector.begin_episode()
        for module in self.agent.modules:
            module.begin_episode(ctx)

    def act(self, state, obs) -> int:
        ctx = make_context(state, obs)
        for module in self.agent.modules:
            module.observe(ctx)
        proposals = [module.propose(ctx) for module in self.agent.modules]
        chosen = self.agent.selector.select(obs, 0.0, self._greedy_rng)
        return proposals[chosen]


def evaluate(policy, env_spec: EnvSpec, n_episodes: int,
             rng: np.random.Generator) -> EvalStats:
    """Greedy (epsilon = 0) rollouts with per-environment statistics."""
    returns, steps, balls = [], [], []
    successes = 0
    lava = 0
    for _ in range(n_episodes):
        state, obs = reset(env_spec, rng)
        policy.begin_episode(state, obs)
        ep_return = 0.0
        collected = 0
        t = 0
        while True:
            outcome = step(state, policy.act(state, obs))
            ep_return += outcome.reward
            collected += int("picked_ball_at" in outcome.info)
            lava += int(bool(outcome.info.get("lava_death")))
            successes += int(bool(outcome.info.get("success")))
            t += 1
            obs = outcome.obs
            if outcome.terminated or outcome.truncated:
                break
        returns.append(ep_return)
        steps.append(t)
        balls.append(collected)
    return EvalStats(episodes=n_episodes,
                     mean_return=float(np.mean(returns)),
                     mean_steps=float(np.mean(steps)),
                     success_rate=successes / n_episodes,
                     mean_balls=float(np.mean(balls)),
                     lava_deaths=lava)
