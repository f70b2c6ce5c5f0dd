"""The arbiter: a Q-learned policy over module indices.

The vanilla selector is a DQN over {module_0 .. module_{N-1}} trained from
uniform transition replay. The memory-augmented variant threads an LSTM
hidden state through every selection (reset to zero at episode start) and
trains on randomly positioned fixed-length sequences from stored episodes,
with the hidden state zeroed at the start of every training sequence.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .nn import (AdamState, QNetwork, RecurrentQNetwork, adam_step,
                 clone_network, q_forward, soft_update, td_loss_and_grads,
                 td_targets)
from .nn.qlearning import sequence_td_loss_and_grads, sequence_td_targets
from .replay import (EpisodeBuffer, EpisodeRecord, Transition, UniformBuffer,
                     sequence_batch_arrays, transition_batch_arrays)


@dataclass
class SelectorHyper:
    lr: float
    batch_size: int
    tau: float
    update_freq: int
    gamma: float = 0.99
    seq_len: int | None = None  # recurrent variant only


@dataclass
class SelectionRecord:
    """One arbitration step, for traces and invariant checks."""

    episode: int
    t: int
    chosen: int
    proposals: list[int]
    executed: int
    epsilon: float
    r_star: float
    hidden_was_zero: bool | None = None  # recurrent variant only


class Selector:
    """Feed-forward arbiter with uniform replay."""

    def __init__(self, qnet: QNetwork, buffer_size: int, hyper: SelectorHyper):
        self.qnet = qnet
        self.target = clone_network(qnet)
        self.buffer = UniformBuffer(buffer_size)
        self.adam = AdamState.for_params(qnet.param_arrays())
        self.hyper = hyper
        self.module_count = qnet.action_count

    def select(self, obs: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
        if rng.random() < epsilon:
            return int(rng.integers(0, self.module_count))
        q = q_forward(self.qnet, obs[None])[0]
        return int(np.argmax(q))

    def store(self, transition: Transition) -> None:
        self.buffer.push(transition)

    def end_episode(self) -> None:
        pass

    def train_step(self, rng: np.random.Generator) -> float | None:
        """One gated optimization step; no-op while the buffer is cold."""
        if len(self.buffer) < self.hyper.batch_size:
            return None
        batch = self.buffer.sample(self.hyper.batch_size, rng)
        obs, actions, rewards, next_obs, dones = transition_batch_arrays(batch)
        targets = td_targets(rewards, dones, next_obs, self.target, self.hyper.gamma)
        loss, grads = td_loss_and_grads(self.qnet, obs, actions, targets)
        adam_step(self.qnet.param_arrays(), grads, self.adam, self.hyper.lr)
        soft_update(self.qnet, self.target, self.hyper.tau)
        return loss


class MemSelector:
    """Recurrent arbiter with episodic replay.

    The hidden state advances on every selection, exploratory or greedy,
    and is zeroed at each episode start. Training samples fixed-length
    sequences whose initial hidden state is likewise zero.
    """

    def __init__(self, rqnet: RecurrentQNetwork, buffer_size: int,
                 hyper: SelectorHyper, min_seq: int | None = None):
        if hyper.seq_len is None:
            raise ValueError("recurrent selector needs hyper.seq_len")
        self.rqnet = rqnet
        self.target = clone_network(rqnet)
        min_seq = hyper.seq_len if min_seq is None else min_seq
        if hyper.seq_len > min_seq:
            raise ValueError(f"seq_len {hyper.seq_len} exceeds min_seq {min_seq}")
        self.buffer = EpisodeBuffer(buffer_size, min_seq=min_seq)
        self.adam = AdamState.for_params(rqnet.param_arrays())
        self.hyper = hyper
        self.module_count = rqnet.action_count
        self.hidden = rqnet.zero_hidden()
        self._episode: list[Transition] = []

    def begin_episode(self) -> None:
        self.hidden = self.rqnet.zero_hidden()
        self._episode = []

    @property
    def hidden_is_zero(self) -> bool:
        h, c = self.hidden
        return not (np.any(h) or np.any(c))

    def select(self, obs: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
        q, self.hidden = self.rqnet.step(obs, *self.hidden)
        if rng.random() < epsilon:
            return int(rng.integers(0, self.module_count))
        return int(np.argmax(q))

    def store(self, transition: Transition) -> None:
        self._episode.append(transition)

    def end_episode(self) -> None:
        if self._episode:
            self.buffer.store_episode(EpisodeRecord(self._episode))
        self._episode = []

    def train_step(self, rng: np.random.Generator) -> float | None:
        if len(self.buffer) == 0:
            return None
        batch = self.buffer.sample_sequences(self.hyper.batch_size,
                                             self.hyper.seq_len, rng)
        obs, actions, rewards, next_obs, dones = sequence_batch_arrays(batch)
        targets = sequence_td_targets(self.target, next_obs, rewards, dones,
                                      self.hyper.gamma)
        loss, grads = sequence_td_loss_and_grads(self.rqnet, obs, actions, targets)
        adam_step(self.rqnet.param_arrays(), grads, self.adam, self.hyper.lr)
        soft_update(self.rqnet, self.target, self.hyper.tau)
        return loss


TRACE_COLUMNS = ("episode", "t", "chosen_module", "epsilon", "executed_action",
                 "r_star")


class TraceWriter:
    """Per-step CSV selection trace."""

    def __init__(self, path):
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(TRACE_COLUMNS)

    def write(self, record: SelectionRecord) -> None:
        self._writer.writerow([record.episode, record.t, record.chosen,
                               repr(record.epsilon), record.executed,
                               repr(record.r_star)])

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
