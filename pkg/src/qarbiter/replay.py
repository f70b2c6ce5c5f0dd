"""Experience storage: uniform transition replay for feed-forward learners
and episodic replay with random fixed-length sequence sampling for
recurrent learners.

Sequence sampling follows the bootstrapped-random-updates recipe: episodes
are drawn uniformly (with replacement) and a start offset is drawn
uniformly within each, so sequences from shorter episodes are selected
more often. That bias is accepted as-is.
"""

from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass, field
from io import BytesIO

import numpy as np


@dataclass
class Transition:
    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray
    done: bool
    aux: np.ndarray | None = None  # side-channel input (e.g. knowledge vector)

    def __post_init__(self):
        if not np.isfinite(self.reward):
            raise ValueError(f"transition reward must be finite, got {self.reward}")


class UniformBuffer:
    """Fixed-capacity FIFO ring sampled uniformly with replacement."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = capacity
        self._items: deque[Transition] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._items)

    def push(self, transition: Transition) -> None:
        self._items.append(transition)

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        if not self._items:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, len(self._items), size=batch_size)
        return [self._items[i] for i in idx]

    def __iter__(self):
        return iter(self._items)


@dataclass
class EpisodeRecord:
    """One whole episode; consecutive transitions must chain."""

    transitions: list[Transition]

    def __post_init__(self):
        if not self.transitions:
            raise ValueError("episode must contain at least one transition")
        for prev, cur in zip(self.transitions, self.transitions[1:]):
            if not np.array_equal(prev.next_obs, cur.obs):
                raise ValueError("episode transitions do not chain (next_obs != obs)")

    @property
    def length(self) -> int:
        return len(self.transitions)


class EpisodeBuffer:
    """Episode ring with capacity measured in stored transitions.

    Episodes shorter than ``min_seq`` are silently skipped and counted in
    ``dropped``; admission evicts the oldest episodes until the transition
    capacity is respected again.
    """

    def __init__(self, capacity: int, min_seq: int):
        if capacity < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")
        if min_seq < 1:
            raise ValueError(f"min_seq must be positive, got {min_seq}")
        self.capacity = capacity
        self.min_seq = min_seq
        self.episodes: deque[EpisodeRecord] = deque()
        self.total_transitions = 0
        self.stored = 0
        self.dropped = 0

    def __len__(self) -> int:
        return len(self.episodes)

    def store_episode(self, episode: EpisodeRecord) -> bool:
        if episode.length < self.min_seq or episode.length > self.capacity:
            self.dropped += 1
            return False
        self.episodes.append(episode)
        self.total_transitions += episode.length
        self.stored += 1
        while self.total_transitions > self.capacity:
            evicted = self.episodes.popleft()
            self.total_transitions -= evicted.length
        return True

    def sample_sequences(self, batch_size: int, seq_len: int,
                         rng: np.random.Generator) -> list[list[Transition]]:
        """batch_size runs of seq_len consecutive transitions, each within
        a single episode."""
        if seq_len > self.min_seq:
            raise ValueError(f"seq_len {seq_len} exceeds min_seq {self.min_seq}; "
                             f"stored episodes cannot guarantee such runs")
        if not self.episodes:
            raise ValueError("cannot sample from an empty episode buffer")
        batch = []
        for _ in range(batch_size):
            ep = self.episodes[int(rng.integers(0, len(self.episodes)))]
            start = int(rng.integers(0, ep.length - seq_len + 1))
            batch.append(ep.transitions[start:start + seq_len])
        return batch


def sequence_batch_arrays(batch: list[list[Transition]]):
    """Stack a sequence batch into (obs, actions, rewards, next_obs, dones)
    arrays of shape [B, L, ...]."""
    obs = np.stack([[t.obs for t in seq] for seq in batch])
    actions = np.array([[t.action for t in seq] for seq in batch])
    rewards = np.array([[t.reward for t in seq] for seq in batch])
    next_obs = np.stack([[t.next_obs for t in seq] for seq in batch])
    dones = np.array([[t.done for t in seq] for seq in batch])
    return obs, actions, rewards, next_obs, dones


def transition_batch_arrays(batch: list[Transition]):
    """Stack a transition batch into (obs, actions, rewards, next_obs, dones)."""
    obs = np.stack([t.obs for t in batch])
    actions = np.array([t.action for t in batch])
    rewards = np.array([t.reward for t in batch])
    next_obs = np.stack([t.next_obs for t in batch])
    dones = np.array([t.done for t in batch])
    return obs, actions, rewards, next_obs, dones


# -- debug dump: length-prefixed binary records ------------------------------

def _transition_bytes(t: Transition) -> bytes:
    buf = BytesIO()
    arrays = {"obs": t.obs, "next_obs": t.next_obs,
              "action": np.asarray(t.action), "reward": np.asarray(t.reward),
              "done": np.asarray(t.done)}
    if t.aux is not None:
        arrays["aux"] = t.aux
    np.savez(buf, **arrays)
    return buf.getvalue()


def dump_transitions(buffer: UniformBuffer, path) -> int:
    """Write all buffered transitions as length-prefixed binary records;
    returns the record count."""
    count = 0
    with open(path, "wb") as fh:
        for t in buffer:
            payload = _transition_bytes(t)
            fh.write(struct.pack("<I", len(payload)))
            fh.write(payload)
            count += 1
    return count


def load_transition_dump(path) -> list[Transition]:
    out = []
    with open(path, "rb") as fh:
        while True:
            header = fh.read(4)
            if not header:
                break
            (size,) = struct.unpack("<I", header)
            with np.load(BytesIO(fh.read(size))) as data:
                out.append(Transition(
                    obs=data["obs"],
                    action=int(data["action"]),
                    reward=float(data["reward"]),
                    next_obs=data["next_obs"],
                    done=bool(data["done"]),
                    aux=data["aux"] if "aux" in data else None,
                ))
    return out
