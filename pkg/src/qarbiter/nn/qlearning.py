"""TD targets and squared-error loss/gradients for Q-learning updates.

The loss is the batch mean of (y - Q(s, a))^2 on the taken action's
Q-value only; gradients flow exclusively through those entries.
"""

from __future__ import annotations

import numpy as np

from .networks import encode_obs


def _check_obs_shape(net, obs: np.ndarray, time_major: bool = False) -> None:
    expected = net.obs_shape
    trailing = obs.shape[-3:]
    if trailing != expected:
        raise ValueError(f"observation shape {trailing} does not match "
                         f"network input shape {expected}")


def q_forward(net, obs_batch: np.ndarray) -> np.ndarray:
    """Q-values [B, A] for a batch of raw observations [B, V, V, C]."""
    obs_batch = np.asarray(obs_batch)
    if obs_batch.size == 0:
        raise ValueError("empty observation batch")
    _check_obs_shape(net, obs_batch)
    return net.forward(encode_obs(obs_batch))


def greedy_action(net, obs: np.ndarray) -> int:
    """Argmax action for one observation; ties break to the lowest id."""
    q = q_forward(net, np.asarray(obs)[None])[0]
    return int(np.argmax(q))


def rq_forward(net, obs_seq: np.ndarray, h0: np.ndarray, c0: np.ndarray):
    """Q-value sequence [B, L, A] plus the final hidden state."""
    obs_seq = np.asarray(obs_seq)
    _check_obs_shape(net, obs_seq)
    return net.forward_seq(obs_seq, h0, c0)


def td_targets(rewards: np.ndarray, dones: np.ndarray, next_obs: np.ndarray,
               target_net, gamma: float) -> np.ndarray:
    """y_k = r_k + gamma * max_a' Q_target(s'_k, a') with the bootstrap
    truncated on terminal transitions."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.size == 0:
        raise ValueError("empty transition batch")
    if not np.all(np.isfinite(rewards)):
        raise ValueError("non-finite reward in transition batch")
    dones = np.asarray(dones, dtype=np.float64)
    q_next = q_forward(target_net, next_obs)
    return rewards + gamma * (1.0 - dones) * q_next.max(axis=1)


def td_loss(net, obs: np.ndarray, actions: np.ndarray, targets: np.ndarray) -> float:
    """Forward-only TD loss (used by the gradient checker)."""
    q = q_forward(net, obs)
    rows = np.arange(q.shape[0])
    delta = q[rows, np.asarray(actions)] - np.asarray(targets, dtype=np.float64)
    return float(np.mean(delta ** 2))


def td_loss_and_grads(net, obs: np.ndarray, actions: np.ndarray, targets: np.ndarray):
    """Mean squared TD error on the taken actions; returns (loss, grads).

    The returned gradient arrays are the network's own accumulators
    (freshly zeroed before this backward pass).
    """
    actions = np.asarray(actions)
    if actions.size and actions.max() >= net.action_count:
        raise ValueError(f"action id {actions.max()} out of range "
                         f"for {net.action_count} actions")
    q = q_forward(net, obs)
    bsz = q.shape[0]
    rows = np.arange(bsz)
    delta = q[rows, actions] - np.asarray(targets, dtype=np.float64)
    loss = float(np.mean(delta ** 2))
    dq = np.zeros_like(q)
    dq[rows, actions] = 2.0 * delta / bsz
    net.zero_grads()
    net.backward(dq)
    return loss, net.grad_arrays()


def sequence_td_targets(target_net, next_obs_seq: np.ndarray, rewards: np.ndarray,
                        dones: np.ndarray, gamma: float) -> np.ndarray:
    """Per-position targets for sequence batches [B, L]; the target network
    consumes the successor-observation sequence from a zero hidden state."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    rewards = np.asarray(rewards, dtype=np.float64)
    if not np.all(np.isfinite(rewards)):
        raise ValueError("non-finite reward in sequence batch")
    bsz = rewards.shape[0]
    h0, c0 = target_net.zero_hidden(bsz)
    q_next, _ = rq_forward(target_net, next_obs_seq, h0, c0)
    dones = np.asarray(dones, dtype=np.float64)
    return rewards + gamma * (1.0 - dones) * q_next.max(axis=2)


def sequence_td_loss(net, obs_seq: np.ndarray, actions: np.ndarray,
                     targets: np.ndarray) -> float:
    """Forward-only sequence TD loss (used by the gradient checker)."""
    actions = np.asarray(actions)
    bsz, length = actions.shape
    h0, c0 = net.zero_hidden(bsz)
    q, _ = rq_forward(net, obs_seq, h0, c0)
    b_idx = np.arange(bsz)[:, None]
    l_idx = np.arange(length)[None, :]
    delta = q[b_idx, l_idx, actions] - np.asarray(targets, dtype=np.float64)
    return float(np.mean(delta ** 2))


def sequence_td_loss_and_grads(net, obs_seq: np.ndarray, actions: np.ndarray,
                               targets: np.ndarray):
    """TD loss at every sequence position, averaged over batch x length."""
    actions = np.asarray(actions)
    if actions.size and actions.max() >= net.action_count:
        raise ValueError(f"action id {actions.max()} out of range "
                         f"for {net.action_count} actions")
    bsz, length = actions.shape
    h0, c0 = net.zero_hidden(bsz)
    q, _ = rq_forward(net, obs_seq, h0, c0)
    b_idx = np.arange(bsz)[:, None]
    l_idx = np.arange(length)[None, :]
    delta = q[b_idx, l_idx, actions] - np.asarray(targets, dtype=np.float64)
    loss = float(np.mean(delta ** 2))
    dq = np.zeros_like(q)
    dq[b_idx, l_idx, actions] = 2.0 * delta / (bsz * length)
    net.zero_grads()
    net.backward_seq(dq)
    return loss, net.grad_arrays()


def k_td_targets(rewards, dones, next_obs, know, target_net, gamma: float) -> np.ndarray:
    """TD targets for the two-branch network; the knowledge vector is
    constant across a transition."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    rewards = np.asarray(rewards, dtype=np.float64)
    if not np.all(np.isfinite(rewards)):
        raise ValueError("non-finite reward in transition batch")
    q_next = target_net.forward(encode_obs(np.asarray(next_obs)), encode_obs(know))
    dones = np.asarray(dones, dtype=np.float64)
    return rewards + gamma * (1.0 - dones) * q_next.max(axis=1)


def k_td_loss(net, obs, know, actions, targets) -> float:
    """Forward-only TD loss for the two-branch network."""
    q = net.forward(encode_obs(np.asarray(obs)), encode_obs(know))
    rows = np.arange(q.shape[0])
    delta = q[rows, np.asarray(actions)] - np.asarray(targets, dtype=np.float64)
    return float(np.mean(delta ** 2))


def k_td_loss_and_grads(net, obs, know, actions, targets):
    actions = np.asarray(actions)
    if actions.size and actions.max() >= net.action_count:
        raise ValueError(f"action id {actions.max()} out of range "
                         f"for {net.action_count} actions")
    q = net.forward(encode_obs(np.asarray(obs)), encode_obs(know))
    bsz = q.shape[0]
    rows = np.arange(bsz)
    delta = q[rows, actions] - np.asarray(targets, dtype=np.float64)
    loss = float(np.mean(delta ** 2))
    dq = np.zeros_like(q)
    dq[rows, actions] = 2.0 * delta / bsz
    net.zero_grads()
    net.backward(dq)
    return loss, net.grad_arrays()
