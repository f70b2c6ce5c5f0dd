"""Central-finite-difference verification of analytic gradients.

The checker perturbs every parameter element by +/- h, re-evaluates the
loss, and compares the central difference against the analytic gradient.
Intentionally slow and simple: the analytic path must never be reused to
compute the reference.
"""

from __future__ import annotations

import numpy as np

from . import qlearning


def max_relative_gradient_error(loss_fn, params: list[np.ndarray],
                                analytic: list[np.ndarray], h: float = 1e-5) -> float:
    """max over elements of |analytic - central_diff| / max(|a|, |cd|, 1e-8)."""
    if not 0.0 < h <= 1e-3:
        raise ValueError(f"step size h must lie in (0, 1e-3], got {h}")
    worst = 0.0
    for arr, grad in zip(params, analytic):
        flat = arr.ravel()
        gflat = grad.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            loss_plus = loss_fn()
            flat[i] = orig - h
            loss_minus = loss_fn()
            flat[i] = orig
            cd = (loss_plus - loss_minus) / (2.0 * h)
            denom = max(abs(gflat[i]), abs(cd), 1e-8)
            worst = max(worst, abs(gflat[i] - cd) / denom)
    return worst


def _stack_kink_margin(stack, x) -> float:
    """Smallest |pre-activation| feeding any ReLU in a layer stack.

    Central differences are only valid where the loss is locally smooth; a
    pre-activation within ~|x|*h of zero flips its ReLU mask inside the
    probed interval and poisons the comparison. Callers draw fresh
    (net, batch) pairs until the margin clears a safe threshold.
    """
    from .layers import ReLU
    margin = np.inf
    for layer in stack.layers:
        if isinstance(layer, ReLU):
            margin = min(margin, float(np.min(np.abs(x))))
        x = layer.forward(x)
    return margin


def relu_kink_margin(net, obs, know=None) -> float:
    """Kink margin for any of the three network families on one batch."""
    from .networks import KnowledgeEmbedderNet, QNetwork, RecurrentQNetwork, encode_obs
    obs = encode_obs(np.asarray(obs))
    if isinstance(net, QNetwork):
        return _stack_kink_margin(net.stack, obs)
    if isinstance(net, RecurrentQNetwork):
        flat = obs.reshape((-1,) + net.obs_shape)
        return _stack_kink_margin(net.encoder, flat)
    if isinstance(net, KnowledgeEmbedderNet):
        s_margin = _stack_kink_margin(net.state_stack, obs)
        s = net.state_stack.forward(obs)
        k_margin = _stack_kink_margin(net.know_stack, encode_obs(know))
        k = net.know_stack.forward(encode_obs(know))
        j_margin = _stack_kink_margin(net.joint_stack, np.concatenate([s, k], axis=1))
        return min(s_margin, k_margin, j_margin)
    raise TypeError(f"unsupported network type {type(net).__name__}")


def finite_diff_check(net, obs, actions, targets, h: float = 1e-5) -> float:
    """Gradient check for a feed-forward Q-network on one batch."""
    _, grads = qlearning.td_loss_and_grads(net, obs, actions, targets)
    analytic = [g.copy() for g in grads]
    loss_fn = lambda: qlearning.td_loss(net, obs, actions, targets)
    return max_relative_gradient_error(loss_fn, net.param_arrays(), analytic, h)


def finite_diff_check_recurrent(net, obs_seq, actions, targets, h: float = 1e-5) -> float:
    """Gradient check for a recurrent Q-network on one sequence batch."""
    _, grads = qlearning.sequence_td_loss_and_grads(net, obs_seq, actions, targets)
    analytic = [g.copy() for g in grads]
    loss_fn = lambda: qlearning.sequence_td_loss(net, obs_seq, actions, targets)
    return max_relative_gradient_error(loss_fn, net.param_arrays(), analytic, h)


def finite_diff_check_embedder(net, obs, know, actions, targets, h: float = 1e-5) -> float:
    """Gradient check for the two-branch knowledge network."""
    _, grads = qlearning.k_td_loss_and_grads(net, obs, know, actions, targets)
    analytic = [g.copy() for g in grads]
    loss_fn = lambda: qlearning.k_td_loss(net, obs, know, actions, targets)
    return max_relative_gradient_error(loss_fn, net.param_arrays(), analytic, h)
