"""Adam optimizer and soft target-network updates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .networks import same_architecture

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    """Per-parameter first/second moment estimates plus the step counter."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray]) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params])


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState,
              lr: float, beta1: float = ADAM_BETA1, beta2: float = ADAM_BETA2,
              eps: float = ADAM_EPS) -> None:
    """One in-place Adam update over a parameter list."""
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise ValueError("parameter/gradient shapes do not align")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite gradient; refusing to update parameters")
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def soft_update_params(online: list[np.ndarray], target: list[np.ndarray], tau: float) -> None:
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    if len(online) != len(target) or any(o.shape != t.shape for o, t in zip(online, target)):
        raise ValueError("online/target parameter shapes do not align")
    for o, t in zip(online, target):
        t *= 1.0 - tau
        t += tau * o


def soft_update(online_net, target_net, tau: float) -> None:
    """target <- tau * online + (1 - tau) * target, elementwise."""
    if not same_architecture(online_net, target_net):
        raise ValueError("online and target network architectures differ")
    soft_update_params(online_net.param_arrays(), target_net.param_arrays(), tau)


@dataclass
class Optimizer:
    """Adam bound to one network's parameters."""

    lr: float
    state: AdamState = field(default=None)

    @classmethod
    def for_net(cls, net, lr: float) -> "Optimizer":
        return cls(lr=lr, state=AdamState.for_params(net.param_arrays()))

    def step(self, net) -> None:
        adam_step(net.param_arrays(), net.grad_arrays(), self.state, self.lr)
