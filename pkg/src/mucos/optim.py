"""AdamW with decoupled weight decay and bias-corrected moments."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass(frozen=True)
class AdamWHyper:
    lr: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01


@dataclass
class AdamWState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def like(cls, params: dict[str, np.ndarray]) -> "AdamWState":
        return cls(0, {k: np.zeros_like(p) for k, p in params.items()}, {k: np.zeros_like(p) for k, p in params.items()})


def adamw_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamWState,
    hyper: AdamWHyper,
) -> None:
    """Update ``params`` and ``state`` in place.

    Weight decay shrinks each parameter by ``lr * weight_decay`` before the
    adaptive step, independently of the gradient.
    """
    if set(grads) != set(params):
        raise ValueError(f"gradient names {sorted(grads)} != parameter names {sorted(params)}")
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient for {name}")
    if not state.m:
        fresh = AdamWState.like(params)
        state.m, state.v = fresh.m, fresh.v

    state.step += 1
    t = state.step
    b1, b2, lr = hyper.beta1, hyper.beta2, hyper.lr
    correction1 = 1.0 - b1**t
    correction2 = 1.0 - b2**t
    for name, p in params.items():
        g = grads[name]
        m, v = state.m[name], state.v[name]
        if hyper.weight_decay:
            p *= 1.0 - lr * hyper.weight_decay
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / correction1) / (np.sqrt(v / correction2) + hyper.eps)
