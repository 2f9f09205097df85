"""Global-norm gradient clipping and Adam."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def global_norm(grads) -> float:
    arrays = grads.values() if isinstance(grads, dict) else [grads]
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in arrays)))


def clip_gradients(grads, tau: float = 5.0):
    """Rescale to norm ``tau`` when the global L2 norm exceeds it.

    Accepts a single array or a dict of arrays; returns the same kind.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    norm = global_norm(grads)
    if norm <= tau:
        return grads
    scale = tau / norm
    if isinstance(grads, dict):
        return {k: g * scale for k, g in grads.items()}
    return grads * scale


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()}, 0)


def adam_step(params, grads, state: AdamState, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8, frozen: dict[str, np.ndarray] | None = None) -> None:
    """In-place bias-corrected Adam update.

    ``frozen`` maps a parameter name to a boolean row mask whose rows keep
    their values (used for frozen pretrained embeddings).
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        update = lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        if frozen and name in frozen:
            update[frozen[name]] = 0.0
        p -= update
