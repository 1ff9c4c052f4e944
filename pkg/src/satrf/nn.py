"""Linear layers and an Adam optimizer over named parameter dicts.

Parameters live in plain ``{name: ndarray}`` dicts.  Each training step wraps
them as graph leaves, runs backward, then applies ``adam_step`` in place.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_linear(rng: np.random.Generator, fan_in: int, fan_out: int):
    """Weights Glorot-uniform, biases zero."""
    return glorot_uniform(rng, fan_in, fan_out), np.zeros(fan_out)


def linear(x, w, b):
    return ad.matmul(x, w) + b


@dataclass
class AdamState:
    """Moment accumulators plus hyperparameters; shapes mirror the params."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: dict[str, np.ndarray], lr: float = 5e-4,
              beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(p) for k, p in params.items()}
    return AdamState(m=m, v=v, lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState) -> None:
    """One bias-corrected Adam update, in place on ``params``.

    Only names present in ``grads`` are updated; anything else (frozen heads,
    for instance) is left untouched, including its moments.
    """
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ad.ShapeError(
                f"adam_step: grad shape {g.shape} != param shape {p.shape} for {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
