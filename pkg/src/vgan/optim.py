"""ADAM with bias correction, operating in place on named parameters."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ValidityError


@dataclass
class AdamState:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params, learning_rate, **kwargs):
        state = cls(learning_rate=learning_rate, **kwargs)
        for name, p in params.items():
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        return state


def adam_step(params, state, grads=None):
    """Apply one ADAM update to ``params`` (name -> Tensor) in place.

    Gradients are taken from ``grads`` when given, otherwise from each
    parameter's ``.grad``. Returns the updated state (the same object).
    Nothing is modified if any gradient or moment estimate is invalid.
    """
    if grads is None:
        grads = {name: p.grad for name, p in params.items()}
    for name, p in params.items():
        g = grads[name]
        if g is None:
            raise ValidityError(f"parameter {name} has no gradient")
        if g.shape != p.data.shape or state.m[name].shape != p.data.shape:
            raise DimensionError(f"adam_step: shape mismatch for {name}")
        if not np.all(np.isfinite(g)):
            raise ValidityError(f"non-finite gradient for {name}")

    b1, b2 = state.beta1, state.beta2
    updated = {}
    for name, p in params.items():
        g = grads[name]
        dt = p.data.dtype.type
        with np.errstate(over="ignore"):
            m = dt(b1) * state.m[name] + dt(1.0 - b1) * g
            v = dt(b2) * state.v[name] + dt(1.0 - b2) * (g * g)
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(v))):
            raise ValidityError(f"moment estimates overflowed for {name}")
        updated[name] = (m, v)

    state.step += 1
    t = state.step
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    for name, p in params.items():
        m, v = updated[name]
        state.m[name][...] = m
        state.v[name][...] = v
        if state.learning_rate == 0.0:
            continue
        dt = p.data.dtype.type
        mhat = m / dt(corr1)
        vhat = v / dt(corr2)
        p.data -= dt(state.learning_rate) * mhat / (np.sqrt(vhat) + dt(state.epsilon))
    return state
