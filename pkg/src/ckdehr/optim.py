"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


class DivergenceError(FloatingPointError):
    """A gradient or loss went non-finite during training."""


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[int, np.ndarray] = field(default_factory=dict)
    v: dict[int, np.ndarray] = field(default_factory=dict)


def adam_step(params: list[Tensor], grads: list[np.ndarray | None], state: AdamState) -> None:
    """One in-place Adam update over ``params``.

    Parameters with ``requires_grad=False`` or a missing gradient are skipped
    entirely. Moment buffers are keyed by position in ``params``, so pass the
    same list every step.
    """
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None or not p.requires_grad:
            continue
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {list(g.shape)} != parameter shape {list(p.shape)}")
        if not np.isfinite(g).all():
            label = p.name or f"#{i}"
            raise DivergenceError(f"non-finite gradient for parameter {label} at step {state.step + 1}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None or not p.requires_grad:
            continue
        m = state.m.get(i)
        if m is None:
            m = state.m[i] = np.zeros_like(p.data)
            state.v[i] = np.zeros_like(p.data)
        v = state.v[i]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


class Adam:
    """Convenience wrapper binding a parameter list to an :class:`AdamState`."""

    def __init__(self, params: list[Tensor], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = [p for p in params if p.requires_grad]
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state)
