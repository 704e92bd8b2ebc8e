"""First-order optimizers over :class:`~omib.tensor.Tensor` parameters."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: Sequence[Tensor], state: AdamState, *, skip_missing: bool = False) -> None:
    """Bias-corrected Adam update, in place.

    Weight decay is the coupled (L2) kind: ``wd * p`` is added to the
    gradient before the moment updates. Parameters without a gradient raise
    unless ``skip_missing`` is set, in which case they are left untouched
    (their moments do not advance).
    """
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    if len(state.m) != len(params):
        raise ValueError(f"adam_step: state tracks {len(state.m)} params, got {len(params)}")
    missing = [i for i, p in enumerate(params) if p.grad is None]
    if missing and not skip_missing:
        raise ValueError(f"adam_step: no gradient for parameter(s) {missing}")

    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad
        if g is None:
            continue
        if g.shape != p.shape:
            raise ValueError(f"adam_step: grad shape {g.shape} != param shape {p.shape}")
        if state.weight_decay:
            g = g + state.weight_decay * p.data
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        denom = np.sqrt(v * (1.0 / bc2))
        denom += state.eps
        p.data -= (state.lr / bc1) * m / denom


class Adam:
    """Thin stateful wrapper: ``opt.zero_grad(); ...; opt.step()``."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-4, **kw):
        self.params = list(params)
        self.state = AdamState(lr=lr, **kw)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        adam_step(self.params, self.state, skip_missing=True)
