from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from app import constants as C
from app.errors import DivergenceError
from app.nn.tensor import Parameter


@dataclass
class AdamState:
    lr: float = C.ADAM_LR
    betas: Tuple[float, float] = C.ADAM_BETAS
    eps: float = C.ADAM_EPS
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Sequence[Parameter], state: AdamState) -> None:
    '''
    One bias-corrected Adam update of every parameter holding a gradient.

    Args:
        params (Sequence[Parameter]): Parameters; `.grad` is read, `.values` updated in place.
        state (AdamState): Moment estimates keyed by parameter name.
    Raises:
        DivergenceError: A gradient contains NaN or Inf.
    '''
    for p in params:
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            raise DivergenceError(f"Non-finite gradient in {p.name}")
    state.step += 1
    b1, b2 = state.betas
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p in params:
        if p.grad is None:
            continue
        m = state.m.get(p.name, np.zeros_like(p.values))
        v = state.v.get(p.name, np.zeros_like(p.values))
        m = b1 * m + (1.0 - b1) * p.grad
        v = b2 * v + (1.0 - b2) * p.grad * p.grad
        state.m[p.name], state.v[p.name] = m, v
        p.values -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


class Adam:
    def __init__(self, params: List[Parameter], lr: float = C.ADAM_LR,
                 betas: Tuple[float, float] = C.ADAM_BETAS, eps: float = C.ADAM_EPS):
        self.params = list(params)
        self.state = AdamState(lr=lr, betas=tuple(betas), eps=eps)

    def step(self) -> None:
        adam_step(self.params, self.state)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
