"""Adam with bias correction and optional decoupled weight decay."""
from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from cpcssl.autodiff import Tensor
from cpcssl.core.exceptions import ShapeError

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8


@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params: Mapping[str, Tensor]) -> "AdamState":
        return cls({n: np.zeros_like(p.data) for n, p in params.items()},
                   {n: np.zeros_like(p.data) for n, p in params.items()})


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray], state: AdamState, lr: float,
              weight_decay: float = 0.0) -> AdamState:
    """One update of every named parameter in place; parameters are visited in sorted name order."""
    state.step += 1
    correction1 = 1.0 - BETA1 ** state.step
    correction2 = 1.0 - BETA2 ** state.step
    for name in sorted(params):
        param, grad = params[name], grads.get(name)
        if grad is None:
            grad = np.zeros_like(param.data)
        if grad.shape != param.shape:
            raise ShapeError(f"gradient for {name} has shape {grad.shape}, parameter has {param.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(param.data)
            state.v[name] = np.zeros_like(param.data)
        m = state.m[name] = BETA1 * state.m[name] + (1.0 - BETA1) * grad
        v = state.v[name] = BETA2 * state.v[name] + (1.0 - BETA2) * grad * grad
        update = (m / correction1) / (np.sqrt(v / correction2) + EPSILON)
        if weight_decay:
            update = update + weight_decay * param.data
        param.data -= lr * update
    return state
