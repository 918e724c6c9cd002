from typing import Callable, Dict, Mapping

import numpy as np

from cpcssl.autodiff.tensor import Tape, Tensor, backward
from cpcssl.core.config import logger

EPS_RANGE = (1e-7, 1e-3)


def relative_error(g_ad: np.ndarray, g_fd: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    return np.abs(g_ad - g_fd) / np.maximum(floor, np.abs(g_ad) + np.abs(g_fd))


def numerical_gradient(fn: Callable[[], Tensor], param: Tensor, eps: float) -> np.ndarray:
    """Central differences of ``fn`` w.r.t. every coordinate of ``param``."""
    grad = np.zeros_like(param.data)
    for idx in np.ndindex(param.shape):
        original = param.data[idx]
        param.data[idx] = original + eps
        plus = fn().item()
        param.data[idx] = original - eps
        minus = fn().item()
        param.data[idx] = original
        grad[idx] = (plus - minus) / (2.0 * eps)
    return grad


def grad_check_report(
    fn: Callable[[], Tensor], params: Mapping[str, Tensor], eps: float = 1e-5, floor: float = 1e-12
) -> Dict[str, float]:
    """Max relative error per parameter between autodiff and central differences.

    ``fn`` must be deterministic: any randomness inside it comes from a fixed RngState.
    ``floor`` bounds the denominator from below.
    """
    lo, hi = EPS_RANGE
    if not lo <= eps <= hi:
        logger.warning(f"grad_check eps={eps} outside [{lo}, {hi}], clipping")
        eps = float(np.clip(eps, lo, hi))

    with Tape() as tape:
        loss = fn()
    analytic = backward(tape, loss, params)

    report = {}
    for name, param in params.items():
        numeric = numerical_gradient(fn, param, eps)
        err = relative_error(analytic[name], numeric, floor)
        report[name] = float(err.max()) if err.size else 0.0
    return report


def grad_check(fn: Callable[[], Tensor], params: Mapping[str, Tensor], eps: float = 1e-5, floor: float = 1e-12) -> float:
    """Max over all coordinates of |g_ad - g_fd| / max(floor, |g_ad| + |g_fd|)."""
    report = grad_check_report(fn, params, eps, floor)
    return max(report.values(), default=0.0)
