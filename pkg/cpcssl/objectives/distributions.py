"""Entropies, Gaussian log-density and the Gumbel-Softmax relaxation."""
import math
from typing import Union

import numpy as np

from cpcssl.autodiff import RngState, Tensor, ops
from cpcssl.cpc.aggregator import ContextDistribution

LOG_2PI = math.log(2.0 * math.pi)
SIMPLEX_TOL = 1e-9
_U_MIN = np.finfo(np.float64).tiny
_U_MAX = 1.0 - 2.0 ** -53


def gaussian_entropy(dist: ContextDistribution) -> Tensor:
    """0.5 * sum_i (1 + ln 2pi + log_var_i); one value per row for batched heads."""
    lv = dist.log_var
    return ops.mul(ops.sum(ops.add(lv, 1.0 + LOG_2PI), axis=lv.ndim - 1), 0.5)


def gaussian_log_density(c: Tensor, mu: Tensor, log_var: Tensor) -> Tensor:
    """log N(c; mu, diag(exp(log_var))), summed over the last axis."""
    diff = ops.sub(c, mu)
    quad = ops.div(ops.mul(diff, diff), ops.exp(log_var))
    return ops.mul(ops.sum(ops.add(ops.add(quad, log_var), LOG_2PI), axis=c.ndim - 1), -0.5)


def check_simplex(probs: np.ndarray) -> None:
    if np.any(probs < 0) or abs(float(probs.sum()) - 1.0) > SIMPLEX_TOL:
        raise ValueError(f"not a probability vector: sum={probs.sum()}, min={probs.min()}")


def categorical_entropy(probs: Union[np.ndarray, Tensor]) -> float:
    """-sum p ln p with 0 ln 0 = 0."""
    p = np.asarray(probs.data if isinstance(probs, Tensor) else probs, dtype=np.float64)
    check_simplex(p)
    nz = p > 0
    return float(-(p[nz] * np.log(p[nz])).sum())


def categorical_entropy_from_log_probs(log_probs: Tensor) -> Tensor:
    """Differentiable -sum exp(l) l over the last axis of normalised log-probabilities."""
    return ops.neg(ops.sum(ops.mul(ops.exp(log_probs), log_probs), axis=log_probs.ndim - 1))


def gumbel_noise(rng: RngState, shape) -> np.ndarray:
    u = np.clip(rng.uniform(shape), _U_MIN, _U_MAX)
    return -np.log(-np.log(u))


def gumbel_softmax_sample(log_probs: Union[Tensor, np.ndarray], tau: float, rng: RngState = None,
                          noise: np.ndarray = None) -> Tensor:
    """softmax((log_probs + g) / tau) with g ~ Gumbel(0, 1); differentiable w.r.t. log_probs."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    log_probs = ops.as_tensor(log_probs)
    if noise is None:
        noise = gumbel_noise(rng, log_probs.shape)
    return ops.softmax(ops.mul(ops.add(log_probs, noise), 1.0 / tau), axis=-1)


def temperature_at(epoch: int, tau: float, anneal: float, tau_min: float) -> float:
    """tau * anneal**epoch, floored at tau_min."""
    return max(tau_min, tau * anneal ** epoch)
