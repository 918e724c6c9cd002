"""Recurrent aggregator g_ar with a diagonal Gaussian head over the context c_t."""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from cpcssl.autodiff import GruWeights, RngState, Tensor, gru_cell, mac_category, ops
from cpcssl.core.exceptions import ShapeError
from cpcssl.cpc.params import NamedParams, init_bias, init_weight

LOG_VAR_MIN = -10.0
LOG_VAR_MAX = 10.0


@dataclass
class ContextDistribution:
    mu: Tensor
    log_var: Tensor


@dataclass
class AggregatorParams:
    """GRU with cell size D_c and affine heads for mu and log-variance.

    ``cond_dim`` extra inputs (a class vector) are concatenated to the final
    hidden state before the heads; it is 0 for the unconditional aggregator.
    """

    gru: GruWeights
    mu_w: Tensor
    mu_b: Tensor
    log_var_w: Tensor
    log_var_b: Tensor
    cond_dim: int = 0

    @classmethod
    def init(cls, gen: np.random.Generator, d_z: int, d_c: int, prefix: str = "agg", cond_dim: int = 0,
             scale: float = 1.0) -> "AggregatorParams":
        fan = d_z + d_c
        gru = GruWeights(
            init_weight(gen, (fan, d_c), f"{prefix}.gru.w_update", scale),
            init_bias(d_c, f"{prefix}.gru.b_update"),
            init_weight(gen, (fan, d_c), f"{prefix}.gru.w_reset", scale),
            init_bias(d_c, f"{prefix}.gru.b_reset"),
            init_weight(gen, (fan, d_c), f"{prefix}.gru.w_candidate", scale),
            init_bias(d_c, f"{prefix}.gru.b_candidate"),
        )
        head_in = d_c + cond_dim
        return cls(
            gru,
            init_weight(gen, (head_in, d_c), f"{prefix}.mu.w", scale),
            init_bias(d_c, f"{prefix}.mu.b"),
            init_weight(gen, (head_in, d_c), f"{prefix}.log_var.w", 0.1 * scale),
            init_bias(d_c, f"{prefix}.log_var.b"),
            cond_dim,
        )

    @property
    def d_c(self) -> int:
        return self.mu_b.shape[0]

    @property
    def d_z(self) -> int:
        return self.gru.w_update.shape[0] - self.d_c

    def named(self) -> NamedParams:
        params = [*self.gru, self.mu_w, self.mu_b, self.log_var_w, self.log_var_b]
        return {p.name: p for p in params}


def run_gru(z_context: Tensor, agg: AggregatorParams) -> Tensor:
    """Final hidden state after consuming the rows of ``t×D_z`` (or ``B×t×D_z``) in order from h0 = 0."""
    batched = z_context.ndim == 3
    steps = z_context.shape[-2]
    lead = (z_context.shape[0],) if batched else ()
    h = Tensor(np.zeros(lead + (agg.d_c,)))
    with mac_category("ag"):
        for i in range(steps):
            x = ops.index(z_context, (slice(None), i) if batched else i)
            h = gru_cell(h, x, agg.gru)
    return h


def aggregate_context(z_context: Tensor, agg: AggregatorParams, t: Optional[int] = None,
                      condition: Optional[Tensor] = None) -> ContextDistribution:
    """GRU over the context rows, then mu and clamped log-variance from the final state."""
    if t is not None and z_context.shape[-2] != t:
        raise ShapeError(f"context has {z_context.shape[-2]} rows, expected t={t}")
    if z_context.shape[-1] != agg.d_z:
        raise ShapeError(f"context rows have width {z_context.shape[-1]}, aggregator expects {agg.d_z}")
    h = run_gru(z_context, agg)
    if agg.cond_dim:
        if condition is None or condition.shape[-1] != agg.cond_dim:
            raise ShapeError(f"aggregator needs a condition vector of width {agg.cond_dim}")
        h = ops.concat([h, condition], axis=h.ndim - 1)
    with mac_category("ag"):
        mu = ops.add(ops.matmul(h, agg.mu_w), agg.mu_b)
        log_var = ops.clamp(ops.add(ops.matmul(h, agg.log_var_w), agg.log_var_b), LOG_VAR_MIN, LOG_VAR_MAX)
    return ContextDistribution(mu, log_var)


def context_noise(rng: RngState, sample_id: int, d_c: int) -> np.ndarray:
    """Standard normal eps for one sequence, keyed by its id so batching does not change it."""
    return rng.child(f"context:{sample_id}").normal(d_c)


def sample_context(dist: ContextDistribution, rng: Optional[RngState] = None, eps: Optional[np.ndarray] = None) -> Tensor:
    """Reparameterised draw c = mu + exp(0.5 log_var) * eps."""
    if eps is None:
        if rng is None:
            raise ValueError("sample_context needs an rng or explicit eps")
        eps = rng.normal(dist.mu.shape)
    if eps.shape != dist.mu.shape:
        raise ShapeError(f"noise shape {eps.shape} does not match context {dist.mu.shape}")
    return ops.add(dist.mu, ops.mul(ops.exp(ops.mul(dist.log_var, 0.5)), eps))
