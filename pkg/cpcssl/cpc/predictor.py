"""Bilinear step scorers W_k and the InfoNCE loss."""
from dataclasses import dataclass
from typing import List

import numpy as np

from cpcssl.autodiff import Tensor, add_macs, mac_category, ops
from cpcssl.core.exceptions import ShapeError
from cpcssl.cpc.params import NamedParams, init_weight


@dataclass
class PredictorBank:
    weights: List[Tensor]

    @classmethod
    def init(cls, gen: np.random.Generator, K: int, d_z: int, d_c: int, scale: float = 0.01) -> "PredictorBank":
        return cls([init_weight(gen, (d_z, d_c), f"pred.w{k + 1}", scale, fan_in=d_c) for k in range(K)])

    @property
    def K(self) -> int:
        return len(self.weights)

    def named(self) -> NamedParams:
        return {w.name: w for w in self.weights}


def score(z: Tensor, c: Tensor, w_k: Tensor) -> Tensor:
    """Log of f_k: the bilinear form z^T W_k c."""
    if z.ndim != 1 or c.ndim != 1 or w_k.shape != (z.shape[0], c.shape[0]):
        raise ShapeError(f"score shape mismatch: z {z.shape}, W {w_k.shape}, c {c.shape}")
    with mac_category("score"):
        return ops.matmul(z, ops.matmul(w_k, c))


def step_scores(c: Tensor, candidates: Tensor, w_k: Tensor) -> Tensor:
    """Scores of ``B×N×D_z`` candidates against ``B×D_c`` contexts, shape ``B×N``."""
    batch, n, d_z = candidates.shape
    if c.shape != (batch, w_k.shape[1]) or w_k.shape[0] != d_z:
        raise ShapeError(f"score shape mismatch: c {c.shape}, candidates {candidates.shape}, W {w_k.shape}")
    with mac_category("score"):
        prediction = ops.matmul(c, ops.transpose(w_k))
        add_macs(batch * n * d_z)
        return ops.sum(ops.mul(candidates, ops.reshape(prediction, (batch, 1, d_z))), axis=2)


def nce_from_scores(scores: Tensor, positive_index: np.ndarray) -> Tensor:
    """-log_softmax(scores)[d] per row."""
    return ops.neg(ops.pick(ops.log_softmax(scores, axis=-1), positive_index))


def info_nce_step_loss(c: Tensor, candidates: Tensor, positive_index: int, w_k: Tensor) -> Tensor:
    """Cross-entropy of picking the positive among the N candidates."""
    n = candidates.shape[0]
    if not 0 <= positive_index < n:
        raise IndexError(f"positive_index {positive_index} out of range for {n} candidates")
    scores = step_scores(ops.reshape(c, (1, -1)), ops.reshape(candidates, (1,) + candidates.shape), w_k)
    return ops.reshape(nce_from_scores(scores, np.array([positive_index])), ())


def pool_features(z_all: Tensor) -> Tensor:
    """Mean over rows (the sequence positions) of ``T×D_z`` or ``B×T×D_z`` codes."""
    if z_all.shape[-2] < 1:
        raise ShapeError("cannot pool an empty sequence")
    return ops.mean(z_all, axis=z_all.ndim - 2)
