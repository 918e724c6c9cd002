"""Linear classifier head h over pooled codes."""
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from cpcssl.autodiff import Tensor, mac_category, ops
from cpcssl.core.exceptions import DataError, ShapeError
from cpcssl.cpc.params import NamedParams, init_bias, init_weight


@dataclass
class ClassifierParams:
    weight: Tensor  # M×D_z
    bias: Tensor    # M

    @classmethod
    def init(cls, gen: np.random.Generator, num_classes: int, d_z: int, prefix: str = "cls",
             scale: float = 0.01) -> "ClassifierParams":
        if num_classes < 2:
            raise ShapeError(f"classifier needs at least 2 classes, got {num_classes}")
        return cls(init_weight(gen, (num_classes, d_z), f"{prefix}.w", scale, fan_in=d_z),
                   init_bias(num_classes, f"{prefix}.b"))

    @property
    def num_classes(self) -> int:
        return self.bias.shape[0]

    def named(self) -> NamedParams:
        return {self.weight.name: self.weight, self.bias.name: self.bias}


def classify(pooled: Tensor, cls: ClassifierParams) -> Tensor:
    """log_softmax(W pooled + b) for a ``D_z`` vector or a ``B×D_z`` batch."""
    if pooled.shape[-1] != cls.weight.shape[1]:
        raise ShapeError(f"pooled features of width {pooled.shape[-1]} do not fit classifier {cls.weight.shape}")
    with mac_category("cls"):
        logits = ops.add(ops.matmul(pooled, ops.transpose(cls.weight)), cls.bias)
    return ops.log_softmax(logits, axis=-1)


def label_array(labels: Sequence[Optional[int]], num_classes: int) -> np.ndarray:
    out = []
    for i, label in enumerate(labels):
        if label is None:
            raise DataError(f"labeled batch entry {i} has no label")
        if not 0 <= label < num_classes:
            raise DataError(f"label {label} outside [0, {num_classes})")
        out.append(label)
    return np.asarray(out, dtype=np.int64)


def per_sample_nll(log_probs: Tensor, labels: Sequence[Optional[int]]) -> Tensor:
    return ops.neg(ops.pick(log_probs, label_array(labels, log_probs.shape[-1])))


def classification_loss(log_probs: Tensor, labels: Sequence[Optional[int]]) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under ``B×M`` log-probabilities; 0 for an empty batch."""
    if len(labels) == 0:
        return Tensor(0.0)
    return ops.mean(per_sample_nll(log_probs, labels))
