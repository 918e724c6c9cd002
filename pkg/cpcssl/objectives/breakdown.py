from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from cpcssl.autodiff import Tensor

BOOKKEEPING_TOL = 1e-10


@dataclass
class LossBreakdown:
    """Minimizable objective plus the parts it was assembled from.

    ``labeled_sum`` and ``unlabeled_sum`` are the summed negative bounds of the
    two halves of the batch, the first scaled by ``labeled_weight``; ``cls_loss``
    is the mean classification NLL that enters once more with weight ``alpha_used``.
    """

    objective: Tensor
    nce_per_step: List[float]
    cls_loss: float
    alpha_used: float = 0.0
    labeled_sum: float = 0.0
    unlabeled_sum: float = 0.0
    entropy_terms: Dict[str, float] = field(default_factory=dict)
    labeled_weight: float = 1.0

    @property
    def total(self) -> float:
        return self.objective.item()

    def combination(self) -> float:
        return self.labeled_weight * self.labeled_sum + self.unlabeled_sum + self.alpha_used * self.cls_loss

    def check_bookkeeping(self) -> bool:
        return abs(self.total - self.combination()) <= BOOKKEEPING_TOL * max(1.0, abs(self.total))

    def parts(self) -> Dict[str, float]:
        """Named scalar terms, for logs and non-finite diagnostics."""
        parts = {f"nce_k{k + 1}": v for k, v in enumerate(self.nce_per_step)}
        parts["cls"] = self.cls_loss
        parts.update({f"entropy_{name}": v for name, v in self.entropy_terms.items()})
        parts["labeled"] = self.labeled_sum
        parts["unlabeled"] = self.unlabeled_sum
        parts["total"] = self.total
        return parts

    def first_non_finite(self):
        for name, value in self.parts().items():
            if not np.isfinite(value):
                return name, value
        return None


def column_means(matrix: Tensor) -> List[float]:
    """Per-step mean over batch rows of a ``B×K`` loss matrix."""
    if matrix.shape[0] == 0:
        return [0.0] * matrix.shape[1]
    return [float(v) for v in matrix.data.mean(axis=0)]
