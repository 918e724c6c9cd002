"""cpc-SSL: per-sequence likelihood terms and the semi-supervised total objective."""
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Tuple

import numpy as np

from cpcssl.autodiff import RngState, Tensor, ops
from cpcssl.core.exceptions import ConfigError, DataError
from cpcssl.cpc.aggregator import AggregatorParams, aggregate_context, context_noise, sample_context
from cpcssl.cpc.encoder import EncoderParams
from cpcssl.cpc.params import NamedParams
from cpcssl.cpc.predictor import PredictorBank
from cpcssl.data.samples import ContrastiveTask, SequenceSample
from cpcssl.objectives.breakdown import LossBreakdown, column_means
from cpcssl.objectives.classifier import ClassifierParams, classify, per_sample_nll
from cpcssl.objectives.forward import build_index, check_lengths, encode_batch, nce_matrix


@dataclass
class CpcSslParams:
    encoder: EncoderParams
    aggregator: AggregatorParams
    predictors: PredictorBank
    classifier: ClassifierParams
    t: int

    @property
    def K(self) -> int:
        return self.predictors.K

    def named(self) -> NamedParams:
        named = {}
        for part in (self.encoder, self.aggregator, self.predictors, self.classifier):
            named.update(part.named())
        return named


def context_noise_batch(rng: RngState, samples: Sequence[SequenceSample], d_c: int) -> np.ndarray:
    return np.stack([context_noise(rng, s.id, d_c) for s in samples])


def cpc_forward(targets: Sequence[SequenceSample], tasks: Mapping[int, ContrastiveTask], params: CpcSslParams,
                rng: RngState, pool: Optional[Mapping[int, SequenceSample]] = None,
                share: bool = True) -> Tuple[Tensor, Tensor]:
    """``B×K`` InfoNCE losses with one reparameterised context per sequence, and ``B×M`` class log-probs."""
    check_lengths(targets, params.t, params.K)
    index = build_index(targets, tasks, pool)
    codes = encode_batch(index, params.encoder, share)
    dist = aggregate_context(codes.context, params.aggregator, t=params.t)
    c = sample_context(dist, eps=context_noise_batch(rng, targets, params.aggregator.d_c))
    return nce_matrix(c, codes, index, params.predictors), classify(codes.pooled, params.classifier)


def check_batches(labeled: Sequence[SequenceSample], unlabeled: Sequence[SequenceSample], alpha: float,
                  labeled_weight: float = 1.0) -> None:
    if not labeled and not unlabeled:
        raise DataError("labeled and unlabeled batches are both empty")
    if alpha < 0:
        raise ConfigError(f"alpha must be >= 0, got {alpha}", key="train.alpha")
    if labeled_weight < 0:
        raise ConfigError(f"labeled weight must be >= 0, got {labeled_weight}")


def split_rows(rows: Tensor, n_labeled: int) -> Tuple[Tensor, Tensor]:
    return ops.index(rows, slice(0, n_labeled)), ops.index(rows, slice(n_labeled, None))


def mean_or_zero(values: Tensor) -> Tensor:
    return ops.mean(values) if values.shape[0] else Tensor(0.0)


def total_objective_cpc(labeled: Sequence[SequenceSample], unlabeled: Sequence[SequenceSample],
                        tasks: Mapping[int, ContrastiveTask], params: CpcSslParams, rng: RngState, alpha: float,
                        pool: Optional[Mapping[int, SequenceSample]] = None, share: bool = True,
                        labeled_weight: float = 1.0) -> LossBreakdown:
    """labeled_weight * sum(-L) over labeled + sum(-U) over unlabeled + alpha * mean classification NLL.

    The labeled term already holds its own NLL, so with unit weights labeled
    classification is weighted 1 + alpha overall.
    """
    check_batches(labeled, unlabeled, alpha, labeled_weight)
    labeled, unlabeled = list(labeled), list(unlabeled)
    nce, log_probs = cpc_forward(labeled + unlabeled, tasks, params, rng, pool, share)
    nce_rows = ops.sum(nce, axis=1)
    nce_labeled, nce_unlabeled = split_rows(nce_rows, len(labeled))
    nll = per_sample_nll(ops.index(log_probs, slice(0, len(labeled))), [s.label for s in labeled])

    labeled_sum = ops.add(ops.sum(nce_labeled), ops.sum(nll))
    unlabeled_sum = ops.sum(nce_unlabeled)
    cls_loss = mean_or_zero(nll)
    objective = ops.add(ops.add(ops.mul(labeled_sum, labeled_weight), unlabeled_sum), ops.mul(cls_loss, alpha))
    return LossBreakdown(objective, column_means(nce), cls_loss.item(), alpha,
                         labeled_sum.item(), unlabeled_sum.item(), labeled_weight=labeled_weight)


def labeled_loss_cpc(sample: SequenceSample, task: ContrastiveTask, params: CpcSslParams, rng: RngState,
                     pool: Optional[Mapping[int, SequenceSample]] = None) -> LossBreakdown:
    """-L for one labeled sequence: classification NLL plus the K step losses."""
    if sample.label is None:
        raise DataError(f"sample {sample.id} has no label")
    return total_objective_cpc([sample], [], {sample.id: task}, params, rng, 0.0, pool)


def unlabeled_loss_cpc(sample: SequenceSample, task: ContrastiveTask, params: CpcSslParams, rng: RngState,
                       pool: Optional[Mapping[int, SequenceSample]] = None) -> LossBreakdown:
    """-U for one sequence: the K step losses only."""
    result = total_objective_cpc([], [sample.without_label()], {sample.id: task}, params, rng, 0.0, pool)
    result.cls_loss = 0.0
    return result
