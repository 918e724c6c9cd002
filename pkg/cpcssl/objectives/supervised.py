"""Supervised-only baseline: encoder, mean pooling and the classifier, trained on labels alone."""
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from cpcssl.autodiff import Tensor, ops
from cpcssl.core.exceptions import DataError
from cpcssl.cpc.encoder import EncoderParams
from cpcssl.cpc.params import NamedParams
from cpcssl.cpc.predictor import pool_features
from cpcssl.data.samples import SequenceSample
from cpcssl.objectives.breakdown import LossBreakdown
from cpcssl.objectives.classifier import ClassifierParams, classify, per_sample_nll


@dataclass
class SupervisedParams:
    encoder: EncoderParams
    classifier: ClassifierParams

    def named(self) -> NamedParams:
        return {**self.encoder.named(), **self.classifier.named()}


def pooled_codes(samples: Sequence[SequenceSample], encoder: EncoderParams) -> Tensor:
    """``B×D_z`` mean of the codes of every patch in each sequence."""
    lengths = {s.length for s in samples}
    if len(lengths) != 1:
        raise DataError(f"sequences in one batch must share a length, got {sorted(lengths)}")
    length = lengths.pop()
    stacked = np.concatenate([np.asarray(s.patches) for s in samples], axis=0)
    codes = encoder.encode(stacked)
    return pool_features(ops.reshape(codes, (len(samples), length, encoder.d_z)))


def predict_log_probs(samples: Sequence[SequenceSample], encoder: EncoderParams, classifier: ClassifierParams) -> Tensor:
    return classify(pooled_codes(samples, encoder), classifier)


def supervised_objective(labeled: Sequence[SequenceSample], params: SupervisedParams, alpha: float) -> LossBreakdown:
    """sum NLL + alpha * mean NLL over the labeled batch."""
    if not labeled:
        raise DataError("supervised objective needs a non-empty labeled batch")
    nll = per_sample_nll(predict_log_probs(labeled, params.encoder, params.classifier), [s.label for s in labeled])
    labeled_sum = ops.sum(nll)
    cls_loss = ops.mean(nll)
    objective = ops.add(labeled_sum, ops.mul(cls_loss, alpha))
    return LossBreakdown(objective, [], cls_loss.item(), alpha, labeled_sum.item(), 0.0)
