"""Multiply-accumulate accounting: analytic per-unit costs against instrumented forward passes."""
import math
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from cpcssl.autodiff import RngState, Tensor, count_macs, ops
from cpcssl.cpc.aggregator import AggregatorParams, aggregate_context
from cpcssl.cpc.encoder import EncoderParams, TextEncoderParams, conv_output_side
from cpcssl.cpc.params import CpcConfig
from cpcssl.cpc.predictor import pool_features
from cpcssl.data.negatives import build_tasks
from cpcssl.data.samples import SequenceSample
from cpcssl.objectives.classifier import ClassifierParams, classify
from cpcssl.objectives.cpc_ssl import CpcSslParams, cpc_forward
from cpcssl.objectives.supervised import SupervisedParams
from cpcssl.training.evaluate import group_samples, item_scores

TOLERANCE = 0.05
TEST_RATIO_LIMIT = 1.3


def encoder_macs(enc: EncoderParams) -> int:
    """C_enc for one patch, from layer shapes."""
    if isinstance(enc, TextEncoderParams):
        length, embed = enc.max_tokens, enc.embedding.shape[1]
        return sum((length - k.shape[1] + 1) * k.shape[0] * k.shape[1] * embed for k in enc.kernels)
    channels, height, width = enc.patch_shape
    total = 0
    for layer in enc.layers:
        height = conv_output_side(height, layer.kernel, layer.stride)
        width = conv_output_side(width, layer.kernel, layer.stride)
        total += layer.filters * channels * layer.kernel ** 2 * height * width
        channels = layer.filters
    flat = channels * height * width
    if enc.hidden_w is not None:
        total += flat * enc.hidden_w.shape[1]
        flat = enc.hidden_w.shape[1]
    return total + flat * enc.d_z


def aggregator_macs(agg: AggregatorParams, t: int) -> int:
    """C_ag: three gate products per step plus the two heads."""
    d_c = agg.d_c
    return 3 * (agg.d_z + d_c) * d_c * t + 2 * (d_c + agg.cond_dim) * d_c


def classifier_macs(cls: ClassifierParams) -> int:
    return cls.weight.shape[0] * cls.weight.shape[1]


def train_cost(batch: int, n: int, k: int, t: int, c_enc: int, c_ag: int, c_cls: int) -> int:
    """M(NK+t)C_enc + M C_ag + M C_cls."""
    return batch * (n * k + t) * c_enc + batch * c_ag + batch * c_cls


@dataclass
class ComplexityReport:
    c_enc: int
    c_ag: int
    c_cls: int
    batch_size: int
    n: int
    k: int
    t: int
    predicted_train: int
    pooling_extra: int
    measured_train: int
    measured_train_parts: Dict[str, int]
    measured_score: int
    shared_encoding_train: int
    predicted_test: int
    measured_test_ssl: int
    measured_test_supervised: int
    measured_test_tiled: Optional[int]
    overlap_overhead: Optional[float]

    @property
    def train_error(self) -> float:
        expected = self.predicted_train + self.pooling_extra
        return abs(self.measured_train - expected) / expected

    @property
    def test_error(self) -> float:
        return abs(self.measured_test_ssl - self.predicted_test) / self.predicted_test

    @property
    def test_ratio(self) -> float:
        return self.measured_test_ssl / self.measured_test_supervised

    @property
    def tiled_ratio(self) -> Optional[float]:
        """SSL test cost over a classifier that encodes non-overlapping tiles of the image once."""
        if not self.measured_test_tiled:
            return None
        return self.measured_test_ssl / self.measured_test_tiled

    @property
    def ag_to_enc(self) -> float:
        return self.c_ag / self.c_enc

    def passed(self) -> bool:
        return (self.train_error <= TOLERANCE and self.test_error <= TOLERANCE
                and self.test_ratio <= TEST_RATIO_LIMIT)

    def to_dict(self) -> Dict:
        out = asdict(self)
        out.update(train_error=self.train_error, test_error=self.test_error, test_ratio=self.test_ratio,
                   tiled_ratio=self.tiled_ratio, ag_to_enc=self.ag_to_enc)
        return out


def _forward_macs(batch: Sequence[SequenceSample], params: CpcSslParams, n: int, rng: RngState, share: bool):
    cfg = CpcConfig(params.t, params.K, n, params.encoder.d_z, params.aggregator.d_c)
    tasks = build_tasks(batch, cfg, rng)
    with count_macs() as counter:
        cpc_forward(batch, tasks, params, rng, share=share)
    return counter


def ssl_test_macs(group: Sequence[SequenceSample], params: CpcSslParams) -> Counter:
    """One item through the whole SSL model: every patch encoded, the context of its first sequence, class scores."""
    length = group[0].length
    with count_macs() as counter:
        codes = params.encoder.encode(np.concatenate([np.asarray(s.patches) for s in group], axis=0))
        codes = ops.reshape(codes, (len(group), length, params.encoder.d_z))
        aggregate_context(ops.index(codes, (0, slice(0, params.t))), params.aggregator, t=params.t)
        features = pool_features(codes).data.mean(axis=0, keepdims=True)
        classify(Tensor(features), params.classifier)
    return counter


def tiled_test_macs(encoder: EncoderParams, classifier: ClassifierParams, image_size: int, patch: int) -> Counter:
    """A classifier that encodes the padded image as non-overlapping ``patch`` tiles, each once."""
    tiles = math.ceil(image_size / patch) ** 2
    with count_macs() as counter:
        codes = encoder.encode(np.zeros((tiles, *encoder.patch_shape)))
        classify(pool_features(ops.reshape(codes, (1, tiles, encoder.d_z))), classifier)
    return counter


def complexity_report(params: CpcSslParams, samples: Sequence[SequenceSample], batch_size: int, n: int,
                      rng: RngState, image_size: Optional[int] = None, patch: Optional[int] = None) -> ComplexityReport:
    """Compare the train-cost formula with an instrumented forward pass that encodes every candidate on its own.

    The shared encoding used in training (each batch position encoded once)
    and the bilinear scorer cost are reported beside it. The SSL test forward
    of one item is checked against ``C_enc*patches + C_ag + C_cls`` and set
    against the supervised classifier on the same patches. ``image_size`` and
    ``patch`` add the overlap caveat: a classifier over non-overlapping tiles.
    """
    batch = [s.without_label() for s in samples[:batch_size]]
    c_enc = encoder_macs(params.encoder)
    c_ag = aggregator_macs(params.aggregator, params.t)
    c_cls = classifier_macs(params.classifier)
    length = batch[0].length

    separate = _forward_macs(batch, params, n, rng, share=False)
    shared = _forward_macs(batch, params, n, rng, share=True)

    groups = group_samples(samples, limit=1)
    test_counter = ssl_test_macs(groups[0], params)
    with count_macs() as baseline_counter:
        item_scores(groups, SupervisedParams(params.encoder, params.classifier))
    patches = sum(s.length for s in groups[0])

    overlap, tiled = None, None
    if image_size and patch and not isinstance(params.encoder, TextEncoderParams):
        overlap = patches * patch * patch / float(image_size * image_size)
        tiled_counter = tiled_test_macs(params.encoder, params.classifier, image_size, patch)
        tiled = tiled_counter["enc"] + tiled_counter["cls"]

    return ComplexityReport(
        c_enc=c_enc,
        c_ag=c_ag,
        c_cls=c_cls,
        batch_size=len(batch),
        n=n,
        k=params.K,
        t=params.t,
        predicted_train=train_cost(len(batch), n, params.K, params.t, c_enc, c_ag, c_cls),
        pooling_extra=len(batch) * max(0, length - params.t - params.K) * c_enc,
        measured_train=separate["enc"] + separate["ag"] + separate["cls"],
        measured_train_parts={key: int(separate[key]) for key in ("enc", "ag", "cls", "score")},
        measured_score=int(separate["score"]),
        shared_encoding_train=int(shared["enc"]),
        predicted_test=c_enc * patches + c_ag + c_cls,
        measured_test_ssl=test_counter["enc"] + test_counter["ag"] + test_counter["cls"],
        measured_test_supervised=baseline_counter["enc"] + baseline_counter["cls"],
        measured_test_tiled=tiled,
        overlap_overhead=overlap,
    )
