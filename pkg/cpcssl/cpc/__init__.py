from cpcssl.cpc.aggregator import (
    AggregatorParams,
    ContextDistribution,
    aggregate_context,
    context_noise,
    sample_context,
)
from cpcssl.cpc.encoder import (
    ConvLayer,
    EncoderParams,
    TextEncoderParams,
    VisionEncoderParams,
    encode_patches,
    encode_sequence,
)
from cpcssl.cpc.params import CpcConfig
from cpcssl.cpc.predictor import PredictorBank, info_nce_step_loss, pool_features, score, step_scores

__all__ = [
    "AggregatorParams",
    "ContextDistribution",
    "ConvLayer",
    "CpcConfig",
    "EncoderParams",
    "PredictorBank",
    "TextEncoderParams",
    "VisionEncoderParams",
    "aggregate_context",
    "context_noise",
    "encode_patches",
    "encode_sequence",
    "info_nce_step_loss",
    "pool_features",
    "sample_context",
    "score",
    "step_scores",
]
