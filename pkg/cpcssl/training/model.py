"""Parameter construction for each training mode."""
from typing import Union

from cpcssl.autodiff import RngState
from cpcssl.core.exceptions import ConfigError
from cpcssl.cpc.aggregator import AggregatorParams
from cpcssl.cpc.encoder import ConvLayer, EncoderParams, TextEncoderParams, VisionEncoderParams
from cpcssl.cpc.predictor import PredictorBank
from cpcssl.data.samples import SequenceDataset
from cpcssl.models.config import ExperimentConfig
from cpcssl.objectives.ccpc_ssl import CcpcParams
from cpcssl.objectives.classifier import ClassifierParams
from cpcssl.objectives.cpc_ssl import CpcSslParams
from cpcssl.objectives.supervised import SupervisedParams

ModelParams = Union[CpcSslParams, CcpcParams, SupervisedParams]
MODE_CODES = {"cpc": 0, "ccpc": 1, "supervised-only": 2}
MODE_NAMES = {code: name for name, code in MODE_CODES.items()}


def build_encoder(cfg: ExperimentConfig, dataset: SequenceDataset, gen) -> EncoderParams:
    m = cfg.model
    if dataset.kind == "text":
        if m.d_z != 3 * m.text_filters:
            raise ConfigError(f"text encoders produce 3*text_filters={3 * m.text_filters} features, d_z is {m.d_z}",
                              key="model.d_z")
        return TextEncoderParams.init(gen, len(dataset.vocabulary), m.text_embed, m.text_filters,
                                      dataset.patch_shape[0], m.init_scale)
    # 1×1 patches (synthetic vectors) go straight to the dense layers
    layers = [ConvLayer(*spec) for spec in m.conv_layers] if dataset.patch_shape[1] > 1 else []
    return VisionEncoderParams.init(gen, dataset.patch_shape, layers, m.hidden, m.d_z, m.init_scale)


def build_model(cfg: ExperimentConfig, dataset: SequenceDataset) -> ModelParams:
    """Fresh parameters for ``cfg.train.mode``; ``cfg`` must already be resolved."""
    m = cfg.model
    gen = RngState(cfg.train.seed).child("init").generator()
    encoder = build_encoder(cfg, dataset, gen)
    classifier = ClassifierParams.init(gen, dataset.num_classes, m.d_z)
    mode = cfg.train.mode
    if mode == "supervised-only":
        return SupervisedParams(encoder, classifier)
    predictors = PredictorBank.init(gen, m.K, m.d_z, m.d_c)
    if mode == "cpc":
        return CpcSslParams(encoder, AggregatorParams.init(gen, m.d_z, m.d_c, scale=m.init_scale),
                            predictors, classifier, m.t)
    return CcpcParams(
        encoder,
        AggregatorParams.init(gen, m.d_z, m.d_c, prefix="gen", cond_dim=dataset.num_classes, scale=m.init_scale),
        AggregatorParams.init(gen, m.d_z, m.d_c, prefix="inf", cond_dim=dataset.num_classes, scale=m.init_scale),
        predictors,
        classifier,
        m.t,
    )


def mode_of(params: ModelParams) -> str:
    if isinstance(params, CcpcParams):
        return "ccpc"
    if isinstance(params, CpcSslParams):
        return "cpc"
    return "supervised-only"
