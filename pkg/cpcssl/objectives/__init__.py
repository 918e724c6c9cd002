from cpcssl.objectives.breakdown import LossBreakdown
from cpcssl.objectives.ccpc_ssl import (
    CcpcParams,
    GumbelConfig,
    ccpc_labeled_bound,
    ccpc_unlabeled_bound,
    ccpc_unlabeled_exact,
    total_objective_ccpc,
)
from cpcssl.objectives.classifier import ClassifierParams, classification_loss, classify
from cpcssl.objectives.cpc_ssl import CpcSslParams, labeled_loss_cpc, total_objective_cpc, unlabeled_loss_cpc
from cpcssl.objectives.distributions import (
    categorical_entropy,
    gaussian_entropy,
    gaussian_log_density,
    gumbel_softmax_sample,
    temperature_at,
)
from cpcssl.objectives.supervised import SupervisedParams, supervised_objective

__all__ = [
    "CcpcParams",
    "ClassifierParams",
    "CpcSslParams",
    "GumbelConfig",
    "LossBreakdown",
    "SupervisedParams",
    "categorical_entropy",
    "ccpc_labeled_bound",
    "ccpc_unlabeled_bound",
    "ccpc_unlabeled_exact",
    "classification_loss",
    "classify",
    "gaussian_entropy",
    "gaussian_log_density",
    "gumbel_softmax_sample",
    "labeled_loss_cpc",
    "supervised_objective",
    "temperature_at",
    "total_objective_ccpc",
    "total_objective_cpc",
    "unlabeled_loss_cpc",
]
