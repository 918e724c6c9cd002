from cpcssl.models.config import ExperimentConfig, parse_config, parse_config_text
from cpcssl.models.runs import EvalRequest, EvalResult, RunSummary, VerifyCheck, VerifyReport

__all__ = [
    "EvalRequest",
    "EvalResult",
    "ExperimentConfig",
    "RunSummary",
    "VerifyCheck",
    "VerifyReport",
    "parse_config",
    "parse_config_text",
]
