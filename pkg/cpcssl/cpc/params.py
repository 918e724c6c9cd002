from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from cpcssl.autodiff import Tensor, parameter
from cpcssl.core.exceptions import ConfigError

NamedParams = Dict[str, Tensor]


@dataclass(frozen=True)
class CpcConfig:
    """Context length t, prediction steps K, contrastive set size N and latent sizes."""

    t: int = 2
    K: int = 3
    N: int = 8
    d_z: int = 64
    d_c: int = 64

    def __post_init__(self):
        if self.t < 1:
            raise ConfigError(f"t must be >= 1, got {self.t}", key="model.t")
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}", key="model.K")
        if self.N < 2:
            raise ConfigError(f"N must be >= 2, got {self.N}", key="model.N")
        if self.d_z < 1 or self.d_c < 1:
            raise ConfigError(f"latent sizes must be positive, got d_z={self.d_z} d_c={self.d_c}", key="model.d_z")

    @property
    def min_length(self) -> int:
        return self.t + self.K


def init_weight(gen: np.random.Generator, shape: Tuple[int, ...], name: str, scale: float = 1.0, fan_in: int = 0) -> Tensor:
    """Gaussian weights with std ``scale / sqrt(fan_in)``."""
    fan_in = fan_in or int(np.prod(shape[:-1])) or 1
    return parameter(gen.standard_normal(shape) * (scale / np.sqrt(fan_in)), name)


def init_bias(size: int, name: str) -> Tensor:
    return parameter(np.zeros(size), name)
