from cpcssl.autodiff.counter import add_macs, count_macs, mac_category
from cpcssl.autodiff.gradcheck import grad_check, grad_check_report
from cpcssl.autodiff.ops import GruWeights, as_tensor, conv1d, conv2d, gru_cell, log_softmax, matmul
from cpcssl.autodiff.rng import RngState
from cpcssl.autodiff.tensor import Tape, Tensor, backward, parameter

__all__ = [
    "GruWeights",
    "RngState",
    "Tape",
    "Tensor",
    "add_macs",
    "as_tensor",
    "backward",
    "conv1d",
    "conv2d",
    "count_macs",
    "grad_check",
    "grad_check_report",
    "gru_cell",
    "log_softmax",
    "mac_category",
    "matmul",
    "parameter",
]
