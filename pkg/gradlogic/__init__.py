# gradlogic/__init__.py

from .errors import AutodiffError, DimensionError, LabelError, ContractError, NumericError
from .tensor import Tensor, constant, resolve_dtype
from .graph import grad, backward
from .ops import matmul
from .layers import (
    conv2d, batch_norm, relu, max_pool2x2, flatten, linear,
    log_softmax, cross_entropy, top1_accuracy, BN_EPS,
)

__all__ = [
    "AutodiffError", "DimensionError", "LabelError", "ContractError", "NumericError",
    "Tensor", "constant", "resolve_dtype",
    "grad", "backward",
    "matmul",
    "conv2d", "batch_norm", "relu", "max_pool2x2", "flatten", "linear",
    "log_softmax", "cross_entropy", "top1_accuracy", "BN_EPS",
]
