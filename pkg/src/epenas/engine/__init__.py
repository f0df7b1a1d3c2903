from .ops import (
    NORM_EPS,
    avgpool2x2,
    avgpool3x3,
    batchnorm_train,
    conv2d,
    global_avg_pool,
    linear,
    relu,
)
from .params import LayerParams, conv_params, layer_rng, linear_params, norm_params
from .tensor import (
    ShapeError,
    TapeError,
    Tensor,
    add,
    backward_to_input,
    finite_diff_gradient,
    sum_all,
)

__all__ = [
    "NORM_EPS",
    "LayerParams",
    "ShapeError",
    "TapeError",
    "Tensor",
    "add",
    "avgpool2x2",
    "avgpool3x3",
    "backward_to_input",
    "batchnorm_train",
    "conv2d",
    "conv_params",
    "finite_diff_gradient",
    "global_avg_pool",
    "layer_rng",
    "linear",
    "linear_params",
    "norm_params",
    "relu",
    "sum_all",
]
