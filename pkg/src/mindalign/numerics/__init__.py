from .gradcheck import finite_diff_check
from .tensor import (
    Tensor,
    add,
    as_tensor,
    backward,
    broadcast_to,
    concat,
    gelu,
    getitem,
    layer_norm,
    linear,
    log_softmax_rows,
    matmul,
    mean,
    mul,
    no_grad,
    reshape,
    softmax_rows,
    stack,
    sub,
    swapaxes,
    tabs,
    transpose,
    tsum,
    zero_grad,
)

__all__ = [
    "Tensor", "add", "as_tensor", "backward", "broadcast_to", "concat", "finite_diff_check",
    "gelu", "getitem", "layer_norm", "linear", "log_softmax_rows", "matmul", "mean", "mul",
    "no_grad", "reshape", "softmax_rows", "stack", "sub", "swapaxes", "tabs", "transpose",
    "tsum", "zero_grad",
]
