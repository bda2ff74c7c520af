from . import ops
from .layers import BatchNorm2d, Conv2d, Deconv2d, Linear
from .optim import adam_step, clear_grads
from .tensor import Parameter, Tensor, no_grad

__all__ = [
    "ops", "Tensor", "Parameter", "no_grad",
    "Conv2d", "Deconv2d", "BatchNorm2d", "Linear",
    "adam_step", "clear_grads",
]
