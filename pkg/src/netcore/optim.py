from typing import Mapping, MutableMapping

import numpy as np

from ..errors import DimensionError, NonFiniteError
from .tensor import Tensor


def is_decayed(name: str) -> bool:
    """Biases are exempt from weight decay."""
    return not name.endswith(".bias")


def sgd_step(params: MutableMapping[str, Tensor], grads: Mapping[str, Tensor],
             lr: float, weight_decay: float = 0.0) -> MutableMapping[str, Tensor]:
    """
    In-place SGD update ``p <- p - lr * (g + weight_decay * p)`` for every
    parameter named in ``grads``.

    Arrays are updated in place so layers that share storage observe the step.
    All gradients are validated before any parameter moves.
    """
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if weight_decay < 0:
        raise ValueError(f"weight decay must be non-negative, got {weight_decay}")

    for name, grad in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name}")
        if np.shape(grad) != params[name].shape:
            raise DimensionError(f"{name}: gradient shape {np.shape(grad)} "
                                 f"!= parameter shape {params[name].shape}")
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError("non-finite gradient", name=name)

    for name, grad in grads.items():
        param = params[name]
        if weight_decay and is_decayed(name):
            param -= lr * (grad + weight_decay * param)
        else:
            param -= lr * grad
    return params
