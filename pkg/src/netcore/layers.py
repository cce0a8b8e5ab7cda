"""Dense layers, forward passes with activation taps and backward passes with
gradient injection at those taps."""

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..errors import DimensionError
from .tensor import RngState, Tensor, as_tensor, init_gaussian


@dataclass
class LinearLayer:
    """Affine map ``y = x W^T + b`` with weight [out_dim x in_dim] and bias [out_dim]"""

    weight: Tensor
    bias: Tensor

    def __post_init__(self):
        self.weight = as_tensor(self.weight, "weight")
        self.bias = as_tensor(self.bias, "bias")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise DimensionError(
                f"inconsistent layer shapes weight={self.weight.shape} bias={self.bias.shape}")

    @classmethod
    def initialize(cls, in_dim: int, out_dim: int, std: float, rng: RngState) -> "LinearLayer":
        return cls(init_gaussian((out_dim, in_dim), std, rng), np.zeros(out_dim))

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def copy(self) -> "LinearLayer":
        return LinearLayer(self.weight.copy(), self.bias.copy())


@dataclass
class LayerGrad:
    weight: Tensor
    bias: Tensor


@dataclass
class Mlp:
    """Stack of linear layers with a rectifier between layers and identity after the last."""

    layers: List[LinearLayer]

    def __post_init__(self):
        if not self.layers:
            raise DimensionError("an Mlp needs at least one layer")
        for index in range(1, len(self.layers)):
            if self.layers[index - 1].out_dim != self.layers[index].in_dim:
                raise DimensionError(
                    f"in_dim {self.layers[index].in_dim} does not chain with previous "
                    f"out_dim {self.layers[index - 1].out_dim}", layer_index=index)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def __len__(self) -> int:
        return len(self.layers)


@dataclass
class Taps:
    """Network input plus the post-activation output of every layer"""

    input: Tensor
    layers: List[Tensor]

    @property
    def output(self) -> Tensor:
        return self.layers[-1]

    def __getitem__(self, index: int) -> Tensor:
        return self.layers[index]

    def __len__(self) -> int:
        return len(self.layers)


def mlp_forward(net: Mlp, inputs: Tensor) -> Taps:
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != net.in_dim:
        raise DimensionError(f"expected input [batch x {net.in_dim}], got {inputs.shape}",
                             layer_index=0)
    outputs = []
    current = inputs
    last = len(net.layers) - 1
    for index, layer in enumerate(net.layers):
        current = current @ layer.weight.T + layer.bias
        if index < last:
            current = np.maximum(current, 0.0)
        outputs.append(current)
    return Taps(input=inputs, layers=outputs)


def mlp_backward(net: Mlp, taps: Taps, output_grad: Tensor,
                 injected_grads: Optional[Mapping[int, Tensor]] = None
                 ) -> Tuple[List[LayerGrad], Tensor]:
    """
    Backpropagate ``output_grad`` through the network.

    The gradient reaching tap ``i`` is the backpropagated gradient plus
    ``injected_grads[i]``; this is how activation regularizers enter training.

    Returns:
        Per-layer parameter gradients (in layer order) and the input gradient
    """
    injected_grads = dict(injected_grads or {})
    n_layers = len(net.layers)
    for index, grad in injected_grads.items():
        if not 0 <= index < n_layers:
            raise DimensionError(f"injection index {index} out of range [0, {n_layers})")
        if np.shape(grad) != taps[index].shape:
            raise DimensionError(
                f"injected gradient shape {np.shape(grad)} != tap shape {taps[index].shape}",
                layer_index=index)
    if np.shape(output_grad) != taps.output.shape:
        raise DimensionError(
            f"output gradient shape {np.shape(output_grad)} != output shape {taps.output.shape}",
            layer_index=n_layers - 1)

    grads: List[Optional[LayerGrad]] = [None] * n_layers
    upstream = np.asarray(output_grad, dtype=np.float64)
    for index in range(n_layers - 1, -1, -1):
        if index in injected_grads:
            upstream = upstream + injected_grads[index]
        if index < n_layers - 1:
            # rectifier derivative read off the post-activation tap
            upstream = upstream * (taps[index] > 0.0)
        previous = taps.input if index == 0 else taps[index - 1]
        grads[index] = LayerGrad(weight=upstream.T @ previous, bias=upstream.sum(axis=0))
        upstream = upstream @ net.layers[index].weight
    return grads, upstream


def layer_param_names(prefix: str) -> Tuple[str, str]:
    return f"{prefix}.weight", f"{prefix}.bias"


def named_layer_parameters(named_layers: Sequence[Tuple[str, LinearLayer]]) -> Dict[str, Tensor]:
    params: Dict[str, Tensor] = {}
    for name, layer in named_layers:
        weight_name, bias_name = layer_param_names(name)
        params[weight_name] = layer.weight
        params[bias_name] = layer.bias
    return params
