from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from ..density import LayerDensitySet
from ..errors import ConfigError
from ..netcore import Tensor, softmax_cross_entropy
from .network import REGULARIZED_LAYERS, CrossModalNet


@dataclass
class ObjectiveResult:
    loss: float
    ce_loss: float
    reg_terms: Dict[str, float] = field(default_factory=dict)  # mean penalty per layer, unweighted
    lambdas: Dict[str, float] = field(default_factory=dict)
    grads: Dict[str, Tensor] = field(default_factory=dict)

    def weighted_reg(self) -> float:
        return sum(self.lambdas[layer] * value for layer, value in self.reg_terms.items())


def regularized_objective(net: CrossModalNet, modality: str, inputs: Tensor, labels,
                          densities: Optional[LayerDensitySet] = None,
                          lambdas: Optional[Mapping[str, float]] = None) -> ObjectiveResult:
    """
    Mean softmax cross-entropy plus sum_i lambda_i * mean_n R_i(h_i(x_n)).

    Regularizer gradients ``lambda_i * dR_i/dh_i`` (divided by the batch size)
    are injected at the taps of the regularized layers. Layers with
    lambda_i = 0 are skipped entirely, so an all-zero map is exactly the plain
    cross-entropy objective.

    Args:
        net: Network holding the modality's chain
        modality: Modality of the single-modality batch
        inputs: [batch x D_m] features
        labels: Class indices
        densities: Fitted densities, required for every layer with lambda_i > 0
        lambdas: Per-layer weights over shared_in, fc6 and fc7

    Returns:
        Loss, its components and parameter gradients keyed by parameter id
    """
    active: Dict[str, float] = {}
    for layer, value in (lambdas or {}).items():
        if layer not in REGULARIZED_LAYERS:
            raise ConfigError(f"layer {layer!r} cannot be regularized", key="reg.lambdas")
        if value < 0:
            raise ConfigError(f"lambda for {layer} must be >= 0, got {value}", key="reg.lambdas")
        if value > 0:
            if densities is None or layer not in densities:
                raise ConfigError(f"lambda for {layer} is {value} but no density is fitted",
                                  key="reg.lambdas")
            active[layer] = float(value)

    taps = net.forward(modality, inputs)
    ce_loss, output_grad = softmax_cross_entropy(taps.output, labels)
    batch = taps.output.shape[0]

    reg_terms: Dict[str, float] = {}
    injected: Dict[int, Tensor] = {}
    for layer in sorted(active):
        index = net.tap_index(modality, layer)
        penalty, penalty_grad = densities.penalty(layer, taps[index])
        reg_terms[layer] = float(np.mean(penalty))
        injected[index] = (active[layer] / batch) * penalty_grad

    grads, _ = net.backward(modality, taps, output_grad, injected)
    result = ObjectiveResult(loss=ce_loss, ce_loss=ce_loss, reg_terms=reg_terms,
                             lambdas=active, grads=grads)
    result.loss = ce_loss + result.weighted_reg()
    return result
