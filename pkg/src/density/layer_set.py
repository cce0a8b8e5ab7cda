import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import DimensionError
from ..netcore import RngState, Tensor
from .gaussian import DiagonalGaussian, fit_gaussian
from .gmm import DiagonalGmm, EmConfig, GmmEmFitter

logger = logging.getLogger(__name__)

DensityModel = Union[DiagonalGaussian, DiagonalGmm]


class DensityKind(str, Enum):
    GAUSSIAN = "gaussian"
    GMM = "gmm"


@dataclass
class LayerDensitySet:
    """One fitted density per regularized layer"""

    kind: DensityKind
    models: Dict[str, DensityModel]

    @property
    def dims(self) -> Dict[str, int]:
        return {layer: model.dim for layer, model in self.models.items()}

    def __contains__(self, layer: str) -> bool:
        return layer in self.models

    def __getitem__(self, layer: str) -> DensityModel:
        return self.models[layer]

    def penalty(self, layer: str, h: Tensor) -> Tuple[Union[float, Tensor], Tensor]:
        return self.models[layer].penalty(h)

    def check_dims(self, expected: Mapping[str, int]) -> None:
        for layer, dim in self.dims.items():
            if layer in expected and expected[layer] != dim:
                raise DimensionError(f"density for {layer} has dim {dim}, "
                                     f"network tap has {expected[layer]}")


def collect_activations(net, modality: str, inputs: Tensor, layer_ids: Sequence[str],
                        max_samples: Optional[int] = None,
                        rng: Optional[RngState] = None) -> Dict[str, Tensor]:
    """
    Forward a deterministic subsample of ``inputs`` through ``net`` and return
    the tap activations at each requested layer.

    ``net`` is any network exposing ``forward(modality, x)`` and
    ``tap_index(modality, layer_id)``; the pseudo-layer ``"input"`` returns
    the (subsampled) inputs themselves.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    rows = np.arange(inputs.shape[0])
    if max_samples is not None and max_samples < inputs.shape[0]:
        rng = rng or RngState(0)
        rows = np.sort(rng.generator.choice(inputs.shape[0], max_samples, replace=False))
    batch = inputs[rows]

    indices = {layer: (None if layer == "input" else net.tap_index(modality, layer))
               for layer in layer_ids}
    taps = net.forward(modality, batch)
    return {layer: (batch.copy() if index is None else taps[index].copy())
            for layer, index in indices.items()}


def fit_layer_densities(activations: Mapping[str, Tensor], kind: DensityKind, rng: RngState,
                        em_config: Optional[EmConfig] = None,
                        variance_floor: float = 1e-6) -> LayerDensitySet:
    """Fit one density of the given kind per layer, in sorted layer order."""
    kind = DensityKind(kind)
    em_config = em_config or EmConfig(variance_floor=variance_floor)
    models: Dict[str, DensityModel] = {}
    for layer in sorted(activations):
        samples = activations[layer]
        if kind is DensityKind.GAUSSIAN:
            models[layer] = fit_gaussian(samples, variance_floor=variance_floor)
        else:
            fitter = GmmEmFitter(em_config, rng.child(f"em/{layer}"))
            models[layer] = fitter.fit(samples)
            logger.info(f"Fitted {em_config.n_components}-component GMM on {layer} "
                        f"{samples.shape}: {len(fitter.history)} iterations, "
                        f"mean log-likelihood {fitter.history[-1]:.4f}")
    return LayerDensitySet(kind=kind, models=models)
