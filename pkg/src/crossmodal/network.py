"""Multi-branch architecture: private modality encoders feeding one shared trunk."""

from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..netcore import LinearLayer, Mlp, RngState, Taps, Tensor, mlp_backward, mlp_forward
from ..netcore.layers import layer_param_names, named_layer_parameters

LAYER_IDS = ("shared_in", "fc6", "fc7", "logits")
REGULARIZED_LAYERS = ("shared_in", "fc6", "fc7")
TRUNK_LAYERS = ("fc6", "fc7", "classifier")


@dataclass
class ArchConfig:
    """Layer widths and initialization of the desk-scale network"""

    shared_dim: int = 32  # encoder output width
    hidden_dim: int = 32  # fc6 and fc7 width
    encoder_width: int = 64
    encoder_layers: int = 2
    init_std: float = 0.1  # encoder layers
    trunk_init_std: Optional[float] = None  # None: He scaling sqrt(2 / fan_in)

    def validate(self) -> None:
        for name in ("shared_dim", "hidden_dim", "encoder_width", "encoder_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"arch.{name} must be >= 1, got {getattr(self, name)}")
        if self.init_std <= 0:
            raise ValueError(f"arch.init_std must be positive, got {self.init_std}")
        if self.trunk_init_std is not None and self.trunk_init_std <= 0:
            raise ValueError(f"arch.trunk_init_std must be positive or null, got {self.trunk_init_std}")


def _trunk_std(arch: ArchConfig, fan_in: int) -> float:
    if arch.trunk_init_std is not None:
        return arch.trunk_init_std
    return float(np.sqrt(2.0 / fan_in))


@dataclass
class SharedTrunk:
    fc6: LinearLayer
    fc7: LinearLayer
    classifier: LinearLayer

    @classmethod
    def initialize(cls, n_classes: int, arch: ArchConfig, rng: RngState) -> "SharedTrunk":
        d_s, d_h = arch.shared_dim, arch.hidden_dim
        return cls(fc6=LinearLayer.initialize(d_s, d_h, _trunk_std(arch, d_s), rng.child("fc6")),
                   fc7=LinearLayer.initialize(d_h, d_h, _trunk_std(arch, d_h), rng.child("fc7")),
                   classifier=LinearLayer.initialize(d_h, n_classes, _trunk_std(arch, d_h),
                                                     rng.child("classifier")))

    @property
    def layers(self) -> List[LinearLayer]:
        return [self.fc6, self.fc7, self.classifier]

    @property
    def shared_dim(self) -> int:
        return self.fc6.in_dim

    @property
    def n_classes(self) -> int:
        return self.classifier.out_dim

    def copy(self) -> "SharedTrunk":
        return SharedTrunk(self.fc6.copy(), self.fc7.copy(), self.classifier.copy())


@dataclass
class ModalityBranch:
    modality: str
    encoder: Mlp

    @classmethod
    def initialize(cls, modality: str, input_dim: int, arch: ArchConfig,
                   rng: RngState) -> "ModalityBranch":
        widths = [input_dim] + [arch.encoder_width] * (arch.encoder_layers - 1) + [arch.shared_dim]
        layers = [LinearLayer.initialize(widths[j], widths[j + 1], arch.init_std, rng.child(f"enc{j}"))
                  for j in range(arch.encoder_layers)]
        return cls(modality=modality, encoder=Mlp(layers))

    @property
    def input_dim(self) -> int:
        return self.encoder.in_dim

    def copy(self, modality: Optional[str] = None) -> "ModalityBranch":
        return ModalityBranch(modality=modality or self.modality,
                              encoder=Mlp([layer.copy() for layer in self.encoder.layers]))


class CrossModalNet:
    """
    Branches keyed by modality share one ``SharedTrunk`` by identity. The chain
    for modality ``m`` is ``encoder_m`` followed by fc6, fc7 and the classifier,
    with a rectifier after every layer but the classifier.

    Parameter ids are ``<prefix>branch/<m>/enc<j>.{weight,bias}`` and
    ``<prefix>trunk/<fc6|fc7|classifier>.{weight,bias}``.
    """

    def __init__(self, branches: Dict[str, ModalityBranch], trunk: SharedTrunk, prefix: str = ""):
        for modality, branch in branches.items():
            if branch.encoder.out_dim != trunk.shared_dim:
                raise ValueError(f"branch {modality} outputs {branch.encoder.out_dim} dims, "
                                 f"trunk expects {trunk.shared_dim}")
        self.branches = dict(branches)
        self.trunk = trunk
        self.prefix = prefix
        self._chains: Dict[str, Mlp] = {}

    @property
    def modalities(self) -> List[str]:
        return list(self.branches)

    @property
    def n_classes(self) -> int:
        return self.trunk.n_classes

    def branch(self, modality: str) -> ModalityBranch:
        if modality not in self.branches:
            raise KeyError(f"unknown modality {modality!r}; network has {self.modalities}")
        return self.branches[modality]

    def chain(self, modality: str) -> Mlp:
        if modality not in self._chains:
            branch = self.branch(modality)
            self._chains[modality] = Mlp(list(branch.encoder.layers) + self.trunk.layers)
        return self._chains[modality]

    def tap_index(self, modality: str, layer: str) -> int:
        n_encoder = len(self.branch(modality).encoder)
        if layer not in LAYER_IDS:
            raise ValueError(f"unknown layer id {layer!r}; expected one of {LAYER_IDS}")
        return n_encoder - 1 + LAYER_IDS.index(layer)

    def tap_dims(self) -> Dict[str, int]:
        return {"shared_in": self.trunk.shared_dim, "fc6": self.trunk.fc6.out_dim,
                "fc7": self.trunk.fc7.out_dim, "logits": self.n_classes}

    def forward(self, modality: str, inputs: Tensor) -> Taps:
        return mlp_forward(self.chain(modality), inputs)

    def chain_names(self, modality: str) -> List[str]:
        n_encoder = len(self.branch(modality).encoder)
        return ([f"{self.prefix}branch/{modality}/enc{j}" for j in range(n_encoder)]
                + [f"{self.prefix}trunk/{name}" for name in TRUNK_LAYERS])

    def backward(self, modality: str, taps: Taps, output_grad: Tensor,
                 injected_grads=None) -> Tuple[Dict[str, Tensor], Tensor]:
        """Gradients for the modality's chain only, keyed by parameter id"""
        layer_grads, input_grad = mlp_backward(self.chain(modality), taps, output_grad,
                                               injected_grads)
        grads: Dict[str, Tensor] = {}
        for name, grad in zip(self.chain_names(modality), layer_grads):
            weight_name, bias_name = layer_param_names(name)
            grads[weight_name] = grad.weight
            grads[bias_name] = grad.bias
        return grads, input_grad

    def named_layers(self, modalities: Optional[Sequence[str]] = None) -> Iterator[Tuple[str, LinearLayer]]:
        for modality in (modalities or self.modalities):
            for j, layer in enumerate(self.branch(modality).encoder.layers):
                yield f"{self.prefix}branch/{modality}/enc{j}", layer
        for name, layer in zip(TRUNK_LAYERS, self.trunk.layers):
            yield f"{self.prefix}trunk/{name}", layer

    def named_parameters(self, modalities: Optional[Sequence[str]] = None) -> Dict[str, Tensor]:
        return named_layer_parameters(list(self.named_layers(modalities)))

    def copy(self, prefix: Optional[str] = None) -> "CrossModalNet":
        return CrossModalNet({m: b.copy() for m, b in self.branches.items()}, self.trunk.copy(),
                             self.prefix if prefix is None else prefix)


@dataclass
class TrainedModel:
    """
    Modality -> network map produced by a strategy. Shared strategies map every
    modality to one ``CrossModalNet``; BL_INDIVIDUAL maps each modality to its
    own private network.
    """

    name: str
    networks: Dict[str, CrossModalNet]

    @property
    def modalities(self) -> List[str]:
        return list(self.networks)

    @property
    def n_classes(self) -> int:
        return next(iter(self.networks.values())).n_classes

    def network(self, modality: str) -> CrossModalNet:
        if modality not in self.networks:
            raise KeyError(f"unknown modality {modality!r}; model covers {self.modalities}")
        return self.networks[modality]

    def unique_networks(self) -> List[CrossModalNet]:
        seen: Dict[int, CrossModalNet] = {}
        for net in self.networks.values():
            seen.setdefault(id(net), net)
        return list(seen.values())

    def forward(self, modality: str, inputs: Tensor) -> Taps:
        return self.network(modality).forward(modality, inputs)

    def tap_index(self, modality: str, layer: str) -> int:
        return self.network(modality).tap_index(modality, layer)

    def named_parameters(self) -> Dict[str, Tensor]:
        params: Dict[str, Tensor] = {}
        for net in self.unique_networks():
            params.update(net.named_parameters())
        return params
