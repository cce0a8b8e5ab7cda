from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Optional

from ..density import DensityKind, LayerDensitySet
from ..errors import ConfigError
from ..netcore import RngState
from ..synthdata import CrossModalDataset
from .network import REGULARIZED_LAYERS, ArchConfig, CrossModalNet, TrainedModel


class StrategyKind(str, Enum):
    BL_INDIVIDUAL = "bl_individual"
    BL_SHARED_SCRATCH = "bl_shared_scratch"
    BL_SHARED_UPPER = "bl_shared_upper"
    A_TUNE_FROZEN = "a_tune_frozen"
    A_TUNE_FREE = "a_tune_free"
    B_GAUSS = "b_gauss"
    B_GMM = "b_gmm"
    C_JOINT = "c_joint"


class Phase(str, Enum):
    FROZEN = "frozen"
    FREE = "free"


@dataclass
class CurriculumSchedule:
    """Freeze horizon and SGD settings; one iteration is one round-robin cycle"""

    total_iters: int = 2000
    freeze_iters: int = 1000
    lr: float = 0.05
    batch_size: int = 32
    weight_decay: float = 5e-4

    def validate(self) -> None:
        if self.total_iters < 0:
            raise ConfigError(f"must be >= 0, got {self.total_iters}", key="train.total_iters")
        if not 0 <= self.freeze_iters <= self.total_iters:
            raise ConfigError(f"must lie in [0, total_iters={self.total_iters}], "
                              f"got {self.freeze_iters}", key="train.freeze_iters")
        if self.lr <= 0:
            raise ConfigError(f"must be positive, got {self.lr}", key="train.lr")
        if self.batch_size < 1:
            raise ConfigError(f"must be >= 1, got {self.batch_size}", key="train.batch_size")
        if self.weight_decay < 0:
            raise ConfigError(f"must be >= 0, got {self.weight_decay}", key="train.weight_decay")


def default_lambdas() -> Dict[str, float]:
    return {layer: 0.1 for layer in REGULARIZED_LAYERS}


@dataclass
class RegConfig:
    lambdas: Dict[str, float] = field(default_factory=default_lambdas)
    n_components: int = 8
    regularize_anchor: bool = False

    def validate(self) -> None:
        for layer, value in self.lambdas.items():
            if layer not in REGULARIZED_LAYERS:
                raise ConfigError(f"layer {layer!r} cannot be regularized; "
                                  f"expected one of {REGULARIZED_LAYERS}", key="reg.lambdas")
            if value < 0:
                raise ConfigError(f"lambda for {layer} must be >= 0, got {value}", key="reg.lambdas")
        if self.n_components < 1:
            raise ConfigError(f"must be >= 1, got {self.n_components}", key="reg.K")

    def active_layers(self) -> Dict[str, float]:
        return {layer: value for layer, value in self.lambdas.items() if value > 0}


@dataclass
class StrategySpec:
    kind: StrategyKind
    curriculum: CurriculumSchedule = field(default_factory=CurriculumSchedule)
    reg: RegConfig = field(default_factory=RegConfig)
    replay_anchor: bool = True

    def __post_init__(self):
        self.kind = StrategyKind(self.kind)

    @property
    def density_kind(self) -> Optional[DensityKind]:
        if self.kind is StrategyKind.B_GAUSS:
            return DensityKind.GAUSSIAN
        if self.kind in (StrategyKind.B_GMM, StrategyKind.C_JOINT):
            return DensityKind.GMM
        return None

    @property
    def needs_anchor(self) -> bool:
        return self.kind is not StrategyKind.BL_SHARED_SCRATCH

    @property
    def has_frozen_phase(self) -> bool:
        return self.kind in (StrategyKind.A_TUNE_FROZEN, StrategyKind.A_TUNE_FREE,
                             StrategyKind.C_JOINT)

    def validate(self) -> None:
        self.curriculum.validate()
        self.reg.validate()
        if self.has_frozen_phase and self.curriculum.freeze_iters <= 0:
            raise ConfigError(f"{self.kind.value} requires freeze_iters > 0", key="train.freeze_iters")

    def check_densities(self, densities: Optional[LayerDensitySet]) -> None:
        if self.density_kind is not None and self.reg.active_layers():
            if densities is None:
                raise ConfigError(f"{self.kind.value} requires fitted layer densities", key="reg")
            missing = [layer for layer in self.reg.active_layers() if layer not in densities]
            if missing:
                raise ConfigError(f"no fitted density for regularized layers {missing}", key="reg.lambdas")


def group_prefix(kind: str, modality: Optional[str] = None) -> str:
    """Parameter-group ids: ``branch/<m>``, ``trunk`` and ``private/<m>``"""
    return kind if modality is None else f"{kind}/{modality}"


class BaseStrategy(ABC):
    """Abstract base class for all training strategies"""

    def __init__(self, spec: StrategySpec):
        """
        Initialize strategy with its specification

        Args:
            spec: Strategy kind, curriculum and regularization settings
        """
        self.spec = spec
        self.kind = spec.kind

    @abstractmethod
    def build_model(self, dataset: CrossModalDataset, anchor: Optional[CrossModalNet],
                    arch: ArchConfig, rng: RngState) -> TrainedModel:
        """
        Assemble the initial networks for every modality of the dataset

        Args:
            dataset: Training data; provides modalities, input dims and classes
            anchor: Trained anchor network, None when training from scratch
            arch: Layer widths and initialization
            rng: Stream for initializing new branches

        Returns:
            The untrained model
        """
        pass

    @abstractmethod
    def trainable_groups(self, phase: Phase, modality: str) -> FrozenSet[str]:
        """
        Parameter groups updated by a step on ``modality`` during ``phase``

        Args:
            phase: Active curriculum phase
            modality: Modality of the current batch

        Returns:
            Group prefixes; a parameter is trainable when its id starts with one
        """
        pass

    def phase_at(self, iteration: int) -> Phase:
        """FREE unless the strategy has a frozen phase covering ``iteration``"""
        return Phase.FREE

    def lambdas(self, phase: Phase, modality: str, anchor: str) -> Dict[str, float]:
        """Per-layer regularization weights for a batch; empty means unregularized"""
        return {}

    def validate(self, densities: Optional[LayerDensitySet] = None) -> None:
        self.spec.validate()
        self.spec.check_densities(densities)
