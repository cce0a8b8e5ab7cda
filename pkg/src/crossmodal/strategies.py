"""The eight training strategies: three baselines, modality tuning (frozen and
free), statistical regularization (Gaussian and GMM) and the joint method."""

import logging
from typing import Dict, FrozenSet, Iterable, Optional

from ..netcore import RngState
from ..synthdata import CrossModalDataset
from .base_strategy import (BaseStrategy, Phase, StrategyKind, StrategySpec, group_prefix)
from .network import ArchConfig, CrossModalNet, ModalityBranch, SharedTrunk, TrainedModel

logger = logging.getLogger(__name__)


def is_trainable(name: str, groups: Iterable[str]) -> bool:
    return any(name == group or name.startswith(group + "/") for group in groups)


def _require_anchor(kind: StrategyKind, dataset: CrossModalDataset,
                    anchor: Optional[CrossModalNet]) -> CrossModalNet:
    if anchor is None:
        raise ValueError(f"{kind.value} needs a trained anchor network")
    if dataset.anchor not in anchor.branches:
        raise ValueError(f"anchor network has no branch for anchor modality {dataset.anchor!r}")
    return anchor


def shared_model(name: str, dataset: CrossModalDataset, trunk: SharedTrunk,
                  anchor: Optional[CrossModalNet], arch: ArchConfig, rng: RngState) -> TrainedModel:
    branches: Dict[str, ModalityBranch] = {}
    for modality in dataset.modalities:
        if anchor is not None and modality == dataset.anchor:
            branches[modality] = anchor.branch(modality).copy()
        else:
            branches[modality] = ModalityBranch.initialize(
                modality, dataset.input_dims[modality], arch, rng.child(f"branch/{modality}"))
    net = CrossModalNet(branches, trunk)
    return TrainedModel(name=name, networks={m: net for m in dataset.modalities})


class IndividualBaseline(BaseStrategy):
    """One private network per modality, finetuned from the anchor network when given"""

    def build_model(self, dataset, anchor, arch, rng):
        networks = {}
        for modality in dataset.modalities:
            input_dim = dataset.input_dims[modality]
            if anchor is not None:
                _require_anchor(self.kind, dataset, anchor)
                trunk = anchor.trunk.copy()
                anchor_branch = anchor.branch(dataset.anchor)
                if anchor_branch.input_dim == input_dim:
                    branch = anchor_branch.copy(modality)
                else:
                    branch = ModalityBranch.initialize(modality, input_dim, arch,
                                                       rng.child(f"branch/{modality}"))
                    logger.info(f"{modality}: input dim {input_dim} differs from the anchor's "
                                f"{anchor_branch.input_dim}, encoder initialized randomly")
            else:
                trunk = SharedTrunk.initialize(dataset.n_classes, arch, rng.child(f"trunk/{modality}"))
                branch = ModalityBranch.initialize(modality, input_dim, arch,
                                                   rng.child(f"branch/{modality}"))
            networks[modality] = CrossModalNet({modality: branch}, trunk,
                                               prefix=group_prefix("private", modality) + "/")
        return TrainedModel(name=self.kind.value, networks=networks)

    def trainable_groups(self, phase, modality):
        return frozenset({group_prefix("private", modality)})


class SharedScratchBaseline(BaseStrategy):
    """Shared trunk trained from a random initialization, nothing frozen"""

    def build_model(self, dataset, anchor, arch, rng):
        trunk = SharedTrunk.initialize(dataset.n_classes, arch, rng.child("trunk"))
        return shared_model(self.kind.value, dataset, trunk, None, arch, rng)

    def trainable_groups(self, phase, modality):
        return frozenset({group_prefix("branch", modality), "trunk"})


class SharedUpperBaseline(BaseStrategy):
    """Shared trunk initialized from the anchor network, nothing frozen"""

    def build_model(self, dataset, anchor, arch, rng):
        anchor = _require_anchor(self.kind, dataset, anchor)
        return shared_model(self.kind.value, dataset, anchor.trunk.copy(), anchor, arch, rng)

    def trainable_groups(self, phase, modality):
        return frozenset({group_prefix("branch", modality), "trunk"})


class ModalityTuningStrategy(SharedUpperBaseline):
    """
    Trunk from the anchor, held fixed while the modality encoders learn to
    produce the representation it expects. A_TUNE_FROZEN never unfreezes;
    A_TUNE_FREE unfreezes after ``freeze_iters``.
    """

    def phase_at(self, iteration: int) -> Phase:
        if self.kind is StrategyKind.A_TUNE_FROZEN:
            return Phase.FROZEN
        if iteration < self.spec.curriculum.freeze_iters:
            return Phase.FROZEN
        return Phase.FREE

    def trainable_groups(self, phase, modality):
        if phase is Phase.FROZEN:
            return frozenset({group_prefix("branch", modality)})
        return frozenset({group_prefix("branch", modality), "trunk"})


class StatRegStrategy(SharedUpperBaseline):
    """Nothing frozen; hidden activations penalized by their NLL under anchor densities"""

    def lambdas(self, phase, modality, anchor):
        if modality == anchor and not self.spec.reg.regularize_anchor:
            return {}
        return self.spec.reg.active_layers()


class JointStrategy(ModalityTuningStrategy):
    """Modality tuning for ``freeze_iters``, then joint training with GMM regularization"""

    def lambdas(self, phase, modality, anchor):
        if phase is Phase.FROZEN:
            return {}
        if modality == anchor and not self.spec.reg.regularize_anchor:
            return {}
        return self.spec.reg.active_layers()


STRATEGIES = {
    StrategyKind.BL_INDIVIDUAL: IndividualBaseline,
    StrategyKind.BL_SHARED_SCRATCH: SharedScratchBaseline,
    StrategyKind.BL_SHARED_UPPER: SharedUpperBaseline,
    StrategyKind.A_TUNE_FROZEN: ModalityTuningStrategy,
    StrategyKind.A_TUNE_FREE: ModalityTuningStrategy,
    StrategyKind.B_GAUSS: StatRegStrategy,
    StrategyKind.B_GMM: StatRegStrategy,
    StrategyKind.C_JOINT: JointStrategy,
}


def create_strategy(spec: StrategySpec) -> BaseStrategy:
    return STRATEGIES[spec.kind](spec)


def trainable_set(spec: StrategySpec, phase: Phase, modality: str) -> FrozenSet[str]:
    """Parameter groups a step on ``modality`` may update during ``phase``."""
    return create_strategy(spec).trainable_groups(Phase(phase), modality)
