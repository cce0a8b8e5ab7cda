"""Class holdout surgery for zero-shot experiments."""

import logging
from dataclasses import dataclass
from typing import Any, Dict, FrozenSet, Iterable, Optional, Tuple

import numpy as np

from ..errors import HoldoutError
from ..netcore import RngState
from .dataset import CrossModalDataset, Split

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HoldoutSpec:
    """
    Classes whose training examples are removed from the affected modalities.
    ``modalities=None`` means every modality except the anchor.
    """

    classes: FrozenSet[int]
    modalities: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "classes", frozenset(int(c) for c in self.classes))
        if self.modalities is not None:
            object.__setattr__(self, "modalities", tuple(self.modalities))

    @classmethod
    def of(cls, classes: Iterable[int], modalities: Optional[Iterable[str]] = None) -> "HoldoutSpec":
        return cls(frozenset(classes), None if modalities is None else tuple(modalities))

    def affected(self, dataset: CrossModalDataset) -> Tuple[str, ...]:
        if self.modalities is None:
            return tuple(m for m in dataset.modalities if m != dataset.anchor)
        return self.modalities

    def to_dict(self) -> Dict[str, Any]:
        return {"classes": sorted(self.classes),
                "modalities": None if self.modalities is None else list(self.modalities)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "HoldoutSpec":
        return cls.of(data["classes"], data.get("modalities"))


def random_holdout(n_classes: int, fraction: float, rng: RngState) -> HoldoutSpec:
    """Draw round(fraction * n_classes) distinct classes, at least one and fewer than all."""
    if not 0.0 < fraction < 1.0:
        raise HoldoutError(f"holdout fraction must lie in (0, 1), got {fraction}")
    count = int(round(fraction * n_classes))
    if not 1 <= count < n_classes:
        raise HoldoutError(f"holdout fraction {fraction} selects {count} of {n_classes} classes")
    chosen = rng.generator.choice(n_classes, size=count, replace=False)
    return HoldoutSpec.of(int(c) for c in chosen)


def holdout_classes(dataset: CrossModalDataset, holdout: HoldoutSpec) -> CrossModalDataset:
    """
    Remove the training rows of the held-out classes from the affected
    modalities. Validation rows and the anchor modality stay untouched.

    Args:
        dataset: Dataset without a prior holdout
        holdout: Classes to hold out and the modalities to remove them from

    Returns:
        A new dataset carrying ``holdout``
    """
    if not holdout.classes:
        raise HoldoutError("held-out class set must not be empty")
    out_of_range = sorted(c for c in holdout.classes if not 0 <= c < dataset.n_classes)
    if out_of_range:
        raise HoldoutError(f"held-out classes {out_of_range} outside [0, {dataset.n_classes})")
    if dataset.holdout is not None:
        raise HoldoutError("dataset already carries a holdout")
    affected = holdout.affected(dataset)
    if dataset.anchor in affected:
        raise HoldoutError(f"anchor modality {dataset.anchor!r} cannot be affected by a holdout")
    unknown = [m for m in affected if m not in dataset.blocks]
    if unknown:
        raise HoldoutError(f"unknown modalities in holdout: {unknown}")

    held = np.array(sorted(holdout.classes), dtype=np.int64)
    blocks = dict(dataset.blocks)
    for modality in affected:
        block = blocks[modality]
        train_classes = np.unique(block.labels[block.split == Split.TRAIN])
        if np.all(np.isin(train_classes, held)):
            raise HoldoutError(f"holdout removes every training class of modality {modality!r}")
        keep = ~((block.split == Split.TRAIN) & np.isin(block.labels, held))
        blocks[modality] = block.select(keep)
        logger.info(f"Held out {int((~keep).sum())} training rows of {len(held)} classes "
                    f"from modality {modality}")

    return CrossModalDataset(n_classes=dataset.n_classes, anchor=dataset.anchor, blocks=blocks,
                             concept_model=dataset.concept_model, renderers=dataset.renderers,
                             metadata=dict(dataset.metadata), holdout=holdout)
