from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import TYPE_CHECKING, Any, Dict, List, NamedTuple, Optional

import numpy as np
import pandas as pd

from ..netcore import Tensor
from .concepts import ModalityRenderer, SceneConceptModel

if TYPE_CHECKING:
    from .holdout import HoldoutSpec


class Split(IntEnum):
    TRAIN = 0
    VAL = 1


class SplitView(NamedTuple):
    """Training view of one (modality, split): latent ids are not exposed"""

    features: Tensor
    labels: np.ndarray


@dataclass
class ModalityBlock:
    """All examples of one modality, one row per example"""

    name: str
    features: Tensor  # [n x D_m]
    labels: np.ndarray  # int64 class ids
    split: np.ndarray  # uint8 Split values
    latent_ids: np.ndarray  # int64, unique across the whole dataset

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.labels.shape[0]

    def select(self, mask: np.ndarray) -> "ModalityBlock":
        return replace(self, features=self.features[mask], labels=self.labels[mask],
                       split=self.split[mask], latent_ids=self.latent_ids[mask])

    def equals(self, other: "ModalityBlock") -> bool:
        return (self.name == other.name
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.split, other.split)
                and np.array_equal(self.latent_ids, other.latent_ids))


@dataclass
class CrossModalDataset:
    """
    Unpaired multi-modal examples sharing only class labels.

    Blocks keep the generation order of modalities; the renderers and the
    concept model that produced the data travel with it.
    """

    n_classes: int
    anchor: str
    blocks: Dict[str, ModalityBlock]
    concept_model: SceneConceptModel
    renderers: Dict[str, ModalityRenderer]
    metadata: Dict[str, Any] = field(default_factory=dict)
    holdout: Optional["HoldoutSpec"] = None

    @property
    def modalities(self) -> List[str]:
        return list(self.blocks)

    @property
    def input_dims(self) -> Dict[str, int]:
        return {name: block.input_dim for name, block in self.blocks.items()}

    def split(self, modality: str, split: Split) -> SplitView:
        if modality not in self.blocks:
            raise KeyError(f"unknown modality {modality!r}; have {self.modalities}")
        block = self.blocks[modality]
        mask = block.split == Split(split)
        return SplitView(features=block.features[mask], labels=block.labels[mask])

    def class_counts(self, split: Split) -> pd.DataFrame:
        """Rows = modalities, columns = classes, values = example counts."""
        counts = {name: np.bincount(block.labels[block.split == Split(split)],
                                    minlength=self.n_classes)
                  for name, block in self.blocks.items()}
        frame = pd.DataFrame.from_dict(counts, orient="index")
        frame.columns.name = "class"
        return frame

    def equals(self, other: "CrossModalDataset") -> bool:
        if (self.n_classes != other.n_classes or self.anchor != other.anchor
                or self.modalities != other.modalities
                or self.metadata != other.metadata or self.holdout != other.holdout):
            return False
        if self.concept_model.to_dict() != other.concept_model.to_dict():
            return False
        if any(self.renderers[m].to_dict() != other.renderers[m].to_dict() for m in self.renderers):
            return False
        return all(self.blocks[m].equals(other.blocks[m]) for m in self.blocks)
