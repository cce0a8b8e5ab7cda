"""Synthetic stand-in for a weakly aligned cross-modal scene corpus."""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from ..errors import DataSpecError
from ..netcore import RngState
from .concepts import NONLINEARITIES, ModalityRenderer, SceneConceptModel
from .dataset import CrossModalDataset, ModalityBlock, Split

logger = logging.getLogger(__name__)


@dataclass
class ModalitySpec:
    name: str
    rendered_dim: int
    distractor_dims: int = 8
    nonlinearity: str = "tanh"
    noise_std: float = 0.1
    distractor_gain: float = 5.0  # distractor std = distractor_gain * noise_std
    train_per_class: Optional[int] = None  # overrides DataSpec.train_per_class

    @property
    def input_dim(self) -> int:
        return self.rendered_dim + self.distractor_dims


def default_modalities() -> List[ModalitySpec]:
    # "text" is the deliberately hostile modality: other dimensionality, sign nonlinearity
    return [
        ModalitySpec(name="natural", rendered_dim=40, nonlinearity="tanh", noise_std=0.1),
        ModalitySpec(name="sketch", rendered_dim=40, nonlinearity="relu", noise_std=0.1),
        ModalitySpec(name="text", rendered_dim=24, distractor_dims=4, nonlinearity="sign",
                     noise_std=0.2),
    ]


@dataclass
class DataSpec:
    n_classes: int = 10
    latent_dim: int = 16
    n_parts: int = 12
    prototype_scale: float = 1.0
    part_scale: float = 1.0
    mixture_concentration: float = 0.3
    spread: float = 0.5
    train_per_class: int = 100
    val_per_class: int = 10
    anchor: str = "natural"
    modalities: List[ModalitySpec] = field(default_factory=default_modalities)

    def train_count(self, modality: ModalitySpec) -> int:
        if modality.train_per_class is None:
            return self.train_per_class
        return modality.train_per_class

    def violations(self) -> List[str]:
        problems = []
        if self.n_classes < 2:
            problems.append(f"n_classes must be >= 2 (got {self.n_classes})")
        if self.latent_dim < 1:
            problems.append(f"latent_dim must be >= 1 (got {self.latent_dim})")
        if self.n_parts < 1:
            problems.append(f"n_parts must be >= 1 (got {self.n_parts})")
        for name in ("prototype_scale", "mixture_concentration"):
            if getattr(self, name) <= 0:
                problems.append(f"{name} must be > 0 (got {getattr(self, name)})")
        for name in ("part_scale", "spread"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be >= 0 (got {getattr(self, name)})")
        if self.val_per_class < 1:
            problems.append(f"val_per_class must be >= 1 (got {self.val_per_class})")
        if not self.modalities:
            problems.append("modalities must not be empty")
        names = [m.name for m in self.modalities]
        if len(set(names)) != len(names):
            problems.append(f"modalities: duplicate names {names}")
        if self.anchor not in names:
            problems.append(f"anchor {self.anchor!r} is not one of the modalities {names}")
        for m in self.modalities:
            if m.rendered_dim < 1:
                problems.append(f"modalities.{m.name}.rendered_dim must be >= 1")
            if m.distractor_dims < 0:
                problems.append(f"modalities.{m.name}.distractor_dims must be >= 0")
            if m.nonlinearity not in NONLINEARITIES:
                problems.append(f"modalities.{m.name}.nonlinearity must be one of "
                                f"{sorted(NONLINEARITIES)}")
            if m.noise_std < 0 or m.distractor_gain < 0:
                problems.append(f"modalities.{m.name}: noise_std and distractor_gain must be >= 0")
            if self.train_count(m) < 1:
                problems.append(f"modalities.{m.name}.train_per_class must be >= 1")
        return problems

    def validate(self) -> None:
        problems = self.violations()
        if problems:
            raise DataSpecError(problems)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DataSpec":
        data = dict(data)
        modalities = [ModalitySpec(**m) for m in data.pop("modalities", [])] or default_modalities()
        return cls(modalities=modalities, **data)

    def spec_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def generate_dataset(spec: DataSpec, seed: int) -> CrossModalDataset:
    """
    Draw every example from an independent latent, render it through its
    modality's frozen map and tag it TRAIN or VAL. Seed-deterministic.
    """
    spec.validate()
    rng = RngState(seed)
    concepts = SceneConceptModel.generate(
        spec.n_classes, spec.latent_dim, spec.n_parts, spec.prototype_scale,
        spec.part_scale, spec.spread, spec.mixture_concentration, rng.child("concepts"))
    if concepts.min_prototype_distance() <= 0:
        raise DataSpecError(["class prototypes are not pairwise distinct"])

    blocks: Dict[str, ModalityBlock] = {}
    renderers: Dict[str, ModalityRenderer] = {}
    next_latent_id = 0
    for modality in spec.modalities:
        renderer = ModalityRenderer.generate(
            modality.name, modality.rendered_dim, spec.latent_dim, modality.nonlinearity,
            modality.noise_std, modality.distractor_dims, modality.distractor_gain,
            rng.child(f"renderer/{modality.name}"))
        n_train = spec.train_count(modality)
        labels = np.concatenate([np.repeat(np.arange(spec.n_classes), n_train),
                                 np.repeat(np.arange(spec.n_classes), spec.val_per_class)])
        split = np.concatenate([np.full(n_train * spec.n_classes, Split.TRAIN, dtype=np.uint8),
                                np.full(spec.val_per_class * spec.n_classes, Split.VAL,
                                        dtype=np.uint8)])
        sample_rng = rng.child(f"samples/{modality.name}")
        latents = concepts.sample_latents(labels, sample_rng)
        features = renderer.render(latents, sample_rng)
        latent_ids = np.arange(next_latent_id, next_latent_id + labels.shape[0], dtype=np.int64)
        next_latent_id += labels.shape[0]

        blocks[modality.name] = ModalityBlock(name=modality.name, features=features,
                                              labels=labels.astype(np.int64), split=split,
                                              latent_ids=latent_ids)
        renderers[modality.name] = renderer
        logger.info(f"Generated {labels.shape[0]} examples for modality {modality.name} "
                    f"(D_m={renderer.input_dim}, {n_train} train / {spec.val_per_class} val per class)")

    metadata = {"seed": int(seed), "spec": spec.to_dict(), "spec_hash": spec.spec_hash()}
    return CrossModalDataset(n_classes=spec.n_classes, anchor=spec.anchor, blocks=blocks,
                             concept_model=concepts, renderers=renderers, metadata=metadata)
