"""Latent scene concepts and the frozen per-modality renderers."""

from dataclasses import dataclass
from typing import Any, Dict

import numpy as np

from ..netcore import RngState, Tensor

NONLINEARITIES = {
    "tanh": np.tanh,
    "relu": lambda x: np.maximum(x, 0.0),
    "sign": np.sign,
    "identity": lambda x: x,
}


@dataclass
class SceneConceptModel:
    """
    Class prototypes in a latent space plus a dictionary of "object" directions
    shared across classes. Each class mixes the parts with its own weights, so
    classes that share parts overlap the way scenes share beds or cars.
    """

    prototypes: Tensor  # [C x L]
    parts: Tensor  # [M x L], unit norm rows
    mixture: Tensor  # [C x M], rows on the simplex
    part_scale: float
    spread: float

    @property
    def n_classes(self) -> int:
        return self.prototypes.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.prototypes.shape[1]

    @classmethod
    def generate(cls, n_classes: int, latent_dim: int, n_parts: int, prototype_scale: float,
                 part_scale: float, spread: float, mixture_concentration: float,
                 rng: RngState) -> "SceneConceptModel":
        generator = rng.generator
        prototypes = generator.normal(0.0, prototype_scale, size=(n_classes, latent_dim))
        parts = generator.normal(0.0, 1.0, size=(n_parts, latent_dim))
        parts /= np.linalg.norm(parts, axis=1, keepdims=True)
        mixture = generator.dirichlet(np.full(n_parts, mixture_concentration), size=n_classes)
        return cls(prototypes=prototypes, parts=parts, mixture=mixture,
                   part_scale=part_scale, spread=spread)

    def min_prototype_distance(self) -> float:
        diff = self.prototypes[:, None, :] - self.prototypes[None, :, :]
        distances = np.linalg.norm(diff, axis=2)
        return float(distances[~np.eye(self.n_classes, dtype=bool)].min())

    def sample_latents(self, labels: np.ndarray, rng: RngState) -> Tensor:
        """z = prototype + jittered part mixture + spread * noise, one independent draw per row."""
        generator = rng.generator
        n_rows = labels.shape[0]
        jitter = 1.0 + self.spread * generator.normal(size=(n_rows, self.parts.shape[0]))
        part_strength = self.mixture[labels] * jitter
        noise = generator.normal(size=(n_rows, self.latent_dim))
        return (self.prototypes[labels]
                + self.part_scale * part_strength @ self.parts
                + self.spread * noise)

    def to_dict(self) -> Dict[str, Any]:
        return {"prototypes": self.prototypes.tolist(), "parts": self.parts.tolist(),
                "mixture": self.mixture.tolist(), "part_scale": self.part_scale,
                "spread": self.spread}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SceneConceptModel":
        return cls(prototypes=np.array(data["prototypes"], dtype=np.float64),
                   parts=np.array(data["parts"], dtype=np.float64),
                   mixture=np.array(data["mixture"], dtype=np.float64),
                   part_scale=float(data["part_scale"]), spread=float(data["spread"]))


@dataclass
class ModalityRenderer:
    """Frozen map from the latent space to one modality's input space"""

    modality: str
    mixing: Tensor  # [rendered_dim x L]
    offset: Tensor  # [rendered_dim]
    nonlinearity: str
    noise_std: float
    distractor_dims: int
    distractor_gain: float

    @property
    def input_dim(self) -> int:
        return self.mixing.shape[0] + self.distractor_dims

    @classmethod
    def generate(cls, modality: str, rendered_dim: int, latent_dim: int, nonlinearity: str,
                 noise_std: float, distractor_dims: int, distractor_gain: float,
                 rng: RngState) -> "ModalityRenderer":
        generator = rng.generator
        mixing = generator.normal(0.0, 1.0 / np.sqrt(latent_dim), size=(rendered_dim, latent_dim))
        offset = generator.normal(0.0, 0.1, size=rendered_dim)
        return cls(modality=modality, mixing=mixing, offset=offset, nonlinearity=nonlinearity,
                   noise_std=noise_std, distractor_dims=distractor_dims,
                   distractor_gain=distractor_gain)

    def render(self, latents: Tensor, rng: RngState) -> Tensor:
        """
        Apply the frozen map and nonlinearity, add noise, append distractor
        coordinates. Output is rounded to float32 precision so it survives the
        on-disk format bit-exactly.
        """
        generator = rng.generator
        n_rows = latents.shape[0]
        rendered = NONLINEARITIES[self.nonlinearity](latents @ self.mixing.T + self.offset)
        rendered = rendered + self.noise_std * generator.normal(size=rendered.shape)
        distractors = (self.distractor_gain * self.noise_std
                       * generator.normal(size=(n_rows, self.distractor_dims)))
        features = np.concatenate([rendered, distractors], axis=1)
        return features.astype(np.float32).astype(np.float64)

    def to_dict(self) -> Dict[str, Any]:
        return {"modality": self.modality, "mixing": self.mixing.tolist(),
                "offset": self.offset.tolist(), "nonlinearity": self.nonlinearity,
                "noise_std": self.noise_std, "distractor_dims": self.distractor_dims,
                "distractor_gain": self.distractor_gain}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModalityRenderer":
        mixing = np.array(data["mixing"], dtype=np.float64)
        return cls(modality=data["modality"], mixing=mixing.reshape(len(data["mixing"]), -1),
                   offset=np.array(data["offset"], dtype=np.float64),
                   nonlinearity=data["nonlinearity"], noise_std=float(data["noise_std"]),
                   distractor_dims=int(data["distractor_dims"]),
                   distractor_gain=float(data["distractor_gain"]))
