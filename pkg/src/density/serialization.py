"""
XMDM1 density blobs, little-endian:

    magic      5 bytes  b"XMDM1"
    version    u16      1
    kind       u8       0 = diagonal Gaussian, 1 = diagonal GMM
    K          u32      components (1 for a Gaussian)
    D          u32      dimensionality
    weights    f64[K]
    means      f64[K*D]
    variances  f64[K*D]
"""

from pathlib import Path
from typing import Union

import numpy as np

from ..errors import FormatError
from ..utils.binary import BinaryReader, BinaryWriter
from .gaussian import DiagonalGaussian
from .gmm import DiagonalGmm
from .layer_set import DensityKind, DensityModel, LayerDensitySet

MAGIC = b"XMDM1"
VERSION = 1


def encode_density(model: DensityModel) -> bytes:
    if isinstance(model, DiagonalGaussian):
        kind, weights = 0, np.ones(1)
        means, variances = model.mean[None, :], model.variance[None, :]
    else:
        kind, weights, means, variances = 1, model.weights, model.means, model.variances
    n_components, dim = means.shape
    writer = BinaryWriter().raw(MAGIC).pack("HBII", VERSION, kind, n_components, dim)
    return writer.array(weights, "f8").array(means, "f8").array(variances, "f8").getvalue()


def decode_density(data: bytes) -> DensityModel:
    reader = BinaryReader(data)
    reader.expect_magic(MAGIC)
    reader.expect_version(VERSION)
    kind_offset = reader.offset
    kind, n_components, dim = reader.unpack("BII", "header")
    if kind not in (0, 1) or (kind == 0 and n_components != 1):
        raise FormatError(f"invalid density kind {kind} with K={n_components}", kind_offset)
    weights = reader.array("f8", n_components, "weights")
    means = reader.array("f8", n_components * dim, "means").reshape(n_components, dim)
    variances = reader.array("f8", n_components * dim, "variances").reshape(n_components, dim)
    reader.expect_end()
    if kind == 0:
        return DiagonalGaussian(mean=means[0], variance=variances[0])
    return DiagonalGmm(weights=weights, means=means, variances=variances)


def density_path(directory: Union[str, Path], kind: DensityKind, layer: str) -> Path:
    return Path(directory) / f"{DensityKind(kind).value}_{layer}.xmdm"


def save_density_set(densities: LayerDensitySet, directory: Union[str, Path]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for layer, model in densities.models.items():
        density_path(directory, densities.kind, layer).write_bytes(encode_density(model))


def load_density_set(directory: Union[str, Path], kind: DensityKind, layers) -> LayerDensitySet:
    kind = DensityKind(kind)
    models = {layer: decode_density(density_path(directory, kind, layer).read_bytes())
              for layer in layers}
    return LayerDensitySet(kind=kind, models=models)
