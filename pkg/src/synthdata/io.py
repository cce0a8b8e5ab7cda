"""
XMDS1 dataset files, little-endian:

    magic        5 bytes  b"XMDS1"
    version      u16      1
    n_modalities u32
    n_classes    u32
    per modality u32 D_m, u32 record count
    metadata     u32 length + UTF-8 JSON (names, anchor, latent ids, holdout,
                 concept model, renderers, generation metadata)
    records      per modality, in header order:
                 u16 modality, u16 class, u8 split, f32[D_m]

Features are generated at float32 precision, so a write/read round trip is
bit-exact after widening back to float64.
"""

import json
import logging
from pathlib import Path
from typing import Union

import numpy as np

from ..errors import FormatError
from ..utils.binary import BinaryReader, BinaryWriter
from .concepts import ModalityRenderer, SceneConceptModel
from .dataset import CrossModalDataset, ModalityBlock, Split
from .holdout import HoldoutSpec

logger = logging.getLogger(__name__)

MAGIC = b"XMDS1"
VERSION = 1


def record_dtype(input_dim: int) -> np.dtype:
    return np.dtype([("modality", "<u2"), ("label", "<u2"), ("split", "u1"),
                     ("features", "<f4", (input_dim,))])


def header_size(n_modalities: int, metadata_bytes: int) -> int:
    return len(MAGIC) + 2 + 4 + 4 + 8 * n_modalities + 4 + metadata_bytes


def encode_dataset(dataset: CrossModalDataset) -> bytes:
    metadata = {
        "modalities": dataset.modalities,
        "anchor": dataset.anchor,
        "latent_ids": {m: block.latent_ids.tolist() for m, block in dataset.blocks.items()},
        "holdout": None if dataset.holdout is None else dataset.holdout.to_dict(),
        "concept_model": dataset.concept_model.to_dict(),
        "renderers": {m: r.to_dict() for m, r in dataset.renderers.items()},
        "metadata": dataset.metadata,
    }
    writer = BinaryWriter().raw(MAGIC).pack("HII", VERSION, len(dataset.blocks), dataset.n_classes)
    for block in dataset.blocks.values():
        writer.pack("II", block.input_dim, len(block))
    writer.text(json.dumps(metadata, sort_keys=True))

    for index, block in enumerate(dataset.blocks.values()):
        records = np.zeros(len(block), dtype=record_dtype(block.input_dim))
        records["modality"] = index
        records["label"] = block.labels
        records["split"] = block.split
        records["features"] = block.features
        writer.raw(records.tobytes())
    return writer.getvalue()


def decode_dataset(data: bytes) -> CrossModalDataset:
    reader = BinaryReader(data)
    reader.expect_magic(MAGIC)
    reader.expect_version(VERSION)
    n_modalities, n_classes = reader.unpack("II", "header")
    shapes = [reader.unpack("II", f"modality {i} header") for i in range(n_modalities)]
    metadata_offset = reader.offset
    try:
        metadata = json.loads(reader.text("metadata"))
        names = metadata["modalities"]
    except (json.JSONDecodeError, KeyError) as e:
        raise FormatError(f"invalid metadata block: {e}", metadata_offset) from e
    if len(names) != n_modalities:
        raise FormatError(f"metadata names {len(names)} modalities, header {n_modalities}",
                          metadata_offset)

    blocks = {}
    for index, (name, (input_dim, count)) in enumerate(zip(names, shapes)):
        start = reader.offset
        dtype = record_dtype(input_dim)
        records = np.frombuffer(reader.take(dtype.itemsize * count, f"{name} records"), dtype=dtype)
        if np.any(records["modality"] != index):
            raise FormatError(f"record modality index mismatch in block {name}", start)
        if np.any(records["label"] >= n_classes) or np.any(records["split"] > Split.VAL):
            raise FormatError(f"record label or split out of range in block {name}", start)
        blocks[name] = ModalityBlock(
            name=name,
            features=records["features"].astype(np.float64),
            labels=records["label"].astype(np.int64),
            split=records["split"].astype(np.uint8),
            latent_ids=np.array(metadata["latent_ids"][name], dtype=np.int64))
    reader.expect_end()

    holdout = metadata.get("holdout")
    return CrossModalDataset(
        n_classes=n_classes, anchor=metadata["anchor"], blocks=blocks,
        concept_model=SceneConceptModel.from_dict(metadata["concept_model"]),
        renderers={m: ModalityRenderer.from_dict(r) for m, r in metadata["renderers"].items()},
        metadata=metadata["metadata"],
        holdout=None if holdout is None else HoldoutSpec.from_dict(holdout))


def write_dataset(dataset: CrossModalDataset, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = encode_dataset(dataset)
    path.write_bytes(payload)
    logger.info(f"Wrote dataset to {path} ({len(payload)} bytes)")
    return path


def read_dataset(path: Union[str, Path]) -> CrossModalDataset:
    return decode_dataset(Path(path).read_bytes())
