"""
XMCK1 model checkpoints, little-endian:

    magic     5 bytes  b"XMCK1"
    version   u16      1
    header    u32 length + UTF-8 JSON architecture header:
              {"name", "networks": [{"prefix", "serves", "branches": {m: n_layers}}],
               "parameters": [[id, [out_dim, in_dim] or [out_dim]], ...]}
    blocks    f64 parameter arrays in header order

Each distinct network is stored once, so the shared trunk of a shared
strategy occupies a single set of blocks.
"""

import json
import logging
from pathlib import Path
from typing import Dict, Union

from ..errors import FormatError, MissingArtifactError
from ..netcore import LinearLayer, Mlp
from ..netcore.layers import layer_param_names
from ..utils.binary import BinaryReader, BinaryWriter
from .network import TRUNK_LAYERS, CrossModalNet, ModalityBranch, SharedTrunk, TrainedModel

logger = logging.getLogger(__name__)

MAGIC = b"XMCK1"
VERSION = 1


def encode_checkpoint(model: TrainedModel) -> bytes:
    networks = []
    parameters = []
    arrays = []
    for net in model.unique_networks():
        networks.append({"prefix": net.prefix,
                         "serves": [m for m, n in model.networks.items() if n is net],
                         "branches": {m: len(b.encoder) for m, b in net.branches.items()}})
        for name, array in net.named_parameters().items():
            parameters.append([name, list(array.shape)])
            arrays.append(array)
    header = {"name": model.name, "networks": networks, "parameters": parameters}
    writer = BinaryWriter().raw(MAGIC).pack("H", VERSION).text(json.dumps(header, sort_keys=True))
    for array in arrays:
        writer.array(array, "f8")
    return writer.getvalue()


def decode_checkpoint(data: bytes) -> TrainedModel:
    reader = BinaryReader(data)
    reader.expect_magic(MAGIC)
    reader.expect_version(VERSION)
    header_offset = reader.offset
    try:
        header = json.loads(reader.text("architecture header"))
        parameter_specs = header["parameters"]
        network_specs = header["networks"]
    except (json.JSONDecodeError, KeyError) as e:
        raise FormatError(f"invalid architecture header: {e}", header_offset) from e

    values = {}
    for name, shape in parameter_specs:
        count = 1
        for dim in shape:
            count *= dim
        values[name] = reader.array("f8", count, name).reshape(shape)
    reader.expect_end()

    def layer(name: str) -> LinearLayer:
        weight_name, bias_name = layer_param_names(name)
        if weight_name not in values or bias_name not in values:
            raise FormatError(f"checkpoint lacks parameters for {name}", header_offset)
        return LinearLayer(values[weight_name], values[bias_name])

    networks: Dict[str, CrossModalNet] = {}
    for spec in network_specs:
        prefix = spec["prefix"]
        trunk = SharedTrunk(*(layer(f"{prefix}trunk/{n}") for n in TRUNK_LAYERS))
        branches = {m: ModalityBranch(m, Mlp([layer(f"{prefix}branch/{m}/enc{j}")
                                              for j in range(n_layers)]))
                    for m, n_layers in spec["branches"].items()}
        net = CrossModalNet(branches, trunk, prefix)
        for modality in spec["serves"]:
            networks[modality] = net
    return TrainedModel(name=header["name"], networks=networks)


def save_checkpoint(model: TrainedModel, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(model))
    logger.info(f"Saved {model.name} checkpoint to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> TrainedModel:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes())


def anchor_as_model(anchor: CrossModalNet) -> TrainedModel:
    return TrainedModel(name="anchor", networks={m: anchor for m in anchor.modalities})
