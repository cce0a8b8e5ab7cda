"""Embedding export for external projection and a modality-mixing measure."""

import logging
from pathlib import Path
from typing import Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ..netcore import RngState
from .retrieval import ModalityFeatures

logger = logging.getLogger(__name__)


def embedding_frame(features: Mapping[str, ModalityFeatures], cap: Optional[int] = None,
                    rng: Optional[RngState] = None) -> pd.DataFrame:
    """
    Rows ``modality, class, f0..fD-1`` in modality order. With ``cap`` set,
    modalities larger than the cap are subsampled (sorted rows, seeded).
    """
    rng = rng or RngState(0)
    frames = []
    for modality, item in features.items():
        rows = np.arange(item.labels.shape[0])
        if cap is not None and rows.shape[0] > cap:
            rows = np.sort(rng.child(f"export/{modality}").generator.choice(rows.shape[0], cap,
                                                                            replace=False))
        frame = pd.DataFrame(item.features[rows],
                             columns=[f"f{j}" for j in range(item.features.shape[1])])
        frame.insert(0, "class", item.labels[rows].astype(np.int64))
        frame.insert(0, "modality", modality)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def export_embeddings(features: Mapping[str, ModalityFeatures], path: Union[str, Path],
                      cap: Optional[int] = None, rng: Optional[RngState] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = embedding_frame(features, cap=cap, rng=rng)
    frame.to_csv(path, index=False, float_format="%.9g", lineterminator="\n")
    logger.info(f"Exported {len(frame)} embeddings to {path}")
    return path


def modality_neighbor_purity(features: Mapping[str, ModalityFeatures], k: int = 10) -> Tuple[float, float]:
    """
    Mean fraction of each point's k cosine nearest neighbours (self excluded)
    that come from its own modality, with the value a modality-agnostic
    representation would reach.

    Returns:
        (purity, baseline), both in [0, 1]
    """
    blocks = [item.features for item in features.values()]
    sizes = np.array([b.shape[0] for b in blocks])
    total = int(sizes.sum())
    if not 1 <= k < total:
        raise ValueError(f"k must lie in [1, {total - 1}], got {k}")
    stacked = np.concatenate(blocks)
    owner = np.repeat(np.arange(len(blocks)), sizes)
    norms = np.linalg.norm(stacked, axis=1, keepdims=True)
    unit = stacked / np.where(norms == 0, 1.0, norms)
    similarity = unit @ unit.T
    np.fill_diagonal(similarity, -np.inf)
    neighbours = np.argsort(-similarity, axis=1, kind="stable")[:, :k]
    purity = float(np.mean(owner[neighbours] == owner[:, None]))
    baseline = float(np.sum(sizes / total * (sizes - 1) / (total - 1)))
    return purity, baseline
