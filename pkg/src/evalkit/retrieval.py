"""Cross-modal retrieval: cosine ranking, AP and precision@k per query/target pair."""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..crossmodal import REGULARIZED_LAYERS, TrainedModel, extract_features
from ..netcore import RngState, Tensor
from ..synthdata import CrossModalDataset, Split
from .metrics import _average_precision_rows

logger = logging.getLogger(__name__)

QUERY_CHUNK = 256


class ModalityFeatures(NamedTuple):
    features: Tensor
    labels: np.ndarray


@dataclass
class RetrievalProtocol:
    n_queries: int = 1000
    layer: str = "fc7"
    seed: int = 0
    pr_k: int = 10

    def validate(self) -> None:
        if self.n_queries < 1:
            raise ValueError(f"n_queries must be >= 1, got {self.n_queries}")
        if self.pr_k < 1:
            raise ValueError(f"pr_k must be >= 1, got {self.pr_k}")


@dataclass
class RetrievalReport:
    """mAP and precision@k per ordered (query, target) pair; rows are queries"""

    layer: str
    strategy: str
    mean_ap: pd.DataFrame
    precision: pd.DataFrame
    pr_k: int = 10
    n_queries: int = 1000

    @property
    def row_means(self) -> pd.Series:
        return self.mean_ap.mean(axis=1, skipna=True)

    @property
    def grand_mean(self) -> float:
        return float(np.nanmean(self.mean_ap.to_numpy(dtype=np.float64)))

    @property
    def precision_grand_mean(self) -> float:
        return float(np.nanmean(self.precision.to_numpy(dtype=np.float64)))

    def pairs(self) -> List[Tuple[str, str]]:
        return [(q, t) for q in self.mean_ap.index for t in self.mean_ap.columns
                if not np.isnan(self.mean_ap.loc[q, t])]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "layer": self.layer,
            "strategy": self.strategy,
            "n_queries": self.n_queries,
            "pr_k": self.pr_k,
            "pairs": [{"query": q, "target": t, "map": float(self.mean_ap.loc[q, t]),
                       "precision_at_k": float(self.precision.loc[q, t])} for q, t in self.pairs()],
            "row_means": {q: float(v) for q, v in self.row_means.items()},
            "grand_mean": self.grand_mean,
            "precision_grand_mean": self.precision_grand_mean,
        }


def max_workers() -> int:
    """Worker threads for query evaluation, capped by XMODAL_THREADS."""
    limit = os.environ.get("XMODAL_THREADS")
    default = os.cpu_count() or 1
    if limit is None or limit == "":
        return default
    try:
        return max(1, int(limit))
    except ValueError:
        logger.warning(f"Ignoring non-integer XMODAL_THREADS={limit!r}")
        return default


def _unit_rows(features: Tensor, modality: str) -> Tuple[Tensor, np.ndarray]:
    norms = np.linalg.norm(features, axis=1)
    zero = norms == 0
    if np.any(zero):
        logger.warning(f"{int(zero.sum())} zero-norm feature vectors in {modality}; "
                       f"their similarities are set to -1")
    safe = np.where(zero, 1.0, norms)
    return features / safe[:, None], zero


def _score_chunk(queries: Tensor, query_zero: np.ndarray, query_labels: np.ndarray,
                 targets: Tensor, target_zero: np.ndarray, target_labels: np.ndarray,
                 pr_k: int) -> Tuple[np.ndarray, np.ndarray]:
    similarity = queries @ targets.T
    similarity[query_zero, :] = -1.0
    similarity[:, target_zero] = -1.0
    # stable sort of the negated scores keeps ties in item-index order
    order = np.argsort(-similarity, axis=1, kind="stable")
    relevance = target_labels[order] == query_labels[:, None]
    return _average_precision_rows(relevance), relevance[:, :pr_k].mean(axis=1)


def evaluate_pair(query: ModalityFeatures, target: ModalityFeatures, n_queries: int, pr_k: int,
                  rng: RngState, names: Tuple[str, str] = ("query", "target"),
                  workers: int = 1) -> Tuple[float, float]:
    """
    mAP and mean precision@k of ``n_queries`` query items drawn uniformly with
    replacement, each ranking every target item by cosine similarity.
    """
    missing = sorted(set(np.unique(query.labels).tolist()) - set(np.unique(target.labels).tolist()))
    if missing:
        raise ValueError(f"classes {missing} of {names[0]} are absent from target {names[1]}")
    if target.labels.shape[0] < pr_k:
        raise ValueError(f"target {names[1]} has {target.labels.shape[0]} items, fewer than k={pr_k}")

    picks = rng.generator.integers(0, query.labels.shape[0], size=n_queries)
    queries, query_zero = _unit_rows(query.features[picks], names[0])
    targets, target_zero = _unit_rows(target.features, names[1])
    query_labels = query.labels[picks]

    chunks = [slice(start, min(start + QUERY_CHUNK, n_queries))
              for start in range(0, n_queries, QUERY_CHUNK)]

    def run(chunk: slice):
        return _score_chunk(queries[chunk], query_zero[chunk], query_labels[chunk],
                            targets, target_zero, target.labels, pr_k)

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(chunk) for chunk in chunks]
    ap = np.concatenate([r[0] for r in results])
    precision = np.concatenate([r[1] for r in results])
    return float(ap.mean()), float(precision.mean())


def retrieval_eval(features: Mapping[str, ModalityFeatures], protocol: RetrievalProtocol,
                   strategy: str = "", pairs: Optional[Iterable[Tuple[str, str]]] = None,
                   workers: Optional[int] = None) -> RetrievalReport:
    """
    Cross-modal retrieval over every ordered pair of distinct modalities.

    Args:
        features: Per-modality validation features and labels
        protocol: Query count, layer label, seed and k for precision@k
        strategy: Label stored in the report
        pairs: Restrict to these (query, target) pairs
        workers: Thread count; defaults to XMODAL_THREADS or the CPU count

    Returns:
        RetrievalReport with NaN on the diagonal and on skipped pairs
    """
    protocol.validate()
    modalities = list(features)
    if len(modalities) < 2:
        raise ValueError(f"retrieval needs at least two modalities, got {modalities}")
    if pairs is None:
        pairs = [(q, t) for q in modalities for t in modalities if q != t]
    workers = workers or max_workers()
    base = RngState(protocol.seed)

    mean_ap = pd.DataFrame(np.nan, index=pd.Index(modalities, name="query"),
                           columns=pd.Index(modalities, name="target"))
    precision = mean_ap.copy()
    for query, target in pairs:
        if query == target:
            raise ValueError(f"query and target modality must differ, got {query}")
        ap, pk = evaluate_pair(features[query], features[target], protocol.n_queries,
                               protocol.pr_k, base.child(f"queries/{query}->{target}"),
                               names=(query, target), workers=workers)
        mean_ap.loc[query, target] = ap
        precision.loc[query, target] = pk
    return RetrievalReport(layer=protocol.layer, strategy=strategy, mean_ap=mean_ap,
                           precision=precision, pr_k=protocol.pr_k, n_queries=protocol.n_queries)


def collect_features(model: TrainedModel, dataset: CrossModalDataset, layer: str,
                     split: Split = Split.VAL, modalities: Optional[Sequence[str]] = None,
                     classes: Optional[Iterable[int]] = None) -> Dict[str, ModalityFeatures]:
    """Tap features of every modality's split, optionally restricted to some classes."""
    keep = None if classes is None else np.array(sorted(set(classes)), dtype=np.int64)
    result = {}
    for modality in (modalities or dataset.modalities):
        inputs, labels = dataset.split(modality, split)
        if keep is not None:
            mask = np.isin(labels, keep)
            inputs, labels = inputs[mask], labels[mask]
        result[modality] = ModalityFeatures(extract_features(model, modality, inputs, layer), labels)
    return result


def zero_shot_retrieval(features: Mapping[str, ModalityFeatures], held_out: Iterable[int],
                        anchor: str, protocol: RetrievalProtocol,
                        strategy: str = "", workers: Optional[int] = None) -> RetrievalReport:
    """Retrieval restricted to held-out classes, anchor excluded as query and target."""
    keep = np.array(sorted(set(held_out)), dtype=np.int64)
    if keep.size == 0:
        raise ValueError("held-out class set must not be empty")
    restricted = {}
    for modality, item in features.items():
        if modality == anchor:
            continue
        mask = np.isin(item.labels, keep)
        if not mask.any():
            raise ValueError(f"no held-out class examples for modality {modality}")
        restricted[modality] = ModalityFeatures(item.features[mask], item.labels[mask])
    return retrieval_eval(restricted, protocol, strategy=strategy, workers=workers)


def layer_sweep(model: TrainedModel, dataset: CrossModalDataset, protocol: RetrievalProtocol,
                layers: Sequence[str] = REGULARIZED_LAYERS, strategy: str = "",
                workers: Optional[int] = None) -> pd.DataFrame:
    """Grand-mean mAP and precision@k per layer; rows are layers."""
    rows = {}
    for layer in layers:
        layer_protocol = RetrievalProtocol(n_queries=protocol.n_queries, layer=layer,
                                           seed=protocol.seed, pr_k=protocol.pr_k)
        report = retrieval_eval(collect_features(model, dataset, layer), layer_protocol,
                                strategy=strategy, workers=workers)
        rows[layer] = {"map": report.grand_mean, f"pr@{protocol.pr_k}": report.precision_grand_mean}
    frame = pd.DataFrame.from_dict(rows, orient="index")
    frame.index.name = "layer"
    return frame
