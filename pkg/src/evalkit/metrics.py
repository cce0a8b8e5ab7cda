"""Ranking metrics and chance-level references."""

from typing import Sequence, Tuple

import numpy as np

from ..netcore import RngState


def _average_precision_rows(relevance: np.ndarray) -> np.ndarray:
    """AP of every row of a boolean [n_queries x n_items] relevance matrix."""
    relevance = relevance.astype(np.float64)
    hits = np.cumsum(relevance, axis=1)
    ranks = np.arange(1, relevance.shape[1] + 1, dtype=np.float64)
    return np.sum(relevance * hits / ranks, axis=1) / relevance.sum(axis=1)


def average_precision(relevance: Sequence[bool]) -> float:
    """
    Mean of the precision at every relevant position of a ranked list.

    Args:
        relevance: Relevance flags in rank order

    Returns:
        (1/R) * sum over relevant positions p of precision@p
    """
    relevance = np.asarray(relevance, dtype=bool)
    if relevance.ndim != 1 or not relevance.any():
        raise ValueError("average precision needs at least one relevant item")
    return float(_average_precision_rows(relevance[None, :])[0])


def precision_at_k(relevance: Sequence[bool], k: int) -> float:
    relevance = np.asarray(relevance, dtype=bool)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > relevance.shape[0]:
        raise ValueError(f"k={k} exceeds the ranked list length {relevance.shape[0]}")
    return float(relevance[:k].mean())


def expected_random_ap(n_items: int, n_relevant: int) -> float:
    """
    Closed-form expectation of AP under a uniformly random ranking of
    ``n_items`` items of which ``n_relevant`` are relevant:

        E[AP] = (1/N) * ((R - 1)/(N - 1) * (N - H_N) + H_N)

    with H_N the N-th harmonic number.
    """
    if not 1 <= n_relevant <= n_items:
        raise ValueError(f"need 1 <= n_relevant <= n_items, got {n_relevant}, {n_items}")
    if n_items == 1:
        return 1.0
    harmonic = float(np.sum(1.0 / np.arange(1, n_items + 1)))
    return ((n_relevant - 1) / (n_items - 1) * (n_items - harmonic) + harmonic) / n_items


def expected_random_map(class_counts: Sequence[int]) -> float:
    """Chance mAP when queries follow the target class distribution."""
    counts = np.asarray(class_counts, dtype=np.int64)
    total = int(counts.sum())
    return float(sum(count / total * expected_random_ap(total, int(count))
                     for count in counts if count > 0))


def chance_map_estimate(class_counts: Sequence[int], n_queries: int = 1000, n_trials: int = 20,
                        seed: int = 0) -> Tuple[float, float]:
    """
    Monte-Carlo chance mAP: each trial draws ``n_queries`` query classes in
    proportion to ``class_counts`` and scores a random permutation of the
    target set against each of them.

    Returns:
        Mean and standard deviation of the per-trial mAP
    """
    counts = np.asarray(class_counts, dtype=np.int64)
    if counts.ndim != 1 or counts.size == 0 or np.any(counts <= 0):
        raise ValueError(f"class counts must be positive, got {counts.tolist()}")
    if n_queries < 1 or n_trials < 1:
        raise ValueError("n_queries and n_trials must be >= 1")

    labels = np.repeat(np.arange(counts.size), counts)
    generator = RngState(seed).child("chance").generator
    trial_maps = np.empty(n_trials)
    for trial in range(n_trials):
        query_classes = labels[generator.integers(0, labels.size, size=n_queries)]
        rankings = generator.permuted(np.tile(labels, (n_queries, 1)), axis=1)
        trial_maps[trial] = _average_precision_rows(rankings == query_classes[:, None]).mean()
    return float(trial_maps.mean()), float(trial_maps.std())
