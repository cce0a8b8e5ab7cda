"""
Per-unit activation consistency across modalities.

For every hidden unit the top-k activating validation examples of each
modality are collected. Two rules decide whether the unit fires on one
concept across modalities:

majority        the majority class of the top-k agrees across all modalities
anchor_support  at least ``min_anchor_agree`` of the anchor's top-k share a
                class c; the unit is consistent at level m when every other
                modality has at least m of its top-k in c
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np

from ..crossmodal import TrainedModel
from ..netcore import RngState
from ..synthdata import CrossModalDataset, Split
from .retrieval import ModalityFeatures, collect_features

logger = logging.getLogger(__name__)

SUPPORT_LEVELS = (1, 2)


class ConsistencyRule(str, Enum):
    MAJORITY = "majority"
    ANCHOR_SUPPORT = "anchor_support"


@dataclass
class UnitRecord:
    unit: int
    top_examples: Dict[str, List[int]]
    majority: Dict[str, int]
    consistent: bool
    support: Dict[str, int] = field(default_factory=dict)  # top-k hits on the anchor class


@dataclass
class UnitConsistencyReport:
    layer: str
    top_k: int
    rule: ConsistencyRule
    units: List[UnitRecord]
    rate: float
    rates_by_level: Dict[int, float] = field(default_factory=dict)
    n_qualified: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {"layer": self.layer, "top_k": self.top_k, "rule": self.rule.value,
                "rate": self.rate, "n_units": len(self.units), "n_qualified": self.n_qualified,
                "rates_by_level": {str(k): v for k, v in self.rates_by_level.items()},
                "consistent_units": [u.unit for u in self.units if u.consistent]}


def _top_examples(activations: np.ndarray, unit: int, top_k: int) -> Optional[np.ndarray]:
    column = activations[:, unit]
    if column.max() <= column.min():
        return None  # constant unit has no meaningful top-k
    return np.argsort(-column, kind="stable")[:top_k]


def _majority(labels: np.ndarray) -> Tuple[int, int]:
    counts = np.bincount(labels)
    winner = int(np.argmax(counts))
    return winner, int(counts[winner])


def unit_consistency(features: Mapping[str, ModalityFeatures], top_k: int = 5,
                     rule: ConsistencyRule = ConsistencyRule.MAJORITY, anchor: Optional[str] = None,
                     min_anchor_agree: int = 4, layer: str = "") -> UnitConsistencyReport:
    rule = ConsistencyRule(rule)
    modalities = list(features)
    dims = {m: item.features.shape[1] for m, item in features.items()}
    if len(set(dims.values())) != 1:
        raise ValueError(f"feature dimensionality differs across modalities: {dims}")
    for modality, item in features.items():
        if top_k > item.labels.shape[0]:
            raise ValueError(f"top_k={top_k} exceeds the {item.labels.shape[0]} examples of {modality}")
    if rule is ConsistencyRule.ANCHOR_SUPPORT:
        if anchor not in features:
            raise ValueError(f"anchor_support rule needs the anchor modality, got {anchor!r}")
        if not 1 <= min_anchor_agree <= top_k:
            raise ValueError(f"min_anchor_agree must lie in [1, top_k], got {min_anchor_agree}")

    n_units = next(iter(dims.values()))
    units: List[UnitRecord] = []
    qualified = 0
    level_hits = {level: 0 for level in SUPPORT_LEVELS}
    for unit in range(n_units):
        tops = {m: _top_examples(features[m].features, unit, top_k) for m in modalities}
        if any(top is None for top in tops.values()):
            units.append(UnitRecord(unit, {}, {}, False))
            continue
        top_labels = {m: features[m].labels[tops[m]] for m in modalities}
        majority = {m: _majority(top_labels[m])[0] for m in modalities}
        record = UnitRecord(unit=unit, top_examples={m: tops[m].tolist() for m in modalities},
                            majority=majority, consistent=False)

        if rule is ConsistencyRule.MAJORITY:
            record.consistent = len(set(majority.values())) == 1
        else:
            concept, agree = _majority(top_labels[anchor])
            if agree >= min_anchor_agree:
                qualified += 1
                record.support = {m: int(np.sum(top_labels[m] == concept))
                                  for m in modalities if m != anchor}
                weakest = min(record.support.values()) if record.support else top_k
                for level in SUPPORT_LEVELS:
                    if weakest >= level:
                        level_hits[level] += 1
                record.consistent = weakest >= SUPPORT_LEVELS[0]
        units.append(record)

    if rule is ConsistencyRule.MAJORITY:
        rate = sum(u.consistent for u in units) / n_units
        return UnitConsistencyReport(layer=layer, top_k=top_k, rule=rule, units=units, rate=rate,
                                     n_qualified=n_units)
    rates = {level: (hits / qualified if qualified else 0.0) for level, hits in level_hits.items()}
    return UnitConsistencyReport(layer=layer, top_k=top_k, rule=rule, units=units,
                                 rate=rates[SUPPORT_LEVELS[0]], rates_by_level=rates,
                                 n_qualified=qualified)


def unit_activation_report(model: TrainedModel, dataset: CrossModalDataset, layer: str,
                           top_k: int = 5, rule: ConsistencyRule = ConsistencyRule.MAJORITY,
                           min_anchor_agree: int = 4) -> UnitConsistencyReport:
    """Unit consistency over every modality's validation split at ``layer``."""
    features = collect_features(model, dataset, layer, Split.VAL)
    report = unit_consistency(features, top_k=top_k, rule=rule, anchor=dataset.anchor,
                              min_anchor_agree=min_anchor_agree, layer=layer)
    logger.info(f"{model.name} {layer}: {report.rule.value} consistency rate {report.rate:.3f} "
                f"over {len(report.units)} units")
    return report


def permutation_consistency_baseline(features: Mapping[str, ModalityFeatures], top_k: int = 5,
                                     rule: ConsistencyRule = ConsistencyRule.MAJORITY,
                                     anchor: Optional[str] = None, min_anchor_agree: int = 4,
                                     n_permutations: int = 20,
                                     rng: Optional[RngState] = None) -> Tuple[float, float]:
    """
    Chance consistency rate: labels are shuffled independently within each
    modality, which keeps activations and class frequencies but destroys any
    unit-to-concept association.

    Returns:
        Mean and standard deviation of the rate over permutations
    """
    rng = rng or RngState(0)
    rates = np.empty(n_permutations)
    for trial in range(n_permutations):
        generator = rng.child(f"permutation/{trial}").generator
        shuffled = {m: ModalityFeatures(item.features, generator.permutation(item.labels))
                    for m, item in features.items()}
        rates[trial] = unit_consistency(shuffled, top_k=top_k, rule=rule, anchor=anchor,
                                        min_anchor_agree=min_anchor_agree).rate
    return float(rates.mean()), float(rates.std())
