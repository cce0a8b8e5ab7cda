"""Within-modality and zero-shot classification accuracy."""

import logging
from typing import Dict

import numpy as np
import pandas as pd

from ..crossmodal import TrainedModel, predict_logits
from ..errors import HoldoutError, InsufficientDataError
from ..synthdata import CrossModalDataset, Split

logger = logging.getLogger(__name__)


def classification_report(model: TrainedModel, dataset: CrossModalDataset,
                          split: Split = Split.VAL) -> pd.DataFrame:
    """Accuracy and example count per modality, argmax over all C logits."""
    rows = {}
    for modality in dataset.modalities:
        features, labels = dataset.split(modality, split)
        if labels.shape[0] == 0:
            continue
        predictions = predict_logits(model, modality, features).argmax(axis=1)
        rows[modality] = {"accuracy": float(np.mean(predictions == labels)),
                          "n": int(labels.shape[0])}
    frame = pd.DataFrame.from_dict(rows, orient="index")
    frame.index.name = "modality"
    return frame


def zero_shot_classify(model: TrainedModel, dataset: CrossModalDataset) -> Dict[str, float]:
    """
    Accuracy on held-out-class validation examples of every affected modality.

    Predictions take the argmax over all C logits, not only the held-out
    classes. The anchor never loses classes and is not reported.
    """
    holdout = dataset.holdout
    if holdout is None or not holdout.classes:
        raise HoldoutError("dataset carries no class holdout")
    if model.n_classes != dataset.n_classes:
        raise ValueError(f"classifier covers {model.n_classes} classes, dataset has {dataset.n_classes}")

    held = np.array(sorted(holdout.classes), dtype=np.int64)
    accuracy = {}
    for modality in holdout.affected(dataset):
        features, labels = dataset.split(modality, Split.VAL)
        mask = np.isin(labels, held)
        if not mask.any():
            raise InsufficientDataError(f"no held-out validation examples for modality {modality}")
        predictions = predict_logits(model, modality, features[mask]).argmax(axis=1)
        accuracy[modality] = float(np.mean(predictions == labels[mask]))
        logger.debug(f"{modality}: zero-shot accuracy {accuracy[modality]:.3f} on {int(mask.sum())} examples")
    return accuracy
