from typing import Tuple

import numpy as np
from scipy.special import log_softmax

from ..errors import DimensionError
from .tensor import Tensor


def softmax_cross_entropy(logits: Tensor, labels) -> Tuple[float, Tensor]:
    """
    Mean softmax cross-entropy over the batch.

    Args:
        logits: [batch x C] scores
        labels: class indices in [0, C)

    Returns:
        (loss, d loss / d logits) with grad = (softmax - onehot) / batch
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(f"logits {logits.shape} do not match labels {labels.shape}")
    batch, n_classes = logits.shape
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes}), got range "
                         f"[{labels.min()}, {labels.max()}]")

    # log_softmax subtracts the row max before exponentiating
    log_probs = log_softmax(logits, axis=1)
    rows = np.arange(batch)
    loss = float(-log_probs[rows, labels].mean())
    grad = np.exp(log_probs)
    grad[rows, labels] -= 1.0
    return loss, grad / batch
