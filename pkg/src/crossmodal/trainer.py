"""Anchor training, density fitting and the round-robin strategy trainer."""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from ..density import (DensityKind, EmConfig, LayerDensitySet, collect_activations,
                       fit_layer_densities)
from ..errors import DivergenceError, InsufficientDataError, NonFiniteError
from ..netcore import RngState, Tensor, sgd_step
from ..synthdata import CrossModalDataset, Split
from .base_strategy import CurriculumSchedule, StrategySpec
from .curriculum import CurriculumController
from .network import (LAYER_IDS, REGULARIZED_LAYERS, ArchConfig, CrossModalNet, ModalityBranch,
                      SharedTrunk, TrainedModel)
from .objective import regularized_objective
from .strategies import create_strategy, is_trainable, shared_model

logger = logging.getLogger(__name__)


class BatchSampler:
    """Epoch-wise shuffled minibatches of one modality's training split"""

    def __init__(self, features: Tensor, labels: np.ndarray, batch_size: int, rng: RngState):
        if labels.shape[0] == 0:
            raise InsufficientDataError("cannot sample batches from an empty training split")
        self.features = features
        self.labels = labels
        self.batch_size = min(batch_size, labels.shape[0])
        self.rng = rng
        self._order = np.empty(0, dtype=np.int64)
        self._cursor = 0

    def next(self) -> Tuple[Tensor, np.ndarray]:
        if self._cursor + self.batch_size > self._order.shape[0]:
            self._order = self.rng.generator.permutation(self.labels.shape[0])
            self._cursor = 0
        rows = self._order[self._cursor:self._cursor + self.batch_size]
        self._cursor += self.batch_size
        return self.features[rows], self.labels[rows]


@dataclass
class TrainingResult:
    model: TrainedModel
    records: List[Dict[str, Any]] = field(default_factory=list)


def _step(params: Dict[str, Tensor], grads: Dict[str, Tensor], schedule: CurriculumSchedule,
          iteration: int, modality: str, loss: float) -> None:
    if not np.isfinite(loss):
        raise DivergenceError(iteration, modality, loss)
    try:
        sgd_step(params, grads, schedule.lr, schedule.weight_decay)
    except NonFiniteError as e:
        raise DivergenceError(iteration, modality, loss) from e


def train_anchor(dataset: CrossModalDataset, arch: ArchConfig, schedule: CurriculumSchedule,
                 rng: RngState) -> CrossModalNet:
    """
    Plain supervised training of the anchor modality's full network.

    Args:
        dataset: Dataset whose anchor training split covers every class
        arch: Layer widths and initialization
        schedule: Iterations, learning rate, batch size and weight decay
        rng: Stream for initialization and batch order

    Returns:
        Network with the anchor branch and the trunk every strategy starts from
    """
    anchor = dataset.anchor
    features, labels = dataset.split(anchor, Split.TRAIN)
    missing = sorted(set(range(dataset.n_classes)) - set(np.unique(labels).tolist()))
    if missing:
        raise InsufficientDataError(f"anchor modality {anchor!r} has no training examples "
                                    f"for classes {missing}")
    arch.validate()
    trunk = SharedTrunk.initialize(dataset.n_classes, arch, rng.child("trunk"))
    branch = ModalityBranch.initialize(anchor, dataset.input_dims[anchor], arch,
                                       rng.child(f"branch/{anchor}"))
    net = CrossModalNet({anchor: branch}, trunk)
    if schedule.total_iters == 0:
        return net

    params = net.named_parameters()
    sampler = BatchSampler(features, labels, schedule.batch_size, rng.child("batches"))
    for iteration in range(schedule.total_iters):
        x, y = sampler.next()
        result = regularized_objective(net, anchor, x, y)
        _step(params, result.grads, schedule, iteration, anchor, result.loss)
    logger.info(f"Trained anchor network on {anchor} for {schedule.total_iters} iterations "
                f"(final batch loss {result.loss:.4f})")
    return net


def fit_anchor_densities(anchor: CrossModalNet, dataset: CrossModalDataset, kind: DensityKind,
                         rng: RngState, layers=REGULARIZED_LAYERS, max_samples: Optional[int] = 1000,
                         em_config: Optional[EmConfig] = None,
                         variance_floor: float = 1e-6) -> LayerDensitySet:
    """Fit one density per regularized layer to anchor activations on its training split."""
    features, _ = dataset.split(dataset.anchor, Split.TRAIN)
    activations = collect_activations(anchor, dataset.anchor, features, list(layers),
                                      max_samples=max_samples, rng=rng.child("subsample"))
    return fit_layer_densities(activations, kind, rng.child("fit"), em_config=em_config,
                               variance_floor=variance_floor)


def train_strategy(spec: StrategySpec, dataset: CrossModalDataset, anchor: Optional[CrossModalNet],
                   arch: ArchConfig, rng: RngState, densities: Optional[LayerDensitySet] = None,
                   log_every: int = 50,
                   log_path: Optional[Union[str, Path]] = None) -> TrainingResult:
    """
    Train every modality round-robin, one batch and one SGD step per modality
    per iteration, in the dataset's modality order.

    Args:
        spec: Strategy kind, curriculum and regularization settings
        dataset: Training data for every modality
        anchor: Trained anchor network (None only for scratch baselines)
        arch: Layer widths and initialization of new branches
        rng: Run stream; initialization and batch order use named children
        densities: Anchor densities, required when regularization is active
        log_every: Iterations between logged records (first and last always logged)
        log_path: Optional JSON-lines file receiving the records

    Returns:
        The trained model and the logged records
    """
    strategy = create_strategy(spec)
    strategy.validate(densities)
    arch.validate()
    schedule = spec.curriculum

    model = strategy.build_model(dataset, anchor, arch, rng.child("init"))
    if densities is not None:
        for net in model.unique_networks():
            densities.check_dims(net.tap_dims())

    order = [m for m in dataset.modalities if spec.replay_anchor or m != dataset.anchor]
    samplers = {}
    for modality in order:
        features, labels = dataset.split(modality, Split.TRAIN)
        if labels.shape[0] == 0:
            raise InsufficientDataError(f"no training examples for modality {modality!r}")
        samplers[modality] = BatchSampler(features, labels, schedule.batch_size,
                                          rng.child(f"batches/{modality}"))
    params = {id(net): net.named_parameters() for net in model.unique_networks()}

    controller = CurriculumController(strategy)
    records: List[Dict[str, Any]] = []
    log_file = None
    if log_path is not None:
        Path(log_path).parent.mkdir(parents=True, exist_ok=True)
        log_file = open(log_path, "w", encoding="utf-8")
    try:
        for iteration in range(schedule.total_iters):
            phase = controller.update(iteration)
            logged = (iteration % max(log_every, 1) == 0 or iteration == schedule.total_iters - 1)
            for modality in order:
                net = model.network(modality)
                x, y = samplers[modality].next()
                result = regularized_objective(net, modality, x, y, densities,
                                               strategy.lambdas(phase, modality, dataset.anchor))
                groups = strategy.trainable_groups(phase, modality)
                grads = {name: g for name, g in result.grads.items() if is_trainable(name, groups)}
                _step(params[id(net)], grads, schedule, iteration, modality, result.loss)
                if logged:
                    record = {"iteration": iteration, "modality": modality, "phase": phase.value,
                              "ce_loss": result.ce_loss, "reg": result.reg_terms,
                              "lambdas": result.lambdas, "total": result.loss}
                    records.append(record)
                    if log_file is not None:
                        log_file.write(json.dumps(record, sort_keys=True) + "\n")
    finally:
        if log_file is not None:
            log_file.close()

    logger.info(f"Finished {spec.kind.value}: {schedule.total_iters} iterations over {order}")
    return TrainingResult(model=model, records=records)


def _check_layer(layer: str) -> None:
    if layer not in LAYER_IDS:
        raise ValueError(f"unknown layer id {layer!r}; expected one of {LAYER_IDS}")


def extract_features(model: TrainedModel, modality: str, inputs: Tensor, layer: str) -> Tensor:
    """Tap activations at ``layer`` for every row of ``inputs``, in input order."""
    _check_layer(layer)
    net = model.network(modality)
    taps = net.forward(modality, inputs)
    return taps[net.tap_index(modality, layer)].copy()


def predict_logits(model: TrainedModel, modality: str, inputs: Tensor) -> Tensor:
    return extract_features(model, modality, inputs, "logits")


def classification_accuracy(model: TrainedModel, dataset: CrossModalDataset,
                            split: Split = Split.VAL) -> Dict[str, float]:
    """Within-modality accuracy, argmax over all C logits."""
    accuracy = {}
    for modality in dataset.modalities:
        features, labels = dataset.split(modality, split)
        if labels.shape[0] == 0:
            continue
        predictions = predict_logits(model, modality, features).argmax(axis=1)
        accuracy[modality] = float(np.mean(predictions == labels))
    return accuracy


def placesnet_baseline(anchor: CrossModalNet, dataset: CrossModalDataset, arch: ArchConfig,
                       rng: RngState) -> TrainedModel:
    """Anchor network with randomly initialized encoders for the other modalities"""
    return shared_model("bl_placesnet", dataset, anchor.trunk.copy(), anchor, arch, rng.child("init"))
