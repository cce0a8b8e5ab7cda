from .base_strategy import (BaseStrategy, CurriculumSchedule, Phase, RegConfig, StrategyKind,
                            StrategySpec)
from .checkpoint import (anchor_as_model, decode_checkpoint, encode_checkpoint, load_checkpoint,
                         save_checkpoint)
from .curriculum import CurriculumController
from .diagnostics import GradCheckCase, GradCheckSuiteResult, run_gradcheck_suite
from .network import (LAYER_IDS, REGULARIZED_LAYERS, ArchConfig, CrossModalNet, ModalityBranch,
                      SharedTrunk, TrainedModel)
from .objective import ObjectiveResult, regularized_objective
from .strategies import create_strategy, is_trainable, trainable_set
from .trainer import (BatchSampler, TrainingResult, classification_accuracy, extract_features,
                      fit_anchor_densities, placesnet_baseline, predict_logits, train_anchor,
                      train_strategy)

__all__ = [
    'BaseStrategy', 'CurriculumSchedule', 'Phase', 'RegConfig', 'StrategyKind', 'StrategySpec',
    'anchor_as_model', 'decode_checkpoint', 'encode_checkpoint', 'load_checkpoint',
    'save_checkpoint',
    'CurriculumController',
    'GradCheckCase', 'GradCheckSuiteResult', 'run_gradcheck_suite',
    'LAYER_IDS', 'REGULARIZED_LAYERS', 'ArchConfig', 'CrossModalNet', 'ModalityBranch',
    'SharedTrunk', 'TrainedModel',
    'ObjectiveResult', 'regularized_objective',
    'create_strategy', 'is_trainable', 'trainable_set',
    'BatchSampler', 'TrainingResult', 'classification_accuracy', 'extract_features',
    'fit_anchor_densities', 'placesnet_baseline', 'predict_logits', 'train_anchor',
    'train_strategy',
]
