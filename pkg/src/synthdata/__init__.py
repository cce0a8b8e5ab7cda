from .concepts import NONLINEARITIES, ModalityRenderer, SceneConceptModel
from .dataset import CrossModalDataset, ModalityBlock, Split, SplitView
from .generator import DataSpec, ModalitySpec, default_modalities, generate_dataset
from .holdout import HoldoutSpec, holdout_classes, random_holdout
from .io import decode_dataset, encode_dataset, header_size, read_dataset, record_dtype, write_dataset

__all__ = [
    'NONLINEARITIES', 'ModalityRenderer', 'SceneConceptModel',
    'CrossModalDataset', 'ModalityBlock', 'Split', 'SplitView',
    'DataSpec', 'ModalitySpec', 'default_modalities', 'generate_dataset',
    'HoldoutSpec', 'holdout_classes', 'random_holdout',
    'decode_dataset', 'encode_dataset', 'header_size', 'read_dataset', 'record_dtype',
    'write_dataset',
]
