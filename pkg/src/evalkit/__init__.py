from .invariance import embedding_frame, export_embeddings, modality_neighbor_purity
from .metrics import (average_precision, chance_map_estimate, expected_random_ap,
                      expected_random_map, precision_at_k)
from .reporting import (accuracy_text, layer_sweep_text, mean_std_table, mean_std_text,
                        percent_table, retrieval_text, write_json, write_text)
from .retrieval import (ModalityFeatures, RetrievalProtocol, RetrievalReport, collect_features,
                        evaluate_pair, layer_sweep, max_workers, retrieval_eval,
                        zero_shot_retrieval)
from .units import (ConsistencyRule, UnitConsistencyReport, UnitRecord,
                    permutation_consistency_baseline, unit_activation_report, unit_consistency)
from .zeroshot import classification_report, zero_shot_classify

__all__ = [
    'embedding_frame', 'export_embeddings', 'modality_neighbor_purity',
    'average_precision', 'chance_map_estimate', 'expected_random_ap', 'expected_random_map',
    'precision_at_k',
    'accuracy_text', 'layer_sweep_text', 'mean_std_table', 'mean_std_text', 'percent_table',
    'retrieval_text', 'write_json', 'write_text',
    'ModalityFeatures', 'RetrievalProtocol', 'RetrievalReport', 'collect_features',
    'evaluate_pair', 'layer_sweep', 'max_workers', 'retrieval_eval', 'zero_shot_retrieval',
    'ConsistencyRule', 'UnitConsistencyReport', 'UnitRecord', 'permutation_consistency_baseline',
    'unit_activation_report', 'unit_consistency',
    'classification_report', 'zero_shot_classify',
]
