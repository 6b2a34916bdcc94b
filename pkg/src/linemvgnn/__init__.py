"""Directed-graph neural networks with line-graph edge propagation.

Detects illicit accounts on node-and-edge-attributed transaction graphs via
two-way message passing (MVGNN) optionally interleaved with edge-feature
propagation on the line-graph view (LineMVGNN), plus the full training
recipe and a synthetic money-laundering anomaly injector.
"""

from .errors import DataError, NumericError
from .graph import (ILLICIT, LICIT, SPLIT_NONE, SPLIT_TEST, SPLIT_TRAIN,
                    SPLIT_VAL, UNLABELED, TransactionGraph,
                    augment_structural_features, random_split)
from .dataio import (DatasetBundle, Schema, chronological_split, ingest_csv,
                     load_bundle, load_checkpoint, save_bundle,
                     save_checkpoint)
from .linegraph import (LineGraphView, build_line_graph, edge_predecessors,
                        edge_successors, sample_predecessor_mask)
from .model import ModelConfig, ModelParameters, model_forward
from .synthgen import (InjectedPattern, InjectionConfig, inject,
                       random_background, synthetic_pool)
from .train import TrainingConfig, evaluate, grid_search, train_once

__version__ = "0.1.0"

__all__ = [
    "DataError", "NumericError", "TransactionGraph",
    "augment_structural_features", "random_split",
    "LineGraphView", "build_line_graph", "edge_predecessors",
    "edge_successors", "sample_predecessor_mask",
    "ModelConfig", "ModelParameters", "model_forward",
    "DatasetBundle", "Schema", "ingest_csv", "save_bundle", "load_bundle",
    "chronological_split", "save_checkpoint", "load_checkpoint",
    "InjectionConfig", "InjectedPattern", "inject",
    "random_background", "synthetic_pool",
    "TrainingConfig", "train_once", "evaluate", "grid_search",
    "UNLABELED", "LICIT", "ILLICIT",
    "SPLIT_NONE", "SPLIT_TRAIN", "SPLIT_VAL", "SPLIT_TEST",
    "__version__",
]
