"""Hop-hop relation-aware graph neural networks in numpy.

Modules:

- ``graphstore``: graph container, disk format, synthetic generators, splits
- ``sparsela``: CSR algebra and relation (hop power / meta-path) compilation
- ``diffcore``: tape-based reverse-mode differentiation and gradient checks
- ``model``: HHR-GNN layers, classifier, GCN baseline, checkpoints
- ``trainer``: Adam, early stopping, metrics, whole-model gradient check
- ``explain``: relation-score export
- ``cli``: command-line entry point
"""

from .graphstore import (Graph, GenParamsHeterogeneous, GenParamsHomogeneous, SplitSet,
                         generate_heterogeneous, generate_homogeneous, load_graph,
                         make_splits, save_graph)
from .model import ModelConfig, ModelParams, init_params, model_forward, predict
from .sparsela import CompiledRelation, CsrMatrix, RelationSpec, compile_relation
from .trainer import OptimHyper, evaluate, grad_check_model, train

__version__ = "0.1.0"
