"""Simulation-based inference for growing-network models with graph
isomorphism networks."""

from .graph import Graph, GraphBuilder, GraphError
from .models import MODEL_NAMES, MODELS, ModelSpec, registry, simulate
from .nde import NDEConfig
from .training import Checkpoint, Dataset, TrainConfig, train
from .evaluation import EvalReport, depth_sweep, mutual_information

__all__ = [
    "Checkpoint",
    "Dataset",
    "EvalReport",
    "Graph",
    "GraphBuilder",
    "GraphError",
    "MODELS",
    "MODEL_NAMES",
    "ModelSpec",
    "NDEConfig",
    "TrainConfig",
    "depth_sweep",
    "mutual_information",
    "registry",
    "simulate",
    "train",
]

__version__ = "0.1.0"
