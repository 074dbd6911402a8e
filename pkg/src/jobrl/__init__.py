"""Learned job-allocation policies: graph-attention Q-networks, baselines and an exact oracle."""

__version__ = "0.1.0"

from .baselines import OptimumResult, PolicyKind, approximation_ratio, exact_optimum, greedy_action, random_action
from .estimators import DQNAllocator, ExactAllocator, GreedyAllocator, RandomAllocator
from .generators import GeneratorConfig, dataset_stats, generate
from .graph import (
    Allocation,
    Assignment,
    JobAllocationGraph,
    apply_assignment,
    degree_features,
    deserialize,
    serialize,
    validate_allocation,
    validate_graph,
)
from .qnet import QNetworkParams, init_params, q_backward, q_forward
from .trainer import TrainConfig, train

__all__ = [
    "Allocation",
    "Assignment",
    "DQNAllocator",
    "ExactAllocator",
    "GeneratorConfig",
    "GreedyAllocator",
    "JobAllocationGraph",
    "OptimumResult",
    "PolicyKind",
    "QNetworkParams",
    "RandomAllocator",
    "TrainConfig",
    "apply_assignment",
    "approximation_ratio",
    "dataset_stats",
    "degree_features",
    "deserialize",
    "exact_optimum",
    "generate",
    "greedy_action",
    "init_params",
    "q_backward",
    "q_forward",
    "random_action",
    "serialize",
    "train",
    "validate_allocation",
    "validate_graph",
]
