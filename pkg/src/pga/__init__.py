"""Partial graph attack engine.

Target selection, anchor picking, greedy edge flipping, baseline attackers,
and an evaluation harness for two-layer graph convolution victims.
"""

from .anchors import CandidatePools, build_add_pool, build_pools, build_remove_pool, second_class_set
from .attack import (
    AttackConfig,
    AttackRun,
    resolve_budget,
    run_dice,
    run_full_greedy,
    run_pga,
    run_random,
)
from .errors import EmptyPoolError, EmptyTargetSetError, GraphFormatError, TrainingDivergedError
from .evaluate import (
    AttackReport,
    degree_distance,
    evaluate_evasion,
    evaluate_poisoning,
    export_robustness_dataset,
    hit_rate,
    vulnerable_oracle,
)
from .graph import (
    Adjacency,
    GraphBundle,
    NodeStats,
    NormalizedAdjacency,
    Perturbation,
    apply_flip,
    canonical_edge,
    compute_node_stats,
    k_hop_neighbors,
    normalize_adjacency,
)
from .io import load_graph, load_perturbation, save_graph, save_perturbation
from .nn import (
    ModelParams,
    Prediction,
    PseudoLabelState,
    TrainConfig,
    accuracy,
    attack_loss,
    edge_gradients,
    forward,
    load_params,
    save_params,
    train,
    train_with_history,
)
from .sbm import generate_sbm
from .selection import (
    SelectionConfig,
    TargetSet,
    classification_margin,
    degree_filter,
    margin_filter,
    margins_of,
    preprocessing_filter,
    select_targets,
)

__version__ = "0.1.0"
