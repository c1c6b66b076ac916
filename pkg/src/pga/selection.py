"""Hierarchical attack-target selection: preprocessing, degree, and margin filters.

The degree and margin cutoffs are nearest-rank quantiles over the
preprocessing survivors, sharing one filter ratio. Strict inequalities are
kept; a minimum-tie fallback prevents empty sets on constant distributions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyTargetSetError
from .graph import GraphBundle
from .nn import Prediction

__all__ = [
    "SelectionConfig",
    "TargetSet",
    "classification_margin",
    "margins_of",
    "preprocessing_filter",
    "degree_filter",
    "margin_filter",
    "select_targets",
    "targets_to_dict",
]


@dataclass(frozen=True)
class SelectionConfig:
    threshold_p: float = 0.05
    filter_ratio: float = 0.65

    def __post_init__(self):
        if not (0.0 < self.filter_ratio <= 1.0):
            raise ValueError("filter_ratio must lie in (0, 1]")
        if self.threshold_p < 0:
            raise ValueError("threshold_p must be >= 0")


def margins_of(pred: Prediction) -> np.ndarray:
    """Gap between the two largest probabilities, per node."""
    part = np.partition(pred.probs, -2, axis=1)
    return part[:, -1] - part[:, -2]


def classification_margin(pred: Prediction, v: int) -> float:
    return float(margins_of(pred)[v])


def preprocessing_filter(pred: Prediction, unlabeled: np.ndarray, threshold_p: float) -> np.ndarray:
    """Keep unlabeled nodes whose margin strictly exceeds threshold_p."""
    unlabeled = np.asarray(unlabeled, dtype=np.int64)
    m = margins_of(pred)[unlabeled]
    return np.sort(unlabeled[m > threshold_p])


def _nearest_rank(values: np.ndarray, ratio: float) -> float:
    """Nearest-rank quantile: the ceil(ratio * n)-th smallest value."""
    s = np.sort(values)
    rank = int(np.ceil(ratio * len(s)))
    return float(s[max(rank, 1) - 1])


def _quantile_filter(candidates: np.ndarray, values: np.ndarray, ratio: float) -> np.ndarray:
    if len(candidates) == 0:
        raise ValueError("filter needs a non-empty candidate set")
    candidates = np.asarray(candidates, dtype=np.int64)
    vals = values[candidates]
    cut = _nearest_rank(vals, ratio)
    kept = candidates[vals < cut]
    if kept.size == 0:
        kept = candidates[vals == vals.min()]  # minimum-tie fallback
    return np.sort(kept)


def degree_filter(candidates: np.ndarray, degrees: np.ndarray, filter_ratio: float) -> np.ndarray:
    return _quantile_filter(candidates, np.asarray(degrees), filter_ratio)


def margin_filter(candidates: np.ndarray, margins: np.ndarray, filter_ratio: float) -> np.ndarray:
    return _quantile_filter(candidates, np.asarray(margins), filter_ratio)


@dataclass(frozen=True)
class TargetSet:
    nodes: np.ndarray                 # ascending ids
    provenance: tuple[dict, ...]      # one record per preprocessing survivor
    config: SelectionConfig

    def __len__(self) -> int:
        return len(self.nodes)


def select_targets(pred: Prediction, bundle: GraphBundle, cfg: SelectionConfig) -> TargetSet:
    """Attack(V): intersection of degree- and margin-filter survivors.

    Raises EmptyTargetSetError (distinct from other failures) when nothing
    survives, so callers can advise raising filter_ratio.
    """
    unlabeled = bundle.unlabeled_idx
    if len(unlabeled) == 0:
        raise ValueError("no unlabeled nodes to select from")
    survivors = preprocessing_filter(pred, unlabeled, cfg.threshold_p)
    if len(survivors) == 0:
        raise EmptyTargetSetError(
            "preprocessing filter removed every unlabeled node; lower threshold_p"
        )
    degrees = bundle.adj.degrees
    margins = margins_of(pred)
    by_degree = set(degree_filter(survivors, degrees, cfg.filter_ratio).tolist())
    by_margin = set(margin_filter(survivors, margins, cfg.filter_ratio).tolist())
    nodes = np.array(sorted(by_degree & by_margin), dtype=np.int64)
    if nodes.size == 0:
        raise EmptyTargetSetError("degree and margin filters do not intersect; raise filter_ratio")
    provenance = tuple(
        {
            "id": int(v),
            "margin": float(margins[v]),
            "degree": int(degrees[v]),
            "passed_degree": bool(v in by_degree),
            "passed_margin": bool(v in by_margin),
        }
        for v in survivors
    )
    return TargetSet(nodes=nodes, provenance=provenance, config=cfg)


def targets_to_dict(ts: TargetSet) -> dict:
    return {
        "targets": ts.nodes.tolist(),
        "provenance": list(ts.provenance),
        "config": {"threshold_p": ts.config.threshold_p, "filter_ratio": ts.config.filter_ratio},
    }
