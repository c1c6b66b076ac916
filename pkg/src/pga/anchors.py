"""Anchor pools: second-prediction-category nodes for additions, k-hop
neighborhoods for removals, and the candidate edge sets they induce."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyPoolError
from .graph import GraphBundle, canonical_edge, k_hop_neighbors
from .nn import ModelParams, Prediction, PseudoLabelState, edge_gradients
from .selection import TargetSet

__all__ = [
    "CandidatePools",
    "second_class_set",
    "build_add_pool",
    "build_remove_pool",
    "build_pools",
    "pools_to_dict",
]


@dataclass(frozen=True)
class CandidatePools:
    add_anchors: np.ndarray
    rem_anchors: np.ndarray
    add_edges: tuple[tuple[int, int], ...]
    rem_edges: tuple[tuple[int, int], ...]
    pruned_from: int  # |E_fake| before the top-k cut


def _runner_up(probs_row: np.ndarray) -> int:
    top = int(np.argmax(probs_row))
    masked = probs_row.copy()
    masked[top] = -np.inf
    return int(np.argmax(masked))


def second_class_set(pred: Prediction, v: int) -> np.ndarray:
    """Nodes whose predicted class equals v's runner-up class."""
    second = _runner_up(pred.probs[v])
    return np.flatnonzero(pred.pred == second).astype(np.int64)


def build_add_pool(
    pred: Prediction,
    targets: TargetSet,
    bundle: GraphBundle,
    params: ModelParams,
    state: PseudoLabelState,
    top_k: int,
) -> tuple[np.ndarray, tuple[tuple[int, int], ...], int]:
    """Fake-edge pool: target x second-class non-edges, pruned to the top-k scores.

    One edge-gradient pass over the full fake pool ranks candidates
    (descending score, canonical order on ties). Returns the anchor node set,
    the kept edges, and the pre-prune pool size.
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    adj = bundle.adj
    target_ids = set(targets.nodes.tolist())
    fake = set()
    for v in targets.nodes:
        v = int(v)
        for u in second_class_set(pred, v):
            u = int(u)
            if u == v or adj.has_edge(u, v):
                continue
            fake.add(canonical_edge(u, v))
    if not fake:
        raise EmptyPoolError("no viable second-class anchor produces a fake edge")
    pool = sorted(fake)
    scores = edge_gradients(params, adj, bundle.features, state, targets.nodes, pool)
    svals = np.array([scores[e] for e in pool])
    uu = np.array([e[0] for e in pool])
    vv = np.array([e[1] for e in pool])
    order = np.lexsort((vv, uu, -svals))
    kept = tuple(pool[i] for i in order[: min(top_k, len(pool))])
    anchors = sorted({x for e in kept for x in e} - target_ids)
    return np.array(anchors, dtype=np.int64), kept, len(pool)


def build_remove_pool(
    bundle: GraphBundle, targets: TargetSet, k: int
) -> tuple[np.ndarray, tuple[tuple[int, int], ...]]:
    """Removal pool: k-hop anchors plus every existing target-incident edge."""
    adj = bundle.adj
    anchors = k_hop_neighbors(adj, targets.nodes, k)
    allowed = set(anchors.tolist()) | set(targets.nodes.tolist())
    rem = set()
    for t in targets.nodes:
        t = int(t)
        for u in adj.neighbors(t):
            u = int(u)
            if u in allowed:
                rem.add(canonical_edge(t, u))
    return anchors, tuple(sorted(rem))


def build_pools(
    pred: Prediction,
    targets: TargetSet,
    bundle: GraphBundle,
    params: ModelParams,
    state: PseudoLabelState,
    top_k: int,
    removal_hops: int,
) -> CandidatePools:
    add_anchors, add_edges, pruned_from = build_add_pool(pred, targets, bundle, params, state, top_k)
    rem_anchors, rem_edges = build_remove_pool(bundle, targets, removal_hops)
    return CandidatePools(
        add_anchors=add_anchors,
        rem_anchors=rem_anchors,
        add_edges=add_edges,
        rem_edges=rem_edges,
        pruned_from=pruned_from,
    )


def pools_to_dict(pools: CandidatePools) -> dict:
    return {
        "add_edges": [list(e) for e in pools.add_edges],
        "rem_edges": [list(e) for e in pools.rem_edges],
        "pruned_from": pools.pruned_from,
    }
