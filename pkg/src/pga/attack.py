"""Iterative greedy attack loop plus Random, DICE, and full-greedy baselines.

Pools are built once on the clean graph; edge gradients are recomputed on the
current perturbed graph every iteration. Each iteration flips the
min(greedy_step, remaining budget) best-scoring candidates, even at
non-positive scores (the budget is exhausted unconditionally), and the count
of such flips is reported. Ties break on canonical edge order, so runs are
deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .anchors import CandidatePools, build_pools
from .graph import GraphBundle, Perturbation, canonical_edge, normalize_adjacency
from .io import atomic_write_text
from .nn import (
    ModelParams,
    Prediction,
    PseudoLabelState,
    _attack_loss_grad,
    _edge_score_context,
    _edge_scores,
    _forward_caches,
    _softmax,
    forward,
)
from .selection import SelectionConfig, TargetSet, select_targets

__all__ = [
    "AttackConfig",
    "AttackRun",
    "IterationRecord",
    "resolve_budget",
    "run_pga",
    "run_random",
    "run_dice",
    "run_full_greedy",
    "write_run_log",
]

FULL_GREEDY_MAX_NODES = 2000


@dataclass(frozen=True)
class AttackConfig:
    budget_rate: float | None = 0.05
    budget_abs: int | None = None
    greedy_step: int = 1
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    top_k: int | None = None          # None = 10 * budget, capped at |E_fake|
    removal_hops: int = 2
    seed: int = 0
    attacker: str = "pga"

    def __post_init__(self):
        if (self.budget_rate is None) == (self.budget_abs is None):
            raise ValueError("set exactly one of budget_rate / budget_abs")
        if self.budget_abs is not None and self.budget_abs < 0:
            raise ValueError("budget_abs must be >= 0")
        if self.budget_rate is not None and self.budget_rate < 0:
            raise ValueError("budget_rate must be >= 0")
        if self.greedy_step < 1:
            raise ValueError("greedy_step must be >= 1")
        if self.removal_hops < 1:
            raise ValueError("removal_hops must be >= 1")
        if self.attacker not in ("pga", "random", "dice", "full_greedy"):
            raise ValueError(f"unknown attacker {self.attacker!r}")


def resolve_budget(cfg: AttackConfig, num_edges: int) -> int:
    if cfg.budget_abs is not None:
        return cfg.budget_abs
    return int(np.floor(cfg.budget_rate * num_edges))


@dataclass(frozen=True)
class IterationRecord:
    t: int
    flips: tuple[tuple[str, int, int], ...]
    loss_before: float
    loss_after: float
    nonpositive: int  # flips taken at score <= 0 this iteration


@dataclass(frozen=True)
class AttackRun:
    perturbation: Perturbation
    iterations: tuple[IterationRecord, ...] = ()
    targets: TargetSet | None = None
    pools: CandidatePools | None = None

    @property
    def negative_score_flips(self) -> int:
        return sum(rec.nonpositive for rec in self.iterations)


def _greedy_loop(
    bundle: GraphBundle,
    params: ModelParams,
    target_nodes: np.ndarray,
    state: PseudoLabelState,
    add_edges,
    rem_edges,
    delta: int,
    greedy_step: int,
) -> tuple[Perturbation, tuple[IterationRecord, ...]]:
    adj = bundle.adj
    base_edges = adj.num_edges
    ops = {e: "add" for e in add_edges}
    ops.update({e: "del" for e in rem_edges})
    remaining = sorted(ops)
    flips: list[tuple[str, int, int]] = []
    records: list[IterationRecord] = []
    t = 0
    while len(flips) < delta and remaining:
        na = normalize_adjacency(adj)
        caches = _forward_caches(params, na, bundle.features)
        probs = _softmax(caches["logits"])
        state = state.updated(Prediction.from_probs(probs), target_nodes)
        loss_before, g_probs = _attack_loss_grad(probs, state, target_nodes)
        ctx = _edge_score_context(params, na, caches, g_probs)
        scores = _edge_scores(ctx, adj, remaining)
        uu = np.array([e[0] for e in remaining])
        vv = np.array([e[1] for e in remaining])
        order = np.lexsort((vv, uu, -scores))
        take = order[: min(greedy_step, delta - len(flips), len(remaining))]

        nonpos = 0
        chosen = []
        for i in take:
            e = remaining[i]
            op = ops[e]
            adj = adj.apply_flip(e, op)
            flips.append((op, e[0], e[1]))
            chosen.append(e)
            if scores[i] <= 0:
                nonpos += 1
        chosen_set = set(chosen)
        remaining = [e for e in remaining if e not in chosen_set]

        after = forward(params, normalize_adjacency(adj), bundle.features)
        loss_after = _attack_loss_grad(after.probs, state, target_nodes)[0]
        records.append(
            IterationRecord(
                t=t,
                flips=tuple((ops[e], e[0], e[1]) for e in chosen),
                loss_before=loss_before,
                loss_after=loss_after,
                nonpositive=nonpos,
            )
        )
        t += 1
    pert = Perturbation(flips=tuple(flips), base_edge_count=base_edges, budget=delta)
    return pert, tuple(records)


def _check_model(bundle: GraphBundle, params: ModelParams):
    if params.w0.shape[0] != bundle.n_features or params.w1.shape[1] != bundle.n_classes:
        raise ValueError("surrogate shapes do not match the bundle")


def run_pga(bundle: GraphBundle, surrogate: ModelParams, cfg: AttackConfig) -> AttackRun:
    """Partial graph attack: select targets, build pools once, flip greedily."""
    _check_model(bundle, surrogate)
    delta = resolve_budget(cfg, bundle.adj.num_edges)
    if delta == 0:
        return AttackRun(Perturbation((), bundle.adj.num_edges, 0))
    pred0 = forward(surrogate, normalize_adjacency(bundle.adj), bundle.features)
    targets = select_targets(pred0, bundle, cfg.selection)
    state = PseudoLabelState.initial(pred0, targets.nodes)
    top_k = cfg.top_k if cfg.top_k is not None else 10 * delta
    pools = build_pools(pred0, targets, bundle, surrogate, state, top_k, cfg.removal_hops)
    pert, records = _greedy_loop(
        bundle, surrogate, targets.nodes, state,
        pools.add_edges, pools.rem_edges, delta, cfg.greedy_step,
    )
    return AttackRun(perturbation=pert, iterations=records, targets=targets, pools=pools)


def run_full_greedy(bundle: GraphBundle, surrogate: ModelParams, cfg: AttackConfig) -> AttackRun:
    """Oracle configuration: every unlabeled node is a target, every pair a candidate."""
    _check_model(bundle, surrogate)
    n = bundle.n_nodes
    if n > FULL_GREEDY_MAX_NODES:
        raise ValueError(f"full greedy is guarded to N <= {FULL_GREEDY_MAX_NODES}")
    delta = resolve_budget(cfg, bundle.adj.num_edges)
    if delta == 0:
        return AttackRun(Perturbation((), bundle.adj.num_edges, 0))
    pred0 = forward(surrogate, normalize_adjacency(bundle.adj), bundle.features)
    targets = bundle.unlabeled_idx
    state = PseudoLabelState.initial(pred0, targets)
    adds, rems = [], []
    for u in range(n - 1):
        for v in range(u + 1, n):
            (rems if bundle.adj.has_edge(u, v) else adds).append((u, v))
    pert, records = _greedy_loop(
        bundle, surrogate, targets, state, adds, rems, delta, cfg.greedy_step
    )
    return AttackRun(perturbation=pert, iterations=records)


def _sample_flip(
    rng: np.random.Generator,
    n: int,
    edge_set: set,
    flipped: set,
    want_add: bool,
    add_ok,
    del_ok,
) -> tuple[str, tuple[int, int]] | None:
    """Uniform flip of the requested kind, falling back to the other kind.

    add_ok / del_ok filter candidate pairs (used by DICE for label rules).
    Rejection sampling first; exhaustive enumeration decides emptiness.
    """

    def sample_add():
        for _ in range(200):
            u = int(rng.integers(n))
            v = int(rng.integers(n))
            if u == v:
                continue
            e = canonical_edge(u, v)
            if e in edge_set or e in flipped or not add_ok(e):
                continue
            return e
        pool = [
            (u, v)
            for u in range(n - 1)
            for v in range(u + 1, n)
            if (u, v) not in edge_set and (u, v) not in flipped and add_ok((u, v))
        ]
        if not pool:
            return None
        return pool[int(rng.integers(len(pool)))]

    def sample_del():
        pool = [e for e in sorted(edge_set) if e not in flipped and del_ok(e)]
        if not pool:
            return None
        return pool[int(rng.integers(len(pool)))]

    first, second = (sample_add, sample_del) if want_add else (sample_del, sample_add)
    e = first()
    if e is not None:
        return ("add" if want_add else "del", e)
    e = second()
    if e is not None:
        return ("del" if want_add else "add", e)
    return None


def _random_like_attack(bundle: GraphBundle, cfg: AttackConfig, add_ok, del_ok) -> AttackRun:
    delta = resolve_budget(cfg, bundle.adj.num_edges)
    rng = np.random.default_rng(cfg.seed)
    n = bundle.n_nodes
    edge_set = set(bundle.adj.edge_set)
    flipped: set = set()
    flips: list[tuple[str, int, int]] = []
    while len(flips) < delta:
        want_add = rng.random() < 0.5
        picked = _sample_flip(rng, n, edge_set, flipped, want_add, add_ok, del_ok)
        if picked is None:
            break
        op, e = picked
        if op == "add":
            edge_set.add(e)
        else:
            edge_set.remove(e)
        flipped.add(e)
        flips.append((op, e[0], e[1]))
    pert = Perturbation(tuple(flips), bundle.adj.num_edges, delta)
    return AttackRun(perturbation=pert)


def run_random(bundle: GraphBundle, cfg: AttackConfig) -> AttackRun:
    """Uniform random flips: add a non-edge or delete an edge, 50/50 per step."""
    return _random_like_attack(bundle, cfg, lambda e: True, lambda e: True)


def run_dice(bundle: GraphBundle, cfg: AttackConfig, labels_visible: np.ndarray) -> AttackRun:
    """DICE: delete same-label edges, add different-label non-edges.

    labels_visible carries true labels on the train split and pseudo-labels
    (surrogate predictions) everywhere else, honoring the grey-box constraint.
    """
    lv = np.asarray(labels_visible)
    if lv.shape != (bundle.n_nodes,):
        raise ValueError("labels_visible must have one entry per node")
    return _random_like_attack(
        bundle, cfg,
        add_ok=lambda e: lv[e[0]] != lv[e[1]],
        del_ok=lambda e: lv[e[0]] == lv[e[1]],
    )


def write_run_log(run: AttackRun, path: Path | str) -> None:
    """Run log as JSON lines: one record per iteration."""
    lines = []
    for rec in run.iterations:
        lines.append(
            json.dumps(
                {
                    "t": rec.t,
                    "flips": [list(f) for f in rec.flips],
                    "loss_before": rec.loss_before,
                    "loss_after": rec.loss_after,
                    "negative_score_flips": rec.nonpositive,
                }
            )
        )
    atomic_write_text(path, "".join(line + "\n" for line in lines))
