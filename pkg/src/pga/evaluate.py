"""Attack outcome measurement: evasion/poisoning accuracy, brute-force
vulnerability probing, hit rate, degree-distribution distance, and the
robustness-statistics export."""

from __future__ import annotations

import csv
import io as _io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .graph import (
    Adjacency,
    GraphBundle,
    NodeStats,
    Perturbation,
    normalize_adjacency,
)
from .io import atomic_write_text
from .nn import Arch, ModelParams, Prediction, TrainConfig, accuracy, forward, train
from .selection import margins_of

__all__ = [
    "AttackReport",
    "evaluate_evasion",
    "evaluate_poisoning",
    "vulnerable_oracle",
    "hit_rate",
    "degree_distance",
    "export_robustness_dataset",
    "write_robustness_csv",
]

ORACLE_MAX_NODES = 5000


@dataclass
class AttackReport:
    clean_accuracy: float | None = None
    attacked_accuracy: float | None = None
    budget: int | None = None
    flips_applied: int | None = None
    adds: int | None = None
    dels: int | None = None
    negative_score_flips: int | None = None
    hit_rate: float | None = None
    hit_rate_vs_budget: float | None = None
    vulnerable_deletions: int | None = None
    degree_distance: float | None = None
    runtime_ms: float | None = None
    seed: int | None = None
    config: dict | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def evaluate_evasion(
    victim: ModelParams, bundle: GraphBundle, perturbation: Perturbation
) -> AttackReport:
    """Test accuracy of the fixed victim before and after applying the flips."""
    pred_clean = forward(victim, normalize_adjacency(bundle.adj), bundle.features)
    adj_att = perturbation.apply_to(bundle.adj)
    pred_att = forward(victim, normalize_adjacency(adj_att), bundle.features)
    return AttackReport(
        clean_accuracy=accuracy(pred_clean, bundle.labels, bundle.test_idx),
        attacked_accuracy=accuracy(pred_att, bundle.labels, bundle.test_idx),
        budget=perturbation.budget,
        flips_applied=len(perturbation.flips),
        adds=perturbation.num_adds,
        dels=perturbation.num_dels,
    )


def evaluate_poisoning(
    bundle: GraphBundle, perturbation: Perturbation, arch: Arch, cfg: TrainConfig
) -> AttackReport:
    """Retrain on the perturbed graph (same splits and hyperparameters) and compare."""
    clean_model = train(bundle, arch, cfg)
    pred_clean = forward(clean_model, normalize_adjacency(bundle.adj), bundle.features)

    poisoned_bundle = bundle.with_adjacency(perturbation.apply_to(bundle.adj))
    poisoned_model = train(poisoned_bundle, arch, cfg)
    pred_poisoned = forward(
        poisoned_model, normalize_adjacency(poisoned_bundle.adj), poisoned_bundle.features
    )
    return AttackReport(
        clean_accuracy=accuracy(pred_clean, bundle.labels, bundle.test_idx),
        attacked_accuracy=accuracy(pred_poisoned, bundle.labels, bundle.test_idx),
        budget=perturbation.budget,
        flips_applied=len(perturbation.flips),
        adds=perturbation.num_adds,
        dels=perturbation.num_dels,
    )


class _FlipProbe:
    """Prediction of one node after one incident flip, without a full forward.

    Flipping {v,u} only rescales entries touching u or v, so the first-layer
    rows needed for v's output can be patched from cached products in
    O(deg(v) * hidden) per candidate. Exact, not an approximation.
    """

    def __init__(self, params: ModelParams, adj: Adjacency, features: np.ndarray):
        self.params = params
        self.adj = adj
        na = normalize_adjacency(adj)
        self.w = na.inv_sqrt_deg
        self.deg_tilde = na.deg_tilde
        self.p = features @ params.w0           # X W0
        self.sp = na.matrix @ self.p            # S X W0
        act = np.maximum(self.sp, 0.0) if params.arch == "relu" else self.sp
        logits = (na.matrix @ act) @ params.w1
        self.base_pred = np.argmax(logits, axis=1)

    def _act(self, row: np.ndarray) -> np.ndarray:
        return np.maximum(row, 0.0) if self.params.arch == "relu" else row

    def probs_after_flip(self, v: int, u: int, op: str) -> np.ndarray:
        """Probability row of node v after toggling edge {v,u}."""
        adj, w, p, sp = self.adj, self.w, self.p, self.sp
        sign = 1.0 if op == "add" else -1.0
        had_edge = adj.has_edge(u, v)
        if (op == "add") == had_edge:
            raise ValueError(f"flip {op} on {'' if had_edge else 'non-'}edge ({u},{v})")
        wv2 = 1.0 / np.sqrt(self.deg_tilde[v] + sign)
        wu2 = 1.0 / np.sqrt(self.deg_tilde[u] + sign)
        dv_term = (wv2 - w[v]) * p[v]
        du_term = (wu2 - w[u]) * p[u]

        # hidden rows for v's new closed neighborhood
        nbrs = [j for j in adj.neighbors(v) if j != u]
        acc = np.zeros(self.params.w1.shape[0])
        for j in nbrs:
            row = sp[j] + w[j] * dv_term
            if adj.has_edge(j, u):
                row = row + w[j] * du_term
            acc += w[j] * self._act(row)
        # row v: rebuild from the unscaled neighbor sum
        base_v = sp[v] / w[v]
        base_v = base_v + (wu2 if op == "add" else 0.0) * p[u] - (w[u] if op == "del" else 0.0) * p[u]
        base_v = base_v + (wv2 - w[v]) * p[v]
        acc += wv2 * self._act(wv2 * base_v)
        if op == "add":
            base_u = sp[u] / w[u] + wv2 * p[v] + (wu2 - w[u]) * p[u]
            acc += wu2 * self._act(wu2 * base_u)
        logits = (wv2 * acc) @ self.params.w1
        z = logits - logits.max()
        e = np.exp(z)
        return e / e.sum()

    def pred_after_flip(self, v: int, u: int, op: str) -> int:
        return int(np.argmax(self.probs_after_flip(v, u, op)))


def _flip_op(adj: Adjacency, v: int, u: int) -> str:
    return "del" if adj.has_edge(v, u) else "add"


def vulnerable_oracle(
    surrogate: ModelParams,
    bundle: GraphBundle,
    budget_b: int,
    nodes: Iterable[int] | None = None,
) -> np.ndarray:
    """Nodes whose surrogate prediction flips within budget_b incident edge flips.

    Budget 1 tries every single flip incident to the node; budget 2 applies
    the greedy best first flip (largest margin reduction, lowest partner id on
    ties) and then tries every second flip. Defaults to the correctly
    classified test nodes; pass `nodes` to probe an explicit set.
    """
    if budget_b not in (1, 2):
        raise ValueError("budget_b must be 1 or 2")
    if bundle.n_nodes > ORACLE_MAX_NODES:
        raise ValueError(f"oracle is guarded to N <= {ORACLE_MAX_NODES}")
    probe = _FlipProbe(surrogate, bundle.adj, bundle.features)
    if nodes is None:
        nodes = [int(v) for v in bundle.test_idx if probe.base_pred[v] == bundle.labels[v]]
    else:
        nodes = [int(v) for v in nodes]

    n = bundle.n_nodes
    vulnerable = []
    for v in nodes:
        base_class = int(probe.base_pred[v])
        flipped = False
        best_gap, best_u = -np.inf, -1
        for u in range(n):
            if u == v:
                continue
            op = _flip_op(bundle.adj, v, u)
            probs = probe.probs_after_flip(v, u, op)
            if int(np.argmax(probs)) != base_class:
                flipped = True
                break
            if budget_b == 2:
                pv = probs[base_class]
                masked = probs.copy()
                masked[base_class] = -np.inf
                gap = float(masked.max() - pv)
                if gap > best_gap:
                    best_gap, best_u = gap, u
        if not flipped and budget_b == 2 and best_u >= 0:
            first_op = _flip_op(bundle.adj, v, best_u)
            adj2 = bundle.adj.apply_flip((v, best_u), first_op)
            probe2 = _FlipProbe(surrogate, adj2, bundle.features)
            for u in range(n):
                if u == v or u == best_u:
                    continue
                if probe2.pred_after_flip(v, u, _flip_op(adj2, v, u)) != base_class:
                    flipped = True
                    break
        if flipped:
            vulnerable.append(v)
    return np.array(sorted(vulnerable), dtype=np.int64)


def hit_rate(perturbation: Perturbation, vulnerable: Iterable[int]) -> float:
    """Fraction of applied flips that ADD an edge touching a vulnerable node.

    Deletions never count toward the numerator; the denominator is the number
    of flips actually applied (0 flips gives 0.0).
    """
    vset = set(int(v) for v in vulnerable)
    if not perturbation.flips:
        return 0.0
    hits = sum(1 for op, u, v in perturbation.flips if op == "add" and (u in vset or v in vset))
    return hits / len(perturbation.flips)


def vulnerable_deletion_count(perturbation: Perturbation, vulnerable: Iterable[int]) -> int:
    vset = set(int(v) for v in vulnerable)
    return sum(1 for op, u, v in perturbation.flips if op == "del" and (u in vset or v in vset))


def degree_distance(clean_adj: Adjacency, perturbed_adj: Adjacency) -> float:
    """Total-variation distance between the two empirical degree distributions."""
    if clean_adj.n_nodes != perturbed_adj.n_nodes:
        raise ValueError("graphs must share the node set")
    d1 = clean_adj.degrees
    d2 = perturbed_adj.degrees
    hi = int(max(d1.max(initial=0), d2.max(initial=0))) + 1
    h1 = np.bincount(d1, minlength=hi) / clean_adj.n_nodes
    h2 = np.bincount(d2, minlength=hi) / perturbed_adj.n_nodes
    return float(0.5 * np.abs(h1 - h2).sum())


def export_robustness_dataset(
    bundle: GraphBundle,
    stats: NodeStats,
    pred: Prediction,
    attacked: Iterable[int],
) -> list[tuple]:
    """One row per correctly classified test node, labeled attacked or stable."""
    attacked = set(int(v) for v in attacked)
    if not attacked <= set(bundle.test_idx.tolist()):
        raise ValueError("attacked nodes must come from the test split")
    margins = stats.margin if stats.margin is not None else margins_of(pred)
    rows = []
    for v in bundle.test_idx:
        v = int(v)
        if pred.pred[v] != bundle.labels[v]:
            continue
        rows.append(
            (
                v,
                int(stats.degree[v]),
                float(stats.pagerank[v]),
                float(stats.clustering[v]),
                float(stats.eigencentrality[v]),
                float(margins[v]),
                "attacked" if v in attacked else "stable",
            )
        )
    return rows


ROBUSTNESS_HEADER = ["node", "degree", "pagerank", "clustering", "eigencentrality", "margin", "label"]


def write_robustness_csv(rows: list[tuple], path: Path | str) -> None:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ROBUSTNESS_HEADER)
    writer.writerows(rows)
    atomic_write_text(path, buf.getvalue())
