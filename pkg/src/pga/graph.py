"""Immutable undirected graph core: adjacency, normalization, traversal, node statistics.

Adjacency is kept as sorted neighbor lists plus a hash set of canonical edges;
dense N x N matrices are never materialized here so Pubmed-sized graphs stay
cheap. All mutation happens by producing new values.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Literal, Sequence

import numpy as np
import scipy.sparse as sp

FlipOp = Literal["add", "del"]

__all__ = [
    "Adjacency",
    "GraphBundle",
    "NormalizedAdjacency",
    "NodeStats",
    "Perturbation",
    "canonical_edge",
    "apply_flip",
    "normalize_adjacency",
    "k_hop_neighbors",
    "compute_node_stats",
]


def canonical_edge(u: int, v: int) -> tuple[int, int]:
    """Undirected edges are stored and emitted as (min, max)."""
    return (u, v) if u < v else (v, u)


class Adjacency:
    """Symmetric binary zero-diagonal adjacency with O(1) edge membership."""

    def __init__(self, n_nodes: int, nbrs: tuple[np.ndarray, ...], edge_set: frozenset):
        self.n_nodes = n_nodes
        self._nbrs = nbrs
        self._edge_set = edge_set

    @classmethod
    def from_edges(cls, n_nodes: int, edges: Iterable[tuple[int, int]]) -> "Adjacency":
        """Build from an edge list; symmetrizes, dedups, rejects self-loops."""
        if n_nodes <= 0:
            raise ValueError("graph must have at least one node")
        canon = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop ({u},{v}) is not allowed")
            if not (0 <= u < n_nodes and 0 <= v < n_nodes):
                raise ValueError(f"edge ({u},{v}) references a node outside [0,{n_nodes})")
            canon.add(canonical_edge(u, v))
        buckets: list[list[int]] = [[] for _ in range(n_nodes)]
        for u, v in canon:
            buckets[u].append(v)
            buckets[v].append(u)
        nbrs = tuple(np.array(sorted(b), dtype=np.int64) for b in buckets)
        return cls(n_nodes, nbrs, frozenset(canon))

    @property
    def num_edges(self) -> int:
        return len(self._edge_set)

    @cached_property
    def degrees(self) -> np.ndarray:
        d = np.array([len(b) for b in self._nbrs], dtype=np.int64)
        d.flags.writeable = False
        return d

    def neighbors(self, u: int) -> np.ndarray:
        return self._nbrs[u]

    def has_edge(self, u: int, v: int) -> bool:
        return canonical_edge(int(u), int(v)) in self._edge_set

    @property
    def edge_set(self) -> frozenset:
        return self._edge_set

    def edges(self) -> list[tuple[int, int]]:
        """Canonical edge list in ascending (u, v) order."""
        return sorted(self._edge_set)

    @cached_property
    def csr(self) -> sp.csr_matrix:
        """Binary adjacency as scipy CSR (cached; the instance is immutable)."""
        indptr = np.zeros(self.n_nodes + 1, dtype=np.int64)
        np.cumsum([len(b) for b in self._nbrs], out=indptr[1:])
        indices = (
            np.concatenate(self._nbrs)
            if self.num_edges
            else np.empty(0, dtype=np.int64)
        )
        data = np.ones(len(indices), dtype=np.float64)
        return sp.csr_matrix((data, indices, indptr), shape=(self.n_nodes, self.n_nodes))

    def apply_flip(self, edge: tuple[int, int], op: FlipOp) -> "Adjacency":
        """Return a new adjacency with both symmetric entries of `edge` toggled."""
        u, v = int(edge[0]), int(edge[1])
        if u == v:
            raise ValueError(f"self-loop ({u},{v}) cannot be flipped")
        if not (0 <= u < self.n_nodes and 0 <= v < self.n_nodes):
            raise ValueError(f"edge ({u},{v}) out of range")
        key = canonical_edge(u, v)
        present = key in self._edge_set
        if op == "add" and present:
            raise ValueError(f"cannot add existing edge {key}")
        if op == "del" and not present:
            raise ValueError(f"cannot delete non-edge {key}")
        if op not in ("add", "del"):
            raise ValueError(f"unknown flip op {op!r}")

        nbrs = list(self._nbrs)
        for a, b in ((u, v), (v, u)):
            arr = nbrs[a]
            if op == "add":
                pos = int(np.searchsorted(arr, b))
                nbrs[a] = np.insert(arr, pos, b)
            else:
                nbrs[a] = arr[arr != b]
        edge_set = self._edge_set | {key} if op == "add" else self._edge_set - {key}
        return Adjacency(self.n_nodes, tuple(nbrs), edge_set)


def apply_flip(adj: Adjacency, edge: tuple[int, int], op: FlipOp) -> Adjacency:
    return adj.apply_flip(edge, op)


class GraphBundle:
    """Graph, features, labels, and splits; validated and immutable after construction."""

    def __init__(
        self,
        adj: Adjacency,
        features: np.ndarray,
        labels: np.ndarray,
        train_idx: Sequence[int],
        val_idx: Sequence[int],
        test_idx: Sequence[int],
        n_classes: int | None = None,
    ):
        features = np.ascontiguousarray(features, dtype=np.float64)
        labels = np.ascontiguousarray(labels, dtype=np.int64)
        n = adj.n_nodes
        if features.ndim != 2 or features.shape[0] != n:
            raise ValueError(f"features must be ({n}, D), got {features.shape}")
        if labels.shape != (n,):
            raise ValueError(f"labels must have length {n}, got {labels.shape}")
        if n_classes is None:
            n_classes = int(labels.max()) + 1
        n_classes = int(n_classes)
        if n_classes < 2:
            raise ValueError("at least two classes are required")
        if labels.min() < 0 or labels.max() >= n_classes:
            raise ValueError(f"label out of range [0, {n_classes})")

        splits = []
        for name, idx in (("train", train_idx), ("val", val_idx), ("test", test_idx)):
            arr = np.array(sorted(int(i) for i in idx), dtype=np.int64)
            if len(arr) and (arr[0] < 0 or arr[-1] >= n):
                raise ValueError(f"{name} split references a node outside [0,{n})")
            if len(np.unique(arr)) != len(arr):
                raise ValueError(f"{name} split contains duplicates")
            splits.append(arr)
        merged = np.concatenate(splits)
        if len(merged) and len(np.unique(merged)) != len(merged):
            raise ValueError("splits overlap")

        for arr in (features, labels, *splits):
            arr.flags.writeable = False
        self.adj = adj
        self.features = features
        self.labels = labels
        self.n_classes = n_classes
        self.train_idx, self.val_idx, self.test_idx = splits

    @property
    def n_nodes(self) -> int:
        return self.adj.n_nodes

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @cached_property
    def unlabeled_idx(self) -> np.ndarray:
        """V_U: validation plus test nodes, ascending."""
        out = np.sort(np.concatenate([self.val_idx, self.test_idx]))
        out.flags.writeable = False
        return out

    def with_adjacency(self, adj: Adjacency) -> "GraphBundle":
        """Same features/labels/splits on a different edge structure."""
        return GraphBundle(
            adj, self.features, self.labels,
            self.train_idx, self.val_idx, self.test_idx, self.n_classes,
        )


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Sparse symmetric renormalization D^{-1/2} (A + I) D^{-1/2}."""

    matrix: sp.csr_matrix          # the normalized operator
    tilde: sp.csr_matrix           # A + I pattern with unit weights
    deg_tilde: np.ndarray          # row sums of A + I
    inv_sqrt_deg: np.ndarray       # deg_tilde ** -0.5

    def entries(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        coo = self.matrix.tocoo()
        return coo.row, coo.col, coo.data


def normalize_adjacency(adj: Adjacency) -> NormalizedAdjacency:
    """Self-loop augmented symmetric normalization; an isolated node maps to 1.0."""
    n = adj.n_nodes
    tilde = (adj.csr + sp.identity(n, format="csr", dtype=np.float64)).tocsr()
    deg = np.asarray(tilde.sum(axis=1)).ravel()
    w = 1.0 / np.sqrt(deg)
    coo = tilde.tocoo()
    data = w[coo.row] * w[coo.col]
    matrix = sp.csr_matrix((data, (coo.row, coo.col)), shape=(n, n))
    deg = deg.copy()
    deg.flags.writeable = False
    w = w.copy()
    w.flags.writeable = False
    return NormalizedAdjacency(matrix=matrix, tilde=tilde, deg_tilde=deg, inv_sqrt_deg=w)


def k_hop_neighbors(adj: Adjacency, sources: Iterable[int], k: int) -> np.ndarray:
    """Nodes within shortest-path distance <= k of any source, sources excluded.

    Plain breadth-first expansion; returns a sorted array.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    src = {int(s) for s in sources}
    for s in src:
        if not (0 <= s < adj.n_nodes):
            raise ValueError(f"source {s} out of range")
    seen = set(src)
    frontier = src
    reached: set[int] = set()
    for _ in range(k):
        nxt = set()
        for u in frontier:
            for v in adj.neighbors(u):
                v = int(v)
                if v not in seen:
                    seen.add(v)
                    nxt.add(v)
        reached |= nxt
        if not nxt:
            break
        frontier = nxt
    return np.array(sorted(reached), dtype=np.int64)


@dataclass
class NodeStats:
    """Per-node structural statistics; margin is filled later from model output."""

    degree: np.ndarray
    pagerank: np.ndarray
    clustering: np.ndarray
    eigencentrality: np.ndarray
    margin: np.ndarray | None = None
    pagerank_converged: bool = True
    eigencentrality_converged: bool = True


def compute_node_stats(
    bundle: GraphBundle,
    damping: float = 0.85,
    tol: float = 1e-8,
    max_iter: int = 1000,
) -> NodeStats:
    """Degree, PageRank, local clustering coefficient, and eigenvector centrality.

    PageRank runs power iteration with uniform teleport and dangling-node mass
    redistribution until the L1 change drops below tol. Eigenvector centrality
    is power iteration on A with L2 normalization; an empty graph falls back to
    the zero vector. Non-convergence is reported through the flags, with the
    last iterate returned.
    """
    if not (0.0 < damping < 1.0):
        raise ValueError("damping must lie in (0, 1)")
    if tol <= 0:
        raise ValueError("tol must be positive")
    adj = bundle.adj
    n = adj.n_nodes
    A = adj.csr
    deg = adj.degrees.astype(np.float64)

    # PageRank
    p = np.full(n, 1.0 / n)
    safe_deg = np.where(deg > 0, deg, 1.0)
    dangling = deg == 0
    pr_converged = False
    for _ in range(max_iter):
        share = p / safe_deg
        share[dangling] = 0.0
        nxt = (1.0 - damping) / n + damping * (A @ share + p[dangling].sum() / n)
        if np.abs(nxt - p).sum() < tol:
            p = nxt
            pr_converged = True
            break
        p = nxt

    # Local clustering: 2 * triangles / (d * (d - 1)), zero below degree 2.
    clustering = np.zeros(n)
    for u in range(n):
        d = int(deg[u])
        if d < 2:
            continue
        nb = adj.neighbors(u)
        links = sum(len(np.intersect1d(nb, adj.neighbors(int(v)), assume_unique=True)) for v in nb)
        clustering[u] = links / (d * (d - 1))  # each triangle edge counted twice

    # Eigenvector centrality
    ec_converged = True
    if adj.num_edges == 0:
        x = np.zeros(n)
    else:
        x = np.full(n, 1.0 / np.sqrt(n))
        ec_converged = False
        for _ in range(max_iter):
            y = A @ x
            norm = np.linalg.norm(y)
            if norm == 0.0:
                x = np.zeros(n)
                ec_converged = True
                break
            y /= norm
            if np.linalg.norm(y - x) < tol:
                x = y
                ec_converged = True
                break
            x = y

    return NodeStats(
        degree=adj.degrees.copy(),
        pagerank=p,
        clustering=clustering,
        eigencentrality=x,
        pagerank_converged=pr_converged,
        eigencentrality_converged=ec_converged,
    )


@dataclass(frozen=True)
class Perturbation:
    """Ordered list of applied edge flips under a budget."""

    flips: tuple[tuple[FlipOp, int, int], ...]
    base_edge_count: int
    budget: int

    def __post_init__(self):
        if len(self.flips) > self.budget:
            raise ValueError("more flips than budget")
        seen = set()
        for op, u, v in self.flips:
            if op not in ("add", "del"):
                raise ValueError(f"unknown op {op!r}")
            if u == v:
                raise ValueError("self-loop flip")
            key = canonical_edge(u, v)
            if key in seen:
                raise ValueError(f"edge {key} flipped twice")
            seen.add(key)

    @property
    def num_adds(self) -> int:
        return sum(1 for op, _, _ in self.flips if op == "add")

    @property
    def num_dels(self) -> int:
        return len(self.flips) - self.num_adds

    def apply_to(self, adj: Adjacency) -> Adjacency:
        """Replay the flips in order, validating each against the current graph."""
        for op, u, v in self.flips:
            adj = adj.apply_flip((u, v), op)
        return adj
