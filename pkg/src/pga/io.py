"""Reading and writing the on-disk formats: graph directories and perturbation files.

Graph Directory Format (UTF-8, LF):
    graph.json    {"n_nodes": int, "n_features": int, "n_classes": int}
    edges.tsv     one edge per line, two whitespace-separated 0-based ints
    features.csv  N lines of D comma-separated floats
    labels.txt    N lines, one integer each
    splits.json   {"train": [...], "val": [...], "test": [...]}

Perturbation file: one flip per line, "add u v" or "del u v", in application order.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .errors import GraphFormatError
from .graph import Adjacency, GraphBundle, Perturbation, canonical_edge

__all__ = [
    "load_graph",
    "save_graph",
    "load_perturbation",
    "save_perturbation",
    "atomic_write_text",
]


def atomic_write_text(path: Path | str, text: str) -> None:
    """Write via a temp file and rename so partially written outputs never appear."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _require(path: Path) -> Path:
    if not path.is_file():
        raise GraphFormatError(f"missing file: {path}")
    return path


def load_graph(dir_path: Path | str) -> GraphBundle:
    """Load and validate a graph directory; edge list is symmetrized and deduped."""
    d = Path(dir_path)
    if not d.is_dir():
        raise GraphFormatError(f"not a directory: {d}")
    meta = json.loads(_require(d / "graph.json").read_text(encoding="utf-8"))
    try:
        n_nodes = int(meta["n_nodes"])
        n_features = int(meta["n_features"])
        n_classes = int(meta["n_classes"])
    except KeyError as e:
        raise GraphFormatError(f"graph.json missing key {e}") from None

    edges = []
    for line_no, line in enumerate(_require(d / "edges.tsv").read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphFormatError(f"edges.tsv line {line_no}: expected two integers")
        u, v = int(parts[0]), int(parts[1])
        if u == v:
            raise GraphFormatError(f"edges.tsv line {line_no}: self-loop ({u},{v})")
        edges.append((u, v))
    try:
        adj = Adjacency.from_edges(n_nodes, edges)
    except ValueError as e:
        raise GraphFormatError(str(e)) from None

    feat_lines = [ln for ln in (d / "features.csv").read_text(encoding="utf-8").splitlines() if ln.strip()] \
        if (d / "features.csv").is_file() else None
    if feat_lines is None:
        raise GraphFormatError(f"missing file: {d / 'features.csv'}")
    if len(feat_lines) != n_nodes:
        raise GraphFormatError(f"features.csv has {len(feat_lines)} rows, expected {n_nodes}")
    try:
        features = np.array([[float(x) for x in ln.split(",")] for ln in feat_lines])
    except ValueError:
        raise GraphFormatError("features.csv contains a non-numeric entry") from None
    if features.shape != (n_nodes, n_features):
        raise GraphFormatError(f"features.csv shape {features.shape}, expected ({n_nodes},{n_features})")

    label_lines = [ln for ln in _require(d / "labels.txt").read_text(encoding="utf-8").splitlines() if ln.strip()]
    if len(label_lines) != n_nodes:
        raise GraphFormatError(f"labels.txt has {len(label_lines)} rows, expected {n_nodes}")
    labels = np.array([int(ln) for ln in label_lines], dtype=np.int64)
    if len(labels) and (labels.min() < 0 or labels.max() >= n_classes):
        raise GraphFormatError("label out of range")

    splits = json.loads(_require(d / "splits.json").read_text(encoding="utf-8"))
    for key in ("train", "val", "test"):
        if key not in splits:
            raise GraphFormatError(f"splits.json missing key '{key}'")
    try:
        return GraphBundle(adj, features, labels, splits["train"], splits["val"], splits["test"], n_classes)
    except ValueError as e:
        raise GraphFormatError(str(e)) from None


def save_graph(bundle: GraphBundle, dir_path: Path | str) -> None:
    """Write a bundle in the graph directory format (atomically per file)."""
    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    meta = {"n_nodes": bundle.n_nodes, "n_features": bundle.n_features, "n_classes": bundle.n_classes}
    atomic_write_text(d / "graph.json", json.dumps(meta, indent=2) + "\n")
    atomic_write_text(d / "edges.tsv", "".join(f"{u}\t{v}\n" for u, v in bundle.adj.edges()))
    atomic_write_text(
        d / "features.csv",
        "".join(",".join(repr(float(x)) for x in row) + "\n" for row in bundle.features),
    )
    atomic_write_text(d / "labels.txt", "".join(f"{y}\n" for y in bundle.labels))
    splits = {
        "train": bundle.train_idx.tolist(),
        "val": bundle.val_idx.tolist(),
        "test": bundle.test_idx.tolist(),
    }
    atomic_write_text(d / "splits.json", json.dumps(splits) + "\n")


def save_perturbation(pert: Perturbation, path: Path | str) -> None:
    lines = [f"{op} {u} {v}\n" for op, u, v in pert.flips]
    atomic_write_text(path, "".join(lines))


def load_perturbation(path: Path | str, base_edge_count: int, budget: int) -> Perturbation:
    flips = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3 or parts[0] not in ("add", "del"):
            raise GraphFormatError(f"perturbation line {line_no}: expected 'add|del u v'")
        u, v = int(parts[1]), int(parts[2])
        flips.append((parts[0], *canonical_edge(u, v)))
    return Perturbation(flips=tuple(flips), base_edge_count=base_edge_count, budget=budget)
