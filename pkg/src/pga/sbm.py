"""Seeded stochastic block model bundles, a desk-scale stand-in for citation graphs."""

from __future__ import annotations

import numpy as np

from .graph import Adjacency, GraphBundle

__all__ = ["generate_sbm"]


def generate_sbm(
    blocks: int,
    block_size: int,
    p_in: float,
    p_out: float,
    feat_dim: int = 16,
    feat_noise: float = 2.2,
    split_fractions: tuple[float, float, float] = (0.15, 0.1, 0.75),
    seed: int = 0,
) -> GraphBundle:
    """Generate a block-model graph with per-class feature centroids.

    Block membership doubles as the class label. Class c's centroid is the
    basis vector e_{c mod feat_dim}; isotropic Gaussian noise with the given
    stddev is added on top, so one knob controls task difficulty. Splits are
    stratified per class. The result is a pure function of the arguments.
    """
    if blocks <= 0 or block_size <= 0:
        raise ValueError("blocks and block_size must be positive")
    if not (0.0 <= p_in <= 1.0 and 0.0 <= p_out <= 1.0):
        raise ValueError("edge probabilities must lie in [0, 1]")
    if feat_dim <= 0:
        raise ValueError("feat_dim must be positive")
    fr = np.asarray(split_fractions, dtype=np.float64)
    if fr.shape != (3,) or (fr <= 0).any() or abs(fr.sum() - 1.0) > 1e-9:
        raise ValueError("split_fractions must be three positive values summing to 1")

    rng = np.random.default_rng(seed)
    n = blocks * block_size
    labels = np.repeat(np.arange(blocks, dtype=np.int64), block_size)

    # Upper-triangle Bernoulli draws, one row at a time to keep memory linear.
    edges: list[tuple[int, int]] = []
    for u in range(n - 1):
        vs = np.arange(u + 1, n)
        probs = np.where(labels[vs] == labels[u], p_in, p_out)
        hits = vs[rng.random(n - u - 1) < probs]
        edges.extend((u, int(v)) for v in hits)
    adj = Adjacency.from_edges(n, edges)

    centroids = np.zeros((blocks, feat_dim))
    centroids[np.arange(blocks), np.arange(blocks) % feat_dim] = 1.0
    features = centroids[labels] + rng.normal(0.0, feat_noise, size=(n, feat_dim))

    train, val, test = [], [], []
    for c in range(blocks):
        members = rng.permutation(np.flatnonzero(labels == c))
        i1 = int(np.floor(fr[0] * len(members)))
        i2 = int(np.floor((fr[0] + fr[1]) * len(members)))
        train.extend(members[:i1])
        val.extend(members[i1:i2])
        test.extend(members[i2:])

    return GraphBundle(adj, features, labels, train, val, test, n_classes=max(blocks, 2))
