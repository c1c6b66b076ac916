"""Two-layer graph convolution models with hand-derived gradients.

The linear variant computes softmax(S (S X W0) W1) with S the renormalized
adjacency; the relu variant inserts an elementwise ReLU after the first
convolution. Everything (forward, cross-entropy training with Adam and
decoupled weight decay, and the attack loss's gradients with respect to
adjacency entries) is plain numpy/scipy; no autodiff framework.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Literal

import numpy as np

from .errors import TrainingDivergedError
from .graph import Adjacency, GraphBundle, NormalizedAdjacency, canonical_edge, normalize_adjacency
from .io import atomic_write_text

Arch = Literal["linear", "relu"]

__all__ = [
    "ModelParams",
    "TrainConfig",
    "Prediction",
    "PseudoLabelState",
    "forward",
    "train",
    "train_with_history",
    "accuracy",
    "attack_loss",
    "edge_gradients",
    "cross_entropy_grads",
    "save_params",
    "load_params",
]


@dataclass(frozen=True)
class ModelParams:
    """Weights of a two-layer classifier (D x H and H x C)."""

    w0: np.ndarray
    w1: np.ndarray
    arch: Arch
    hidden: int
    seed: int = 0

    def __post_init__(self):
        if self.arch not in ("linear", "relu"):
            raise ValueError(f"unknown arch {self.arch!r}")
        if not (np.isfinite(self.w0).all() and np.isfinite(self.w1).all()):
            raise ValueError("non-finite parameter entries")
        if self.w0.shape[1] != self.hidden or self.w1.shape[0] != self.hidden:
            raise ValueError("hidden dimension inconsistent with weight shapes")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    weight_decay: float = 5e-4
    epochs: int = 200
    patience: int = 30
    hidden: int = 16
    dropout: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError("dropout must lie in [0, 1)")
        if self.patience > self.epochs:
            raise ValueError("patience cannot exceed epochs")
        if self.epochs < 1 or self.hidden < 1:
            raise ValueError("epochs and hidden must be >= 1")


@dataclass(frozen=True)
class Prediction:
    probs: np.ndarray  # N x C, rows sum to 1
    pred: np.ndarray   # argmax class, lowest index wins ties

    @classmethod
    def from_probs(cls, probs: np.ndarray) -> "Prediction":
        return cls(probs=probs, pred=np.argmax(probs, axis=1))


@dataclass(frozen=True)
class PseudoLabelState:
    """Pseudo-labels fixed at attack start plus the currently-still-correct targets."""

    pseudo: np.ndarray           # per-node class from the initial prediction
    still_correct: frozenset    # V+ = targets whose current argmax equals the pseudo-label

    @classmethod
    def initial(cls, pred: Prediction, targets: Iterable[int]) -> "PseudoLabelState":
        pseudo = pred.pred.copy()
        pseudo.flags.writeable = False
        vplus = frozenset(int(v) for v in targets if pred.pred[v] == pseudo[v])
        return cls(pseudo=pseudo, still_correct=vplus)

    def updated(self, pred: Prediction, targets: Iterable[int]) -> "PseudoLabelState":
        vplus = frozenset(int(v) for v in targets if pred.pred[v] == self.pseudo[v])
        return replace(self, still_correct=vplus)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    # inverted dropout: kept entries scaled by 1/(1-rate)
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _check_shapes(params: ModelParams, norm_adj: NormalizedAdjacency, features: np.ndarray):
    n = norm_adj.matrix.shape[0]
    if features.shape[0] != n:
        raise ValueError(f"features rows {features.shape[0]} != graph size {n}")
    if features.shape[1] != params.w0.shape[0]:
        raise ValueError(f"feature dim {features.shape[1]} != W0 rows {params.w0.shape[0]}")


def _forward_caches(
    params: ModelParams,
    norm_adj: NormalizedAdjacency,
    features: np.ndarray,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
) -> dict:
    """Run the forward pass keeping intermediates for backprop.

    With dropout > 0 (training mode) masks are applied to the input features
    and to the hidden activation; evaluation mode is mask-free and pure.
    """
    _check_shapes(params, norm_adj, features)
    S = norm_adj.matrix
    masked = dropout > 0.0
    if masked and rng is None:
        raise ValueError("training-mode dropout needs a generator")

    caches: dict = {}
    x0 = features
    if masked:
        x0 = features * _dropout_mask(rng, features.shape, dropout)
    with np.errstate(over="ignore"):  # overflow surfaces as the divergence error below
        p = x0 @ params.w0
        q = S @ p
        qr = np.maximum(q, 0.0) if params.arch == "relu" else q
        h = qr
        if masked:
            caches["mask_h"] = _dropout_mask(rng, qr.shape, dropout)
            h = qr * caches["mask_h"]
        r = S @ h
        logits = r @ params.w1
    if not np.isfinite(logits).all():
        raise TrainingDivergedError("non-finite logits in forward pass")
    caches.update({"x0": x0, "p": p, "q": q, "qr": qr, "h": h, "r": r, "logits": logits})
    return caches


def forward(
    params: ModelParams,
    norm_adj: NormalizedAdjacency,
    features: np.ndarray,
    train_mode: bool = False,
    dropout: float = 0.0,
    seed: int = 0,
) -> Prediction:
    """Row-stochastic class probabilities for every node.

    Eval mode (the default) is deterministic; train mode applies seeded
    inverted dropout to the features and the hidden activation.
    """
    rng = np.random.default_rng(seed) if train_mode and dropout > 0 else None
    caches = _forward_caches(params, norm_adj, features, dropout if train_mode else 0.0, rng)
    return Prediction.from_probs(_softmax(caches["logits"]))


def accuracy(pred: Prediction, labels: np.ndarray, idx: np.ndarray) -> float:
    idx = np.asarray(idx)
    if idx.size == 0:
        raise ValueError("accuracy over an empty index set is undefined")
    return float(np.mean(pred.pred[idx] == np.asarray(labels)[idx]))


def _ce_backward(params: ModelParams, S, caches: dict, g_logits: np.ndarray):
    """Push a logits-gradient back to (gW0, gW1) through both convolutions."""
    g_w1 = caches["r"].T @ g_logits
    u = g_logits @ params.w1.T
    dh = S @ u
    dqr = dh  # eval mode: h == qr; train mode rescales below
    if "mask_h" in caches:
        dqr = dh * caches["mask_h"]
    dq = dqr * (caches["q"] > 0.0) if params.arch == "relu" else dqr
    dp = S @ dq
    g_w0 = caches["x0"].T @ dp
    return g_w0, g_w1


def cross_entropy_grads(
    params: ModelParams,
    norm_adj: NormalizedAdjacency,
    features: np.ndarray,
    labels: np.ndarray,
    idx: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Eval-mode cross-entropy over idx and its analytic weight gradients."""
    caches = _forward_caches(params, norm_adj, features)
    logp = _log_softmax(caches["logits"])
    idx = np.asarray(idx)
    loss = float(-logp[idx, labels[idx]].mean())
    z = np.exp(logp)
    g_logits = np.zeros_like(z)
    g_logits[idx] = z[idx]
    g_logits[idx, labels[idx]] -= 1.0
    g_logits[idx] /= len(idx)
    g_w0, g_w1 = _ce_backward(params, norm_adj.matrix, caches, g_logits)
    return loss, g_w0, g_w1


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def train_with_history(
    bundle: GraphBundle, arch: Arch, cfg: TrainConfig
) -> tuple[ModelParams, dict]:
    """Train with Adam + decoupled weight decay and early stopping.

    Early stopping tracks validation accuracy (ties broken by lower validation
    loss) and restores the best parameters after `patience` epochs without
    improvement. Fully deterministic for a fixed config seed.
    """
    if len(bundle.train_idx) == 0 or len(bundle.val_idx) == 0:
        raise ValueError("training requires non-empty train and val splits")
    rng = np.random.default_rng(cfg.seed)
    d, c = bundle.n_features, bundle.n_classes
    w0 = _glorot(rng, d, cfg.hidden)
    w1 = _glorot(rng, cfg.hidden, c)
    na = normalize_adjacency(bundle.adj)
    S, X, y = na.matrix, bundle.features, bundle.labels

    beta1, beta2, eps = 0.9, 0.999, 1e-8
    m0 = np.zeros_like(w0); v0 = np.zeros_like(w0)
    m1 = np.zeros_like(w1); v1 = np.zeros_like(w1)

    best = (-1.0, np.inf)  # (val_acc, val_loss); improvement is lexicographic
    best_w = (w0.copy(), w1.copy())
    bad_epochs = 0
    history = {"train_loss": [], "val_acc": [], "val_loss": [], "epochs_run": 0}

    for epoch in range(cfg.epochs):
        params = ModelParams(w0=w0, w1=w1, arch=arch, hidden=cfg.hidden, seed=cfg.seed)
        caches = _forward_caches(params, na, X, cfg.dropout, rng)
        logp = _log_softmax(caches["logits"])
        tr = bundle.train_idx
        loss = float(-logp[tr, y[tr]].mean())
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"training loss diverged at epoch {epoch}")
        z = np.exp(logp)
        g_logits = np.zeros_like(z)
        g_logits[tr] = z[tr]
        g_logits[tr, y[tr]] -= 1.0
        g_logits[tr] /= len(tr)
        g_w0, g_w1 = _ce_backward(params, S, caches, g_logits)

        t = epoch + 1
        for w, g, ms, vs in ((w0, g_w0, m0, v0), (w1, g_w1, m1, v1)):
            ms *= beta1; ms += (1 - beta1) * g
            vs *= beta2; vs += (1 - beta2) * g * g
            mhat = ms / (1 - beta1 ** t)
            vhat = vs / (1 - beta2 ** t)
            w -= cfg.lr * (mhat / (np.sqrt(vhat) + eps) + cfg.weight_decay * w)

        eval_params = ModelParams(w0=w0, w1=w1, arch=arch, hidden=cfg.hidden, seed=cfg.seed)
        val_caches = _forward_caches(eval_params, na, X, 0.0, None)
        val_logp = _log_softmax(val_caches["logits"])
        va = bundle.val_idx
        val_loss = float(-val_logp[va, y[va]].mean())
        val_acc = float(np.mean(np.argmax(val_logp[va], axis=1) == y[va]))

        history["train_loss"].append(loss)
        history["val_acc"].append(val_acc)
        history["val_loss"].append(val_loss)

        if (val_acc, -val_loss) > (best[0], -best[1]):
            best = (val_acc, val_loss)
            best_w = (w0.copy(), w1.copy())
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience:
                break
    history["epochs_run"] = len(history["train_loss"])

    for w in best_w:
        w.flags.writeable = False
    return ModelParams(w0=best_w[0], w1=best_w[1], arch=arch, hidden=cfg.hidden, seed=cfg.seed), history


def train(bundle: GraphBundle, arch: Arch, cfg: TrainConfig) -> ModelParams:
    return train_with_history(bundle, arch, cfg)[0]


def _attack_loss_grad(
    probs: np.ndarray, state: PseudoLabelState, targets: np.ndarray
) -> tuple[float, np.ndarray]:
    """Attack loss and dL/dZ.

    L = sum_{v in targets} tanh(r_v - p_v) + (1/|V+|) sum_{v in V+} -log p_v
    with p_v the probability of v's pseudo-label and r_v the best other class.
    Larger L = stronger attack; the attacker ascends it.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if targets.size == 0:
        raise ValueError("attack loss needs a non-empty target set")
    pseudo = state.pseudo[targets]
    p = probs[targets, pseudo]
    masked = probs[targets].copy()
    masked[np.arange(len(targets)), pseudo] = -np.inf
    runner = np.argmax(masked, axis=1)
    r = masked[np.arange(len(targets)), runner]
    tanh_term = np.tanh(r - p)
    loss = float(tanh_term.sum())

    g = np.zeros_like(probs)
    sech2 = 1.0 - tanh_term ** 2
    np.add.at(g, (targets, runner), sech2)
    np.add.at(g, (targets, pseudo), -sech2)

    vplus = np.array(sorted(state.still_correct), dtype=np.int64)
    if vplus.size:
        pv = probs[vplus, state.pseudo[vplus]]
        loss += float(-np.log(pv).mean())
        np.add.at(g, (vplus, state.pseudo[vplus]), -1.0 / (vplus.size * pv))
    return loss, g


def attack_loss(pred: Prediction, state: PseudoLabelState, targets: np.ndarray) -> float:
    return _attack_loss_grad(pred.probs, state, targets)[0]


def _edge_score_context(
    params: ModelParams, norm_adj: NormalizedAdjacency, caches: dict, g_probs: np.ndarray
) -> dict:
    """Precompute the low-rank factors of dL/dS and the per-node degree correction.

    dL/dS = U1 B^T + V P^T with U1 = G W1^T, V the gradient reaching the first
    convolution output, B the (post-activation) hidden matrix and P = X W0.
    Differentiating S = D^{-1/2} (A+I) D^{-1/2} w.r.t. entry A_uv adds, beyond
    the direct term at (u,v), a degree correction supported on row/column u:

        dL/dA_uv = (dL/dS)_uv w_u w_v - 0.5 * corr_u
        corr_u   = w_u^3 * sum_{j in N(u)+u} w_j [(dL/dS)_uj + (dL/dS)_ju]

    so corr is computed once per node and each candidate costs O(H).
    """
    z = _softmax(caches["logits"])
    g_logits = z * (g_probs - (g_probs * z).sum(axis=1, keepdims=True))
    S = norm_adj.matrix
    u1 = g_logits @ params.w1.T
    su1 = S @ u1
    v = su1 * (caches["q"] > 0.0) if params.arch == "relu" else su1
    b = caches["qr"]
    p = caches["p"]
    w = norm_adj.inv_sqrt_deg
    at = norm_adj.tilde
    wb = w[:, None]
    agg_b = at @ (b * wb)
    agg_p = at @ (p * wb)
    agg_u1 = at @ (u1 * wb)
    agg_v = at @ (v * wb)
    corr = (w ** 3) * (
        np.einsum("ij,ij->i", u1, agg_b)
        + np.einsum("ij,ij->i", v, agg_p)
        + np.einsum("ij,ij->i", b, agg_u1)
        + np.einsum("ij,ij->i", p, agg_v)
    )
    return {"u1": u1, "v": v, "b": b, "p": p, "w": w, "corr": corr}


def _edge_scores(ctx: dict, adj: Adjacency, pairs: list[tuple[int, int]]) -> np.ndarray:
    """Flip scores s_e = (1 - 2 A_uv)(dL/dA_uv + dL/dA_vu) for canonical pairs."""
    if not pairs:
        return np.empty(0)
    uu = np.fromiter((e[0] for e in pairs), dtype=np.int64, count=len(pairs))
    vv = np.fromiter((e[1] for e in pairs), dtype=np.int64, count=len(pairs))
    u1, v_, b, p, w, corr = (ctx[k] for k in ("u1", "v", "b", "p", "w", "corr"))
    direct = (
        np.einsum("ij,ij->i", u1[uu], b[vv])
        + np.einsum("ij,ij->i", v_[uu], p[vv])
        + np.einsum("ij,ij->i", u1[vv], b[uu])
        + np.einsum("ij,ij->i", v_[vv], p[uu])
    ) * (w[uu] * w[vv])
    grad_sum = direct - 0.5 * (corr[uu] + corr[vv])
    existing = np.fromiter((adj.has_edge(a, c) for a, c in pairs), dtype=np.float64, count=len(pairs))
    return (1.0 - 2.0 * existing) * grad_sum


def edge_gradients(
    params: ModelParams,
    adj: Adjacency,
    features: np.ndarray,
    state: PseudoLabelState,
    targets: np.ndarray,
    candidates: Iterable[tuple[int, int]],
) -> dict[tuple[int, int], float]:
    """Score per candidate edge how much flipping it increases the attack loss.

    The derivative treats adjacency entries as continuous and goes through the
    full renormalization including the degree terms; evaluation is in eval
    mode on the current graph. A positive score means the flip helps the
    attacker.
    """
    pairs = []
    seen = set()
    for u, v in candidates:
        u, v = int(u), int(v)
        if u == v:
            raise ValueError(f"candidate ({u},{v}) is a self-loop")
        key = canonical_edge(u, v)
        if key not in seen:
            seen.add(key)
            pairs.append(key)
    na = normalize_adjacency(adj)
    caches = _forward_caches(params, na, features)
    _, g_probs = _attack_loss_grad(_softmax(caches["logits"]), state, targets)
    ctx = _edge_score_context(params, na, caches, g_probs)
    scores = _edge_scores(ctx, adj, pairs)
    return {e: float(s) for e, s in zip(pairs, scores)}


def _fmt(x: float) -> float:
    # round-trip exact: 17 significant digits survive float64 -> text -> float64
    return float(format(x, ".17g"))


def params_to_dict(params: ModelParams) -> dict:
    return {
        "arch": params.arch,
        "hidden": params.hidden,
        "W0": [[_fmt(x) for x in row] for row in params.w0],
        "W1": [[_fmt(x) for x in row] for row in params.w1],
        "seed": params.seed,
    }


def params_from_dict(d: dict) -> ModelParams:
    return ModelParams(
        w0=np.array(d["W0"], dtype=np.float64),
        w1=np.array(d["W1"], dtype=np.float64),
        arch=d["arch"],
        hidden=int(d["hidden"]),
        seed=int(d.get("seed", 0)),
    )


def save_params(params: ModelParams, path: Path | str) -> None:
    atomic_write_text(path, json.dumps(params_to_dict(params)) + "\n")


def load_params(path: Path | str) -> ModelParams:
    return params_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
