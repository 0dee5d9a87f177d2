"""Structural entity embeddings from a shared-weight two-layer GCN.

Both graphs run through the same weights ``W1``/``W2``::

    Z = A_hat @ relu(A_hat @ X @ W1) @ W2

and are pulled together on seed pairs by a margin ranking loss over L1
distances. Gradients are derived by hand; training is plain full-batch
gradient descent and is deterministic for a fixed seed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .kg import AlignmentSet, KnowledgeGraph, NormalizedAdjacency, build_normalized_adjacency, link_indices

Pair = tuple[int, int]


@dataclass(frozen=True)
class TrainingConfig:
    dim: int = 32
    margin: float = 3.0
    epochs: int = 100
    negatives: int = 5
    learning_rate: float = 0.1
    rng_seed: int = 0
    train_features: bool = True

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        if self.margin < 0:
            raise ValueError("margin must be nonnegative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


# Full-scale settings used on the public benchmarks.
FULL_SCALE_TRAINING = TrainingConfig(dim=300, margin=3.0, epochs=300, negatives=5)


@dataclass
class GcnParameters:
    W1: np.ndarray
    W2: np.ndarray

    def __post_init__(self):
        if self.W1.ndim != 2 or self.W1.shape[0] != self.W1.shape[1] or self.W1.shape != self.W2.shape:
            raise ValueError(f"weights must both be d x d, got {self.W1.shape} and {self.W2.shape}")

    @property
    def dim(self) -> int:
        return self.W1.shape[0]

    @classmethod
    def glorot(cls, dim: int, rng: np.random.Generator) -> "GcnParameters":
        bound = np.sqrt(6.0 / (2 * dim))
        return cls(rng.uniform(-bound, bound, (dim, dim)), rng.uniform(-bound, bound, (dim, dim)))

    def copy(self) -> "GcnParameters":
        return GcnParameters(self.W1.copy(), self.W2.copy())


def truncated_normal(rng: np.random.Generator, shape, bound: float = 2.0) -> np.ndarray:
    """Standard normal samples conditioned on ``|x| <= bound`` (rejection)."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > bound
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > bound
    return out


def init_features(n: int, dim: int, rng_seed: int) -> np.ndarray:
    """Truncated-normal features with unit-L2 rows."""
    if n < 1 or dim < 1:
        raise ValueError("n and dim must be >= 1")
    raw = truncated_normal(np.random.default_rng(rng_seed), (n, dim))
    return raw / np.linalg.norm(raw, axis=1, keepdims=True)


def _check_forward_dims(adj: NormalizedAdjacency, X: np.ndarray, params: GcnParameters):
    if X.ndim != 2 or adj.dimension != X.shape[0]:
        raise ValueError(f"adjacency is {adj.dimension} x {adj.dimension} but X has shape {X.shape}")
    if X.shape[1] != params.dim:
        raise ValueError(f"feature dim {X.shape[1]} does not match weight dim {params.dim}")


def _forward(adj, X, params):
    ax = adj @ X
    pre = ax @ params.W1
    hidden = np.maximum(pre, 0.0)
    ah = adj @ hidden
    return ax, pre, ah, ah @ params.W2


def gcn_forward(adj: NormalizedAdjacency, X: np.ndarray, params: GcnParameters) -> np.ndarray:
    _check_forward_dims(adj, X, params)
    return _forward(adj, X, params)[-1]


def _backward(adj, X, params, cache, dZ):
    ax, pre, ah, _ = cache
    dW2 = ah.T @ dZ
    dpre = (adj @ (dZ @ params.W2.T)) * (pre > 0)
    dW1 = ax.T @ dpre
    dX = adj @ (dpre @ params.W1.T)
    return dX, dW1, dW2


def sample_negative_batch(positives: Sequence[Pair], n1: int, n2: int, count: int,
                          rng: np.random.Generator) -> np.ndarray:
    """Corrupt every positive ``count`` times; returns an int array ``(P, count, 2)``.

    Each negative flips a fair coin for which side to replace and draws the
    replacement uniformly from that side's graph, redrawing on a collision
    with the positive itself.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if n1 < 2 or n2 < 2:
        raise ValueError("both graphs need at least 2 entities to corrupt a pair")
    pos = np.asarray(positives, dtype=np.int64).reshape(-1, 2)
    out = np.repeat(pos[:, None, :], count, axis=1)
    side = rng.integers(0, 2, size=out.shape[:2])
    sizes = np.where(side == 0, n1, n2)
    original = np.take_along_axis(out, side[..., None], axis=2)[..., 0]
    pending = np.ones(side.shape, dtype=bool)
    while pending.any():
        draw = rng.integers(0, sizes[pending])
        fresh = np.zeros(side.shape, dtype=np.int64)
        fresh[pending] = draw
        accept = pending & (fresh != original)
        a_src = accept & (side == 0)
        a_tgt = accept & (side == 1)
        out[..., 0][a_src] = fresh[a_src]
        out[..., 1][a_tgt] = fresh[a_tgt]
        pending &= ~accept
    return out


def sample_negatives(pair: Pair, kg1_size: int, kg2_size: int, count: int,
                     rng: np.random.Generator) -> list[Pair]:
    batch = sample_negative_batch([pair], kg1_size, kg2_size, count, rng)[0]
    return [(int(u), int(v)) for u, v in batch]


def _as_arrays(positives, negatives):
    pos = np.asarray(positives, dtype=np.int64).reshape(-1, 2)
    neg = np.asarray(negatives, dtype=np.int64)
    if neg.size == 0:
        neg = neg.reshape(len(pos), 0, 2)
    if neg.ndim != 3 or neg.shape[0] != len(pos) or neg.shape[2] != 2:
        raise ValueError("negatives must be one list of (u, v) pairs per positive")
    return pos, neg


def _hinge(Z1, Z2, pos, neg, margin):
    pos_diff = Z1[pos[:, 0]] - Z2[pos[:, 1]]
    neg_diff = Z1[neg[..., 0]] - Z2[neg[..., 1]]
    terms = np.abs(pos_diff).sum(axis=1)[:, None] - np.abs(neg_diff).sum(axis=2) + margin
    return pos_diff, neg_diff, terms


def margin_loss(Z1: np.ndarray, Z2: np.ndarray, positives: Sequence[Pair],
                negatives: Sequence[Sequence[Pair]], margin: float) -> float:
    """Sum of ``[d(u, v) - d(u', v') + margin]_+`` with L1 distance ``d``.

    ``negatives[i]`` holds the corrupted pairs of ``positives[i]``.
    """
    pos, neg = _as_arrays(positives, negatives)
    _, _, terms = _hinge(Z1, Z2, pos, neg, margin)
    return float(np.maximum(terms, 0.0).sum())


def _loss_grad_z(Z1, Z2, pos, neg, margin):
    pos_diff, neg_diff, terms = _hinge(Z1, Z2, pos, neg, margin)
    active = (terms > 0).astype(float)
    loss = float(np.maximum(terms, 0.0).sum())
    dZ1 = np.zeros_like(Z1)
    dZ2 = np.zeros_like(Z2)
    g_pos = active.sum(axis=1)[:, None] * np.sign(pos_diff)
    g_neg = active[..., None] * np.sign(neg_diff)
    np.add.at(dZ1, pos[:, 0], g_pos)
    np.add.at(dZ2, pos[:, 1], -g_pos)
    np.add.at(dZ1, neg[..., 0].ravel(), -g_neg.reshape(-1, Z1.shape[1]))
    np.add.at(dZ2, neg[..., 1].ravel(), g_neg.reshape(-1, Z2.shape[1]))
    return loss, dZ1, dZ2


def loss_and_gradients(adj1: NormalizedAdjacency, adj2: NormalizedAdjacency, X1: np.ndarray,
                       X2: np.ndarray, params: GcnParameters, positives, negatives, margin: float):
    """Margin loss of the two-graph model and its exact gradients.

    Returns ``(loss, {"X1": ..., "X2": ..., "W1": ..., "W2": ...})``. The shared
    weights accumulate gradient from both graphs. L1 kinks use subgradient 0.
    """
    _check_forward_dims(adj1, X1, params)
    _check_forward_dims(adj2, X2, params)
    pos, neg = _as_arrays(positives, negatives)
    c1 = _forward(adj1, X1, params)
    c2 = _forward(adj2, X2, params)
    loss, dZ1, dZ2 = _loss_grad_z(c1[-1], c2[-1], pos, neg, margin)
    dX1, dW1a, dW2a = _backward(adj1, X1, params, c1, dZ1)
    dX2, dW1b, dW2b = _backward(adj2, X2, params, c2, dZ2)
    return loss, {"X1": dX1, "X2": dX2, "W1": dW1a + dW1b, "W2": dW2a + dW2b}


def train(kg1: KnowledgeGraph, kg2: KnowledgeGraph, seeds: AlignmentSet, config: TrainingConfig,
          history: list | None = None):
    """Fit the shared GCN on ``seeds`` and return the final ``(Z1, Z2)``.

    The objective is the margin loss averaged over seed pairs. Negatives are
    redrawn every epoch. If ``history`` is given, the summed loss of every
    epoch (measured before that epoch's update) is appended to it.
    """
    if len(seeds) == 0:
        raise ValueError("training needs at least one seed pair")
    positives = link_indices(seeds, kg1, kg2)
    adj1 = build_normalized_adjacency(kg1)
    adj2 = build_normalized_adjacency(kg2)
    rng = np.random.default_rng(config.rng_seed)
    feature_seeds = rng.integers(0, 2**63 - 1, size=2)
    X1 = init_features(kg1.num_entities, config.dim, int(feature_seeds[0]))
    X2 = init_features(kg2.num_entities, config.dim, int(feature_seeds[1]))
    params = GcnParameters.glorot(config.dim, rng)
    step = config.learning_rate / len(positives)
    for _ in range(config.epochs):
        neg = sample_negative_batch(positives, kg1.num_entities, kg2.num_entities, config.negatives, rng)
        loss, grads = loss_and_gradients(adj1, adj2, X1, X2, params, positives, neg, config.margin)
        if not np.isfinite(loss):
            raise FloatingPointError(f"training diverged (loss={loss}); lower the learning rate")
        if history is not None:
            history.append(loss)
        params.W1 -= step * grads["W1"]
        params.W2 -= step * grads["W2"]
        if config.train_features:
            X1 -= step * grads["X1"]
            X2 -= step * grads["X2"]
    Z1 = gcn_forward(adj1, X1, params)
    Z2 = gcn_forward(adj2, X2, params)
    return Z1, Z2


def cosine_similarity_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Row-wise cosine similarities between ``A`` (sources) and ``B`` (targets)."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    na = np.linalg.norm(A, axis=1)
    nb = np.linalg.norm(B, axis=1)
    for label, norms in (("source", na), ("target", nb)):
        zero = np.flatnonzero(norms == 0)
        if zero.size:
            raise ValueError(f"{label} row {int(zero[0])} is all zeros")
    sim = (A / na[:, None]) @ (B / nb[:, None]).T
    return np.clip(sim, -1.0, 1.0)

