"""Softmax cross-entropy for K-class linear predictors.

Weights are a flat vector of length K*d holding the per-class blocks
``w_1, ..., w_K`` back to back; labels are 0-based class indices.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import ShapeError


def _blocks(weights, dim, num_classes=None):
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 1 or weights.size % dim:
        raise ShapeError(f"weights of size {weights.size} do not split into blocks of {dim}")
    K = weights.size // dim
    if num_classes is not None and K != num_classes:
        raise ShapeError(f"expected {num_classes} blocks, got {K}")
    return weights.reshape(K, dim)


def multiclass_loss_and_grad(weights, instance, label):
    """Value and gradient of ``log sum_j exp(-(w_label - w_j) . x)``.

    Equivalent to the usual ``-log softmax(Wx)[label]``; evaluated with a
    max-shifted log-sum-exp.
    """
    x = np.asarray(instance, dtype=float)
    if x.ndim != 1:
        raise ShapeError("instance must be a vector")
    W = _blocks(weights, x.size)
    K = W.shape[0]
    if not 0 <= label < K:
        raise ShapeError(f"label {label} outside 0..{K - 1}")
    scores = W @ x
    value = logsumexp(scores - scores[label])
    p = softmax(scores)
    p[label] -= 1.0
    grad = np.outer(p, x).ravel()
    return float(value), grad


def multiclass_hessian(weights, instance):
    """Full (K*d x K*d) Hessian: (diag(p) - p p^T) kron x x^T."""
    x = np.asarray(instance, dtype=float)
    W = _blocks(weights, x.size)
    p = softmax(W @ x)
    return np.kron(np.diag(p) - np.outer(p, p), np.outer(x, x))


def batch_losses(W, X, labels):
    """Per-example losses and the softmax matrix for weights W of shape (K, d)."""
    S = X @ W.T
    lse = logsumexp(S, axis=1)
    rows = np.arange(len(labels))
    losses = lse - S[rows, labels]
    P = np.exp(S - lse[:, None])
    return losses, P


def pairwise_margins(witness, X, labels, num_classes):
    """Matrix of (w_y - w_j) . x_i; the own-class column is set to +inf."""
    W = _blocks(witness, X.shape[1], num_classes)
    S = X @ W.T
    rows = np.arange(len(labels))
    M = S[rows, labels][:, None] - S
    M[rows, labels] = np.inf
    return M
