"""Empirical risks over a sample, with optional leave-one-out exclusion.

Excluding index ``i`` models replacing ``z_i`` by the zero-loss sentinel:
the term contributes no loss and no gradient, and the normalisation stays
``1/n``.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .losses import LossModel
from .multiclass import batch_losses


def _keep(n, exclude):
    keep = np.ones(n)
    if exclude is not None:
        keep[exclude] = 0.0
    return keep


class BinaryRisk:
    """F(w) = (1/n) sum_j l(w . z_j) over the non-excluded signed instances."""

    def __init__(self, Z, model: LossModel, exclude: Optional[int] = None):
        self.Z = np.asarray(Z, dtype=float)
        self.model = model
        self.kernel = model.kernel
        self.n, self.dim = self.Z.shape
        self.exclude = exclude
        self.keep = _keep(self.n, exclude)

    def per_example(self, w):
        return self.kernel.value(self.Z @ w)

    def value(self, w):
        return float(self.keep @ self.per_example(w)) / self.n

    def grad(self, w):
        return (self.keep * self.kernel.d1(self.Z @ w)) @ self.Z / self.n

    def value_and_grad(self, w):
        m = self.Z @ w
        value = float(self.keep @ self.kernel.value(m)) / self.n
        return value, (self.keep * self.kernel.d1(m)) @ self.Z / self.n

    def example_grad(self, w, j):
        """Gradient of the j-th term (zero for the excluded sentinel slot)."""
        if j == self.exclude:
            return np.zeros(self.dim)
        z = self.Z[j]
        return self.kernel.d1(np.array([z @ w]))[0] * z


class MulticlassRisk:
    """Average softmax cross-entropy; weights are flat K*d vectors."""

    def __init__(self, X, labels, num_classes, exclude: Optional[int] = None):
        self.X = np.asarray(X, dtype=float)
        self.labels = np.asarray(labels, dtype=int)
        self.K = int(num_classes)
        self.n, d = self.X.shape
        self.dim = self.K * d
        self.exclude = exclude
        self.keep = _keep(self.n, exclude)
        self._onehot = np.eye(self.K)[self.labels]

    def _W(self, w):
        return np.asarray(w, dtype=float).reshape(self.K, -1)

    def per_example(self, w):
        return batch_losses(self._W(w), self.X, self.labels)[0]

    def value(self, w):
        return float(self.keep @ self.per_example(w)) / self.n

    def grad(self, w):
        return self.value_and_grad(w)[1]

    def value_and_grad(self, w):
        losses, P = batch_losses(self._W(w), self.X, self.labels)
        G = ((P - self._onehot) * self.keep[:, None]).T @ self.X / self.n
        return float(self.keep @ losses) / self.n, G.ravel()

    def example_grad(self, w, j):
        if j == self.exclude:
            return np.zeros(self.dim)
        _, P = batch_losses(self._W(w), self.X[j:j + 1], self.labels[j:j + 1])
        return np.outer(P[0] - self._onehot[j], self.X[j]).ravel()
