"""Margin-separable synthetic data, leave-one-out views and population sampling.

Each binary instance is drawn as ``z = m w* + u`` with ``m ~ U[gamma, 1]`` and
``u`` uniform in the ball of radius ``sqrt(1 - m^2)`` orthogonal to ``w*``, so
``w* . z >= gamma`` and ``||z|| <= 1`` hold by construction.  A label ``y`` is
drawn uniformly and the stored instance is ``x = y z``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.stats import ortho_group

from .errors import InfeasibleMarginError, InputError, SizeError
from .losses import Family, LossModel
from .multiclass import pairwise_margins
from .risk import BinaryRisk, MulticlassRisk
from .seeding import derive_rng

# Radii are shrunk by this factor so rounding never pushes ||z|| above 1.
_RADIUS_SHRINK = 1.0 - 1e-12
POPULATION_CHUNK = 1 << 15


def _frozen(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


def _ball(rng, n, k, radius):
    """n points uniform in k-dimensional balls with the given radii."""
    if k == 0:
        return np.zeros((n, 0))
    g = rng.standard_normal((n, k))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.uniform(size=n) ** (1.0 / k) * _RADIUS_SHRINK
    return g * r[:, None]


def _check_size(dim, n, min_dim=2):
    if int(dim) != dim or dim < min_dim:
        raise SizeError(f"dim must be an integer >= {min_dim}")
    if int(n) != n or n < 1:
        raise SizeError("n must be a positive integer")


# ---------------------------------------------------------------------------
# binary


class MarginDistribution:
    """The population: signed instances with margin >= gamma along ``witness``."""

    def __init__(self, witness, gamma):
        w = np.asarray(witness, dtype=float)
        if abs(np.linalg.norm(w) - 1.0) > 1e-12:
            raise InputError("witness must be a unit vector")
        if not 0 < gamma:
            raise InputError("gamma must be positive")
        if gamma >= 1:
            raise InfeasibleMarginError("margin gamma >= 1 cannot be realised with ||z|| <= 1")
        self.witness = w
        self.gamma = float(gamma)
        # orthonormal basis of the complement of the witness
        q, _ = np.linalg.qr(np.column_stack([w, np.eye(w.size)]))
        self.complement = q[:, 1:w.size]

    @property
    def dim(self):
        return self.witness.size

    def _draw(self, rng, n):
        m = rng.uniform(self.gamma, 1.0, size=n)
        u = _ball(rng, n, self.dim - 1, np.sqrt(1.0 - m * m))
        return m[:, None] * self.witness + u @ self.complement.T

    def sample(self, n, rng):
        """n signed instances; rows failing the exact audit are redrawn."""
        Z = self._draw(rng, n)
        while True:
            bad = (Z @ self.witness < self.gamma) | (np.linalg.norm(Z, axis=1) > 1.0)
            if not bad.any():
                return Z
            Z[bad] = self._draw(rng, int(bad.sum()))


@dataclass(frozen=True, eq=False)
class LinearDataset:
    """A margin-separable sample. ``signed_instances[i] = labels[i] * x_i``."""

    signed_instances: np.ndarray
    labels: np.ndarray
    witness: np.ndarray
    margin_gamma: float
    seed: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "signed_instances", _frozen(self.signed_instances))
        object.__setattr__(self, "labels", _frozen(self.labels))
        object.__setattr__(self, "witness", _frozen(self.witness))

    @property
    def n(self):
        return self.signed_instances.shape[0]

    @property
    def dim(self):
        return self.signed_instances.shape[1]

    @property
    def instances(self):
        return self.labels[:, None] * self.signed_instances

    @property
    def distribution(self):
        return MarginDistribution(self.witness, self.margin_gamma)

    def margins(self):
        return self.signed_instances @ self.witness

    def audit(self):
        """Exact check of the norm and margin invariants; raises on failure."""
        if abs(np.linalg.norm(self.witness) - 1.0) > 1e-12:
            raise InfeasibleMarginError("witness is not a unit vector")
        if np.any(np.linalg.norm(self.signed_instances, axis=1) > 1.0):
            raise InfeasibleMarginError("instance with norm above 1")
        if np.any(self.margins() < self.margin_gamma):
            raise InfeasibleMarginError("instance with margin below gamma")
        return True


def sample_dataset(dim, n, gamma, seed) -> LinearDataset:
    """Draw n i.i.d. signed instances in R^dim with margin gamma (deterministic in seed)."""
    _check_size(dim, n)
    if gamma >= 1:
        raise InfeasibleMarginError("margin gamma >= 1 cannot be realised with ||z|| <= 1")
    if not gamma > 0:
        raise InputError("gamma must be positive")
    rng = np.random.default_rng(seed)
    witness = ortho_group.rvs(dim, random_state=rng)[:, 0]
    witness /= np.linalg.norm(witness)
    Z = MarginDistribution(witness, gamma).sample(n, rng)
    labels = rng.choice([-1.0, 1.0], size=n)
    ds = LinearDataset(Z, labels, witness, float(gamma), seed)
    ds.audit()
    return ds


def dataset_from_instances(Z, witness, gamma, labels=None, seed=None) -> LinearDataset:
    """Wrap hand-made signed instances (used for small worked examples)."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    labels = np.ones(len(Z)) if labels is None else labels
    return LinearDataset(Z, labels, witness, float(gamma), seed)


# ---------------------------------------------------------------------------
# multiclass


def _simplex(K):
    """K unit vectors in R^{K-1} with pairwise inner products -1/(K-1)."""
    centred = np.eye(K) - 1.0 / K
    h, _ = np.linalg.qr(centred[:, : K - 1])
    C = centred @ h
    return C / np.linalg.norm(C, axis=1, keepdims=True)


def multiclass_max_margin(K):
    """Largest margin the simplex construction can certify with ||x|| <= 1."""
    return np.sqrt(K) / (K - 1)


class MulticlassDistribution:
    """Class blocks ``w_k = mu_k / sqrt(K)`` for unit simplex directions ``mu_k``.

    An instance of class y is ``r mu_y + u`` with ``u`` orthogonal to every
    ``mu``; its pairwise margin is ``r sqrt(K) / (K - 1)``.
    """

    def __init__(self, rotation, gamma, K):
        d = rotation.shape[0]
        if K - 1 > d:
            raise SizeError("the construction needs dim >= K - 1")
        self.K, self.gamma = int(K), float(gamma)
        self.r_min = gamma * (K - 1) / np.sqrt(K)
        if not self.r_min < 1:
            raise InfeasibleMarginError(
                f"gamma={gamma} infeasible for K={K}; need gamma < {multiclass_max_margin(K):.6g}")
        self.mu = _simplex(K) @ rotation[:, : K - 1].T  # (K, d)
        self.complement = rotation[:, K - 1:]
        self.witness = (self.mu / np.sqrt(K)).ravel()

    @classmethod
    def from_witness(cls, witness, gamma, K):
        """Rebuild the sampler from a stored witness of simplex blocks."""
        mu = np.asarray(witness, dtype=float).reshape(K, -1) * np.sqrt(K)
        d = mu.shape[1]
        span, _ = np.linalg.qr(mu.T)
        rotation, _ = np.linalg.qr(np.column_stack([span[:, : K - 1], np.eye(d)]))
        dist = cls(rotation[:, :d], gamma, K)
        dist.mu = mu
        dist.witness = np.asarray(witness, dtype=float)
        return dist

    def _draw(self, rng, n):
        labels = rng.integers(0, self.K, size=n)
        r = rng.uniform(self.r_min, 1.0, size=n)
        u = _ball(rng, n, self.complement.shape[1], np.sqrt(1.0 - r * r))
        return r[:, None] * self.mu[labels] + u @ self.complement.T, labels

    def _bad(self, X, labels):
        M = pairwise_margins(self.witness, X, labels, self.K)
        return (M.min(axis=1) < self.gamma) | (np.linalg.norm(X, axis=1) > 1.0)

    def sample(self, n, rng):
        X, labels = self._draw(rng, n)
        while True:
            bad = self._bad(X, labels)
            if not bad.any():
                return X, labels
            X[bad], labels[bad] = self._draw(rng, int(bad.sum()))


@dataclass(frozen=True, eq=False)
class MulticlassDataset:
    instances: np.ndarray
    labels: np.ndarray
    witness: np.ndarray
    margin_gamma: float
    num_classes: int
    seed: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "instances", _frozen(self.instances))
        labels = np.array(self.labels, dtype=int)
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "witness", _frozen(self.witness))

    @property
    def n(self):
        return self.instances.shape[0]

    @property
    def dim(self):
        return self.instances.shape[1]

    @property
    def distribution(self):
        return MulticlassDistribution.from_witness(self.witness, self.margin_gamma, self.num_classes)

    def margins(self):
        return pairwise_margins(self.witness, self.instances, self.labels, self.num_classes)

    def audit(self):
        if np.any(np.linalg.norm(self.instances, axis=1) > 1.0):
            raise InfeasibleMarginError("instance with norm above 1")
        if self.margins().min() < self.margin_gamma:
            raise InfeasibleMarginError("pairwise margin below gamma")
        return True

    def to_binary(self) -> LinearDataset:
        """For K = 2: signed instances s x with s = +1 for class 0, witness (w0 - w1)/||w0 - w1||."""
        if self.num_classes != 2:
            raise SizeError("binary reduction needs K = 2")
        W = self.witness.reshape(2, -1)
        diff = W[0] - W[1]
        scale = np.linalg.norm(diff)
        signs = np.where(self.labels == 0, 1.0, -1.0)
        return LinearDataset(signs[:, None] * self.instances, signs, diff / scale,
                             self.margin_gamma / scale, self.seed)


def sample_multiclass(dim, n, gamma, K, seed) -> MulticlassDataset:
    _check_size(dim, n, min_dim=1)
    if int(K) != K or K < 2:
        raise SizeError("K must be an integer >= 2")
    if not gamma > 0:
        raise InputError("gamma must be positive")
    rng = np.random.default_rng(seed)
    rotation = ortho_group.rvs(dim, random_state=rng) if dim > 1 else np.ones((1, 1))
    dist = MulticlassDistribution(rotation, gamma, K)
    X, labels = dist.sample(n, rng)
    ds = MulticlassDataset(X, labels, dist.witness, float(gamma), int(K), seed)
    ds.audit()
    return ds


# ---------------------------------------------------------------------------
# leave-one-out views


@dataclass(frozen=True)
class LooMember:
    """Sample i of the LOO family: z_i replaced by the zero-loss sentinel."""

    base: Union[LinearDataset, MulticlassDataset]
    index: int


@dataclass(frozen=True)
class LooFamily:
    base: Union[LinearDataset, MulticlassDataset]

    def __len__(self):
        return self.base.n

    def member(self, i) -> LooMember:
        if not 0 <= i < self.base.n:
            raise IndexError(f"member index {i} outside 0..{self.base.n - 1}")
        return LooMember(self.base, int(i))

    def __iter__(self):
        return (self.member(i) for i in range(self.base.n))


def loo_family(base) -> LooFamily:
    if base.n < 2:
        raise SizeError("leave-one-out needs n >= 2")
    return LooFamily(base)


def as_risk(target, model: Optional[LossModel] = None):
    """Empirical risk for a dataset, a LOO member, or an already-built risk."""
    if isinstance(target, (BinaryRisk, MulticlassRisk)):
        return target
    exclude = None
    if isinstance(target, LooMember):
        target, exclude = target.base, target.index
    if isinstance(target, MulticlassDataset):
        return MulticlassRisk(target.instances, target.labels, target.num_classes, exclude)
    if isinstance(target, LinearDataset):
        if model is None:
            raise InputError("a loss model is required for a binary dataset")
        if model.family is Family.MULTICLASS:
            raise InputError("multiclass loss needs a MulticlassDataset")
        return BinaryRisk(target.signed_instances, model, exclude)
    raise InputError(f"cannot build a risk from {type(target).__name__}")


# ---------------------------------------------------------------------------
# population estimates


def _population_values(model, w, dist, rng, count):
    if isinstance(dist, MulticlassDistribution):
        X, labels = dist.sample(count, rng)
        risk = MulticlassRisk(X, labels, dist.K)
        losses = risk.per_example(w)
        scores = X @ np.asarray(w).reshape(dist.K, -1).T
        wrong = scores.argmax(axis=1) != labels
        return losses, wrong
    Z = dist.sample(count, rng)
    m = Z @ w
    return model.kernel.value(m), m <= 0


def population_sample_stats(model, w, distribution, M, seed):
    """Monte-Carlo loss mean, its standard error, and the zero-one error rate.

    Draws come in fixed-size shards, each from its own derived stream, so the
    result does not depend on how shards are scheduled.
    """
    if int(M) != M or M < 100:
        raise SizeError("M >= 100 fresh draws required")
    if isinstance(distribution, (LinearDataset, MulticlassDataset)):
        raise InputError("pass the dataset's distribution, not the dataset")
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise InputError("w must be finite")
    values, wrong = [], []
    for shard, start in enumerate(range(0, int(M), POPULATION_CHUNK)):
        count = min(POPULATION_CHUNK, int(M) - start)
        v, e = _population_values(model, w, distribution, derive_rng(seed, "population", shard), count)
        values.append(v)
        wrong.append(e)
    values = np.concatenate(values)
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / np.sqrt(values.size))
    return mean, stderr, float(np.concatenate(wrong).mean())


def population_estimate(model, w, distribution, M, seed):
    """(mean, standard error) of f(w, z) over M fresh draws."""
    mean, stderr, _ = population_sample_stats(model, w, distribution, M, seed)
    return mean, stderr


# ---------------------------------------------------------------------------
# CSV round trip


def _fmt(v):
    return format(float(v), ".17g")


def save_dataset(ds, path):
    """Write ``label, x_1..x_d`` rows plus a JSON sidecar next to ``path``."""
    path = Path(path)
    multiclass = isinstance(ds, MulticlassDataset)
    X = ds.instances
    with path.open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["label"] + [f"x{j + 1}" for j in range(ds.dim)])
        for lab, row in zip(ds.labels, X):
            out.writerow([int(lab)] + [_fmt(v) for v in row])
    side = {"gamma": ds.margin_gamma, "witness": [float(v) for v in ds.witness], "seed": ds.seed}
    if multiclass:
        side["K"] = ds.num_classes
    path.with_suffix(".json").write_text(json.dumps(side, indent=2))


def load_dataset(path):
    path = Path(path)
    side = json.loads(path.with_suffix(".json").read_text())
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    labels = np.array([int(r[0]) for r in rows])
    X = np.array([[float(v) for v in r[1:]] for r in rows])
    if "K" in side:
        return MulticlassDataset(X, labels, side["witness"], side["gamma"], side["K"], side["seed"])
    signs = labels.astype(float)
    return LinearDataset(signs[:, None] * X, signs, side["witness"], side["gamma"], side["seed"])
