"""Scalar margin losses with certified constants.

Every binary loss here is a convex function ``l(y)`` of the margin
``y = w . z`` that decreases to zero as ``y -> inf``.  A model carries the
global Lipschitz constant ``G``, smoothness ``L`` and the self-bounding pair
``(c, delta)`` meaning ``|l'(y)| <= c * l(y) ** (1 - delta)``.

Tail-only families (polynomial, sub- and super-exponential) are extended to
the whole line by :class:`TailCompletion`, which continues the tail linearly
below a splice point ``a`` with matching value and slope.

Besides value and derivatives each kernel exposes ``log_value`` and
``log_neg_d1`` so audits can work past the point where ``l`` underflows.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy import optimize, special

from .errors import ConfigError, InputError, RangeError
from .special import (
    ASYMPTOTIC_CUTOFF,
    TWO_OVER_SQRT_PI,
    erfcx_asymptotic,
    log_erfcx,
    log_half_erfc,
)

LOG_TWO_OVER_SQRT_PI = math.log(TWO_OVER_SQRT_PI)


class Family(str, Enum):
    LOGISTIC = "logistic"
    POLYNOMIAL = "polynomial"
    SUBEXP = "subexp"
    SUPEREXP = "superexp"
    PROBIT = "probit"
    EXPONENTIAL = "exponential"
    MULTICLASS = "multiclass"


_ALIASES = {
    "poly": Family.POLYNOMIAL,
    "polynomialtail": Family.POLYNOMIAL,
    "subexponential": Family.SUBEXP,
    "superexponential": Family.SUPEREXP,
    "exp": Family.EXPONENTIAL,
    "multiclassce": Family.MULTICLASS,
    "softmax": Family.MULTICLASS,
}


def parse_family(name) -> Family:
    if isinstance(name, Family):
        return name
    key = str(name).strip().lower().replace("-", "").replace("_", "")
    if key in _ALIASES:
        return _ALIASES[key]
    try:
        return Family(key)
    except ValueError:
        raise ConfigError(f"unknown loss family {name!r}") from None


def _as_array(y):
    arr = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InputError("margin values must be finite")
    return arr


def _restore(out, like):
    return float(out) if np.ndim(like) == 0 else out


# ---------------------------------------------------------------------------
# kernels


class _Kernel:
    """Vectorised l, l', l'', log l, log(-l') and the inverse of l."""

    def value(self, y):
        raise NotImplementedError

    def d1(self, y):
        raise NotImplementedError

    def d2(self, y):
        raise NotImplementedError

    def log_value(self, y):
        return np.log(self.value(y))

    def log_neg_d1(self, y):
        with np.errstate(divide="ignore"):
            return np.log(-self.d1(y))

    def inverse(self, eps: float, lo: Optional[float] = None) -> float:
        # generic fallback: bracket and solve log l(y) = log eps; a given lo must satisfy l(lo) >= eps
        target = math.log(eps)

        def gap(y):
            return float(self.log_value(np.array([y]))[0]) - target

        if lo is None:
            lo = -1.0
            while gap(lo) < 0:
                lo *= 2.0
        hi = max(1.0, 2.0 * abs(lo))
        while gap(hi) > 0:
            hi *= 2.0
            if hi > 1e8:
                raise RangeError(f"cannot invert loss at eps={eps:g}")
        return optimize.brentq(gap, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)


class _Logistic(_Kernel):
    """log(1 + shift * e^{-y}); shift = K - 1 gives the multiclass restriction."""

    def __init__(self, shift: float = 1.0):
        self.log_shift = math.log(shift)

    def value(self, y):
        return np.logaddexp(0.0, self.log_shift - y)

    def d1(self, y):
        return -special.expit(self.log_shift - y)

    def d2(self, y):
        s = self.log_shift - y
        return special.expit(s) * special.expit(-s)

    def log_value(self, y):
        s = self.log_shift - y
        # log log1p(e^s) = s + log(log1p(t)/t), t = e^s
        t = np.exp(np.minimum(s, 0.0))
        with np.errstate(divide="ignore"):
            direct = np.log(np.logaddexp(0.0, s))
        return np.where(s < -30.0, s - 0.5 * t, direct)

    def log_neg_d1(self, y):
        return -np.logaddexp(0.0, y - self.log_shift)

    def inverse(self, eps):
        return self.log_shift - math.log(math.expm1(eps))


class _Exponential(_Kernel):
    def value(self, y):
        return np.exp(-y)

    def d1(self, y):
        return -np.exp(-y)

    def d2(self, y):
        return np.exp(-y)

    def log_value(self, y):
        return -np.asarray(y, dtype=float)

    def log_neg_d1(self, y):
        return -np.asarray(y, dtype=float)

    def inverse(self, eps):
        return -math.log(eps)


def _erfcx_stable(x):
    x = np.asarray(x, dtype=float)
    return np.where(x >= ASYMPTOTIC_CUTOFF,
                    erfcx_asymptotic(np.maximum(x, ASYMPTOTIC_CUTOFF)),
                    special.erfcx(np.minimum(x, ASYMPTOTIC_CUTOFF)))


class _Probit(_Kernel):
    """-log(Phi(sqrt(2) y)) = -log(erfc(-y)/2), the probit loss as a margin loss."""

    def value(self, y):
        y = np.asarray(y, dtype=float)
        return -log_half_erfc(-y)

    def _ratio(self, y):
        # r = 2/sqrt(pi) * e^{-y^2} / erfc(-y) = -l'(y)
        y = np.asarray(y, dtype=float)
        neg = TWO_OVER_SQRT_PI / _erfcx_stable(np.maximum(-y, 0.0))
        pos = TWO_OVER_SQRT_PI * np.exp(-y * y) / (2.0 - special.erfc(np.maximum(y, 0.0)))
        return np.where(y <= 0, neg, pos)

    def d1(self, y):
        return -self._ratio(y)

    def d2(self, y):
        y = np.asarray(y, dtype=float)
        r = self._ratio(y)
        return r * (2.0 * y + r)

    def log_value(self, y):
        y = np.asarray(y, dtype=float)
        out = np.empty_like(y)
        neg = y <= 0
        out[neg] = np.log(self.value(y[neg]))
        yp = y[~neg]
        logq = log_half_erfc(yp)
        q = np.exp(logq)
        safe_q = np.maximum(q, 1e-300)
        corr = np.where(q > 1e-8, -np.log1p(-q) / safe_q, 1.0 + 0.5 * q)
        out[~neg] = logq + np.log(corr)
        return out

    def log_neg_d1(self, y):
        y = np.asarray(y, dtype=float)
        neg = LOG_TWO_OVER_SQRT_PI - log_erfcx(np.maximum(-y, 0.0))
        pos = (LOG_TWO_OVER_SQRT_PI - y * y
               - np.log(2.0 - special.erfc(np.maximum(y, 0.0))))
        return np.where(y <= 0, neg, pos)


class _PolyTail(_Kernel):
    """(1 + y)^{-alpha} on y >= 0."""

    def __init__(self, alpha):
        self.alpha = alpha

    def value(self, y):
        return (1.0 + y) ** (-self.alpha)

    def d1(self, y):
        return -self.alpha * (1.0 + y) ** (-self.alpha - 1.0)

    def d2(self, y):
        a = self.alpha
        return a * (a + 1.0) * (1.0 + y) ** (-a - 2.0)

    def log_value(self, y):
        return -self.alpha * np.log1p(y)

    def log_neg_d1(self, y):
        return math.log(self.alpha) - (self.alpha + 1.0) * np.log1p(y)

    def inverse(self, eps):
        return eps ** (-1.0 / self.alpha) - 1.0


class _StretchedExpTail(_Kernel):
    """exp(-(1 + y)^alpha) on y >= 0 (sub-exponential for alpha < 1)."""

    def __init__(self, alpha):
        self.alpha = alpha

    def value(self, y):
        return np.exp(-((1.0 + y) ** self.alpha))

    def d1(self, y):
        a = self.alpha
        return -a * (1.0 + y) ** (a - 1.0) * np.exp(-((1.0 + y) ** a))

    def d2(self, y):
        a = self.alpha
        p = 1.0 + y
        return np.exp(-(p ** a)) * (a * a * p ** (2 * a - 2) - a * (a - 1) * p ** (a - 2))

    def log_value(self, y):
        return -((1.0 + y) ** self.alpha)

    def log_neg_d1(self, y):
        a = self.alpha
        return math.log(a) + (a - 1.0) * np.log1p(y) - (1.0 + y) ** a

    def inverse(self, eps):
        return (-math.log(eps)) ** (1.0 / self.alpha) - 1.0


class _CallableTail(_Kernel):
    def __init__(self, f, df, d2f):
        self.value, self.d1, self.d2 = f, df, d2f


@dataclass(frozen=True)
class TailCompletion:
    """Linear continuation of a decreasing tail below the splice point ``a``.

    For g < a the completed loss is f(a) * (1 + f'(a)/f(a) * (g - a)), which
    matches the tail's value and slope at ``a``.
    """

    splice_point_a: float
    value_at_a: float
    slope_at_a: float

    def __post_init__(self):
        if not self.value_at_a > 0:
            raise ConfigError("tail value at the splice point must be positive")
        if self.slope_at_a > 0:
            raise ConfigError("tail slope at the splice point must be <= 0")

    def linear(self, y):
        return self.value_at_a + self.slope_at_a * (y - self.splice_point_a)


class CompletedTail(_Kernel):
    """A tail kernel valid on [a, inf) joined to its linear completion."""

    def __init__(self, tail: _Kernel, a: float = 0.0):
        self.tail = tail
        fa = float(tail.value(np.array([a]))[0])
        dfa = float(tail.d1(np.array([a]))[0])
        self.completion = TailCompletion(a, fa, dfa)

    @property
    def a(self):
        return self.completion.splice_point_a

    def _split(self, y, tail_fn, lin_fn):
        y = np.asarray(y, dtype=float)
        out = np.empty_like(y)
        hi = y >= self.a
        out[hi] = tail_fn(y[hi])
        out[~hi] = lin_fn(y[~hi])
        return out

    def value(self, y):
        return self._split(y, self.tail.value, self.completion.linear)

    def d1(self, y):
        s = self.completion.slope_at_a
        return self._split(y, self.tail.d1, lambda v: np.full_like(v, s))

    def d2(self, y):
        return self._split(y, self.tail.d2, np.zeros_like)

    def log_value(self, y):
        return self._split(y, self.tail.log_value,
                           lambda v: np.log(self.completion.linear(v)))

    def log_neg_d1(self, y):
        s = self.completion.slope_at_a
        with np.errstate(divide="ignore"):
            ls = math.log(-s) if s < 0 else -math.inf
        return self._split(y, self.tail.log_neg_d1, lambda v: np.full_like(v, ls))

    def inverse(self, eps):
        c = self.completion
        if eps >= c.value_at_a:
            if c.slope_at_a == 0:
                raise RangeError("flat completion cannot be inverted above f(a)")
            return c.splice_point_a + (eps - c.value_at_a) / c.slope_at_a
        if type(self.tail).inverse is not _Kernel.inverse:
            return self.tail.inverse(eps)
        return _Kernel.inverse(self.tail, eps, lo=c.splice_point_a)


def complete_tail(f: Callable, df: Callable, d2f: Callable, a: float = 0.0) -> CompletedTail:
    """Build the completed loss from vectorised callables for a tail on [a, inf)."""
    return CompletedTail(_CallableTail(f, df, d2f), a)


# ---------------------------------------------------------------------------
# the model


@dataclass(frozen=True)
class Constants:
    G: float
    L: float
    c: float
    delta: float


_NEEDS_ALPHA = {Family.POLYNOMIAL, Family.SUBEXP, Family.SUPEREXP}
_NEEDS_DELTA = {Family.SUPEREXP, Family.PROBIT}


def _validate(family, alpha, num_classes, delta):
    if family in _NEEDS_ALPHA:
        if alpha is None or not np.isfinite(alpha) or alpha <= 0:
            raise ConfigError(f"{family.value}: alpha > 0 required")
        if family is Family.SUBEXP and not alpha < 1:
            raise ConfigError("subexp: alpha < 1 required")
        if family is Family.SUPEREXP and not alpha >= 1:
            raise ConfigError("superexp: alpha >= 1 required")
    if family is Family.MULTICLASS:
        if num_classes is None or int(num_classes) != num_classes or num_classes < 2:
            raise ConfigError("multiclass: integer K >= 2 required")
    if family in _NEEDS_DELTA:
        if delta is None:
            raise ConfigError(f"{family.value}: a delta choice in (0, 1/2] is required")
        if delta > 0.5:
            raise RangeError("delta must be <= 1/2")
        if not delta > 0:
            raise RangeError("delta must be > 0")


def _constants(family, alpha, num_classes, delta) -> Constants:
    inf = math.inf
    if family is Family.LOGISTIC:
        return Constants(1.0, 1.0, 1.0, 0.0)
    if family is Family.POLYNOMIAL:
        return Constants(alpha, alpha * (alpha + 1.0), alpha, 0.0)
    if family is Family.SUBEXP:
        return Constants(alpha, alpha, alpha, 0.0)
    if family is Family.SUPEREXP:
        return Constants(alpha, alpha * alpha, alpha / (math.e * delta), delta)
    if family is Family.PROBIT:
        return Constants(inf, 4.0, 8.0 / (math.e * delta), delta)
    if family is Family.EXPONENTIAL:
        return Constants(inf, inf, 1.0, 0.0)
    if family is Family.MULTICLASS:
        return Constants(2.0, 2.0, 2.0, 0.0)
    raise ConfigError(f"no constants for {family}")


@dataclass(frozen=True)
class LossModel:
    """A loss family together with its certified constants.

    Build with :func:`make_loss`; the constant fields can be overridden with
    ``dataclasses.replace`` (the audit uses this to inject wrong constants).
    For ``multiclass`` the scalar evaluators describe the one-dimensional
    restriction ``log(1 + (K - 1) e^{-y})`` (all competitor margins equal);
    the full vector loss lives in :mod:`selfbound.multiclass`.
    """

    family: Family
    alpha: Optional[float] = None
    num_classes: Optional[int] = None
    lipschitz_G: float = math.inf
    smoothness_L: float = math.inf
    self_bound_c: float = 1.0
    self_bound_delta: float = 0.0
    completion_threshold_a: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.self_bound_delta <= 0.5:
            raise RangeError("self_bound_delta must lie in [0, 1/2]")
        if not self.self_bound_c > 0:
            raise ConfigError("self_bound_c must be positive")

    @cached_property
    def kernel(self) -> _Kernel:
        f = self.family
        if f is Family.LOGISTIC:
            return _Logistic()
        if f is Family.MULTICLASS:
            return _Logistic(shift=self.num_classes - 1.0)
        if f is Family.EXPONENTIAL:
            return _Exponential()
        if f is Family.PROBIT:
            return _Probit()
        a = 0.0 if self.completion_threshold_a is None else self.completion_threshold_a
        if f is Family.POLYNOMIAL:
            return CompletedTail(_PolyTail(self.alpha), a)
        return CompletedTail(_StretchedExpTail(self.alpha), a)

    @property
    def constants(self) -> Constants:
        return Constants(self.lipschitz_G, self.smoothness_L,
                         self.self_bound_c, self.self_bound_delta)

    @property
    def is_smooth(self) -> bool:
        return math.isfinite(self.smoothness_L)

    @property
    def is_lipschitz(self) -> bool:
        return math.isfinite(self.lipschitz_G)

    # vectorised evaluators -------------------------------------------------
    def value(self, y):
        arr = _as_array(y)
        return _restore(self.kernel.value(np.atleast_1d(arr)).reshape(arr.shape), y)

    def deriv(self, y):
        arr = _as_array(y)
        return _restore(self.kernel.d1(np.atleast_1d(arr)).reshape(arr.shape), y)

    def second(self, y):
        arr = _as_array(y)
        return _restore(self.kernel.d2(np.atleast_1d(arr)).reshape(arr.shape), y)

    def log_value(self, y):
        arr = _as_array(y)
        return _restore(self.kernel.log_value(np.atleast_1d(arr)).reshape(arr.shape), y)

    def log_neg_deriv(self, y):
        arr = _as_array(y)
        return _restore(self.kernel.log_neg_d1(np.atleast_1d(arr)).reshape(arr.shape), y)

    def inverse(self, eps: float) -> float:
        """The margin y with l(y) = eps."""
        if not (np.isfinite(eps) and eps > 0):
            raise InputError("eps must be a positive finite number")
        return float(self.kernel.inverse(float(eps)))

    # serialisation ---------------------------------------------------------
    def to_dict(self) -> dict:
        out = {"family": self.family.value}
        if self.alpha is not None:
            out["alpha"] = self.alpha
        if self.num_classes is not None:
            out["K"] = self.num_classes
        if self.family in _NEEDS_DELTA:
            out["delta"] = self.self_bound_delta
        return out

    @classmethod
    def from_dict(cls, spec: dict) -> "LossModel":
        unknown = set(spec) - {"family", "alpha", "K", "delta"}
        if unknown:
            raise ConfigError(f"unknown loss fields: {sorted(unknown)}")
        if "family" not in spec:
            raise ConfigError("loss spec needs a 'family' field")
        return make_loss(spec["family"], alpha=spec.get("alpha"),
                         num_classes=spec.get("K"), delta=spec.get("delta"))


def make_loss(family, alpha=None, num_classes=None, delta=None) -> LossModel:
    """Construct a :class:`LossModel` with the constants proved for its family.

    ``delta`` is required (in (0, 1/2]) for ``superexp`` and ``probit`` and
    ignored elsewhere.
    """
    fam = parse_family(family)
    alpha = None if alpha is None else float(alpha)
    if fam not in _NEEDS_ALPHA:
        alpha = None
    if fam is not Family.MULTICLASS:
        num_classes = None
    elif num_classes is not None:
        if float(num_classes) != int(num_classes):
            raise ConfigError("multiclass: integer K >= 2 required")
        num_classes = int(num_classes)
    if fam not in _NEEDS_DELTA:
        delta = None
    else:
        delta = None if delta is None else float(delta)
    _validate(fam, alpha, num_classes, delta)
    k = _constants(fam, alpha, num_classes, delta)
    return LossModel(
        family=fam,
        alpha=alpha,
        num_classes=num_classes,
        lipschitz_G=k.G,
        smoothness_L=k.L,
        self_bound_c=k.c,
        self_bound_delta=k.delta,
        completion_threshold_a=0.0 if fam in _NEEDS_ALPHA else None,
    )


def certified_constants(model: LossModel, delta_choice: Optional[float] = None) -> Constants:
    """Per-family (G, L, c, delta); ``delta_choice`` overrides the model's delta."""
    delta = delta_choice
    if delta is None and model.family in _NEEDS_DELTA:
        delta = model.self_bound_delta
    if model.family not in _NEEDS_DELTA:
        delta = None
    _validate(model.family, model.alpha, model.num_classes, delta)
    return _constants(model.family, model.alpha, model.num_classes, delta)


def with_delta(model: LossModel, delta: float) -> LossModel:
    """Same family with a different self-bounding exponent (and matching c)."""
    return make_loss(model.family, alpha=model.alpha,
                     num_classes=model.num_classes, delta=delta)


def evaluate(model: LossModel, margin_value):
    """(l(y), l'(y), l''(y)) of the completed loss."""
    return model.value(margin_value), model.deriv(margin_value), model.second(margin_value)


def rho(model: LossModel, epsilon: float, gamma: float) -> float:
    """Realizability radius max(l^{-1}(eps) / gamma, 1)."""
    if not (np.isfinite(epsilon) and epsilon > 0):
        raise InputError("epsilon must be positive")
    if not (0 < gamma <= 1):
        raise InputError("gamma must lie in (0, 1]")
    return max(model.inverse(epsilon) / gamma, 1.0)


def replace_constants(model: LossModel, **changes) -> LossModel:
    return dataclasses.replace(model, **changes)
