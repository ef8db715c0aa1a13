"""Numerical audit of the loss assumptions on fixed grids.

Every check reports its worst violation (how far the inequality fails, in
the stated units) and passes iff that stays within the tolerance.  This is a
grid audit, not a proof.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import List, Optional

import numpy as np
from scipy import special

from .errors import ConfigError
from .losses import Family, LossModel, make_loss
from .multiclass import multiclass_hessian, multiclass_loss_and_grad
from .special import erfc_sandwich, erfcx_sandwich

GRID_LO, GRID_HI, GRID_COUNT = -10.0, 50.0, 10_000
MIDPOINT_PAIRS = 10_000
FD_STEP = 1e-5
FD_RTOL = 1e-6
# finite differences are compared only where |l'|/l stays below this
FD_MAX_LOG_SLOPE = 30.0
REALIZABILITY_EPS = np.geomspace(1e-12, 0.5, 25)
REALIZABILITY_GAMMAS = (0.1, 0.25, 0.5, 1.0)


@dataclass
class PropertyCheckResult:
    property_name: str
    grid_spec: dict
    worst_violation: float
    worst_location: Optional[float]
    passed: bool
    tolerance: float
    note: str = ""

    def to_dict(self):
        d = asdict(self)
        for k in ("worst_violation", "worst_location"):
            if isinstance(d[k], float) and not math.isfinite(d[k]):
                d[k] = None if math.isnan(d[k]) else ("inf" if d[k] > 0 else "-inf")
        return d


def _result(name, grid_spec, violation, locations, tol, note=""):
    violation = np.asarray(violation, dtype=float)
    locations = np.asarray(locations, dtype=float)
    if violation.size == 0:
        return PropertyCheckResult(name, grid_spec, -math.inf, None, True, tol, note or "empty grid")
    bad = np.isnan(violation)
    violation = np.where(bad, math.inf, violation)
    k = int(np.argmax(violation))
    worst = float(violation[k])
    loc = locations[k] if locations.ndim == 1 else locations[k, 0]
    return PropertyCheckResult(name, grid_spec, worst, float(loc), bool(worst <= tol), tol, note)


def margin_grid(lo=GRID_LO, hi=GRID_HI, count=GRID_COUNT):
    """Half uniform on [lo, hi], half log-dense on both sides of 0 (plus 0 itself)."""
    half = count // 2
    uniform = np.linspace(lo, hi, half)
    side = (count - half) // 2
    pos = np.geomspace(1e-8, hi, side)
    neg = -np.geomspace(1e-8, -lo, count - half - side - 1)
    return np.unique(np.concatenate([uniform, pos, neg, [0.0]]))


def _grid_spec(y):
    return {"range": [float(y.min()), float(y.max())], "count": int(y.size)}


# ---------------------------------------------------------------------------
# scalar checks


def check_self_bound(model: LossModel, y=None):
    """|l'| <= c l^{1-delta}, compared in log space as a relative excess."""
    y = margin_grid() if y is None else y
    c, delta = model.self_bound_c, model.self_bound_delta
    lv, ld = model.log_value(y), model.log_neg_deriv(y)
    excess = np.expm1(np.minimum(ld - math.log(c) - (1 - delta) * lv, 700.0))
    return _result("self_bound", _grid_spec(y), excess, y, 1e-9)


def check_lipschitz(model, y=None):
    y = margin_grid() if y is None else y
    if not model.is_lipschitz:
        return PropertyCheckResult("lipschitz", _grid_spec(y), -math.inf, None, True, 1e-9,
                                   "G unbounded; not a Lipschitz loss")
    v = np.abs(model.deriv(y)) - model.lipschitz_G
    return _result("lipschitz", _grid_spec(y), v, y, 1e-9)


def check_smoothness(model, y=None):
    y = margin_grid() if y is None else y
    if not model.is_smooth:
        return PropertyCheckResult("smoothness", _grid_spec(y), -math.inf, None, True, 1e-6,
                                   "L unbounded; not a smooth loss")
    v = np.abs(model.second(y)) - model.smoothness_L
    return _result("smoothness", _grid_spec(y), v, y, 1e-6)


def check_convexity_second(model, y=None):
    y = margin_grid() if y is None else y
    return _result("convexity_second_derivative", _grid_spec(y), -model.second(y), y, 1e-9)


def check_convexity_midpoint(model, pairs=MIDPOINT_PAIRS, seed=0, lo=GRID_LO, hi=GRID_HI):
    """l((a+b)/2) <= (l(a)+l(b))/2 + 1e-12 max(1, l) on random pairs."""
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(lo, hi, pairs), rng.uniform(lo, hi, pairs)
    avg = 0.5 * (model.value(a) + model.value(b))
    v = (model.value(0.5 * (a + b)) - avg) / np.maximum(1.0, avg)
    return _result("convexity_midpoint", {"range": [lo, hi], "count": pairs, "seed": seed},
                   v, a, 1e-12)


def check_positive_decreasing(model, y=None):
    """log l finite (l > 0) and l' <= 0; violation is max l' (inf if l underflows to 0 in log)."""
    y = margin_grid() if y is None else y
    lv = model.log_value(y)
    v = np.where(np.isfinite(lv), model.deriv(y), math.inf)
    return _result("positive_decreasing", _grid_spec(y), v, y, 0.0)


def check_smooth_self_bound(model, y=None):
    """l'^2 <= 2 L l in log space."""
    y = margin_grid() if y is None else y
    if not model.is_smooth:
        return PropertyCheckResult("smooth_self_bound", _grid_spec(y), -math.inf, None, True, 1e-9,
                                   "L unbounded; not applicable")
    excess = np.expm1(2 * model.log_neg_deriv(y) - math.log(2 * model.smoothness_L) - model.log_value(y))
    return _result("smooth_self_bound", _grid_spec(y), excess, y, 1e-9)


def check_grad_power(model, y=None, h=FD_STEP):
    """Secant slopes of log l (delta = 0) or l^delta (delta > 0) against c or c delta."""
    y = margin_grid() if y is None else y
    y = y[y + h <= y.max()]
    c, delta = model.self_bound_c, model.self_bound_delta
    la, lb = model.log_value(y), model.log_value(y + h)
    if delta == 0:
        slope = np.abs(lb - la) / h
        bound = c
    else:
        slope = np.abs(np.exp(delta * lb) - np.exp(delta * la)) / h
        bound = c * delta
    return _result("grad_power", _grid_spec(y), slope / bound - 1.0, y, 1e-6)


def check_derivatives(model, y=None, h=FD_STEP):
    """Central differences of l and l' against the analytic l' and l''.

    Restricted to well-conditioned points: l above 1e-280 and |l'|/l <= 30 so
    the O(h^2) truncation stays far below the tolerance.  Points within 2h of
    the splice are skipped: l'' jumps there, so the stencil straddles a kink.
    """
    y = np.linspace(-10.0, 10.0, 4001) if y is None else y
    lv = model.log_value(y)
    keep = (lv > math.log(1e-280)) & (model.log_neg_deriv(y) - lv <= math.log(FD_MAX_LOG_SLOPE))
    a = model.completion_threshold_a
    if a is not None:
        keep &= np.abs(y - a) > 2 * h
    y = y[keep]
    f, d1, d2 = model.value(y), model.deriv(y), model.second(y)
    fd1 = (model.value(y + h) - model.value(y - h)) / (2 * h)
    err1 = np.abs(fd1 - d1) / (FD_RTOL * np.abs(d1) + 1e-9 * np.abs(f) + 1e-300)
    fd2 = (model.deriv(y + h) - model.deriv(y - h)) / (2 * h)
    err2 = np.abs(fd2 - d2) / (FD_RTOL * np.abs(d2) + 1e-9 * np.abs(d1) + 1e-300)
    spec = {"range": [float(y.min()), float(y.max())], "count": int(y.size), "step": h}
    return [
        _result("finite_difference_first", spec, err1 - 1.0, y, 0.0,
                "scaled error: |fd - l'| / (1e-6 |l'| + 1e-9 l) - 1"),
        _result("finite_difference_second", spec, err2 - 1.0, y, 0.0,
                "scaled error: |fd - l''| / (1e-6 |l''| + 1e-9 |l'|) - 1"),
    ]


def check_splice(model, h=1e-12):
    """Value and slope continuity of the completed tail at its splice point."""
    a = model.completion_threshold_a
    if a is None:
        return PropertyCheckResult("splice_continuity", {}, -math.inf, None, True, 1e-10,
                                   "no completion for this family")
    y = np.array([a - h, a, a + h])
    f, d = model.value(y), model.deriv(y)
    v = max(abs(f[0] - f[1]), abs(f[2] - f[1]), abs(d[0] - d[1]), abs(d[2] - d[1]))
    return _result("splice_continuity", {"point": a, "offset": h}, [v], [a], 1e-10)


def check_realizability(model, eps=REALIZABILITY_EPS, gammas=REALIZABILITY_GAMMAS):
    """l(gamma rho(eps)) <= eps + 1e-12 over an (eps, gamma) grid."""
    from .losses import rho

    top = float(model.value(0.0))
    v, loc = [], []
    for g in gammas:
        for e in eps:
            if e >= top:
                continue
            r = rho(model, float(e), g)
            v.append(float(model.value(g * r)) - e)
            loc.append(e)
    return _result("realizability", {"eps": [float(eps[0]), float(eps[-1])], "gammas": list(gammas)},
                   v, loc, 1e-12)


def check_probit_core(model, spacing=1e-4, margin=1 + 1e-6):
    """Self-boundedness of the probit loss on |y| <= 1 with a dense grid and margin factor."""
    y = np.arange(-1.0, 1.0 + spacing / 2, spacing)
    c, delta = model.self_bound_c, model.self_bound_delta
    ratio = np.abs(model.deriv(y)) / (c * model.value(y) ** (1 - delta))
    return _result("probit_core_self_bound", {"range": [-1.0, 1.0], "spacing": spacing},
                   ratio * margin - 1.0, y, 0.0)


# ---------------------------------------------------------------------------
# multiclass vector checks


def _multiclass_samples(K, d, count, seed):
    rng = np.random.default_rng(seed)
    W = rng.normal(scale=3.0, size=(count, K * d))
    X = rng.normal(size=(count, d))
    X *= (rng.uniform(size=count) / np.linalg.norm(X, axis=1))[:, None]
    labels = rng.integers(0, K, size=count)
    return W, X, labels


def check_multiclass_suite(model: LossModel, count=400, dim=3, seed=0) -> List[PropertyCheckResult]:
    """Vector statements for softmax cross-entropy on random (w, x, label), ||x|| <= 1.

    ||grad f|| <= 2 f, ||grad f|| <= 2, ||hess f||_op <= 2, midpoint convexity,
    gradient against central differences.
    """
    K = model.num_classes
    W, X, labels = _multiclass_samples(K, dim, count, seed)
    sb, lip, sm, mid, fd = [], [], [], [], []
    rng = np.random.default_rng(seed + 1)
    h = FD_STEP
    for w, x, y in zip(W, X, labels):
        f, g = multiclass_loss_and_grad(w, x, y)
        gn = np.linalg.norm(g)
        sb.append(gn / (model.self_bound_c * f) - 1.0 if f > 0 else (math.inf if gn > 0 else -1.0))
        lip.append(gn - model.lipschitz_G)
        sm.append(np.linalg.norm(multiclass_hessian(w, x), 2) - model.smoothness_L)
        v = rng.normal(scale=3.0, size=w.size)
        fm = multiclass_loss_and_grad(0.5 * (w + v), x, y)[0]
        fv = multiclass_loss_and_grad(v, x, y)[0]
        avg = 0.5 * (f + fv)
        mid.append((fm - avg) / max(1.0, avg) - 1e-12)
        u = rng.normal(size=w.size)
        u /= np.linalg.norm(u)
        fdd = (multiclass_loss_and_grad(w + h * u, x, y)[0] - multiclass_loss_and_grad(w - h * u, x, y)[0]) / (2 * h)
        fd.append(abs(fdd - g @ u) - (1e-5 * abs(g @ u) + 1e-9 * max(1.0, f)))
    spec = {"samples": count, "dim": dim, "K": K, "seed": seed}
    loc = np.arange(count, dtype=float)
    return [
        _result("multiclass_self_bound", spec, sb, loc, 1e-9),
        _result("multiclass_lipschitz", spec, lip, loc, 1e-9),
        _result("multiclass_smoothness", spec, sm, loc, 1e-6),
        _result("multiclass_convexity_midpoint", spec, mid, loc, 0.0),
        _result("multiclass_gradient_fd", spec, fd, loc, 0.0),
        check_multiclass_realizability(model, seed=seed),
    ]


def check_multiclass_realizability(model, eps=(1e-1, 1e-3, 1e-6), gamma=0.2, seed=0):
    """Multiclass: f(rho(eps) w*, x, y) <= eps on a sampled margin dataset."""
    from .data import sample_multiclass

    K = model.num_classes
    ds = sample_multiclass(max(3, K - 1), 200, min(gamma, 0.9 * np.sqrt(K) / (K - 1)), K, seed)
    v, loc = [], []
    for e in eps:
        r = max(math.log(K / e) / ds.margin_gamma, 1.0)
        worst = max(multiclass_loss_and_grad(r * ds.witness, x, y)[0] for x, y in zip(ds.instances, ds.labels))
        v.append(worst - e)
        loc.append(e)
    return _result("multiclass_realizability", {"eps": list(eps), "gamma": ds.margin_gamma, "K": K},
                   v, loc, 1e-12)


# ---------------------------------------------------------------------------
# erf sandwich and the second self-bound


def check_erf_sandwich(grid=None) -> PropertyCheckResult:
    """lower <= 1 - erf(y) <= upper, checked as relative excess.

    Positive y are compared in scaled form (erfcx against the bounds times
    e^{y^2}) so the deep tail does not underflow; negative y in the mirrored
    form 2 - upper(-y) <= erfc(y) <= 2 - lower(-y).
    """
    if grid is None:
        pos = np.linspace(0.8, 30.0, 2000)
        grid = np.concatenate([-pos[::-1], pos])
    y = np.asarray(grid, dtype=float)
    v = np.empty_like(y)
    p = y > 0
    lo, hi = erfcx_sandwich(y[p])
    ex = special.erfcx(y[p])
    v[p] = np.maximum((lo - ex) / ex, (ex - hi) / hi)
    lo_n, hi_n = erfc_sandwich(y[~p])
    e = special.erfc(y[~p])
    v[~p] = np.maximum(lo_n - e, e - hi_n) / e
    return _result("erf_sandwich", _grid_spec(y), v, y, 1e-12)


def check_erf_sandwich_low_regime(count=200) -> PropertyCheckResult:
    """0 < y <= 1/sqrt(2): the lower bound is <= 0 there, so only the upper bound is informative."""
    y = np.linspace(1e-3, 1 / math.sqrt(2), count)
    lo, hi = erfc_sandwich(y)
    e = special.erfc(y)
    v = np.maximum(lo - e, e - hi) / e
    return _result("erf_sandwich_low_regime", _grid_spec(y), v, y, 1e-12,
                   "lower bound non-positive below 1/sqrt(2): holds trivially")


def check_second_self_bound(model: Optional[LossModel] = None, grid=None, pairs=1000, dim=5, seed=0):
    """|l''| <= c |l'| and |l'| <= c l on margins, plus the lifted Hessian statement.

    Lifted: for f(w) = exp(-w . z) with ||z|| <= 1, ||hess f||_op <= c ||grad f||,
    with the Hessian built explicitly and its operator norm computed numerically.
    """
    model = make_loss("exponential") if model is None else model
    if model.family is not Family.EXPONENTIAL:
        raise ConfigError("the second self-bound audit is for the exponential loss")
    c = model.self_bound_c
    y = np.linspace(-10.0, 50.0, 2001) if grid is None else np.asarray(grid, dtype=float)
    # log|l''| = log|l'| = log l = -y for e^{-y}
    l2 = np.log(np.abs(model.second(y)))
    v1 = np.expm1(l2 - math.log(c) - model.log_neg_deriv(y))
    v2 = np.expm1(model.log_neg_deriv(y) - math.log(c) - model.log_value(y))
    rng = np.random.default_rng(seed)
    lifted = []
    for _ in range(pairs):
        w = rng.normal(scale=2.0, size=dim)
        z = rng.normal(size=dim)
        z *= rng.uniform() / np.linalg.norm(z)
        s = math.exp(-w @ z)
        hess = s * np.outer(z, z)
        grad = -s * z
        lifted.append(np.linalg.norm(hess, 2) / (c * np.linalg.norm(grad)) - 1.0)
    v = np.concatenate([v1, v2, lifted])
    loc = np.concatenate([y, y, np.full(pairs, np.nan)])
    return _result("second_self_bound", {"range": [float(y.min()), float(y.max())], "count": int(y.size),
                                         "lifted_pairs": pairs}, v, loc, 1e-9)


# ---------------------------------------------------------------------------
# suites


def check_assumption_suite(model: LossModel) -> List[PropertyCheckResult]:
    """Every grid check for the family; failures are results, not exceptions."""
    y = margin_grid()
    out = [
        check_self_bound(model, y),
        check_lipschitz(model, y),
        check_smoothness(model, y),
        check_convexity_second(model, y),
        check_convexity_midpoint(model),
        check_positive_decreasing(model, y),
        check_smooth_self_bound(model, y),
        check_grad_power(model, y),
        *check_derivatives(model),
        check_splice(model),
        check_realizability(model),
    ]
    if model.family is Family.PROBIT:
        out.append(check_probit_core(model))
    if model.family is Family.MULTICLASS:
        out.extend(check_multiclass_suite(model))
    if model.family is Family.EXPONENTIAL:
        out.append(check_second_self_bound(model))
    return out


ACCEPTANCE_FAMILIES = (
    [("logistic", {})]
    + [("polynomial", {"alpha": a}) for a in (0.5, 1, 2, 4)]
    + [("subexp", {"alpha": a}) for a in (0.25, 0.5, 0.9)]
    + [("superexp", {"alpha": a, "delta": d}) for a in (1, 2, 4) for d in (0.05, 0.25, 0.5)]
    + [("probit", {"delta": d}) for d in (0.1, 0.25, 0.5)]
    + [("multiclass", {"num_classes": k}) for k in (2, 5, 10)]
    + [("exponential", {})]
)


def full_audit():
    """Suite results for every family/parameter combination, keyed by a label."""
    report = {}
    for fam, kw in ACCEPTANCE_FAMILIES:
        label = fam + "".join(f" {k}={v}" for k, v in kw.items())
        report[label] = check_assumption_suite(make_loss(fam, **kw))
    report["erf_sandwich"] = [check_erf_sandwich(), check_erf_sandwich_low_regime()]
    return report


def results_to_json(results) -> str:
    return json.dumps([r.to_dict() for r in results], indent=2)
