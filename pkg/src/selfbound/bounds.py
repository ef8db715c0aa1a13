"""Explicit optimization and generalization bounds, epsilon selection, rate curves.

All bounds are the explicit inequalities (no hidden constants).  With
rho = rho(eps):

    opt GD     rho^2/(eta T) + eps
    opt SGD    rho^2/(2 eta T) + eps
    gen GD, Lipschitz   (rho^2/(eta T) + eps) + (2 eta T^delta G c / n) (rho^2/eta + eps T)^{1-delta}
    gen GD, smooth      4 (rho^2/(eta T) + eps)
                        + (3 L c^2 eta^2 T^{2 delta} / n^{1+2 delta}) (rho^2/eta + eps T)^{2(1-delta)}
    gen SGD             (rho^2/(2 eta T) + eps) + (2 eta G c T^delta / n) (rho^2/eta + eps T)^{1-delta}

The generalization bounds require eps <= rho^2/(eta T).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, HypothesisViolation, InputError
from .losses import Family, LossModel, parse_family, rho, with_delta


def _check_common(eta, T, epsilon):
    if not (math.isfinite(epsilon) and epsilon > 0):
        raise InputError("epsilon must be positive")
    if not eta > 0:
        raise InputError("eta must be positive")
    if not T >= 1:
        raise InputError("T must be >= 1")


def hypothesis_holds(rho_eps, eta, T, epsilon):
    """The theorem condition eps <= rho(eps)^2 / (eta T)."""
    return epsilon <= rho_eps ** 2 / (eta * T)


def _require_hypothesis(rho_eps, eta, T, epsilon):
    if not hypothesis_holds(rho_eps, eta, T, epsilon):
        raise HypothesisViolation(
            f"hypothesis eps <= rho(eps)^2/(eta T) fails: eps={epsilon:.6g} > {rho_eps ** 2 / (eta * T):.6g}")


# ---------------------------------------------------------------------------
# plug-in arithmetic (rho given)


def opt_terms(rho_eps, eta, T, epsilon, sgd=False):
    return rho_eps ** 2 / ((2.0 if sgd else 1.0) * eta * T) + epsilon


def lipschitz_stability_term(rho_eps, eta, T, n, epsilon, G, c, delta):
    return 2 * eta * T ** delta * G * c / n * (rho_eps ** 2 / eta + epsilon * T) ** (1 - delta)


def smooth_stability_term(rho_eps, eta, T, n, epsilon, L, c, delta):
    return (3 * L * c * c * eta * eta * T ** (2 * delta) / n ** (1 + 2 * delta)
            * (rho_eps ** 2 / eta + epsilon * T) ** (2 * (1 - delta)))


def gen_bound_gd_terms(rho_eps, eta, T, n, epsilon, G, L, c, delta, check_hypothesis=True):
    """(lipschitz_form, smooth_form) from plug-in constants; None where G or L is infinite."""
    _check_common(eta, T, epsilon)
    if check_hypothesis:
        _require_hypothesis(rho_eps, eta, T, epsilon)
    opt = opt_terms(rho_eps, eta, T, epsilon)
    lip = opt + lipschitz_stability_term(rho_eps, eta, T, n, epsilon, G, c, delta) if math.isfinite(G) else None
    smooth = (4 * opt + smooth_stability_term(rho_eps, eta, T, n, epsilon, L, c, delta)
              if math.isfinite(L) else None)
    return lip, smooth


def gen_bound_sgd_terms(rho_eps, eta, T, n, epsilon, G, c, delta, check_hypothesis=True):
    _check_common(eta, T, epsilon)
    if check_hypothesis:
        _require_hypothesis(rho_eps, eta, T, epsilon)
    if not math.isfinite(G):
        raise ConfigError("the SGD bound needs a Lipschitz loss")
    return opt_terms(rho_eps, eta, T, epsilon, sgd=True) + lipschitz_stability_term(
        rho_eps, eta, T, n, epsilon, G, c, delta)


# ---------------------------------------------------------------------------
# model-level bounds


def opt_bound_gd(model: LossModel, gamma, eta, T, epsilon):
    _check_common(eta, T, epsilon)
    return opt_terms(rho(model, epsilon, gamma), eta, T, epsilon)


def opt_bound_sgd(model: LossModel, gamma, eta, T, epsilon):
    _check_common(eta, T, epsilon)
    return opt_terms(rho(model, epsilon, gamma), eta, T, epsilon, sgd=True)


def gen_bound_gd(model: LossModel, gamma, eta, T, n, epsilon):
    """(lipschitz_form, smooth_form); a form is None when its constant is infinite."""
    k = model.constants
    return gen_bound_gd_terms(rho(model, epsilon, gamma), eta, T, n, epsilon, k.G, k.L, k.c, k.delta)


def gen_bound_sgd(model: LossModel, gamma, eta, T, n, epsilon):
    k = model.constants
    if not math.isfinite(k.G):
        raise ConfigError(f"{model.family.value} is not Lipschitz; the SGD bound is unavailable")
    return gen_bound_sgd_terms(rho(model, epsilon, gamma), eta, T, n, epsilon, k.G, k.c, k.delta)


# ---------------------------------------------------------------------------
# epsilon selection


@dataclass
class EpsilonChoice:
    epsilon: float
    delta: Optional[float] = None
    mode: str = "corollary"


def corollary_delta(family, T):
    """Paired delta for families whose self-bounding constant depends on it."""
    fam = parse_family(family)
    if fam is Family.SUPEREXP:
        return 1.0 / math.log(T)
    if fam is Family.PROBIT:
        return 1.0 / (2.0 * math.log(T))
    return None


def _shrink_to_hypothesis(model, gamma, eta, T, eps):
    """Largest eps' <= eps with eps' <= rho(eps')^2/(eta T)."""
    gap = lambda e: rho(model, e, gamma) ** 2 / (eta * T) - e
    if gap(eps) >= 0:
        return eps
    lo = eps
    while gap(lo) < 0:
        lo /= 2.0
    return brentq(gap, lo, eps, xtol=1e-300, rtol=1e-14) * (1 - 1e-12)


def _corollary_epsilon(model, gamma, eta, T):
    fam = model.family
    if fam is Family.POLYNOMIAL:
        # balances rho^2/(eta T) = eps^{-2/alpha}/(gamma^2 eta T) against eps
        a = model.alpha
        return _shrink_to_hypothesis(model, gamma, eta, T, (gamma * gamma * eta * T) ** (-a / (a + 2)))
    if fam in (Family.SUBEXP, Family.SUPEREXP):
        return model.alpha / T
    return 1.0 / T


def applicable_bound(model, gamma, eta, T, epsilon, n=None):
    """The bound grid_min minimises: generalization when n is given, else optimization."""
    if n is None:
        return opt_bound_gd(model, gamma, eta, T, epsilon)
    lip, smooth = gen_bound_gd(model, gamma, eta, T, n, epsilon)
    return lip if lip is not None else smooth


def select_epsilon(model: LossModel, gamma, eta, T, mode="corollary", n=None) -> EpsilonChoice:
    """Epsilon for the bounds; the paired delta is returned for superexp/probit.

    ``grid_min`` searches 100 log-spaced values in [1/T^2, l(0)] (plus the
    corollary value) that satisfy the hypothesis.
    """
    if T < 2:
        raise InputError("T >= 2 required")
    delta = corollary_delta(model.family, T)
    if delta is not None:
        model = with_delta(model, min(delta, 0.5))
    cor = _corollary_epsilon(model, gamma, eta, T)
    if mode == "corollary":
        return EpsilonChoice(cor, delta, "corollary")
    if mode not in ("grid", "grid_min"):
        raise ConfigError(f"unknown epsilon mode {mode!r}")
    top = float(model.value(0.0))
    grid = list(np.geomspace(1.0 / T ** 2, top, 100)) + [cor]
    best, best_val = None, math.inf
    for e in grid:
        if not hypothesis_holds(rho(model, e, gamma), eta, T, e):
            continue
        v = applicable_bound(model, gamma, eta, T, e, n)
        if v is not None and v < best_val:
            best, best_val = float(e), v
    if best is None:
        raise HypothesisViolation("no epsilon on the grid satisfies the hypothesis")
    return EpsilonChoice(best, delta, "grid_min")


# ---------------------------------------------------------------------------
# evaluation record


@dataclass
class BoundEvaluation:
    epsilon_choice: float
    rho_eps: float
    opt_bound: float
    gen_bound_lipschitz: Optional[float]
    gen_bound_smooth: Optional[float]
    constants: dict
    measured_train: Optional[float] = None
    measured_test: Optional[float] = None
    measured_test_stderr: Optional[float] = None
    measured_zero_one: Optional[float] = None
    gen_bound_sgd: Optional[float] = None
    notes: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def evaluate_bounds(model: LossModel, gamma, eta, T, n, epsilon, sgd=False) -> BoundEvaluation:
    r = rho(model, epsilon, gamma)
    _require_hypothesis(r, eta, T, epsilon)
    k = model.constants
    lip, smooth = gen_bound_gd(model, gamma, eta, T, n, epsilon)
    notes = []
    if lip is None:
        notes.append("Lipschitz form unavailable (G unbounded)")
    if smooth is None:
        notes.append("smooth form unavailable (L unbounded)")
    else:
        notes.append("smooth form bounds E[F] with a factor 4 on the training term")
    sgd_bound = gen_bound_sgd(model, gamma, eta, T, n, epsilon) if sgd and lip is not None else None
    const = {"G": k.G, "L": k.L, "c": k.c, "delta": k.delta, "eta": eta, "T": T, "n": n, "gamma": gamma}
    const = {key: (None if isinstance(v, float) and math.isinf(v) else v) for key, v in const.items()}
    return BoundEvaluation(
        epsilon_choice=epsilon, rho_eps=r,
        opt_bound=(opt_bound_sgd if sgd else opt_bound_gd)(model, gamma, eta, T, epsilon),
        gen_bound_lipschitz=lip, gen_bound_smooth=smooth, constants=const,
        gen_bound_sgd=sgd_bound, notes=notes,
    )


# ---------------------------------------------------------------------------
# rate curves (big-O constants set to 1; shapes only, not bounds)


def _rate_terms(fam, gamma, T, n, alpha=None, K=None):
    g2 = gamma * gamma
    if fam is Family.LOGISTIC or fam is Family.EXPONENTIAL:
        return 1 / (g2 * T), 1 / (g2 * n)
    if fam is Family.MULTICLASS:
        lk = math.log(K) ** 2
        return lk / (g2 * T), lk / (g2 * n)
    if fam is Family.POLYNOMIAL:
        pre = (alpha / gamma) ** (2 * alpha / (2 + alpha))
        return pre * T ** (-alpha / (2 + alpha)), pre * T ** (2 / (2 + alpha)) / n
    if fam is Family.SUBEXP:
        return 1 / (g2 * T), alpha * alpha / (g2 * n)
    if fam is Family.SUPEREXP:
        return alpha * alpha / (g2 * T), alpha * alpha / (g2 * n)
    if fam is Family.PROBIT:
        return 1 / (g2 * T), 1 / (g2 * g2 * n)
    raise ConfigError(f"no rate for {fam}")


def table_rate_curves(family, gamma, axis, values: Sequence[int], fixed=None, alpha=None, K=None):
    """Rows {sweep_var, value, term1, term2, rate} of the tabulated rate ("rate curve, not bound").

    ``axis`` is "T" (n = fixed), "n" (T = fixed) or "T=n".  For polynomial
    tails each row also carries ``optimum_T``: the T = n marker.
    """
    fam = parse_family(family)
    if not values:
        raise ConfigError("empty sweep")
    if axis not in ("T", "n", "T=n"):
        raise ConfigError(f"unknown sweep axis {axis!r}")
    rows = []
    for v in values:
        if int(v) != v or v < 1:
            raise ConfigError("sweep values must be positive integers")
        T, n = {"T": (v, fixed), "n": (fixed, v), "T=n": (v, v)}[axis]
        t1, t2 = _rate_terms(fam, gamma, T, n, alpha, K)
        row = {"sweep_var": axis, "value": int(v), "term1": t1, "term2": t2, "rate": t1 + t2,
               "label": "rate curve, not bound"}
        if fam is Family.POLYNOMIAL:
            row["optimum_T"] = n
        rows.append(row)
    return rows


SWEEP_COLUMNS = ("sweep_var", "value", "bound_term1", "bound_term2", "measured", "stderr")


def write_sweep_csv(rows, path):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(SWEEP_COLUMNS)
        for r in rows:
            out.writerow([r["sweep_var"], r["value"]] + [
                "" if r.get(k) is None else format(float(r[k]), ".17g")
                for k in ("bound_term1", "bound_term2", "measured", "stderr")])
