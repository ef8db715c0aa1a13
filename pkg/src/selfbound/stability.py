"""On-average leave-one-out model stability: measurement and theoretical bounds.

For an algorithm A and sample S, with S_i the sample whose i-th point is
replaced by the zero-loss sentinel,

    l1 = (1/n) sum_i ||A(S) - A(S_i)||,    l2 = (1/n) sum_i ||A(S) - A(S_i)||^2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, SizeError
from .losses import LossModel, make_loss
from .data import LinearDataset
from .optim import Method, OptimizerConfig, run_gd_stacked, run_sgd_stacked
from .seeding import derive_rng


def gd_l1_bound(c, delta, eta, T, n, risk_sum):
    """(c eta T^delta / n) (sum_t F(w_t))^{1-delta}."""
    return c * eta * T ** delta / n * risk_sum ** (1 - delta)


def gd_l2_bound(c, delta, eta, T, n, risk_sum):
    """(c^2 eta^2 T^{2 delta} / n^{1 + 2 delta}) (sum_t F(w_t))^{2(1-delta)}."""
    return c * c * eta * eta * T ** (2 * delta) / n ** (1 + 2 * delta) * risk_sum ** (2 * (1 - delta))


def sgd_l1_bound(c, delta, eta, T, n, risk_sum):
    """Same form as the GD bound, for the averaged iterate."""
    return gd_l1_bound(c, delta, eta, T, n, risk_sum)


def exp_adaptive_l1_bound(eta, c, n, risk_sum):
    """(eta c / n) sum_t F(w_t) for GD on the exponential loss."""
    return eta * c / n * risk_sum


def _ratio(a, b):
    if b is None or a is None:
        return None
    return a / b if b > 0 else math.inf


@dataclass
class StabilityReport:
    empirical_l1: float
    empirical_l2: float
    bound_l1: float
    bound_l2: Optional[float]
    risk_sum: float
    replicates: int
    stderr_l1: Optional[float] = None
    stderr_l2: Optional[float] = None
    method: str = "gd"
    n: int = 0
    steps_T: int = 0
    eta: float = 0.0
    self_bound_c: float = 1.0
    self_bound_delta: float = 0.0

    @property
    def ratio_l1(self):
        return _ratio(self.empirical_l1, self.bound_l1)

    @property
    def ratio_l2(self):
        return _ratio(self.empirical_l2, self.bound_l2)

    def to_dict(self):
        return {
            "empirical_l1": self.empirical_l1,
            "empirical_l2": self.empirical_l2,
            "bound_l1": self.bound_l1,
            "bound_l2": self.bound_l2,
            "ratio_l1": self.ratio_l1,
            "ratio_l2": self.ratio_l2,
            "risk_sum": self.risk_sum,
            "replicates": self.replicates,
            "stderr_l1": self.stderr_l1,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def _distances(outputs):
    dist = np.linalg.norm(outputs[1:] - outputs[0], axis=1)
    return float(dist.mean()), float((dist ** 2).mean())


def _check(dataset):
    if dataset.n < 2:
        raise SizeError("leave-one-out stability needs n >= 2")


def empirical_stability_gd(dataset: LinearDataset, model: LossModel,
                           config: OptimizerConfig) -> StabilityReport:
    """GD once on S and once per S_i; compares final iterates w_T."""
    _check(dataset)
    runs = run_gd_stacked(dataset, model, config)
    l1, l2 = _distances(runs.outputs)
    traj = runs.trajectory
    n, T, eta = dataset.n, config.steps_T, traj.eta
    c, delta = model.self_bound_c, model.self_bound_delta
    S = traj.risk_sum
    return StabilityReport(
        empirical_l1=l1, empirical_l2=l2,
        bound_l1=gd_l1_bound(c, delta, eta, T, n, S),
        bound_l2=gd_l2_bound(c, delta, eta, T, n, S),
        risk_sum=S, replicates=1, method="gd", n=n, steps_T=T, eta=eta,
        self_bound_c=c, self_bound_delta=delta,
    )


def sgd_replicate_stream(seed, replicate, n, T):
    return derive_rng(seed, "sgd-stream", replicate).integers(0, n, size=T)


def empirical_stability_sgd(dataset: LinearDataset, model: LossModel, config: OptimizerConfig,
                            replicates: int, seed: Optional[int] = None) -> StabilityReport:
    """Coupled SGD: each replicate shares one index stream across S and every S_i.

    The standard errors are across replicates and are ``None`` for R = 1.
    """
    _check(dataset)
    if int(replicates) != replicates or replicates < 1:
        raise ConfigError("replicates must be a positive integer")
    seed = config.rng_seed if seed is None else seed
    config = OptimizerConfig(**{**config.__dict__, "method": Method.SGD})
    n, T = dataset.n, config.steps_T
    l1s, l2s, sums = [], [], []
    eta = None
    for r in range(int(replicates)):
        runs = run_sgd_stacked(dataset, model, config, sgd_replicate_stream(seed, r, n, T))
        l1, l2 = _distances(runs.outputs)
        l1s.append(l1)
        l2s.append(l2)
        sums.append(runs.trajectory.risk_sum)
        eta = runs.trajectory.eta
    R = len(l1s)
    se = (lambda v: float(np.std(v, ddof=1) / np.sqrt(R))) if R > 1 else (lambda v: None)
    c, delta = model.self_bound_c, model.self_bound_delta
    S = float(np.mean(sums))
    return StabilityReport(
        empirical_l1=float(np.mean(l1s)), empirical_l2=float(np.mean(l2s)),
        bound_l1=sgd_l1_bound(c, delta, eta, T, n, S), bound_l2=None,
        risk_sum=S, replicates=R, stderr_l1=se(l1s), stderr_l2=se(l2s),
        method="sgd", n=n, steps_T=T, eta=eta, self_bound_c=c, self_bound_delta=delta,
    )


def empirical_stability_exp_adaptive(dataset: LinearDataset, config: OptimizerConfig,
                                     return_runs: bool = False):
    """GD on the exponential loss with the adaptive step; bound (eta c / n) sum_t F(w_t)."""
    _check(dataset)
    model = make_loss("exponential")
    config = OptimizerConfig(**{**config.__dict__, "method": Method.GD_ADAPTIVE_EXP})
    runs = run_gd_stacked(dataset, model, config, check_nonexpansive=True)
    l1, l2 = _distances(runs.outputs)
    traj = runs.trajectory
    report = StabilityReport(
        empirical_l1=l1, empirical_l2=l2,
        bound_l1=exp_adaptive_l1_bound(traj.eta, model.self_bound_c, dataset.n, traj.risk_sum),
        bound_l2=None, risk_sum=traj.risk_sum, replicates=1, method="gd_adaptive_exp",
        n=dataset.n, steps_T=config.steps_T, eta=traj.eta,
        self_bound_c=model.self_bound_c, self_bound_delta=0.0,
    )
    return (report, runs) if return_runs else report


@dataclass
class GapBounds:
    """Stability-to-generalization conversions.

    ``lipschitz_gap``: E[F - F_hat] <= 2 G l1.
    ``smooth_additive``: E[F] <= 4 E[F_hat] + 3 L l2 (a multiplicative 4 on the
    training term, so this is not a bound on F - F_hat).
    The ``*_theory`` fields use the theorem bounds in place of measured stability.
    """

    lipschitz_gap: Optional[float]
    smooth_additive: Optional[float]
    lipschitz_gap_theory: Optional[float]
    smooth_additive_theory: Optional[float]
    train_multiplier: float = 4.0
    note: str = ""


def generalization_gap_bounds(report: StabilityReport, model: LossModel) -> GapBounds:
    notes = []
    G, L = model.lipschitz_G, model.smoothness_L
    if math.isfinite(G):
        lip = 2 * G * report.empirical_l1
        lip_t = 2 * G * report.bound_l1
    else:
        lip = lip_t = None
        notes.append("loss is not Lipschitz: no Lipschitz-form gap")
    if math.isfinite(L):
        sm = 3 * L * report.empirical_l2
        sm_t = None if report.bound_l2 is None else 3 * L * report.bound_l2
    else:
        sm = sm_t = None
        notes.append("loss is not smooth: no smooth-form bound")
    return GapBounds(lip, sm, lip_t, sm_t, 4.0, "; ".join(notes))


__all__ = [
    "StabilityReport", "GapBounds", "empirical_stability_gd", "empirical_stability_sgd",
    "empirical_stability_exp_adaptive", "generalization_gap_bounds", "gd_l1_bound",
    "gd_l2_bound", "sgd_l1_bound", "exp_adaptive_l1_bound",
]
