"""Fixed-step GD and SGD on empirical risks, with trajectory recording.

Conventions: a run of ``T`` steps visits iterates ``w_1, ..., w_T`` (so it
applies ``T - 1`` updates).  GD outputs ``w_T``; SGD outputs the average
``(1/T) sum_t w_t``.  ``emp_risks`` and ``grad_norms`` hold the full-sample
``F(w_t)`` and ``||grad F(w_t)||`` for every t.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, DivergenceError, HypothesisViolation, InputError, RangeError, SizeError
from .losses import Family, LossModel, make_loss
from .data import LinearDataset, LooMember, as_risk

DIVERGENCE_FACTOR = 1e6


class Method(str, Enum):
    GD = "gd"
    SGD = "sgd"
    GD_ADAPTIVE_EXP = "gd_adaptive_exp"


@dataclass
class OptimizerConfig:
    method: Method = Method.GD
    step_eta: Union[float, str] = "auto"
    steps_T: int = 1000
    init_w1: Optional[np.ndarray] = None
    rng_seed: int = 0
    record_cadence: int = 0  # 0 picks roughly 100 snapshots
    allow_large_step: bool = False

    def __post_init__(self):
        self.method = Method(self.method)
        if int(self.steps_T) != self.steps_T or self.steps_T < 1:
            raise ConfigError("steps_T must be a positive integer")
        self.steps_T = int(self.steps_T)
        if isinstance(self.step_eta, str):
            if self.step_eta != "auto":
                raise ConfigError("step_eta must be a number or 'auto'")
        elif not (math.isfinite(self.step_eta) and self.step_eta >= 0):
            raise ConfigError("step_eta must be finite and >= 0")

    @property
    def cadence(self):
        return self.record_cadence if self.record_cadence > 0 else max(1, self.steps_T // 100)


def resolve_eta(config: OptimizerConfig, model: Optional[LossModel], initial_risk: float) -> float:
    """The numeric step size for a config, applying the 'auto' rules and the step cap."""
    if config.method is Method.GD_ADAPTIVE_EXP:
        c = 1.0 if model is None else model.self_bound_c
        cap = 1.0 / (c * c * initial_risk)
        if config.step_eta == "auto":
            return cap
        if config.step_eta > cap * (1 + 1e-12) and not config.allow_large_step:
            raise HypothesisViolation(f"eta={config.step_eta} exceeds 1/(c^2 F(w_1)) = {cap:.6g}")
        return float(config.step_eta)
    L = 2.0 if model is None else model.smoothness_L  # multiclass CE is 2-smooth
    if config.step_eta == "auto":
        if not math.isfinite(L):
            raise ConfigError("no automatic step for a non-smooth loss; use gd_adaptive_exp")
        return 1.0 / (2.0 * L)
    eta = float(config.step_eta)
    if eta > 1.0 / (2.0 * L) * (1 + 1e-12) and not config.allow_large_step:
        raise HypothesisViolation(f"eta={eta} exceeds 1/(2L) = {1.0 / (2.0 * L):.6g}")
    return eta


@dataclass
class Trajectory:
    eta: float
    iterate_steps: np.ndarray  # t values (1-based) of stored iterates
    iterates: np.ndarray
    emp_risks: np.ndarray
    grad_norms: np.ndarray
    w_norms: np.ndarray
    final_iterate: np.ndarray
    averaged_iterate: np.ndarray
    index_sequence: Optional[np.ndarray] = None
    method: Method = Method.GD
    extra: dict = field(default_factory=dict)

    @property
    def steps_T(self):
        return self.emp_risks.size

    @property
    def risk_sum(self):
        return float(self.emp_risks.sum())

    @property
    def output(self):
        """The model each theorem names: w_T for GD, the average for SGD."""
        return self.averaged_iterate if self.method is Method.SGD else self.final_iterate


class _Recorder:
    def __init__(self, T, dim, cadence):
        self.T, self.cadence = T, cadence
        self.risks = np.empty(T)
        self.gnorms = np.empty(T)
        self.wnorms = np.empty(T)
        self.steps, self.snaps = [], []
        self.total = np.zeros(dim)
        self.initial = None

    def record(self, t, w, risk, gnorm):
        if not math.isfinite(risk):
            raise DivergenceError(t, risk, self.initial if self.initial is not None else risk)
        if t == 1:
            self.initial = risk
        elif risk > DIVERGENCE_FACTOR * self.initial:
            raise DivergenceError(t, risk, self.initial)
        self.risks[t - 1] = risk
        self.gnorms[t - 1] = gnorm
        self.wnorms[t - 1] = np.linalg.norm(w)
        self.total += w
        if t == 1 or t == self.T or (t - 1) % self.cadence == 0:
            self.steps.append(t)
            self.snaps.append(w.copy())

    def finish(self, eta, w, method, index_sequence=None):
        return Trajectory(
            eta=eta,
            iterate_steps=np.array(self.steps),
            iterates=np.array(self.snaps),
            emp_risks=self.risks,
            grad_norms=self.gnorms,
            w_norms=self.wnorms,
            final_iterate=w.copy(),
            averaged_iterate=self.total / self.T,
            index_sequence=index_sequence,
            method=method,
        )


def _start(risk, config):
    if config.init_w1 is None:
        return np.zeros(risk.dim)
    w = np.array(config.init_w1, dtype=float)
    if w.shape != (risk.dim,):
        raise InputError(f"init_w1 must have shape ({risk.dim},)")
    return w


def _model_of(target, model):
    if model is None and isinstance(getattr(target, "model", None), LossModel):
        return target.model
    return model


def run_gd(target, model: Optional[LossModel], config: OptimizerConfig) -> Trajectory:
    """Full-batch GD: w_{t+1} = w_t - eta grad F(w_t)."""
    model = _model_of(target, model)
    risk = as_risk(target, model)
    w = _start(risk, config)
    T = config.steps_T
    value, grad = risk.value_and_grad(w)
    eta = resolve_eta(config, model, value)
    rec = _Recorder(T, risk.dim, config.cadence)
    for t in range(1, T + 1):
        rec.record(t, w, value, float(np.linalg.norm(grad)))
        if t < T:
            w = w - eta * grad
            value, grad = risk.value_and_grad(w)
    return rec.finish(eta, w, config.method)


def run_gd_adaptive_exp(target, config: OptimizerConfig) -> Trajectory:
    """GD on the exponential loss with eta <= 1/(c^2 F(w_1))."""
    if config.method is not Method.GD_ADAPTIVE_EXP:
        config = OptimizerConfig(**{**config.__dict__, "method": Method.GD_ADAPTIVE_EXP})
    if isinstance(getattr(target, "model", None), LossModel) and target.model.family is not Family.EXPONENTIAL:
        raise ConfigError("the adaptive rule is defined for the exponential loss")
    return run_gd(as_risk(target, make_loss("exponential")), make_loss("exponential"), config)


def index_stream(n, T, seed):
    """SGD indices: uniform on 0..n-1 with replacement, length T."""
    return np.random.default_rng(seed).integers(0, n, size=T)


def run_sgd(target, model: Optional[LossModel], config: OptimizerConfig,
            shared_index_stream: Optional[Sequence[int]] = None) -> Trajectory:
    """SGD w_{t+1} = w_t - eta grad f(w_t, z_{i_t}); a sentinel index is a no-op step."""
    model = _model_of(target, model)
    risk = as_risk(target, model)
    if risk.n < 1:
        raise SizeError("n >= 1 required")
    T = config.steps_T
    if shared_index_stream is None:
        stream = index_stream(risk.n, T, config.rng_seed)
    else:
        stream = np.asarray(shared_index_stream, dtype=int)
        if stream.size < T:
            raise SizeError(f"index stream has {stream.size} entries, need {T}")
        if stream.min() < 0 or stream.max() >= risk.n:
            raise InputError("index stream entries must lie in 0..n-1")
        stream = stream[:T].copy()
    w = _start(risk, config)
    value, grad = risk.value_and_grad(w)
    eta = resolve_eta(config, model, value)
    rec = _Recorder(T, risk.dim, config.cadence)
    for t in range(1, T + 1):
        rec.record(t, w, value, float(np.linalg.norm(grad)))
        if t < T:
            w = w - eta * risk.example_grad(w, stream[t - 1])
            value, grad = risk.value_and_grad(w)
    return rec.finish(eta, w, Method.SGD, stream)


# ---------------------------------------------------------------------------
# stacked leave-one-out runs


@dataclass
class StackedRuns:
    """Final (GD) or averaged (SGD) outputs of the run on S and on every S_i.

    ``outputs[0]`` is the full-sample run and ``outputs[i + 1]`` the run on S_i.
    ``trajectory`` describes the full-sample run.
    """

    outputs: np.ndarray
    trajectory: Trajectory
    nonexpansive_excess: float = 0.0


def _loo_mask(n):
    mask = np.ones((n + 1, n))
    mask[np.arange(1, n + 1), np.arange(n)] = 0.0
    return mask


def run_gd_stacked(dataset: LinearDataset, model: LossModel, config: OptimizerConfig,
                   check_nonexpansive: bool = False) -> StackedRuns:
    """GD on S and all n LOO samples at once (one matrix product per step).

    Row r of the keep mask is 1 on the examples run r sees and 0 on its
    sentinel slot, so each row follows exactly the single-run recurrence.
    With ``check_nonexpansive`` the largest excess of
    ``||(w_t - eta g_i) - (w_t^i - eta g'_i)|| - ||w_t - w_t^i||`` over all
    steps and members is returned, where both gradients are of F_i.
    """
    Z = dataset.signed_instances
    n, d = Z.shape
    if n < 2:
        raise SizeError("leave-one-out needs n >= 2")
    kernel = model.kernel
    mask = _loo_mask(n)
    T = config.steps_T
    W = np.zeros((n + 1, d)) if config.init_w1 is None else np.tile(np.asarray(config.init_w1, float), (n + 1, 1))
    M = W @ Z.T
    D = kernel.d1(M) * mask
    value = float(mask[0] @ kernel.value(M[0])) / n
    eta = resolve_eta(config, model, value)
    rec = _Recorder(T, d, config.cadence)
    excess = -np.inf
    for t in range(1, T + 1):
        G = D @ Z / n
        rec.record(t, W[0], value, float(np.linalg.norm(G[0])))
        if t == T:
            break
        W_next = W - eta * G
        if check_nonexpansive:
            # gradient of F_i at w_t: full gradient minus the i-th term
            own = D[0][:, None] * Z / n  # (n, d): (1/n) l'(w_t . z_i) z_i
            g_i = G[0][None, :] - own
            before = np.linalg.norm(W[0][None, :] - W[1:], axis=1)
            after = np.linalg.norm((W[0][None, :] - eta * g_i) - W_next[1:], axis=1)
            excess = max(excess, float(np.max(after - before)))
        W = W_next
        M = W @ Z.T
        D = kernel.d1(M) * mask
        value = float(mask[0] @ kernel.value(M[0])) / n
    traj = rec.finish(eta, W[0], config.method)
    return StackedRuns(W.copy(), traj, excess if check_nonexpansive else 0.0)


def run_sgd_stacked(dataset: LinearDataset, model: LossModel, config: OptimizerConfig,
                    stream: Sequence[int]) -> StackedRuns:
    """Coupled SGD on S and every S_i driven by one index stream."""
    Z = dataset.signed_instances
    n, d = Z.shape
    if n < 2:
        raise SizeError("leave-one-out needs n >= 2")
    T = config.steps_T
    stream = np.asarray(stream, dtype=int)
    if stream.size < T:
        raise SizeError(f"index stream has {stream.size} entries, need {T}")
    kernel = model.kernel
    W = np.zeros((n + 1, d)) if config.init_w1 is None else np.tile(np.asarray(config.init_w1, float), (n + 1, 1))
    total = np.zeros_like(W)
    m0 = Z @ W[0]
    value = float(kernel.value(m0).mean())
    eta = resolve_eta(config, model, value)
    rec = _Recorder(T, d, config.cadence)
    for t in range(1, T + 1):
        grad0 = (kernel.d1(m0) / n) @ Z
        rec.record(t, W[0], value, float(np.linalg.norm(grad0)))
        total += W
        if t == T:
            break
        k = stream[t - 1]
        coef = kernel.d1(W @ Z[k])
        coef[k + 1] = 0.0  # run S_k sees the sentinel
        W = W - eta * coef[:, None] * Z[k][None, :]
        m0 = Z @ W[0]
        value = float(kernel.value(m0).mean())
    traj = rec.finish(eta, W[0], Method.SGD, stream[:T].copy())
    return StackedRuns(total / T, traj)


# ---------------------------------------------------------------------------
# one-dimensional lower-bound construction


@dataclass
class LowerBoundTrace:
    alpha: float
    eta: float
    floor_constant: float
    t: np.ndarray
    risk: np.ndarray
    floor: np.ndarray
    upper_envelope: np.ndarray

    @property
    def floor_violations(self):
        return int(np.count_nonzero(self.risk < self.floor))

    @property
    def envelope_violations(self):
        return int(np.count_nonzero(self.risk > self.upper_envelope))


def lower_bound_constant(alpha):
    """a = (a(a+1))^{-(a+1)a/(a+2)} (2(a+2)/(a+1))^{-a} for tail exponent alpha."""
    a = alpha
    return (a * (a + 1)) ** (-(a + 1) * a / (a + 2)) * (2 * (a + 2) / (a + 1)) ** (-a)


def lower_bound_run(alpha, T) -> LowerBoundTrace:
    """1-D GD on the completed tail (1+w)^{-alpha} from w_1 = 0 with eta = 1/(alpha(alpha+1))."""
    if not alpha >= 1:
        raise RangeError("the lower-bound construction needs alpha >= 1")
    if int(T) != T or T < 1:
        raise ConfigError("T must be a positive integer")
    loss = make_loss("polynomial", alpha=alpha)
    eta = 1.0 / (alpha * (alpha + 1))
    kern = loss.kernel
    ws = np.empty(int(T))
    w = 0.0
    # iterates stay in w >= 0, on the tail branch where l'(w) = -alpha (1+w)^{-alpha-1}
    for i in range(int(T)):
        ws[i] = w
        w = w + eta * alpha * (1.0 + w) ** (-alpha - 1.0)
    t = np.arange(1, int(T) + 1, dtype=float)
    a = lower_bound_constant(alpha)
    expo = alpha / (alpha + 2)
    return LowerBoundTrace(
        alpha=float(alpha), eta=eta, floor_constant=a, t=t,
        risk=kern.value(ws), floor=a * t ** (-expo),
        upper_envelope=(alpha * (alpha + 1) / t) ** expo,
    )


# ---------------------------------------------------------------------------
# export


def write_trajectory_csv(traj: Trajectory, path, test_loss=None, zero_one_error=None):
    """Columns t, emp_risk, grad_norm, w_norm [, test_loss, zero_one_error]."""
    cols = ["t", "emp_risk", "grad_norm", "w_norm"]
    extra = []
    if test_loss is not None:
        cols.append("test_loss")
        extra.append(np.asarray(test_loss))
    if zero_one_error is not None:
        cols.append("zero_one_error")
        extra.append(np.asarray(zero_one_error))
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(cols)
        for i in range(traj.steps_T):
            row = [i + 1, traj.emp_risks[i], traj.grad_norms[i], traj.w_norms[i]] + [e[i] for e in extra]
            out.writerow([row[0]] + [format(float(v), ".17g") for v in row[1:]])
