"""Command-line harness.

Exit codes: 0 when every asserted inequality holds, 2 when one fails,
1 for usage or configuration errors.  Each run writes ``config.json`` (the
resolved configuration plus a sha256 of it) into ``--out``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from . import audit, bounds
from .data import population_sample_stats, sample_dataset, sample_multiclass
from .errors import (ConfigError, DivergenceError, HypothesisViolation, InfeasibleMarginError, InputError,
                     RangeError, ShapeError, SizeError)
from .losses import Family, make_loss, parse_family
from .optim import (Method, OptimizerConfig, lower_bound_run, run_gd, run_gd_adaptive_exp, run_sgd,
                    write_trajectory_csv)
from .seeding import derive_seed_sequence
from .stability import (empirical_stability_exp_adaptive, empirical_stability_gd, empirical_stability_sgd,
                        generalization_gap_bounds)

EXIT_OK, EXIT_CONFIG, EXIT_VIOLATION = 0, 1, 2
_CONFIG_ERRORS = (ConfigError, InputError, RangeError, ShapeError, SizeError, InfeasibleMarginError,
                  HypothesisViolation)


@dataclass
class ExperimentConfig:
    loss: str = "logistic"
    alpha: Optional[float] = None
    classes: Optional[int] = None
    delta: Optional[float] = None
    gamma: float = 0.25
    dim: int = 20
    n: int = 32
    T: int = 1000
    eta: Union[float, str] = "auto"
    method: Optional[str] = None
    epsilon_mode: str = "corollary"
    replicates: int = 20
    test_size: int = 100_000
    seed: int = 0
    out: str = "out"
    workers: int = 1
    axis: Optional[str] = None
    values: List[float] = field(default_factory=list)

    def loss_model(self, delta=None):
        return make_loss(self.loss, alpha=self.alpha, num_classes=self.classes,
                         delta=self.delta if delta is None else delta)

    def to_dict(self):
        return dataclasses.asdict(self)

    def content_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def _sub_seed(seed, name):
    return int(derive_seed_sequence(seed, name).generate_state(1, dtype=np.uint64)[0])


def _eta_arg(text):
    if text == "auto":
        return "auto"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("eta must be a number or 'auto'")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with configuration fields; flags override it")
    common.add_argument("--loss")
    common.add_argument("--alpha", type=float)
    common.add_argument("--classes", type=int)
    common.add_argument("--delta", type=float)
    common.add_argument("--gamma", type=float)
    common.add_argument("--dim", type=int)
    common.add_argument("--n", type=int)
    common.add_argument("--T", type=int)
    common.add_argument("--eta", type=_eta_arg)
    common.add_argument("--method", choices=[m.value for m in Method])
    common.add_argument("--epsilon-mode", dest="epsilon_mode", choices=["corollary", "grid"])
    common.add_argument("--replicates", type=int)
    common.add_argument("--test-size", dest="test_size", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--out")
    common.add_argument("--workers", type=int)
    parser = argparse.ArgumentParser(prog="selfbound", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("verify-loss", parents=[common], help="audit the loss assumptions")
    sub.add_parser("run-gd", parents=[common], help="train with GD and evaluate bounds")
    sub.add_parser("run-sgd", parents=[common], help="train with SGD and evaluate bounds")
    sub.add_parser("stability", parents=[common], help="empirical LOO stability against the bounds")
    sub.add_parser("genbound", parents=[common], help="evaluate the explicit bounds only")
    sub.add_parser("lowerbound", parents=[common], help="1-D lower-bound construction trace")
    sweep = sub.add_parser("sweep", parents=[common], help="measured test loss along one axis")
    sweep.add_argument("--axis", choices=["T", "n", "alpha"])
    sweep.add_argument("--values", type=float, nargs="*")
    return parser


def resolve_config(args) -> ExperimentConfig:
    base = {}
    if getattr(args, "config", None):
        try:
            base = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}")
        known = {f.name for f in dataclasses.fields(ExperimentConfig)}
        unknown = set(base) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    for f in dataclasses.fields(ExperimentConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            base[f.name] = v
    cfg = ExperimentConfig(**base)
    if cfg.values:
        cfg.values = [int(v) if float(v).is_integer() and cfg.axis != "alpha" else float(v) for v in cfg.values]
    return cfg


# ---------------------------------------------------------------------------
# helpers


def _prepare_out(cfg: ExperimentConfig, command):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    echo = {"command": command, "config": cfg.to_dict(), "input_hash": cfg.content_hash()}
    (out / "config.json").write_text(json.dumps(echo, indent=2, sort_keys=True))
    return out


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, default=_json_default))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _clean(x):
    return None if isinstance(x, float) and not math.isfinite(x) else x


def _dataset(cfg):
    if parse_multiclass(cfg):
        return sample_multiclass(cfg.dim, cfg.n, cfg.gamma, cfg.classes, cfg.seed)
    return sample_dataset(cfg.dim, cfg.n, cfg.gamma, cfg.seed)


def parse_multiclass(cfg):
    return make_loss_family(cfg) is Family.MULTICLASS


def make_loss_family(cfg):
    return parse_family(cfg.loss)


def _model_for_run(cfg, method):
    fam = make_loss_family(cfg)
    delta = cfg.delta
    if delta is None and fam in (Family.SUPEREXP, Family.PROBIT):
        delta = bounds.corollary_delta(fam, max(cfg.T, 3))
        delta = min(delta, 0.5)
    model = cfg.loss_model(delta)
    if method is Method.SGD and not model.is_lipschitz:
        raise ConfigError(f"{fam.value} is not Lipschitz; the SGD bound does not apply")
    return model


def _method(cfg, default):
    m = Method(cfg.method) if cfg.method else default
    if make_loss_family(cfg) is Family.EXPONENTIAL and m is Method.GD:
        m = Method.GD_ADAPTIVE_EXP
    return m


def _eta_value(cfg, model, method):
    if cfg.eta != "auto":
        return float(cfg.eta)
    if method is Method.GD_ADAPTIVE_EXP:
        return 1.0  # 1/(c^2 F(0)) for the exponential loss from w_1 = 0
    return 1.0 / (2.0 * model.smoothness_L)


# ---------------------------------------------------------------------------
# commands


def cmd_verify_loss(cfg):
    out = _prepare_out(cfg, "verify-loss")
    model = cfg.loss_model()
    results = audit.check_assumption_suite(model)
    (out / "audit.json").write_text(audit.results_to_json(results))
    failed = [r.property_name for r in results if not r.passed]
    print(json.dumps({"family": model.family.value, "checks": len(results), "failed": failed}))
    return EXIT_OK if not failed else EXIT_VIOLATION


def _run(cfg, method):
    command = "run-sgd" if method is Method.SGD else "run-gd"
    model = _model_for_run(cfg, method)
    ds = _dataset(cfg)
    eta = _eta_value(cfg, model, method)
    oc = OptimizerConfig(method=method, step_eta=eta, steps_T=cfg.T, rng_seed=_sub_seed(cfg.seed, "sgd"))
    eps = None
    multiclass = model.family is Family.MULTICLASS
    if not multiclass and cfg.T >= 2:
        choice = bounds.select_epsilon(model, cfg.gamma, eta, cfg.T, cfg.epsilon_mode, n=cfg.n)
        eps = choice.epsilon
        bounds.gen_bound_gd(model, cfg.gamma, eta, cfg.T, cfg.n, eps)  # asserts the hypothesis
    out = _prepare_out(cfg, command)
    if method is Method.SGD:
        traj = run_sgd(ds, model, oc)
    elif method is Method.GD_ADAPTIVE_EXP:
        traj = run_gd_adaptive_exp(ds, oc)
    else:
        traj = run_gd(ds, None if multiclass else model, oc)
    dist = ds.distribution
    test_seed = _sub_seed(cfg.seed, "test")
    test = np.full(traj.steps_T, np.nan)
    zero_one = np.full(traj.steps_T, np.nan)
    for t, w in zip(traj.iterate_steps, traj.iterates):
        mean, _, err = population_sample_stats(model, w, dist, cfg.test_size, test_seed)
        test[t - 1], zero_one[t - 1] = mean, err
    write_trajectory_csv(traj, out / "trajectory.csv", test, zero_one)

    violations = []
    if method is not Method.SGD:
        if np.any(np.diff(traj.emp_risks) > 1e-12):
            violations.append("empirical risk increased between consecutive steps")
    final_w = traj.output
    test_mean, test_se, test_err = population_sample_stats(model, final_w, dist, cfg.test_size, test_seed)
    report = {"final_train": traj.emp_risks[-1], "final_test": test_mean, "final_test_stderr": test_se,
              "final_zero_one": test_err, "eta": traj.eta}
    if eps is not None:
        ev = bounds.evaluate_bounds(model, cfg.gamma, traj.eta, cfg.T, cfg.n, eps, sgd=method is Method.SGD)
        ev.measured_train = float(traj.emp_risks[-1])
        ev.measured_test, ev.measured_test_stderr, ev.measured_zero_one = test_mean, test_se, test_err
        avg_train = traj.risk_sum / traj.steps_T
        if method is not Method.SGD and avg_train > ev.opt_bound:
            violations.append(f"average training risk {avg_train:.6g} above optimization bound {ev.opt_bound:.6g}")
        report["bounds"] = ev.to_dict()
    report["violations"] = violations
    _write_json(out / "bounds.json", report)
    print(json.dumps({"command": command, "final_test": test_mean, "violations": violations}))
    return EXIT_OK if not violations else EXIT_VIOLATION


def cmd_run_gd(cfg):
    return _run(cfg, _method(cfg, Method.GD))


def cmd_run_sgd(cfg):
    return _run(cfg, Method.SGD)


def cmd_stability(cfg):
    method = _method(cfg, Method.GD)
    if cfg.n < 2:
        raise SizeError("leave-one-out stability needs n >= 2")
    if make_loss_family(cfg) is Family.MULTICLASS:
        raise ConfigError("stability runs are implemented for binary losses")
    model = _model_for_run(cfg, method)
    ds = _dataset(cfg)
    out = _prepare_out(cfg, "stability")
    eta = _eta_value(cfg, model, method)
    oc = OptimizerConfig(method=method, step_eta=eta, steps_T=cfg.T)
    if method is Method.SGD:
        rep = empirical_stability_sgd(ds, model, oc, cfg.replicates, seed=_sub_seed(cfg.seed, "sgd"))
        slack = 2 * (rep.stderr_l1 or 0.0)
        violations = [] if rep.empirical_l1 <= rep.bound_l1 + slack else ["l1 stability above bound"]
    elif method is Method.GD_ADAPTIVE_EXP:
        rep = empirical_stability_exp_adaptive(ds, oc)
        violations = [] if rep.empirical_l1 <= rep.bound_l1 else ["l1 stability above bound"]
    else:
        rep = empirical_stability_gd(ds, model, oc)
        violations = [k for k, e, b in (("l1", rep.empirical_l1, rep.bound_l1), ("l2", rep.empirical_l2, rep.bound_l2))
                      if not e < b]
    out_report = rep.to_dict()
    _write_json(out / "stability.json", out_report)
    gaps = dataclasses.asdict(generalization_gap_bounds(rep, model))
    _write_json(out / "gap_bounds.json", {k: _clean(v) for k, v in gaps.items()})
    print(json.dumps({"command": "stability", **out_report, "violations": violations}, default=_json_default))
    return EXIT_OK if not violations else EXIT_VIOLATION


def cmd_genbound(cfg):
    method = _method(cfg, Method.GD)
    model = _model_for_run(cfg, method)
    eta = _eta_value(cfg, model, method)
    choice = bounds.select_epsilon(model, cfg.gamma, eta, cfg.T, cfg.epsilon_mode, n=cfg.n)
    ev = bounds.evaluate_bounds(model, cfg.gamma, eta, cfg.T, cfg.n, choice.epsilon,
                                sgd=method is Method.SGD)
    out = _prepare_out(cfg, "genbound")
    _write_json(out / "bounds.json", ev.to_dict())
    print(ev.to_json())
    return EXIT_OK


def cmd_lowerbound(cfg):
    alpha = 1.0 if cfg.alpha is None else cfg.alpha
    trace = lower_bound_run(alpha, cfg.T)
    out = _prepare_out(cfg, "lowerbound")
    with open(out / "lowerbound.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "risk", "floor", "upper_envelope"])
        for row in zip(trace.t, trace.risk, trace.floor, trace.upper_envelope):
            w.writerow([int(row[0])] + [format(float(v), ".17g") for v in row[1:]])
    summary = {"alpha": alpha, "T": cfg.T, "floor_constant": trace.floor_constant,
               "floor_violations": trace.floor_violations, "envelope_violations": trace.envelope_violations}
    _write_json(out / "lowerbound.json", summary)
    print(json.dumps(summary))
    return EXIT_OK if trace.floor_violations == 0 and trace.envelope_violations == 0 else EXIT_VIOLATION


def sweep_point(cfg: ExperimentConfig, axis, value):
    """Train with GD at one sweep value; returns a sweep CSV row."""
    cfg = dataclasses.replace(cfg, **{axis: value})
    model = _model_for_run(cfg, Method.GD)
    ds = sample_dataset(cfg.dim, cfg.n, cfg.gamma, cfg.seed)
    eta = _eta_value(cfg, model, Method.GD)
    traj = run_gd(ds, model, OptimizerConfig(step_eta=eta, steps_T=cfg.T))
    mean, se, _ = population_sample_stats(model, traj.final_iterate, ds.distribution, cfg.test_size,
                                          _sub_seed(cfg.seed, "test"))
    eps = bounds.select_epsilon(model, cfg.gamma, eta, cfg.T, cfg.epsilon_mode, n=cfg.n).epsilon
    r = bounds.rho(model, eps, cfg.gamma)
    k = model.constants
    term1 = bounds.opt_terms(r, eta, cfg.T, eps)
    if model.is_lipschitz:
        term2 = bounds.lipschitz_stability_term(r, eta, cfg.T, cfg.n, eps, k.G, k.c, k.delta)
    else:
        term2 = bounds.smooth_stability_term(r, eta, cfg.T, cfg.n, eps, k.L, k.c, k.delta)
    return {"sweep_var": axis, "value": value, "bound_term1": term1, "bound_term2": term2,
            "measured": mean, "stderr": se}


def cmd_sweep(cfg):
    if not cfg.axis:
        raise ConfigError("sweep needs --axis")
    if not cfg.values:
        raise ConfigError("sweep needs a non-empty --values list")
    if parse_multiclass(cfg):
        raise ConfigError("sweeps are implemented for binary losses")
    if cfg.axis in ("T", "n"):
        values = [int(v) for v in cfg.values]
    else:
        values = [float(v) for v in cfg.values]
    out = _prepare_out(cfg, "sweep")
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            rows = list(pool.map(sweep_point, [cfg] * len(values), [cfg.axis] * len(values), values))
    else:
        rows = [sweep_point(cfg, cfg.axis, v) for v in values]
    bounds.write_sweep_csv(rows, out / "sweep.csv")
    print(json.dumps({"command": "sweep", "rows": len(rows)}))
    return EXIT_OK


COMMANDS = {
    "verify-loss": cmd_verify_loss,
    "run-gd": cmd_run_gd,
    "run-sgd": cmd_run_sgd,
    "stability": cmd_stability,
    "genbound": cmd_genbound,
    "lowerbound": cmd_lowerbound,
    "sweep": cmd_sweep,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except TypeError as exc:
        print(f"error: bad configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
