import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selfbound.bounds import (applicable_bound, evaluate_bounds, gen_bound_gd, gen_bound_gd_terms, gen_bound_sgd,
                              gen_bound_sgd_terms, hypothesis_holds, opt_bound_gd, opt_bound_sgd, opt_terms,
                              select_epsilon, table_rate_curves, write_sweep_csv)
from selfbound.errors import ConfigError, HypothesisViolation, InputError
from selfbound.losses import make_loss, rho

LOGISTIC = make_loss("logistic")


def test_clamped_radius_examples():
    assert opt_terms(1.0, 0.5, 100, 0.1) == pytest.approx(0.12)
    assert opt_terms(1.0, 0.5, 100, 0.1, sgd=True) == pytest.approx(0.11)
    # eps at l(0) clamps rho to 1
    assert opt_bound_gd(LOGISTIC, 0.5, 0.5, 100, math.log(2)) == pytest.approx(1 / 50 + math.log(2))


def test_logistic_optimization_examples():
    assert opt_bound_gd(LOGISTIC, 0.5, 0.5, 10_000, 0.01) == pytest.approx(0.026929221924281176, rel=1e-12)
    assert opt_bound_sgd(LOGISTIC, 0.5, 0.5, 10_000, 0.01) == pytest.approx(0.018464610962140587, rel=1e-12)
    first_gd = opt_bound_gd(LOGISTIC, 0.5, 0.5, 10_000, 0.01) - 0.01
    first_sgd = opt_bound_sgd(LOGISTIC, 0.5, 0.5, 10_000, 0.01) - 0.01
    assert first_sgd == pytest.approx(first_gd / 2, rel=1e-14)


def test_plug_in_generalization():
    lip, smooth = gen_bound_gd_terms(2.0, 0.5, 100, 50, 0.05, G=1, L=1, c=1, delta=0)
    assert lip == pytest.approx(0.39)
    assert smooth == pytest.approx(4 * 0.13 + 3 * 0.25 / 50 * 13 ** 2)
    assert gen_bound_sgd_terms(2.0, 0.5, 100, 50, 0.05, G=1, c=1, delta=0) == pytest.approx(0.35)


def test_hypothesis_rejected():
    with pytest.raises(HypothesisViolation):
        gen_bound_gd_terms(2.0, 0.5, 100, 50, 0.1, G=1, L=1, c=1, delta=0)
    with pytest.raises(HypothesisViolation):
        gen_bound_gd(LOGISTIC, 0.5, 0.5, 100, 50, 0.5)
    with pytest.raises(InputError):
        gen_bound_sgd_terms(2.0, 0.5, 100, 50, 0.0, G=1, c=1, delta=0)


def test_sgd_needs_lipschitz():
    with pytest.raises(ConfigError):
        gen_bound_sgd(make_loss("probit", delta=0.25), 0.5, 0.1, 1000, 50, 0.001)


def test_non_smooth_forms_are_none():
    lip, smooth = gen_bound_gd(make_loss("probit", delta=0.25), 0.5, 0.1, 1000, 50, 0.001)
    assert lip is None and smooth > 0


def test_logistic_corollary_doubling_n():
    T = 1000
    eps = select_epsilon(LOGISTIC, 0.5, 0.5, T).epsilon
    assert eps == pytest.approx(1 / T)
    r = rho(LOGISTIC, eps, 0.5)
    opt = opt_terms(r, 0.5, T, eps)
    a = gen_bound_gd(LOGISTIC, 0.5, 0.5, T, 100, eps)[0] - opt
    b = gen_bound_gd(LOGISTIC, 0.5, 0.5, T, 200, eps)[0] - opt
    assert b == pytest.approx(a / 2, rel=1e-12)


def test_superexp_corollary():
    T = int(math.exp(10))
    choice = select_epsilon(make_loss("superexp", alpha=2, delta=0.5), 0.5, 0.1, T)
    assert choice.epsilon == pytest.approx(2 / T)
    assert choice.delta == pytest.approx(0.1, rel=1e-5)


def test_probit_corollary_delta():
    choice = select_epsilon(make_loss("probit", delta=0.5), 0.5, 0.1, 1000)
    assert choice.epsilon == pytest.approx(1e-3)
    assert choice.delta == pytest.approx(1 / (2 * math.log(1000)))


@pytest.mark.parametrize("model,eta", [
    (make_loss("logistic"), 0.5), (make_loss("polynomial", alpha=1), 0.25),
    (make_loss("polynomial", alpha=3), 0.04), (make_loss("subexp", alpha=0.5), 0.25),
])
def test_grid_min_no_worse_than_corollary(model, eta):
    T, n, gamma = 2000, 100, 0.25
    cor = select_epsilon(model, gamma, eta, T)
    grid = select_epsilon(model, gamma, eta, T, mode="grid_min", n=n)
    assert hypothesis_holds(rho(model, grid.epsilon, gamma), eta, T, grid.epsilon)
    assert hypothesis_holds(rho(model, cor.epsilon, gamma), eta, T, cor.epsilon)
    assert (applicable_bound(model, gamma, eta, T, grid.epsilon, n)
            <= applicable_bound(model, gamma, eta, T, cor.epsilon, n))


def test_select_epsilon_errors():
    with pytest.raises(InputError):
        select_epsilon(LOGISTIC, 0.5, 0.5, 1)
    with pytest.raises(ConfigError):
        select_epsilon(LOGISTIC, 0.5, 0.5, 100, mode="best")


@settings(max_examples=40, deadline=None)
@given(T=st.integers(10, 10**5), n=st.integers(2, 10**4), gamma=st.floats(0.05, 1.0))
def test_bounds_monotone(T, n, gamma):
    eps = 1.0 / T
    lip_n, sm_n = gen_bound_gd(LOGISTIC, gamma, 0.5, T, n, eps)
    lip_2n, sm_2n = gen_bound_gd(LOGISTIC, gamma, 0.5, T, 2 * n, eps)
    assert lip_2n < lip_n and sm_2n < sm_n
    r = rho(LOGISTIC, eps, gamma)
    assert opt_terms(r, 0.5, 2 * T, eps) - eps < opt_terms(r, 0.5, T, eps) - eps


def test_rate_curve_exponents():
    ns = [10**3, 10**4, 10**5]
    for alpha, slope in ((1, -1 / 3), (2, -1 / 2)):
        rows = table_rate_curves("polynomial", 1.0, "T=n", ns, alpha=alpha)
        rates = np.array([r["rate"] for r in rows])
        fit = np.polyfit(np.log(ns), np.log(rates), 1)[0]
        assert fit == pytest.approx(slope, abs=1e-12)
        assert all(r["optimum_T"] == r["value"] for r in rows)
        assert all(r["label"] == "rate curve, not bound" for r in rows)


def test_rate_curve_second_term_halves():
    rows = table_rate_curves("logistic", 0.5, "n", [100, 200], fixed=1000)
    assert rows[1]["term2"] == pytest.approx(rows[0]["term2"] / 2)
    assert rows[1]["term1"] == rows[0]["term1"]


def test_rate_curve_errors():
    with pytest.raises(ConfigError):
        table_rate_curves("logistic", 0.5, "n", [], fixed=10)
    with pytest.raises(ConfigError):
        table_rate_curves("logistic", 0.5, "m", [10], fixed=10)
    with pytest.raises(ConfigError):
        table_rate_curves("logistic", 0.5, "n", [0], fixed=10)


def test_evaluation_record():
    ev = evaluate_bounds(LOGISTIC, 0.5, 0.5, 1000, 100, 0.001, sgd=True)
    blob = json.loads(ev.to_json())
    assert blob["epsilon_choice"] == 0.001
    assert blob["constants"]["G"] == 1.0
    assert blob["gen_bound_sgd"] < blob["gen_bound_lipschitz"]
    ev = evaluate_bounds(make_loss("probit", delta=0.25), 0.5, 0.1, 1000, 100, 0.001)
    assert ev.constants["G"] is None and ev.gen_bound_lipschitz is None


def test_sweep_csv(tmp_path):
    rows = [{"sweep_var": "n", "value": 8, "bound_term1": 0.5, "bound_term2": None, "measured": 0.1, "stderr": 0.01}]
    write_sweep_csv(rows, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "sweep_var,value,bound_term1,bound_term2,measured,stderr"
    assert lines[1] == "n,8,0.5,,0.10000000000000001,0.01"
