import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from selfbound.data import as_risk, dataset_from_instances, loo_family, sample_dataset
from selfbound.errors import ConfigError, DivergenceError, HypothesisViolation, InputError, RangeError, SizeError
from selfbound.losses import make_loss
from selfbound.optim import (Method, OptimizerConfig, index_stream, lower_bound_constant, lower_bound_run,
                             resolve_eta, run_gd, run_gd_adaptive_exp, run_gd_stacked, run_sgd, run_sgd_stacked,
                             write_trajectory_csv)

LOGISTIC = make_loss("logistic")
# w_3 from the hand recurrence w_3 = 0.25 + 0.5 / (1 + e^0.25)
W3 = 0.46891174955710095


def single_point():
    return dataset_from_instances([[1.0, 0.0]], [1.0, 0.0], 1.0)


def test_two_steps_by_hand():
    tr = run_gd(single_point(), LOGISTIC, OptimizerConfig(step_eta=0.5, steps_T=3, record_cadence=1))
    assert tr.iterates[1] == pytest.approx([0.25, 0.0], abs=1e-16)
    assert tr.final_iterate[0] == pytest.approx(W3, rel=1e-15)
    assert W3 == pytest.approx(0.25 + 0.5 / (1 + math.exp(0.25)), rel=1e-16)
    assert tr.final_iterate[1] == 0.0


def test_zero_step_keeps_start():
    ds = sample_dataset(4, 10, 0.2, 0)
    w1 = np.array([0.1, -0.2, 0.3, 0.0])
    tr = run_gd(ds, LOGISTIC, OptimizerConfig(step_eta=0.0, steps_T=50, init_w1=w1, record_cadence=1))
    assert np.all(tr.iterates == w1)
    assert np.all(tr.emp_risks == tr.emp_risks[0])


def test_gd_bitwise_deterministic():
    ds = sample_dataset(5, 20, 0.2, 1)
    cfg = OptimizerConfig(step_eta=0.25, steps_T=300)
    a, b = run_gd(ds, LOGISTIC, cfg), run_gd(ds, LOGISTIC, cfg)
    assert np.array_equal(a.iterates, b.iterates)
    assert np.array_equal(a.emp_risks, b.emp_risks)


@pytest.mark.parametrize("model", [
    make_loss("logistic"), make_loss("polynomial", alpha=1), make_loss("polynomial", alpha=3),
    make_loss("subexp", alpha=0.5), make_loss("superexp", alpha=2, delta=0.25),
    make_loss("probit", delta=0.25),
])
def test_descent_at_half_inverse_smoothness(model):
    ds = sample_dataset(6, 25, 0.2, 2)
    tr = run_gd(ds, model, OptimizerConfig(steps_T=400))
    assert tr.eta == pytest.approx(1 / (2 * model.smoothness_L))
    assert np.all(np.diff(tr.emp_risks) <= 1e-12)


def test_trajectory_lengths_and_average():
    ds = sample_dataset(3, 8, 0.2, 0)
    tr = run_gd(ds, LOGISTIC, OptimizerConfig(step_eta=0.5, steps_T=57, record_cadence=10))
    assert tr.steps_T == 57
    assert tr.emp_risks.size == tr.grad_norms.size == tr.w_norms.size == 57
    assert list(tr.iterate_steps) == [1, 11, 21, 31, 41, 51, 57]
    assert np.array_equal(tr.iterates[-1], tr.final_iterate)
    full = run_gd(ds, LOGISTIC, OptimizerConfig(step_eta=0.5, steps_T=57, record_cadence=1))
    assert np.allclose(tr.averaged_iterate, full.iterates.mean(axis=0), atol=1e-14)


def test_step_cap_enforced():
    ds = sample_dataset(3, 8, 0.2, 0)
    with pytest.raises(HypothesisViolation):
        run_gd(ds, LOGISTIC, OptimizerConfig(step_eta=0.6, steps_T=5))
    run_gd(ds, LOGISTIC, OptimizerConfig(step_eta=0.6, steps_T=5, allow_large_step=True))


def test_auto_step_rules():
    assert resolve_eta(OptimizerConfig(), LOGISTIC, 1.0) == 0.5
    assert resolve_eta(OptimizerConfig(method="gd_adaptive_exp"), make_loss("exponential"), 1.0) == 1.0
    assert resolve_eta(OptimizerConfig(method="gd_adaptive_exp"), make_loss("exponential"), 4.0) == 0.25
    with pytest.raises(ConfigError):
        resolve_eta(OptimizerConfig(), make_loss("exponential"), 1.0)


@pytest.mark.parametrize("kwargs", [{"steps_T": 0}, {"steps_T": 2.5}, {"step_eta": -1.0},
                                    {"step_eta": "fast"}, {"method": "adam"}])
def test_config_validation(kwargs):
    with pytest.raises((ConfigError, ValueError)):
        OptimizerConfig(**kwargs)


def test_divergence_guard():
    # one huge step pushes the second example deep into the linear branch
    ds = dataset_from_instances([[1.0], [-0.5]], [1.0], 0.1)
    cfg = OptimizerConfig(step_eta=1e9, steps_T=10, allow_large_step=True)
    with pytest.raises(DivergenceError) as info:
        run_gd(ds, make_loss("polynomial", alpha=1), cfg)
    assert info.value.step == 2


def test_bad_start_shape():
    with pytest.raises(InputError):
        run_gd(single_point(), LOGISTIC, OptimizerConfig(step_eta=0.5, init_w1=np.zeros(3)))


def test_sgd_stream_avoiding_member_matches_full_run():
    ds = sample_dataset(4, 6, 0.2, 3)
    stream = np.array([0, 1, 2, 4, 5] * 20)  # never 3
    cfg = OptimizerConfig(step_eta=0.5, steps_T=100, record_cadence=1)
    full = run_sgd(ds, LOGISTIC, cfg, stream)
    loo = run_sgd(loo_family(ds).member(3), LOGISTIC, cfg, stream)
    assert np.array_equal(full.iterates, loo.iterates)
    assert np.array_equal(full.averaged_iterate, loo.averaged_iterate)


def test_sgd_sentinel_only_run_is_constant():
    ds = sample_dataset(3, 2, 0.2, 0)
    member = loo_family(ds).member(0)
    w1 = np.array([0.3, 0.1, -0.2])
    tr = run_sgd(member, LOGISTIC, OptimizerConfig(step_eta=0.5, steps_T=20, init_w1=w1, record_cadence=1),
                 np.zeros(20, dtype=int))
    assert np.all(tr.iterates == w1)


def test_sgd_single_step_average_is_start():
    ds = sample_dataset(3, 4, 0.2, 0)
    tr = run_sgd(ds, LOGISTIC, OptimizerConfig(step_eta=0.5, steps_T=1))
    assert np.array_equal(tr.averaged_iterate, np.zeros(3))
    assert np.array_equal(tr.output, tr.averaged_iterate)


def test_sgd_stream_checks():
    ds = sample_dataset(3, 4, 0.2, 0)
    with pytest.raises(SizeError):
        run_sgd(ds, LOGISTIC, OptimizerConfig(step_eta=0.5, steps_T=10), np.zeros(9, dtype=int))
    with pytest.raises(InputError):
        run_sgd(ds, LOGISTIC, OptimizerConfig(step_eta=0.5, steps_T=3), [0, 4, 1])


def test_sgd_records_stream():
    ds = sample_dataset(3, 4, 0.2, 0)
    tr = run_sgd(ds, LOGISTIC, OptimizerConfig(step_eta=0.5, steps_T=30, rng_seed=7))
    assert np.array_equal(tr.index_sequence, index_stream(4, 30, 7))
    assert tr.method is Method.SGD


def test_stacked_gd_matches_single_runs():
    ds = sample_dataset(5, 6, 0.2, 4)
    cfg = OptimizerConfig(step_eta=0.5, steps_T=200)
    stacked = run_gd_stacked(ds, LOGISTIC, cfg)
    assert np.allclose(stacked.outputs[0], run_gd(ds, LOGISTIC, cfg).final_iterate, atol=1e-13)
    for member in loo_family(ds):
        single = run_gd(member, LOGISTIC, cfg).final_iterate
        assert np.allclose(stacked.outputs[member.index + 1], single, atol=1e-13)


def test_stacked_sgd_matches_single_runs():
    ds = sample_dataset(5, 6, 0.2, 4)
    cfg = OptimizerConfig(method="sgd", step_eta=0.5, steps_T=200)
    stream = index_stream(6, 200, 1)
    stacked = run_sgd_stacked(ds, LOGISTIC, cfg, stream)
    for member in loo_family(ds):
        single = run_sgd(member, LOGISTIC, cfg, stream).averaged_iterate
        assert np.allclose(stacked.outputs[member.index + 1], single, atol=1e-13)


@settings(max_examples=100, deadline=None)
@given(u=arrays(float, 3, elements=st.floats(-5, 5)), v=arrays(float, 3, elements=st.floats(-5, 5)),
       z=arrays(float, 3, elements=st.floats(-0.57, 0.57)), frac=st.floats(0.0, 1.0),
       model=st.sampled_from([make_loss("logistic"), make_loss("polynomial", alpha=2),
                              make_loss("probit", delta=0.25)]))
def test_gradient_step_is_nonexpansive(u, v, z, frac, model):
    eta = frac * 2 / model.smoothness_L

    def step(w):
        return w - eta * model.deriv(float(w @ z)) * z

    assert np.linalg.norm(step(u) - step(v)) <= np.linalg.norm(u - v) + 1e-10


def test_adaptive_exponential_run():
    ds = sample_dataset(5, 20, 0.2, 6)
    tr = run_gd_adaptive_exp(ds, OptimizerConfig(steps_T=2000))
    assert tr.emp_risks[0] == 1.0
    assert tr.eta == 1.0
    assert np.all(np.diff(tr.emp_risks) <= 0)
    budget = 2 * tr.emp_risks[0] / tr.eta
    assert np.all(np.cumsum(tr.grad_norms ** 2) <= budget)


def test_adaptive_nonexpansive_along_loo_runs():
    ds = sample_dataset(5, 12, 0.2, 6)
    runs = run_gd_stacked(ds, make_loss("exponential"), OptimizerConfig(method="gd_adaptive_exp", steps_T=500),
                          check_nonexpansive=True)
    assert runs.nonexpansive_excess <= 1e-12


def test_lower_bound_constant():
    assert lower_bound_constant(1) == pytest.approx(0.20998684164914553, rel=1e-15)
    assert lower_bound_constant(1) == pytest.approx(2 ** (-2 / 3) / 3, rel=1e-15)


def test_lower_bound_run_alpha_one():
    tr = lower_bound_run(1, 1000)
    assert tr.risk[0] == 1.0
    assert tr.floor_violations == 0


def test_lower_bound_envelopes_alpha_two():
    tr = lower_bound_run(2, 100_000)
    assert tr.risk[0] == 1.0
    assert tr.floor_violations == 0
    assert tr.envelope_violations == 0
    assert np.all(np.diff(tr.risk) < 0)


def test_lower_bound_range():
    with pytest.raises(RangeError):
        lower_bound_run(0.5, 10)


def test_trajectory_csv(tmp_path):
    tr = run_gd(single_point(), LOGISTIC, OptimizerConfig(step_eta=0.5, steps_T=4))
    path = tmp_path / "t.csv"
    write_trajectory_csv(tr, path, test_loss=np.arange(4.0))
    lines = path.read_text().splitlines()
    assert lines[0] == "t,emp_risk,grad_norm,w_norm,test_loss"
    assert len(lines) == 5
    first = lines[1].split(",")
    assert first[0] == "1" and float(first[1]) == math.log(2)
    assert first[1] == format(math.log(2), ".17g")
