import numpy as np
import pytest
from hypothesis import given, strategies as st

from adaptact.errors import ArgumentError, DimensionError, ScheduleError
from adaptact.optimizers import (KINDS, Optimizer, OptimizerConfig, OptimizerState, lr_at_epoch, step,
                                 thirds_schedule)

from oracles import run as oracle


def two_steps(kind, w0, g, lr):
    cfg = OptimizerConfig(kind, [(10, lr)])
    state = OptimizerState()
    params = {"w": np.array([w0])}
    out = []
    for _ in range(2):
        step(cfg, state, params, {"w": np.array([g])}, 0)
        out.append(params["w"][0])
    return out


def test_sgd_example():
    assert two_steps("sgd", 1.0, 0.5, 0.1)[0] == pytest.approx(0.95, abs=1e-15)


def test_momentum_example():
    cfg = OptimizerConfig("momentum", [(1, 0.1)])
    state = OptimizerState()
    params = {"w": np.array([1.0])}
    step(cfg, state, params, {"w": np.array([0.5])}, 0)
    assert state.buffers["w"]["v"][0] == 0.5
    assert params["w"][0] == pytest.approx(0.95, abs=1e-15)
    step(cfg, state, params, {"w": np.array([0.5])}, 0)
    assert state.buffers["w"]["v"][0] == pytest.approx(0.95, abs=1e-15)
    assert params["w"][0] == pytest.approx(0.855, abs=1e-15)


def test_adam_first_step_is_lr_times_sign():
    w1 = two_steps("adam", 1.0, 0.5, 0.001)[0]
    assert w1 == pytest.approx(1.0 - 0.001 * 0.5 / (0.5 + 1e-8), abs=1e-15)
    assert abs(w1 - 0.999) < 1e-10


def test_adagrad_first_step():
    w1 = two_steps("adagrad", 1.0, 2.0, 0.1)[0]
    assert w1 == pytest.approx(1.0 - 0.1 * 2.0 / (2.0 + 1e-8), abs=1e-15)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("w0, g, lr", [(1.0, 0.5, 0.1), (1.0, 2.0, 0.1), (1.0, 0.5, 0.001), (-0.3, -1.7, 0.01)])
def test_two_steps_against_high_precision_oracle(kind, w0, g, lr):
    np.testing.assert_allclose(two_steps(kind, w0, g, lr), oracle(kind, w0, [g, g], lr), rtol=0, atol=1e-12)


def test_adadelta_ignores_rate():
    assert two_steps("adadelta", 1.0, 0.5, 0.1) == two_steps("adadelta", 1.0, 0.5, 1e-5)


@pytest.mark.parametrize("kind", ["sgd", "adagrad"])
def test_zero_gradient_fixed_point(kind):
    assert two_steps(kind, 0.7, 0.0, 0.1) == [0.7, 0.7]


@given(st.floats(-10, 10), st.integers(1, 20))
def test_momentum_velocity_decays_by_mu(g0, k):
    cfg = OptimizerConfig("momentum", [(1, 0.1)])
    state = OptimizerState()
    params = {"w": np.array([0.0])}
    step(cfg, state, params, {"w": np.array([g0])}, 0)
    for _ in range(k):
        before = abs(state.buffers["w"]["v"][0])
        step(cfg, state, params, {"w": np.array([0.0])}, 0)
        assert abs(state.buffers["w"]["v"][0]) == pytest.approx(0.9 * before, rel=1e-15, abs=0)


@pytest.mark.parametrize("kind", KINDS)
def test_buffers_mirror_parameter_shapes(kind):
    opt = Optimizer(OptimizerConfig(kind, [(1, 0.01)]))
    rng = np.random.default_rng(0)
    params = {"w": rng.normal(size=(3, 4)), "b": rng.normal(size=3), "p": rng.normal(size=4)}
    for _ in range(3):
        opt.step(params, {k: rng.normal(size=v.shape) for k, v in params.items()}, 0)
        assert opt.state.audit(params)
    assert opt.state.t == 3


def test_gradient_shape_mismatch():
    with pytest.raises(DimensionError):
        step(OptimizerConfig("sgd", [(1, 0.1)]), OptimizerState(), {"w": np.zeros(3)}, {"w": np.zeros(2)}, 0)


def test_lr_schedule_thirds():
    cfg = OptimizerConfig("sgd", thirds_schedule(90))
    assert cfg.schedule == [(30, 1e-3), (30, 1e-4), (30, 1e-5)]
    assert [lr_at_epoch(cfg, e) for e in (10, 40, 80)] == [0.001, 0.0001, 0.00001]
    with pytest.raises(ScheduleError):
        lr_at_epoch(cfg, 90)
    single = OptimizerConfig("sgd", [(90, 0.001)])
    assert {lr_at_epoch(single, e) for e in range(90)} == {0.001}


def test_uneven_thirds_front_load_remainder():
    assert [s for s, _ in thirds_schedule(10)] == [4, 3, 3]
    with pytest.raises(ScheduleError):
        thirds_schedule(2)


def test_config_validation():
    with pytest.raises(ArgumentError):
        OptimizerConfig("adamm")
    with pytest.raises(ScheduleError):
        OptimizerConfig("sgd", [(10, 0.0)])
    with pytest.raises(ScheduleError):
        OptimizerConfig("sgd", [])
    with pytest.raises(ScheduleError):
        step(OptimizerConfig("sgd", [(2, 0.1)]), OptimizerState(), {}, {}, 2)
