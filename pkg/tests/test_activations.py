import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adaptact import activations as act
from adaptact.activations import (ARELU, ASIGMOID, ATANH, LRELU, RELU, SIGMOID, SWISH, TANH,
                                  ActivationKind, AdaptiveParams, adaptive_backward, adaptive_forward,
                                  classify_special_case, fixed_forward, fixed_grad)
from adaptact.errors import ArgumentError, ContractError, DimensionError
from adaptact.gradcheck import activation_suite, check_activation_point
from adaptact.tensor import Rng

finite = st.floats(-50, 50, allow_nan=False)


def central(f, x, h=1e-4):
    return (f(x + h) - f(x - h)) / (2 * h)


class TestFixed:
    def test_values(self):
        assert fixed_forward(SIGMOID, np.array([0.0]))[0] == 0.5
        assert fixed_forward(TANH, np.array([0.0]))[0] == 0.0
        np.testing.assert_array_equal(fixed_forward(RELU, np.array([-2.0, 0.0, 3.0])), [0, 0, 3])
        assert fixed_forward(LRELU, np.array([-1.0]))[0] == -0.01

    def test_grads(self):
        assert fixed_grad(SIGMOID, np.array([0.0]))[0] == 0.25
        assert fixed_grad(TANH, np.array([0.0]))[0] == 1.0
        assert fixed_grad(RELU, np.array([0.0]))[0] == 0.0
        assert fixed_grad(LRELU, np.array([0.0]))[0] == 0.01

    def test_swish_grad_matches_finite_difference(self):
        num = central(lambda t: fixed_forward(SWISH, np.array([t]))[0], 1.5)
        assert abs(fixed_grad(SWISH, np.array([1.5]))[0] - num) < 1e-6

    def test_stable_for_large_inputs(self):
        x = np.array([-1e3, -700.0, 700.0, 1e3])
        for kind in (SIGMOID, TANH, SWISH, LRELU):
            assert np.all(np.isfinite(fixed_forward(kind, x)))
            assert np.all(np.isfinite(fixed_grad(kind, x)))
        np.testing.assert_array_equal(fixed_forward(SIGMOID, x), [0.0, np.exp(-700.0) / (1 + np.exp(-700.0)), 1.0, 1.0])

    def test_adaptive_tag_rejected(self):
        with pytest.raises(ContractError):
            fixed_forward(ARELU, np.zeros(1))
        with pytest.raises(ContractError):
            fixed_grad(ActivationKind("prelu"), np.zeros(1))

    def test_kind_validation(self):
        with pytest.raises(ArgumentError):
            ActivationKind("lrelu", -0.1)
        with pytest.raises(ArgumentError):
            ActivationKind("swish", 0.0)
        with pytest.raises(ArgumentError):
            ActivationKind("elu")
        assert ActivationKind.parse("Swish").param == 1.0

    @given(st.floats(-300, 300))
    def test_tanh_sigmoid_identity(self, x):
        t = fixed_forward(TANH, np.array([x]))[0]
        s = fixed_forward(SIGMOID, np.array([2 * x]))[0]
        assert abs(t - (2 * s - 1)) <= 1e-12


class TestAdaptiveForward:
    def test_examples(self):
        np.testing.assert_array_equal(adaptive_forward(ARELU, (1, 0, 0, 0), np.array([-2.0, 3.0])), [0, 3])
        assert adaptive_forward(ARELU, (1.5, 0.2, 0.1, -0.1), np.array([2.0]))[0] == pytest.approx(3.1, abs=1e-15)
        assert adaptive_forward(ASIGMOID, (1, 1, 0, 0), np.array([0.0]))[0] == 0.5
        assert adaptive_forward(ATANH, (2, 3, 0, 1), np.array([0.0]))[0] == 1.0

    def test_accepts_dataclass(self):
        p = AdaptiveParams(1.5, 0.2, 0.1, -0.1)
        assert list(p) == [1.5, 0.2, 0.1, -0.1]
        assert adaptive_forward(ARELU, p, np.array([2.0]))[0] == adaptive_forward(ARELU, p.as_array(), np.array([2.0]))[0]

    def test_fixed_tag_rejected(self):
        with pytest.raises(ContractError):
            adaptive_forward(RELU, (1, 0, 0, 0), np.zeros(1))

    @given(st.lists(finite, min_size=1, max_size=20))
    def test_baseline_reduction(self, zs):
        z = np.array(zs)
        for kind, base in ((ASIGMOID, SIGMOID), (ATANH, TANH)):
            assert np.max(np.abs(adaptive_forward(kind, (1, 1, 0, 0), z) - fixed_forward(base, z))) <= 1e-15

    @given(st.lists(finite, min_size=1, max_size=20))
    def test_relu_degeneracy(self, zs):
        z = np.array(zs)
        np.testing.assert_array_equal(adaptive_forward(ARELU, (1, 0, 0, 0), z), fixed_forward(RELU, z))
        dz, _ = adaptive_backward(ARELU, (1, 0, 0, 0), z, np.ones_like(z))
        np.testing.assert_array_equal(dz, fixed_grad(RELU, z))

    @given(st.lists(finite, min_size=1, max_size=20), st.floats(0, 1))
    def test_prelu_degeneracy(self, zs, s):
        z = np.array(zs)
        np.testing.assert_array_equal(adaptive_forward(ARELU, (s, 1, 0, 0), z), np.maximum(s * z, z))
        np.testing.assert_array_equal(adaptive_forward(ARELU, (s, 1, 0, 0), z), act.prelu_forward(s, z))


class TestAdaptiveBackward:
    def test_arelu_active_branch(self):
        dz, g = adaptive_backward(ARELU, (1, 0, 0, 0), np.array([3.0]), np.array([1.0]))
        assert (dz[0], g.a, g.b, g.c, g.d) == (1.0, 3.0, 0.0, 1.0, 0.0)

    def test_arelu_tie_takes_smaller_slope(self):
        # lines 2z and 0.5z meet at 0: left derivative is the 0.5 line
        dz, g = adaptive_backward(ARELU, (2.0, 0.5, 0, 0), np.array([0.0]), np.array([1.0]))
        assert dz[0] == 0.5 and g.d == 1.0 and g.c == 0.0
        dz, g = adaptive_backward(ARELU, (0.5, 2.0, 0, 0), np.array([0.0]), np.array([1.0]))
        assert dz[0] == 0.5 and g.c == 1.0 and g.d == 0.0
        # identical lines: first branch
        dz, g = adaptive_backward(ARELU, (1.0, 1.0, 0, 0), np.array([0.0]), np.array([1.0]))
        assert g.c == 1.0 and g.d == 0.0

    def test_asigmoid_at_origin_against_finite_differences(self):
        p = np.array([1.0, 1.0, 0.0, 0.0])
        dz, g = adaptive_backward(ASIGMOID, p, np.array([0.0]), np.array([1.0]))
        analytic = [dz[0], g.a, g.b, g.c, g.d]

        def f(vec):
            return adaptive_forward(ASIGMOID, vec[1:], np.array([vec[0]]))[0]

        base = np.concatenate([[0.0], p])
        numeric = []
        for i in range(5):
            e = np.zeros(5)
            e[i] = 1e-4
            numeric.append((f(base + e) - f(base - e)) / 2e-4)
        np.testing.assert_allclose(analytic, numeric, atol=1e-6)
        np.testing.assert_allclose(analytic, [0.25, 0.0, 0.5, 0.25, 1.0], atol=1e-15)

    def test_atanh_random_points(self):
        rng = Rng(5)
        for _ in range(100):
            p = rng.uniform((4,), -2, 2)
            z = float(rng.uniform((1,), -3, 3)[0])
            assert check_activation_point(ATANH, p, z) < 1e-5

    def test_parameter_gradients_sum_over_elements(self):
        z = np.array([0.3, -1.2, 2.0])
        up = np.array([1.0, 2.0, -0.5])
        p = (0.7, 1.3, 0.1, -0.2)
        _, total = adaptive_backward(ATANH, p, z, up)
        parts = [adaptive_backward(ATANH, p, z[i:i + 1], up[i:i + 1])[1].as_array() for i in range(3)]
        np.testing.assert_allclose(total.as_array(), np.sum(parts, axis=0), rtol=1e-14)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            adaptive_backward(ATANH, (1, 1, 0, 0), np.zeros(3), np.zeros(2))

    def test_every_kind_matches_finite_differences(self):
        for res in activation_suite(n_points=100, seed=3):
            assert res.max_rel_error < 1e-5, res


class TestSpecialCases:
    def test_classification(self):
        assert classify_special_case((1, 0, 0, 0)).name == "relu"
        assert classify_special_case((0.25, 1, 0, 0)) == ("prelu", 0.25)
        assert classify_special_case((2, 3, 0.5, 1)).name == "general"
        assert classify_special_case(AdaptiveParams(1, 1, 0, 0)) == ("prelu", 1.0)

    def test_defaults_start_at_baseline(self):
        assert classify_special_case(act.default_params(ARELU)).name == "relu"
        np.testing.assert_array_equal(act.default_params(ASIGMOID), [1, 1, 0, 0])
        np.testing.assert_array_equal(act.default_params(ActivationKind("prelu")), [0.25])
        assert [ActivationKind(t).n_learnable for t in act.ALL_TAGS] == [0, 0, 0, 0, 0, 1, 4, 4, 4]

    def test_degenerate_scale_warning(self, caplog):
        assert act.warn_if_degenerate(ATANH, (1e-9, 1, 0, 0), "act1")
        assert "act1" in caplog.text
        assert not act.warn_if_degenerate(ATANH, (1, 1, 0, 0))
        assert not act.warn_if_degenerate(ARELU, (0, 0, 0, 0))
