"""Activations, log-space helpers, the LSTM cell, Adam, clipping, dropout."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssnt import nn
from ssnt.errors import ConfigError, TrainingDiverged
from ssnt.nn import (LstmParams, LstmState, Parameter, activation, adam_step,
                     clip_gradients, dropout_mask, log_sum_exp, lstm_step,
                     make_rng, softmax)


def test_activation_fixed_points():
    assert activation("sigmoid", np.array([0.0]))[0] == 0.5
    assert activation("tanh", np.array([0.0]))[0] == 0.0
    assert activation("relu", np.array([-2.0]))[0] == 0.0


def test_activation_ranges():
    # Beyond |x| ~ 36 sigmoid saturates to exactly 1.0 in float64.
    v = np.linspace(-30, 30, 101)
    s = activation("sigmoid", v)
    assert np.all((s > 0) & (s < 1))
    t = activation("tanh", v)
    assert np.all((t >= -1) & (t <= 1))
    assert np.all(activation("relu", np.linspace(-50, 50, 101)) >= 0)


def test_activation_unknown_kind():
    with pytest.raises(ConfigError):
        activation("gelu", np.zeros(2))


def test_softmax_uniform():
    np.testing.assert_allclose(softmax([0.0, 0.0]), [0.5, 0.5])


def test_softmax_known_ratio():
    out = softmax([math.log(1.0), math.log(3.0)])
    np.testing.assert_allclose(out, [0.25, 0.75], atol=1e-15)


def test_softmax_shift_invariance():
    rng = make_rng(0)
    v = rng.normal(size=7)
    np.testing.assert_allclose(softmax(v + 17.3), softmax(v), rtol=1e-13)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=12))
def test_softmax_sums_to_one(vals):
    out = softmax(np.array(vals))
    assert abs(out.sum() - 1.0) < 1e-12
    assert np.all(out > 0)


def test_log_sum_exp_absorbs_neg_inf():
    assert log_sum_exp([-np.inf, 0.0]) == 0.0
    assert log_sum_exp([-np.inf, -np.inf]) == -np.inf


def test_log_sum_exp_equal_terms():
    a = -3.5
    assert abs(log_sum_exp([a, a]) - (a + math.log(2))) < 1e-14


def test_log_sum_exp_one_plus_three():
    assert abs(log_sum_exp([0.0, math.log(3.0)]) - math.log(4.0)) < 1e-14


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=10))
def test_log_sum_exp_bounds(vals):
    v = np.array(vals)
    out = log_sum_exp(v)
    assert out >= v.max() - 1e-12
    assert out <= v.max() + math.log(len(vals)) + 1e-12


# ---------------------------------------------------------------------------
# LSTM cell
# ---------------------------------------------------------------------------


def _zero_lstm(input_dim, hidden_dim, forget_bias=0.0):
    params = LstmParams("t", input_dim, hidden_dim, make_rng(0))
    for p in params.parameters():
        p.value[...] = 0.0
    params.b_f.value[...] = forget_bias
    return params


def test_lstm_zero_params_zero_state():
    params = _zero_lstm(2, 3)
    out = lstm_step(params, np.array([1.0, -1.0]), LstmState.zeros(3))
    np.testing.assert_allclose(out.h, np.zeros(3))
    np.testing.assert_allclose(out.c, np.zeros(3))


def test_lstm_saturated_forget_gate():
    params = _zero_lstm(1, 1, forget_bias=10.0)
    out = lstm_step(params, np.array([0.0]), LstmState(np.zeros(1), np.ones(1)))
    expected_c = 1.0 / (1.0 + math.exp(-10.0))
    assert abs(out.c[0] - expected_c) < 1e-12
    assert abs(out.c[0] - 0.99995) < 1e-4


def _scalar_lstm_reference(params, x, h_prev, c_prev):
    """Independent per-scalar re-implementation using math.* only."""
    hd = params.hidden_dim
    h_new, c_new = [], []
    for r in range(hd):
        def pre(gate):
            wx = getattr(params, f"w_{gate}x").value
            wh = getattr(params, f"w_{gate}h").value
            b = getattr(params, f"b_{gate}").value
            total = b[r]
            for col in range(len(x)):
                total += wx[r][col] * x[col]
            for col in range(hd):
                total += wh[r][col] * h_prev[col]
            return total

        sig = lambda z: 1.0 / (1.0 + math.exp(-z))
        g = math.tanh(pre("g"))
        i = sig(pre("i"))
        f = sig(pre("f"))
        o = sig(pre("o"))
        c = g * i + c_prev[r] * f
        h_new.append(math.tanh(c) * o)
        c_new.append(c)
    return np.array(h_new), np.array(c_new)


def test_lstm_matches_scalar_reference():
    rng = make_rng(42)
    params = LstmParams("t", 2, 3, rng)
    x = rng.normal(size=2)
    prev = LstmState(rng.normal(size=3), rng.normal(size=3))
    out = lstm_step(params, x, prev)
    ref_h, ref_c = _scalar_lstm_reference(params, x, prev.h, prev.c)
    assert np.max(np.abs(out.h - ref_h)) < 1e-12
    assert np.max(np.abs(out.c - ref_c)) < 1e-12


def test_lstm_deterministic_bitwise():
    rng = make_rng(9)
    params = LstmParams("t", 3, 4, rng)
    x = rng.normal(size=3)
    prev = LstmState(rng.normal(size=4), rng.normal(size=4))
    a = lstm_step(params, x, prev)
    b = lstm_step(params, x, prev)
    assert a.h.tobytes() == b.h.tobytes()
    assert a.c.tobytes() == b.c.tobytes()


def test_lstm_dim_mismatch():
    params = LstmParams("t", 2, 3, make_rng(0))
    with pytest.raises(ConfigError):
        lstm_step(params, np.zeros(5), LstmState.zeros(3))
    with pytest.raises(ConfigError):
        lstm_step(params, np.zeros(2), LstmState.zeros(4))


# ---------------------------------------------------------------------------
# Optimiser and clipping
# ---------------------------------------------------------------------------


def test_adam_zero_grad_no_change():
    p = Parameter("w", np.array([1.0, -2.0]))
    before = p.value.copy()
    adam_step([p], lr=0.1, step_count=1)
    np.testing.assert_array_equal(p.value, before)


def test_adam_first_step_magnitude():
    p = Parameter("w", np.array([0.0]))
    p.grad[...] = 1.0
    adam_step([p], lr=0.001, step_count=1)
    assert abs(abs(p.value[0]) - 0.001) < 1e-6
    assert np.all(p.grad == 0.0)


def test_adam_quadratic_descent():
    p = Parameter("w", np.array([0.0]))

    def loss():
        return 0.5 * (p.value[0] - 3.0) ** 2

    losses = []
    for step in range(1, 11):
        p.grad[...] = p.value[0] - 3.0
        adam_step([p], lr=0.1, step_count=step)
        losses.append(loss())
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_adam_nonfinite_grad_names_parameter():
    p = Parameter("enc.w_gx", np.zeros(2))
    p.grad[...] = np.nan
    with pytest.raises(TrainingDiverged, match="enc.w_gx"):
        adam_step([p], lr=0.1, step_count=1)


def test_clip_noop_below_threshold():
    p = Parameter("w", np.zeros(2))
    p.grad[...] = [2.0, 0.0]
    assert clip_gradients([p], max_norm=5.0) == 1.0
    np.testing.assert_array_equal(p.grad, [2.0, 0.0])


def test_clip_scales_to_max_norm():
    p = Parameter("w", np.zeros(2))
    p.grad[...] = [6.0, 8.0]   # norm 10
    factor = clip_gradients([p], max_norm=5.0)
    assert factor == 0.5
    assert abs(np.linalg.norm(p.grad) - 5.0) < 1e-12


def test_clip_default_is_five():
    import inspect
    assert inspect.signature(clip_gradients).parameters["max_norm"].default == 5.0


# ---------------------------------------------------------------------------
# Dropout
# ---------------------------------------------------------------------------


def test_dropout_rate_zero_all_ones():
    mask = dropout_mask(16, 0.0, make_rng(0))
    np.testing.assert_array_equal(mask, np.ones(16))


def test_dropout_eval_mode_all_ones():
    mask = dropout_mask(16, 0.5, make_rng(0), training=False)
    np.testing.assert_array_equal(mask, np.ones(16))


def test_dropout_rate_validation():
    with pytest.raises(ConfigError):
        dropout_mask(4, 1.0, make_rng(0))


def test_dropout_mean_is_one():
    rate = 0.2
    n = 1_000_000
    mask = dropout_mask(n, rate, make_rng(123))
    sigma = math.sqrt(rate / (1.0 - rate) / n)
    assert abs(mask.mean() - 1.0) < 3.0 * sigma


def test_dropout_deterministic_given_seed():
    a = dropout_mask(64, 0.3, make_rng(7))
    b = dropout_mask(64, 0.3, make_rng(7))
    np.testing.assert_array_equal(a, b)
