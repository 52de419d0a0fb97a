"""Reverse-mode tape: per-primitive gradients against finite differences."""

import numpy as np
import pytest

from ssnt import nn
from ssnt.errors import UsageError
from ssnt.gradcheck import TOLERANCE, check_tape_primitives, finite_difference, rel_error
from ssnt.nn import LstmParams, Parameter, make_rng
from ssnt.tape import Tape


def test_sigmoid_of_linear_grad():
    # d/dw sigma(w * x) at w=0, x=1 is sigma'(0) = 0.25
    w = Parameter("w", np.array([0.0]))
    t = Tape()
    out = t.sigmoid(t.mul_const(t.param(w), np.array([1.0])))
    t.backward(out, seed=1.0)
    assert abs(w.grad[0] - 0.25) < 1e-14


def test_two_step_lstm_fd():
    rng = make_rng(1)
    params = LstmParams("lstm", 1, 2, rng)
    xs = [rng.normal(size=1), rng.normal(size=1)]

    def run(tape):
        state = tape.lstm_step(params, tape.const(xs[0]), None)
        state = tape.lstm_step(params, tape.const(xs[1]), state)
        return tape.weighted_sum(state[0], np.array([1.0, -0.5]))

    t = Tape()
    loss = run(t)
    t.backward(loss)
    analytic = {p.name: p.grad.copy() for p in params.parameters()}
    for p in params.parameters():
        p.zero_grad()
    fd = finite_difference(lambda: float(run(Tape()).value), params.parameters())
    worst = max(
        rel_error(analytic[name].reshape(-1)[i], fd[name].reshape(-1)[i])
        for name in fd for i in range(fd[name].size))
    assert worst < 1e-6


def test_unused_parameter_gets_exact_zero():
    used = Parameter("used", np.array([0.3]))
    unused = Parameter("unused", np.array([0.7]))
    t = Tape()
    t.param(unused)
    out = t.mul_const(t.param(used), np.array([2.0]))
    t.backward(out)
    assert unused.grad[0] == 0.0
    assert used.grad[0] == 2.0


def test_backward_twice_is_usage_error():
    p = Parameter("w", np.array([1.0]))
    t = Tape()
    out = t.mul_const(t.param(p), np.array([3.0]))
    t.backward(out)
    with pytest.raises(UsageError):
        t.backward(out)


def test_gradients_accumulate_across_tapes():
    p = Parameter("w", np.array([1.0]))
    for _ in range(2):
        t = Tape()
        t.backward(t.mul_const(t.param(p), np.array([1.0])))
    assert p.grad[0] == 2.0


def test_primitive_suite_100_instances():
    passed, worst, name = check_tape_primitives(seed=0, instances=100)
    assert passed, f"worst relative error {worst:.3e} at {name}"
    assert worst < TOLERANCE


def test_take_cols_and_log_softmax_rows_fd():
    rng = make_rng(2)
    w = Parameter("w", rng.normal(size=(3, 4)) * 0.3)

    def run(tape):
        lsm = tape.log_softmax_rows(tape.param(w))
        picked = tape.take_cols(lsm, np.array([1, 3, 0]))
        return tape.weighted_sum(picked, np.array([1.0, 0.5, -1.0]))

    t = Tape()
    t.backward(run(t))
    analytic = w.grad.copy()
    w.zero_grad()
    fd = finite_difference(lambda: float(run(Tape()).value), [w])["w"]
    assert np.max(np.abs(analytic - fd)) < 1e-8
