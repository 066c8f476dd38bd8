import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import adam_scalar_loop
from tempattn.optim import Adam, AdamState, NumericAbort, adam_step
from tempattn.tensor import Tensor


def test_zero_grads_leave_params():
    p = Tensor(np.array([1.0, -2.0]))
    adam_step({"p": p}, {"p": np.zeros(2)}, AdamState(), 1e-2)
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


@given(st.lists(st.floats(-10, 10), min_size=10, max_size=10), st.floats(1e-4, 1e-1))
def test_matches_scalar_loop(grads, lr):
    p = Tensor(np.array([0.3]))
    state = AdamState()
    expect = adam_scalar_loop(0.3, grads, lr)
    for g, e in zip(grads, expect):
        adam_step({"p": p}, {"p": np.array([g])}, state, lr)
        assert p.data[0] == pytest.approx(e, abs=1e-12)


def test_constant_grad_step_tends_to_lr_sign():
    p = Tensor(np.array([0.0]))
    state = AdamState()
    prev = 0.0
    for _ in range(200):
        adam_step({"p": p}, {"p": np.array([-3.0])}, state, 1e-3)
        step, prev = p.data[0] - prev, p.data[0]
    assert step == pytest.approx(1e-3, rel=1e-6)


def test_nan_aborts():
    p = Tensor(np.array([1.0]))
    with pytest.raises(NumericAbort, match="'w'"):
        adam_step({"w": p}, {"w": np.array([np.nan])}, AdamState(), 1e-3)
    assert p.data[0] == 1.0


def test_shape_mismatch():
    with pytest.raises(ValueError):
        adam_step({"w": Tensor(np.zeros(2))}, {"w": np.zeros(3)}, AdamState(), 1e-3)


def test_state_arrays_round_trip(rng):
    w = Tensor(rng.standard_normal(3), requires_grad=True)
    opt = Adam([("w", w)], 1e-2)
    w.grad = np.ones(3)
    opt.step()
    arrays = opt.state_arrays("G/")
    other = Adam([("w", w)], 1e-2)
    other.load_state_arrays(arrays, "G/")
    assert other.state.step == 1
    np.testing.assert_array_equal(other.state.m["w"], opt.state.m["w"])
