import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stkit.errors import ContractError, ShapeError
from stkit.tensor import (AdamState, ScheduleConfig, Tensor, adam_update, backprop, check_gradients, default_dtype,
                          label_smoothed_ce, no_grad, noam_lr, ops, precision, scale_factor)

rng = np.random.default_rng(0)
TOL = 1e-4


def r(*shape):
    return rng.normal(size=shape)


# -- gradients of every primitive

UNARY = {
    "exp": (ops.exp, (3, 4)),
    "log": (lambda a: ops.log(ops.add(ops.mul(a, a), Tensor(1.0))), (3, 4)),
    "relu": (ops.relu, (4, 5)),
    "softmax": (ops.softmax, (2, 3, 5)),
    "log_softmax": (ops.log_softmax, (3, 6)),
    "transpose": (lambda a: ops.transpose(a, (2, 0, 1)), (2, 3, 4)),
    "swapaxes": (lambda a: ops.swapaxes(a, 0, 1), (2, 3)),
    "reshape": (lambda a: ops.reshape(a, (6, 2)), (3, 4)),
    "getitem": (lambda a: ops.getitem(a, (slice(None), np.array([0, 2, 2]))), (3, 4)),
    "sum_axis": (lambda a: ops.sum(a, axis=1, keepdims=True), (3, 4)),
    "mean": (lambda a: ops.mean(a, axis=0), (3, 4)),
    "neg_scale": (lambda a: ops.scale(ops.neg(a), 2.5), (2, 2)),
    "masked_fill": (lambda a: ops.masked_fill(a, np.eye(3, dtype=bool), -7.0), (3, 3)),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_gradients(name):
    fn, shape = UNARY[name]
    x = r(*shape)
    if name == "relu":
        x[np.abs(x) < 1e-2] = 0.5  # keep away from the kink
    assert max(check_gradients(fn, [x])) < TOL


BINARY = {
    "add_broadcast": (ops.add, (3, 4), (4,)),
    "sub": (ops.sub, (2, 3), (2, 1)),
    "mul_broadcast": (ops.mul, (2, 3, 4), (1, 3, 1)),
    "div": (lambda a, b: ops.div(a, ops.add(ops.mul(b, b), Tensor(0.5))), (3, 3), (3, 3)),
    "matmul": (ops.matmul, (2, 3), (3, 4)),
    "matmul_batched": (ops.matmul, (2, 3, 4), (4, 5)),
    "concat": (lambda a, b: ops.concat([a, b], axis=1), (2, 3), (2, 2)),
    "embedding": (lambda w, _: ops.embedding_lookup(w, np.array([[0, 2], [2, 1]])), (3, 4), (1,)),
}


@pytest.mark.parametrize("name", sorted(BINARY))
def test_binary_gradients(name):
    fn, sa, sb = BINARY[name]
    assert max(check_gradients(fn, [r(*sa), r(*sb)])) < TOL


def test_layer_norm_gradients():
    assert max(check_gradients(ops.layer_norm, [r(2, 3, 6), r(6), r(6)])) < TOL


@pytest.mark.parametrize("stride", [1, 2])
def test_conv2d_gradients(stride):
    errs = check_gradients(lambda x, k, b: ops.conv2d(x, k, b, stride=stride),
                           [r(2, 5, 6, 2), r(3, 3, 2, 3), r(3)])
    assert max(errs) < TOL


def test_dropout_gradient_uses_the_same_mask():
    def fn(x):
        return ops.dropout(x, 0.3, np.random.default_rng(5))
    assert max(check_gradients(fn, [r(4, 4)])) < TOL


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=1, max_size=3))
def test_random_shapes_softmax_family(shape):
    x = np.random.default_rng(len(shape)).normal(size=shape)
    assert max(check_gradients(ops.log_softmax, [x])) < TOL
    assert max(check_gradients(lambda a, g, b: ops.layer_norm(a, g, b), [x, r(shape[-1]), r(shape[-1])])) < 1e-3


# -- forward semantics

def test_square_gradient():
    x = Tensor(3.0, requires_grad=True)
    backprop(ops.mul(x, x))
    assert x.grad == pytest.approx(6.0)


def test_disconnected_gets_zero_and_nonscalar_rejected():
    a = Tensor(np.ones(3), requires_grad=True)
    b = Tensor(np.ones(2), requires_grad=True)
    grads = backprop(ops.sum(ops.mul(a, a)), [a, b])
    assert not grads[1].any() and grads[1].shape == (2,)
    with pytest.raises(ContractError):
        backprop(ops.mul(a, a))


def test_shape_errors_report_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 4\)"):
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 4))))
    with pytest.raises(ShapeError):
        ops.add(Tensor(np.ones((2, 3))), Tensor(np.ones(4)))


def test_matmul_shape_and_softmax_rows():
    assert ops.matmul(Tensor(r(2, 3)), Tensor(r(3, 4))).shape == (2, 4)
    s = ops.softmax(Tensor(r(5, 7))).data
    assert np.abs(s.sum(axis=-1) - 1).max() < 1e-6
    x = Tensor(r(4, 9), dtype=np.float64)
    np.testing.assert_allclose(ops.log_softmax(x).data, np.log(ops.softmax(x).data), atol=1e-6)


def test_softmax_is_stable_for_large_inputs():
    out = ops.softmax(Tensor(np.array([[1000.0, 1000.0, -1000.0]]))).data
    np.testing.assert_allclose(out, [[0.5, 0.5, 0.0]], atol=1e-6)


def test_layer_norm_statistics():
    x = Tensor(r(6, 32) * 4 + 3, dtype=np.float64)
    y = ops.layer_norm(x, Tensor(np.ones(32)), Tensor(np.zeros(32))).data
    assert np.abs(y.mean(axis=-1)).max() < 1e-6
    assert np.abs(y.var(axis=-1) - 1).max() < 1e-5


def test_conv_same_lengths():
    x = Tensor(np.zeros((1, 3000, 4, 1), dtype=np.float32))
    k = Tensor(np.zeros((3, 3, 1, 2), dtype=np.float32))
    assert ops.conv2d(x, k, stride=2).shape == (1, 1500, 2, 2)
    assert ops.conv2d(Tensor(np.zeros((1, 7, 5, 1))), Tensor(np.zeros((3, 3, 1, 1))), stride=2).shape[1:3] == (4, 3)


def test_conv_matches_direct_loop():
    x, k, b = r(1, 5, 4, 2), r(3, 3, 2, 3), r(3)
    got = ops.conv2d(Tensor(x), Tensor(k), Tensor(b), stride=2).data
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    want = np.zeros((1, 3, 2, 3))
    for i in range(3):
        for j in range(2):
            want[0, i, j] = np.einsum("hwc,hwco->o", xp[0, 2 * i:2 * i + 3, 2 * j:2 * j + 3], k) + b
    np.testing.assert_allclose(got, want, atol=1e-5)


def test_dropout_identity_and_expectation():
    x = Tensor(np.full(100_000, 2.0))
    assert ops.dropout(x, 0.0, np.random.default_rng(0)) is x
    assert ops.dropout(x, 0.5, np.random.default_rng(0), training=False) is x
    y = ops.dropout(x, 0.1, np.random.default_rng(0)).data
    assert abs(y.mean() - 2.0) / 2.0 < 0.02
    np.testing.assert_allclose(np.unique(y), [0.0, 2.0 / 0.9])


def test_positional_encoding():
    pe = ops.positional_encoding(50, 16)
    assert pe.shape == (50, 16)
    np.testing.assert_allclose(pe[0, :8], 0.0)
    np.testing.assert_allclose(pe[0, 8:], 1.0)
    assert np.abs(pe).max() <= 1.0


def test_precision_and_no_grad():
    assert default_dtype() == np.float32
    with precision(np.float64):
        assert Tensor([1, 2]).dtype == np.float64
    assert Tensor([1, 2]).dtype == np.float32
    assert Tensor(np.ones(2, np.float64)).dtype == np.float64  # float arrays keep their precision
    a = Tensor(np.ones(2), requires_grad=True)
    with no_grad():
        assert not ops.mul(a, a).requires_grad


# -- schedule

def test_noam_closed_form():
    cfg = ScheduleConfig(256, 25000)
    assert noam_lr(25000, cfg) == pytest.approx(3.9528e-4, rel=1e-4)
    assert noam_lr(25000, cfg) == pytest.approx(256 ** -0.5 * 25000 ** -0.5, rel=1e-12)
    assert noam_lr(1, cfg) == pytest.approx(256 ** -0.5 * 25000 ** -1.5, rel=1e-12)
    with pytest.raises(ValueError):
        noam_lr(0, cfg)


def test_task_scales():
    st_cfg, asr, mt = (ScheduleConfig.for_task(t) for t in ("st", "asr", "mt"))
    assert [scale_factor(s, st_cfg) for s in (1, 50000, 75000, 100000, 200000)] == [3.5, 3.5, 2.5, 1.5, 1.5]
    assert scale_factor(75000, asr) == pytest.approx(2.75)
    assert scale_factor(100000, asr) == 2.0
    assert all(scale_factor(s, mt) == 1.0 for s in (1, 25000, 50000, 75000, 100000, 200000))


def test_noam_monotone():
    cfg = ScheduleConfig(256, 100)
    rise = [noam_lr(s, cfg) for s in range(1, 101)]
    fall = [noam_lr(s, cfg) for s in range(100, 400)]
    assert all(a < b for a, b in zip(rise, rise[1:]))
    assert all(a > b for a, b in zip(fall, fall[1:]))


def test_schedule_validation():
    with pytest.raises(ValueError):
        ScheduleConfig(256, 0)
    with pytest.raises(ValueError):
        ScheduleConfig(256, 10, decay_at=5)


# -- adam

def test_adam_zero_gradient_is_a_noop():
    p = {"w": Tensor(r(3, 3))}
    before = p["w"].data.copy()
    adam_update(p, {"w": np.zeros((3, 3))}, AdamState(), 0.1)
    np.testing.assert_array_equal(p["w"].data, before)


def test_adam_first_step_by_hand():
    p = {"w": Tensor(np.array([0.0]), dtype=np.float64)}
    state = AdamState()
    adam_update(p, {"w": np.array([1.0])}, state, 0.1)
    assert p["w"].data[0] == pytest.approx(-0.1, rel=1e-6)
    assert state.t == 1 and (state.beta1, state.beta2, state.eps) == (0.9, 0.98, 1e-9)


def test_adam_deterministic_and_checks_shapes():
    def run():
        p = {"w": Tensor(np.linspace(-1, 1, 6).reshape(2, 3))}
        s = AdamState()
        for _ in range(2):
            adam_update(p, {"w": np.full((2, 3), 0.3, dtype=np.float32)}, s, 0.01)
        return p["w"].data
    np.testing.assert_array_equal(run(), run())
    with pytest.raises(ShapeError):
        adam_update({"w": Tensor(np.ones(2))}, {"w": np.ones(3)}, AdamState(), 0.1)


# -- loss

def test_label_smoothing_hand_value():
    logits = Tensor(np.array([[[0.0, math.log(3.0)]]]), dtype=np.float64)
    loss, nll = label_smoothed_ce(logits, np.array([[1]]), 0.1)
    assert loss.item() == pytest.approx(-(0.9 * math.log(0.75) + 0.1 * math.log(0.25)), rel=1e-9)
    assert nll == pytest.approx(-math.log(0.75))


def test_uniform_logits_give_log_v():
    for eps in (0.0, 0.1, 0.5):
        loss, _ = label_smoothed_ce(Tensor(np.zeros((2, 3, 7)), dtype=np.float64), np.ones((2, 3), int), eps)
        assert loss.item() == pytest.approx(math.log(7))


def test_no_smoothing_is_cross_entropy_and_mask_matters():
    x = r(2, 4, 5)
    t = np.array([[0, 1, 2, 3], [4, 0, 0, 0]])
    mask = np.array([[1, 1, 1, 1], [1, 0, 0, 0]], bool)
    loss, nll = label_smoothed_ce(Tensor(x, dtype=np.float64), t, 0.0, mask)
    logp = x - np.log(np.exp(x).sum(-1, keepdims=True))
    want = -np.take_along_axis(logp, t[..., None], -1)[..., 0][mask].mean()
    assert loss.item() == pytest.approx(want) == pytest.approx(nll)
    assert max(check_gradients(lambda a: label_smoothed_ce(a, t, 0.1, mask)[0], [x])) < TOL


def test_target_range_checked():
    with pytest.raises(ValueError):
        label_smoothed_ce(Tensor(np.zeros((1, 1, 3))), np.array([[3]]))
