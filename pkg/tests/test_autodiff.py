"""Gradient engine checks: hand-computed adjoints, finite differences,
accumulation semantics, and error paths."""

import numpy as np
import pytest

from msgt import autodiff as ad
from msgt.autodiff import Tape, Tensor, backward, finite_diff_check

TOL = 1e-4


def _grad_of(f, x):
    x.zero_grad()
    with Tape() as tape:
        loss = f(x)
    backward(tape, loss)
    return x.grad


def test_sum_all_grad_is_ones():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    g = _grad_of(ad.sum_all, x)
    np.testing.assert_allclose(g, np.ones((2, 3)), atol=0)


def test_elementwise_square_grad():
    # d/dx sum(x*x) = 2x; at x=[1,2] that is [2,4]
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    g = _grad_of(lambda t: ad.sum_all(ad.mul(t, t)), x)
    np.testing.assert_allclose(g, [2.0, 4.0], atol=0)


def test_half_frobenius_grad_is_identity():
    w = Tensor(np.eye(2), requires_grad=True)
    g = _grad_of(lambda t: ad.scale(ad.sum_all(ad.mul(t, t)), 0.5), w)
    np.testing.assert_allclose(g, np.eye(2), atol=0)


def test_grad_accumulates_on_reuse():
    # y = x + x so dy/dx = 2
    x = Tensor(np.array([3.0]), requires_grad=True)
    g = _grad_of(lambda t: ad.sum_all(ad.add(t, t)), x)
    np.testing.assert_allclose(g, [2.0], atol=0)


def test_two_backward_passes_accumulate():
    x = Tensor(np.array([1.0, 1.0]), requires_grad=True)
    with Tape() as tape:
        loss = ad.sum_all(x)
    backward(tape, loss)
    backward(tape, loss)
    np.testing.assert_allclose(x.grad, [2.0, 2.0], atol=0)
    x.zero_grad()
    assert x.grad is None


def test_backward_rejects_nonscalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = ad.mul(x, x)
    with pytest.raises(ValueError):
        backward(tape, y)


def test_no_tape_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    y = ad.mul(x, x)
    assert isinstance(y, Tensor)
    # nothing to walk, grads stay empty
    assert x.grad is None


def test_softmax_rejects_nonfinite():
    with pytest.raises(ValueError, match="non-finite"):
        ad.softmax_rows(Tensor(np.array([[np.nan, 0.0]])))


def test_matmul_rejects_bad_shapes():
    a = Tensor(np.ones((2, 3)))
    b = Tensor(np.ones((2, 3)))
    with pytest.raises(ValueError):
        ad.matmul(a, b)


def test_overwrite_forward_and_stop_gradient():
    x = Tensor(np.array([0.2, 0.4, 0.6]), requires_grad=True)
    with Tape() as tape:
        y = ad.overwrite(x, [1], [1.0])
        loss = ad.sum_all(ad.mul(y, y))
    np.testing.assert_allclose(y.data, [0.2, 1.0, 0.6], atol=0)
    backward(tape, loss)
    np.testing.assert_allclose(x.grad, [0.4, 0.0, 1.2], atol=1e-15)


def test_overwrite_index_out_of_range():
    x = Tensor(np.zeros(3))
    with pytest.raises(IndexError):
        ad.overwrite(x, [3], [1.0])


def test_gather_rows_duplicate_indices_accumulate():
    x = Tensor(np.arange(4.0).reshape(2, 2), requires_grad=True)
    g = _grad_of(lambda t: ad.sum_all(ad.gather_rows(t, [0, 0, 1])), x)
    np.testing.assert_allclose(g, [[2.0, 2.0], [1.0, 1.0]], atol=0)


def test_cross_entropy_hand_value():
    # uniform logits over 4 classes: loss = log(4)
    x = Tensor(np.zeros(4), requires_grad=True)
    with Tape() as tape:
        loss = ad.cross_entropy_logits(x, 2)
    assert loss.item() == pytest.approx(np.log(4.0), abs=1e-12)
    backward(tape, loss)
    want = np.full(4, 0.25)
    want[2] -= 1.0
    np.testing.assert_allclose(x.grad, want, atol=1e-12)


def test_bce_hand_value():
    # logit 0, target 1: loss = log 2
    x = Tensor(np.zeros(1), requires_grad=True)
    with Tape() as tape:
        loss = ad.bce_with_logits(x, np.array([1.0]))
    assert loss.item() == pytest.approx(np.log(2.0), abs=1e-12)
    backward(tape, loss)
    np.testing.assert_allclose(x.grad, [-0.5], atol=1e-12)


@pytest.mark.parametrize("name,builder", [
    ("sigmoid", lambda t: ad.sum_all(ad.sigmoid(t))),
    ("gelu", lambda t: ad.sum_all(ad.gelu(t))),
    ("softmax", lambda t: ad.sum_all(ad.mul(ad.softmax_rows(t), ad.softmax_rows(t)))),
    ("mean_axis", lambda t: ad.sum_all(ad.mean_axis(t, 0))),
    ("max_axis", lambda t: ad.sum_all(ad.max_axis(t, 1))),
    ("logit", lambda t: ad.sum_all(ad.logit(ad.sigmoid(t)))),
    ("abs_sum", lambda t: ad.abs_sum(t)),
    ("transpose", lambda t: ad.sum_all(ad.mul(ad.transpose(t), ad.transpose(t)))),
    ("reshape", lambda t: ad.sum_all(ad.mul(ad.reshape(t, (6,)), ad.reshape(t, (6,))))),
])
def test_finite_diff_elementwise(name, builder):
    rng = np.random.default_rng(23)
    x = Tensor(rng.normal(size=(2, 3)) * 0.7 + 0.1, requires_grad=True)
    assert finite_diff_check(builder, x) < TOL, name


def test_finite_diff_matmul_chain():
    rng = np.random.default_rng(29)
    a_fixed = Tensor(rng.normal(size=(3, 4)))
    x = Tensor(rng.normal(size=(4, 2)), requires_grad=True)

    def f(t):
        return ad.sum_all(ad.gelu(ad.matmul(a_fixed, t)))

    assert finite_diff_check(f, x) < TOL


def test_finite_diff_layer_norm():
    rng = np.random.default_rng(31)
    x = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
    gamma = Tensor(rng.normal(size=5) + 1.0, requires_grad=True)
    beta = Tensor(rng.normal(size=5), requires_grad=True)

    def wrt_x(t):
        return ad.sum_all(ad.mul(ad.layer_norm_rows(t, gamma, beta),
                                 ad.layer_norm_rows(t, gamma, beta)))

    def wrt_gamma(t):
        return ad.sum_all(ad.mul(ad.layer_norm_rows(x, t, beta),
                                 ad.layer_norm_rows(x, t, beta)))

    assert finite_diff_check(wrt_x, x) < TOL
    assert finite_diff_check(wrt_gamma, gamma) < TOL


def test_finite_diff_take_plane():
    rng = np.random.default_rng(53)
    x = Tensor(rng.normal(size=(3, 2, 2)), requires_grad=True)

    def f(t):
        sl = ad.take_plane(t, 1)
        return ad.sum_all(ad.mul(sl, sl))

    assert finite_diff_check(f, x) < TOL
    with pytest.raises(IndexError):
        ad.take_plane(x, 3)


def test_finite_diff_bucket_lookup():
    rng = np.random.default_rng(37)
    table = Tensor(rng.normal(size=(5, 2)), requires_grad=True)
    idx = rng.integers(0, 5, size=(3, 3))

    def f(t):
        looked = ad.bucket_lookup(t, idx)
        return ad.sum_all(ad.mul(looked, looked))

    assert finite_diff_check(f, table) < TOL


def test_finite_diff_concat_and_slice():
    rng = np.random.default_rng(41)
    x = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
    other = Tensor(rng.normal(size=(2, 2)))

    def f(t):
        cat = ad.concat_cols([t, other])
        sl = ad.slice_cols(cat, 1, 4)
        return ad.sum_all(ad.mul(sl, sl))

    assert finite_diff_check(f, x) < TOL


def test_finite_diff_losses():
    rng = np.random.default_rng(43)
    x = Tensor(rng.normal(size=5), requires_grad=True)
    targets = np.array([1.0, 0.0, 1.0, 1.0, 0.0])
    assert finite_diff_check(lambda t: ad.bce_with_logits(t, targets), x) < TOL
    assert finite_diff_check(lambda t: ad.cross_entropy_logits(t, 3), x) < TOL


def test_finite_diff_broadcast_add():
    rng = np.random.default_rng(47)
    b = Tensor(rng.normal(size=4), requires_grad=True)
    x = Tensor(rng.normal(size=(3, 4)))

    def f(t):
        y = ad.add(x, t)
        return ad.sum_all(ad.mul(y, y))

    assert finite_diff_check(f, b) < TOL


def test_affine_init_bounds_and_determinism():
    w1, b1 = ad.affine_init(np.random.default_rng(9), 16, 8)
    w2, b2 = ad.affine_init(np.random.default_rng(9), 16, 8)
    np.testing.assert_array_equal(w1.data, w2.data)
    assert np.abs(w1.data).max() <= 0.25
    np.testing.assert_array_equal(b1.data, np.zeros(8))
    assert w1.requires_grad and b1.requires_grad
