import numpy as np
import pytest

import apvoc.autodiff as ad
from apvoc.autodiff import (
    AutodiffError,
    Parameter,
    Tape,
    Tensor,
    grad_check,
)

RNG = np.random.default_rng(42)


def param(shape, name="p", lo=-1.0, hi=1.0, seed=None):
    rng = np.random.default_rng(seed) if seed is not None else RNG
    return Parameter(rng.uniform(lo, hi, shape), name)


def check_op(builder, params, eps=1e-5, tol=1e-4):
    """grad_check an op through a fixed random projection to a scalar."""
    proj_cache = {}

    def f():
        out = builder(*params)
        if out.shape not in proj_cache:
            rng = np.random.default_rng(99)
            proj_cache[out.shape] = Tensor(rng.standard_normal(out.shape))
        return ad.tsum(ad.mul(out, proj_cache[out.shape]))

    err = grad_check(f, params, eps=eps)
    assert err < tol, f"max relative error {err:.3e} >= {tol}"


# ---------------------------------------------------------------------------
# forward contracts
# ---------------------------------------------------------------------------


def test_conv1d_same_padding_length():
    x = Tensor(RNG.standard_normal((3, 16)))
    w = Tensor(RNG.standard_normal((5, 3, 7)))
    assert ad.conv1d(x, w, padding=3).shape == (5, 16)


def test_conv1d_dilation_receptive_field():
    # kernel 3, dilation 2, pad 2: same length, receptive field of 5 samples.
    x = Parameter(np.zeros((1, 16)), "x")
    w = Tensor(np.ones((1, 1, 3)))
    out = ad.conv1d(x, w, padding=2, dilation=2)
    assert out.shape == (1, 16)
    with Tape() as tape:
        y = ad.slice_(ad.conv1d(x, w, padding=2, dilation=2), (0, 8))
    tape.backward(y)
    touched = np.nonzero(x.grad[0])[0]
    assert touched.tolist() == [6, 8, 10]
    assert touched.max() - touched.min() + 1 == 5


def test_activation_values():
    assert ad.gelu(Tensor(0.0)).item() == 0.0
    assert ad.leaky_relu(Tensor(-1.0), 0.1).item() == pytest.approx(-0.1)
    assert ad.leaky_relu(Tensor(2.0), 0.1).item() == pytest.approx(2.0)


def test_shape_errors_name_the_primitive():
    with pytest.raises(AutodiffError, match="matmul"):
        ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))
    with pytest.raises(AutodiffError, match="add"):
        ad.add(Tensor(np.zeros(3)), Tensor(np.zeros(4)))
    with pytest.raises(AutodiffError, match="conv1d"):
        ad.conv1d(Tensor(np.zeros((3, 8))), Tensor(np.zeros((4, 2, 3))))


# ---------------------------------------------------------------------------
# backward contracts
# ---------------------------------------------------------------------------


def test_backward_linear_map_gradient_is_input():
    x = np.linspace(-1, 1, 12)
    w = Parameter(RNG.standard_normal(12), "w")
    with Tape() as tape:
        loss = ad.tsum(ad.mul(w, Tensor(x)))
    tape.backward(loss)
    np.testing.assert_allclose(w.grad, x)


def test_backward_scalar_quadratic():
    w = Parameter(1.0, "w")
    with Tape() as tape:
        loss = ad.mean(ad.power(ad.sub(w, 3.0), 2.0))
    tape.backward(loss)
    assert w.grad == pytest.approx(-4.0)


def test_backward_accumulates_without_zeroing():
    w = Parameter(RNG.standard_normal(5), "w")
    with Tape() as tape:
        loss = ad.tsum(ad.mul(w, w))
    tape.backward(loss)
    once = w.grad.copy()
    tape.backward(loss)
    np.testing.assert_array_equal(w.grad, 2 * once)


def test_backward_rejects_nonscalar():
    w = Parameter(np.ones(3), "w")
    with Tape() as tape:
        out = ad.mul(w, 2.0)
    with pytest.raises(AutodiffError):
        tape.backward(out)


def test_unreachable_parameter_untouched():
    used = Parameter(np.ones(3), "used")
    unused = Parameter(np.ones(3), "unused")
    with Tape() as tape:
        loss = ad.tsum(used)
    tape.backward(loss)
    assert np.all(unused.grad == 0)
    assert np.all(used.grad == 1)


def test_detach_blocks_gradient():
    w = Parameter(np.ones(4), "w")
    with Tape() as tape:
        h = ad.mul(w, 3.0)
        loss = ad.tsum(ad.mul(h.detach(), w))
    tape.backward(loss)
    np.testing.assert_allclose(w.grad, 3.0)  # only the direct factor


def test_forward_determinism_and_tape_replay():
    x = Tensor(RNG.standard_normal((4, 32)))
    w = Tensor(RNG.standard_normal((4, 4, 3)))

    def run():
        return ad.tsum(ad.gelu(ad.conv1d(x, w, padding=1))).item()

    assert run() == run()


# ---------------------------------------------------------------------------
# grad_check every primitive (64-bit, eps 1e-5, < 1e-4 relative)
# ---------------------------------------------------------------------------


def test_grad_elementwise_binary():
    a, b = param((3, 4), "a"), param((3, 4), "b")
    check_op(ad.add, [a, b])
    check_op(ad.sub, [a, b])
    check_op(ad.mul, [a, b])
    bb = param((3, 4), "bb", lo=0.5, hi=2.0)
    check_op(ad.div, [a, bb])
    # broadcasting variants
    col = param((3, 1), "col")
    check_op(ad.mul, [a, col])
    check_op(ad.add, [col, a])


def test_grad_elementwise_unary():
    a = param((4, 5), "a")
    check_op(ad.neg, [a])
    check_op(ad.exp, [a])
    check_op(ad.cos, [a])
    check_op(ad.sin, [a])
    check_op(ad.tanh, [a])
    check_op(ad.gelu, [a])
    pos = param((4, 5), "pos", lo=0.5, hi=2.0)
    check_op(ad.log, [pos])
    check_op(ad.sqrt, [pos])
    check_op(lambda t: ad.power(t, 3.0), [pos])
    off = Parameter(RNG.uniform(0.2, 1.0, (4, 5)) * np.sign(RNG.standard_normal((4, 5))), "off")
    check_op(ad.absolute, [off])
    check_op(lambda t: ad.leaky_relu(t, 0.1), [off])
    check_op(lambda t: ad.clamp_min(t, 0.1), [Parameter(RNG.uniform(0.3, 1.0, (3, 3)), "c")])


def test_grad_reductions():
    a = param((3, 4, 2), "a")
    check_op(ad.tsum, [a])
    check_op(lambda t: ad.tsum(t, axis=1), [a])
    check_op(lambda t: ad.tsum(t, axis=2, keepdims=True), [a])
    check_op(ad.mean, [a])
    check_op(lambda t: ad.mean(t, axis=0), [a])
    check_op(lambda t: ad.mean(t, axis=1, keepdims=True), [a])


def test_grad_matmul_and_shape_ops():
    a, b = param((3, 4), "a"), param((4, 5), "b")
    check_op(ad.matmul, [a, b])
    check_op(lambda t: ad.reshape(t, (2, 6)), [a])
    check_op(lambda t: ad.transpose(t), [a])
    check_op(lambda t: ad.transpose(t, (1, 0)), [a])
    c, d = param((2, 3), "c"), param((4, 3), "d")
    check_op(lambda u, v: ad.concat([u, v], axis=0), [c, d])
    check_op(lambda t: ad.slice_(t, (slice(1, 3), slice(None, None, 2))), [a])


def test_grad_pad():
    a = param((2, 8), "a")
    check_op(lambda t: ad.pad(t, 3, 2), [a])
    check_op(lambda t: ad.pad(t, 3, 2, mode="reflect"), [a])
    x = param((16,), "x")
    check_op(lambda t: ad.pad(t, 5, 7, mode="reflect"), [x])


def test_grad_frame_and_overlap_add():
    x = param((40,), "x")
    check_op(lambda t: ad.frame(t, 8, 4), [x])
    fr = param((5, 8), "fr")
    check_op(lambda t: ad.overlap_add(t, 4), [fr])
    check_op(lambda t: ad.overlap_add(t, 3), [fr])  # hop not dividing length


def test_grad_conv1d_variants():
    x = param((4, 20), "x")
    w = param((6, 4, 5), "w")
    b = param((6,), "b")
    check_op(lambda *p: ad.conv1d(*p, padding=2), [x, w, b])
    check_op(lambda *p: ad.conv1d(*p, stride=2, padding=2), [x, w, b])
    check_op(lambda *p: ad.conv1d(*p, dilation=2, padding=4), [x, w, b])
    wd = param((4, 1, 5), "wd")
    check_op(lambda xx, ww: ad.conv1d(xx, ww, padding=2, groups=4), [x, wd])
    wg = param((6, 2, 3), "wg")
    check_op(lambda xx, ww: ad.conv1d(xx, ww, padding=1, groups=2), [x, wg])


def test_grad_conv2d_variants():
    x = param((2, 10, 6), "x")
    w = param((3, 2, 3, 3), "w")
    b = param((3,), "b")
    check_op(lambda *p: ad.conv2d(*p, padding=(1, 1)), [x, w, b])
    check_op(lambda *p: ad.conv2d(*p, stride=(2, 1), padding=(1, 0)), [x, w, b])
    wtall = param((3, 2, 5, 1), "wt")
    check_op(lambda xx, ww: ad.conv2d(xx, ww, stride=(3, 1), padding=(2, 0)), [x, wtall])


def test_grad_wrapped_phase_and_anti_wrap():
    r = Parameter(RNG.uniform(0.3, 1.5, (3, 4)) * np.sign(RNG.standard_normal((3, 4))), "r")
    i = Parameter(RNG.uniform(0.3, 1.5, (3, 4)) * np.sign(RNG.standard_normal((3, 4))), "i")
    check_op(ad.wrapped_phase, [r, i])
    # keep samples away from the kinks at multiples of pi
    x = Parameter(RNG.uniform(0.3, 2.8, (3, 4)) * np.sign(RNG.standard_normal((3, 4))), "x")
    check_op(ad.anti_wrap, [x])


def test_grad_check_sampling():
    w = Parameter(RNG.standard_normal(100), "w")

    def f():
        return ad.tsum(ad.mul(w, w))

    assert grad_check(f, [w], sample=10) < 1e-6


def test_wrapped_phase_matches_dsp():
    from apvoc.dsp import phi

    r = RNG.standard_normal((8, 8))
    i = RNG.standard_normal((8, 8))
    out = ad.wrapped_phase(Tensor(r), Tensor(i)).data
    np.testing.assert_allclose(out, phi(r, i), atol=1e-12)
