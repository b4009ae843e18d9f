import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgesal.tensor import (
    ConvSpec,
    ShapeError,
    bilinear_upsample,
    bilinear_upsample_backward,
    concat_channels,
    conv2d_backward,
    conv2d_forward,
    relu,
    relu_backward,
    softmax_pixelwise,
    split_channels,
)
from oracles import naive_conv, zero_stuff


def test_box_sum_center_and_corners():
    out = conv2d_forward(np.ones((1, 3, 3)), np.ones((1, 1, 3, 3)), np.zeros(1), ConvSpec(1, 1, 3, 1, 1, 1))
    assert out[0, 1, 1] == 9
    assert out[0, 0, 0] == out[0, 0, 2] == out[0, 2, 0] == out[0, 2, 2] == 4


def test_dilated_impulse_response():
    x = np.zeros((1, 7, 7))
    x[0, 3, 3] = 1.0
    w = np.arange(1.0, 10.0).reshape(1, 1, 3, 3)
    out = conv2d_forward(x, w, None, ConvSpec(1, 1, 3, 1, 2, 2))
    expected = np.zeros((7, 7))
    # cross-correlation flips the kernel in the impulse response
    for a in range(3):
        for b in range(3):
            expected[3 - 2 * (a - 1), 3 - 2 * (b - 1)] = w[0, 0, a, b]
    np.testing.assert_array_equal(out[0], expected)


@pytest.mark.parametrize("dilation", [1, 2, 3, 4])
def test_dilated_equals_zero_stuffed(dilation):
    rng = np.random.default_rng(dilation)
    x = rng.normal(size=(2, 8, 8))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    spec = ConvSpec(2, 3, 3, 1, dilation, dilation)
    got = conv2d_forward(x, w, b, spec)
    want = naive_conv(x, zero_stuff(w, dilation), b, padding=dilation)
    np.testing.assert_allclose(got, want, atol=1e-12, rtol=0)


def test_strided_matches_naive():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(2, 9, 7))
    w = rng.normal(size=(4, 2, 3, 3))
    got = conv2d_forward(x, w, None, ConvSpec(2, 4, 3, 2, 1, 1))
    np.testing.assert_allclose(got, naive_conv(x, w, None, stride=2, padding=1), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(1, 20), k=st.sampled_from([1, 3, 5]), s=st.integers(1, 3),
    p=st.integers(0, 4), l=st.integers(1, 4),
)
def test_output_extent_law(n, k, s, p, l):
    spec = ConvSpec(1, 1, k, s, p, l)
    expected = (n + 2 * p - l * (k - 1) - 1) // s + 1
    x = np.zeros((1, n, n))
    w = np.zeros((1, 1, k, k))
    if expected < 1:
        with pytest.raises(ShapeError):
            conv2d_forward(x, w, None, spec)
    else:
        assert conv2d_forward(x, w, None, spec).shape == (1, expected, expected)


def test_shape_diagnostics_name_the_dimension():
    spec = ConvSpec(2, 3)
    with pytest.raises(ShapeError, match="input channels"):
        conv2d_forward(np.zeros((1, 5, 5)), np.zeros((3, 2, 3, 3)), None, spec)
    with pytest.raises(ShapeError, match="'kh'"):
        conv2d_forward(np.zeros((2, 5, 5)), np.zeros((3, 2, 5, 3)), None, spec)
    with pytest.raises(ShapeError, match="bias"):
        conv2d_forward(np.zeros((2, 5, 5)), np.zeros((3, 2, 3, 3)), np.zeros(2), spec)
    with pytest.raises(ShapeError, match="output extent"):
        conv2d_forward(np.zeros((2, 2, 2)), np.zeros((3, 2, 3, 3)), None, spec)


def test_convspec_rejects_bad_fields():
    for kwargs in ({"kernel": 2}, {"stride": 0}, {"padding": -1}, {"dilation": 0}):
        with pytest.raises(ShapeError):
            ConvSpec(1, 1, **kwargs)


def test_linearity():
    rng = np.random.default_rng(1)
    x, y = rng.normal(size=(2, 2, 6, 6))
    w = rng.normal(size=(2, 2, 3, 3))
    spec = ConvSpec(2, 2, 3, 1, 2, 2)
    lhs = conv2d_forward(1.5 * x - 0.7 * y, w, None, spec)
    rhs = 1.5 * conv2d_forward(x, w, None, spec) - 0.7 * conv2d_forward(y, w, None, spec)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_backward_zero_grad_out():
    spec = ConvSpec(2, 3, 3, 1, 1, 1)
    gx, gw, gb = conv2d_backward(np.ones((2, 4, 4)), np.ones((3, 2, 3, 3)), spec, np.zeros((3, 4, 4)))
    assert not gx.any() and not gw.any() and not gb.any()


def test_backward_scalar_chain_rule():
    spec = ConvSpec(1, 1, 1)
    gx, gw, gb = conv2d_backward(np.full((1, 1, 1), 3.0), np.full((1, 1, 1, 1), -2.0), spec, np.full((1, 1, 1), 5.0))
    assert gw.item() == 15.0 and gx.item() == -10.0 and gb.item() == 5.0


@pytest.mark.parametrize("stride,dilation", [(1, 1), (2, 1), (1, 2)])
def test_backward_matches_finite_differences(stride, dilation):
    rng = np.random.default_rng(stride * 10 + dilation)
    spec = ConvSpec(2, 2, 3, stride, dilation, dilation)
    x = rng.normal(size=(2, 4, 4))
    w = rng.normal(size=(2, 2, 3, 3))
    b = rng.normal(size=2)
    g = rng.normal(size=conv2d_forward(x, w, b, spec).shape)

    def f(x_, w_, b_):
        return float((conv2d_forward(x_, w_, b_, spec) * g).sum())

    gx, gw, gb = conv2d_backward(x, w, spec, g)
    h = 1e-4
    for arr, grad in ((x, gx), (w, gw), (b, gb)):
        flat = arr.reshape(-1)
        for i in range(flat.size):
            o = flat[i]
            flat[i] = o + h
            fp = f(x, w, b)
            flat[i] = o - h
            fm = f(x, w, b)
            flat[i] = o
            fd = (fp - fm) / (2 * h)
            an = grad.reshape(-1)[i]
            assert abs(fd - an) <= 1e-3 * max(abs(fd), abs(an), 1e-6)


def test_relu_examples():
    np.testing.assert_array_equal(relu(np.array([-1.0, 0.0, 2.0])), [0, 0, 2])
    assert not relu(-np.ones((2, 3))).any()
    np.testing.assert_array_equal(relu_backward(np.array([-1.0, 0.0, 2.0]), np.ones(3)), [0, 0, 1])


def test_relu_backward_finite_differences():
    rng = np.random.default_rng(3)
    x = rng.normal(size=50)
    x = x[np.abs(x) > 1e-2]
    g = rng.normal(size=x.size)
    h = 1e-4
    fd = ((relu(x + h) - relu(x - h)) / (2 * h)) * g
    np.testing.assert_allclose(relu_backward(x, g), fd, rtol=1e-3, atol=1e-12)


def test_upsample_examples():
    x = np.arange(4.0).reshape(1, 2, 2)
    np.testing.assert_array_equal(bilinear_upsample(x, 2, 2), x)
    ramp = bilinear_upsample(np.array([[[0.0, 1.0]]]), 1, 5)
    np.testing.assert_allclose(ramp[0, 0], [0, 0.25, 0.5, 0.75, 1.0], atol=1e-15)
    const = bilinear_upsample(np.full((2, 3, 4), 0.3), 11, 13)
    np.testing.assert_allclose(const, 0.3, atol=1e-15)
    with pytest.raises(ShapeError):
        bilinear_upsample(np.zeros((1, 4, 4)), 3, 8)


def test_upsample_backward_is_adjoint():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(2, 4, 3))
    y = rng.normal(size=(2, 16, 12))
    lhs = (bilinear_upsample(x, 16, 12) * y).sum()
    rhs = (x * bilinear_upsample_backward(x.shape, y)).sum()
    assert abs(lhs - rhs) < 1e-10


def test_concat_and_split_round_trip():
    rng = np.random.default_rng(0)
    parts = [rng.normal(size=(c, 8, 8)) for c in (3, 1, 1, 1, 1, 1, 1)]
    cat = concat_channels(parts)
    assert cat.shape == (9, 8, 8)
    for a, b in zip(parts, split_channels(cat, [3, 1, 1, 1, 1, 1, 1])):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(concat_channels([parts[0]]), parts[0])
    with pytest.raises(ShapeError):
        concat_channels([np.zeros((1, 8, 8)), np.zeros((1, 8, 7))])


def test_softmax():
    np.testing.assert_allclose(softmax_pixelwise(np.zeros((3, 2, 2))), 1 / 3, atol=1e-15)
    p = softmax_pixelwise(np.array([1000.0, 0.0, 0.0]).reshape(3, 1, 1))
    np.testing.assert_array_equal(p.ravel(), [1.0, 0.0, 0.0])
    q = softmax_pixelwise(np.random.default_rng(0).normal(0, 10, size=(3, 9, 9)))
    assert np.all((q >= 0) & (q <= 1))
    np.testing.assert_allclose(q.sum(axis=0), 1.0, atol=1e-12)
