"""Dense tensor kernels on C×H×W float64 arrays.

Everything here works on a single example; there is no batch axis. Arrays are
plain ``numpy.ndarray`` objects in row-major order.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: int = 3
    stride: int = 1
    padding: int = 0
    dilation: int = 1

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise ShapeError("channel counts must be positive")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ShapeError(f"kernel extent must be odd and positive, got {self.kernel}")
        if self.stride < 1:
            raise ShapeError(f"stride must be >= 1, got {self.stride}")
        if self.padding < 0:
            raise ShapeError(f"padding must be >= 0, got {self.padding}")
        if self.dilation < 1:
            raise ShapeError(f"dilation must be >= 1, got {self.dilation}")

    @property
    def span(self) -> int:
        """Extent covered by one dilated kernel."""
        return self.dilation * (self.kernel - 1) + 1

    def output_extent(self, n: int) -> int:
        return (n + 2 * self.padding - self.dilation * (self.kernel - 1) - 1) // self.stride + 1

    def output_shape(self, h: int, w: int) -> tuple[int, int, int]:
        ho, wo = self.output_extent(h), self.output_extent(w)
        if ho < 1 or wo < 1:
            raise ShapeError(
                f"output extent {ho}x{wo} < 1 for input {h}x{w} "
                f"(k={self.kernel}, s={self.stride}, p={self.padding}, l={self.dilation})"
            )
        return self.out_channels, ho, wo


def _check_conv_args(x, weights, spec: ConvSpec, bias=None):
    if x.ndim != 3:
        raise ShapeError(f"input must be C×H×W, got ndim={x.ndim}")
    if x.shape[0] != spec.in_channels:
        raise ShapeError(f"input channels: got {x.shape[0]}, spec expects {spec.in_channels}")
    expected = (spec.out_channels, spec.in_channels, spec.kernel, spec.kernel)
    if weights.shape != expected:
        for name, got, want in zip(("out", "in", "kh", "kw"), weights.shape, expected):
            if got != want:
                raise ShapeError(f"weights dimension '{name}': got {got}, expected {want}")
        raise ShapeError(f"weights shape {weights.shape} != {expected}")
    if bias is not None and bias.shape != (spec.out_channels,):
        raise ShapeError(f"bias length: got {bias.shape}, expected ({spec.out_channels},)")
    return spec.output_shape(x.shape[1], x.shape[2])


def _zero_pad(x: np.ndarray, p: int) -> np.ndarray:
    if not p:
        return np.ascontiguousarray(x)
    c, h, w = x.shape
    xp = np.zeros((c, h + 2 * p, w + 2 * p))
    xp[:, p : p + h, p : p + w] = x
    return xp


def _im2col(x: np.ndarray, spec: ConvSpec, ho: int, wo: int) -> np.ndarray:
    c = x.shape[0]
    k, s, l = spec.kernel, spec.stride, spec.dilation
    xp = _zero_pad(x, spec.padding)
    sc, sh, sw = xp.strides
    view = np.ndarray(
        (c, k, k, ho, wo), dtype=xp.dtype, buffer=xp, strides=(sc, l * sh, l * sw, s * sh, s * sw)
    )
    return view.reshape(c * k * k, ho * wo)


def _col2im(cols: np.ndarray, shape, spec: ConvSpec, ho: int, wo: int) -> np.ndarray:
    c, h, w = shape
    k, s, p, l = spec.kernel, spec.stride, spec.padding, spec.dilation
    cols = cols.reshape(c, k, k, ho, wo)
    gp = np.zeros((c, h + 2 * p, w + 2 * p), dtype=np.float64)
    for ki in range(k):
        r0 = ki * l
        for kj in range(k):
            c0 = kj * l
            gp[:, r0 : r0 + s * (ho - 1) + 1 : s, c0 : c0 + s * (wo - 1) + 1 : s] += cols[:, ki, kj]
    if p:
        gp = gp[:, p : p + h, p : p + w]
    return gp


def conv2d_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray | None, spec: ConvSpec) -> np.ndarray:
    """Cross-correlation with zero padding, stride and dilation.

    ``out[o, i, j] = bias[o] + sum_{c,a,b} w[o, c, a, b] * x[c, i*s + a*l - p, j*s + b*l - p]``
    """
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    o, ho, wo = _check_conv_args(x, weights, spec, bias)
    cols = _im2col(x, spec, ho, wo)
    out = weights.reshape(o, -1) @ cols
    if bias is not None:
        out += np.asarray(bias, dtype=np.float64)[:, None]
    return out.reshape(o, ho, wo)


def conv2d_backward(x: np.ndarray, weights: np.ndarray, spec: ConvSpec, grad_out: np.ndarray):
    """Return ``(grad_input, grad_weights, grad_bias)`` for :func:`conv2d_forward`."""
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    o, ho, wo = _check_conv_args(x, weights, spec)
    if grad_out.shape != (o, ho, wo):
        raise ShapeError(f"grad_out shape {grad_out.shape} != forward output {(o, ho, wo)}")
    g = np.asarray(grad_out, dtype=np.float64).reshape(o, ho * wo)
    cols = _im2col(x, spec, ho, wo)
    grad_w = (g @ cols.T).reshape(weights.shape)
    grad_b = g.sum(axis=1)
    grad_x = _col2im(weights.reshape(o, -1).T @ g, x.shape, spec, ho, wo)
    return grad_x, grad_w, grad_b


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    # ties at zero pass no gradient
    return np.where(x > 0, grad_out, 0.0)


@lru_cache(maxsize=64)
def _interp_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Row i holds the corner-aligned linear weights for output sample i."""
    a = np.zeros((n_out, n_in), dtype=np.float64)
    if n_in == 1 or n_out == 1:
        a[:, 0] = 1.0
        a.flags.writeable = False
        return a
    src = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
    lo = np.minimum(np.floor(src).astype(int), n_in - 2)
    frac = src - lo
    rows = np.arange(n_out)
    a[rows, lo] = 1.0 - frac
    a[rows, lo + 1] += frac
    a.flags.writeable = False
    return a


def _check_upsample(shape, out_h: int, out_w: int):
    if len(shape) != 3:
        raise ShapeError(f"input must be C×H×W, got ndim={len(shape)}")
    _, h, w = shape
    if out_h < h or out_w < w:
        raise ShapeError(f"downscaling {h}x{w} -> {out_h}x{out_w} is not supported")


def bilinear_upsample(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Channelwise bilinear interpolation with corner-aligned sampling."""
    x = np.asarray(x, dtype=np.float64)
    _check_upsample(x.shape, out_h, out_w)
    if x.shape[1:] == (out_h, out_w):
        return x.copy()
    ah = _interp_matrix(out_h, x.shape[1])
    aw = _interp_matrix(out_w, x.shape[2])
    return (ah @ x) @ aw.T


def bilinear_upsample_backward(in_shape, grad_out: np.ndarray) -> np.ndarray:
    c, h, w = in_shape
    _, out_h, out_w = grad_out.shape
    _check_upsample(in_shape, out_h, out_w)
    if (h, w) == (out_h, out_w):
        return np.array(grad_out, dtype=np.float64)
    ah = _interp_matrix(out_h, h)
    aw = _interp_matrix(out_w, w)
    return (ah.T @ grad_out) @ aw


def concat_channels(parts) -> np.ndarray:
    parts = [np.asarray(p, dtype=np.float64) for p in parts]
    if not parts:
        raise ShapeError("nothing to concatenate")
    hw = parts[0].shape[1:]
    for i, p in enumerate(parts):
        if p.ndim != 3 or p.shape[1:] != hw:
            raise ShapeError(f"part {i} has spatial extent {p.shape[1:]}, expected {hw}")
    return np.concatenate(parts, axis=0)


def split_channels(x: np.ndarray, counts) -> list[np.ndarray]:
    """Inverse of :func:`concat_channels` (used to route gradients back)."""
    if sum(counts) != x.shape[0]:
        raise ShapeError(f"channel counts {list(counts)} do not sum to {x.shape[0]}")
    return np.split(x, np.cumsum(counts)[:-1], axis=0)


def softmax_pixelwise(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 3 or logits.shape[0] < 1:
        raise ShapeError("softmax needs a C×H×W input with at least one channel")
    z = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)
