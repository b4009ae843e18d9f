"""Toy edge-aware FCN: dilated encoder, side taps, deep-handcrafted fusion, context module.

Data flow for a 3×H×W image ``I`` (H, W divisible by 4)::

    encoder blocks 1-4 ──> 1×1 head ──> upsample ──> S_deep = (S_b, S_e, S_s)
         │ (last layer of each block)
         └─> 1×1 side convs ──> upsample ──> S_1..S_4

    concat(I, S_s, S_RBD, S_1..S_4) ──> three 3×3 convs ──> S_ns
    concat(S_b, S_e, S_ns) ──> 1×1 conv ──> S_DS ──> context module ──> final logits
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tensor import (
    ConvSpec,
    ShapeError,
    bilinear_upsample,
    bilinear_upsample_backward,
    concat_channels,
    conv2d_backward,
    conv2d_forward,
    relu,
    relu_backward,
    split_channels,
)

N_CLASSES = 3
OUTPUT_STRIDE = 4
CONTEXT_DILATIONS = (1, 2, 4, 8)
# block index -> (stride of its last conv, dilation of both convs)
_BLOCK_LAYOUT = ((2, 1), (2, 1), (1, 2), (1, 4))


@dataclass(frozen=True)
class Layer:
    name: str
    spec: ConvSpec
    relu: bool


def _conv(name, cin, cout, k=3, stride=1, dilation=1, act=True):
    pad = dilation * (k - 1) // 2
    return Layer(name, ConvSpec(cin, cout, k, stride, pad, dilation), act)


class Model:
    """Layer table plus parameters, gradient buffers and momentum buffers."""

    def __init__(self, widths=(8, 16, 16, 16), fusion_width: int = 16):
        widths = tuple(int(w) for w in widths)
        if len(widths) != 4 or min(widths) < 1:
            raise ValueError(f"width plan must list 4 positive block widths, got {widths}")
        if fusion_width < 1:
            raise ValueError("fusion width must be positive")
        self.widths = widths
        self.fusion_width = int(fusion_width)

        self.blocks: list[list[Layer]] = []
        cin = 3
        for b, (w, (stride, dil)) in enumerate(zip(widths, _BLOCK_LAYOUT), start=1):
            self.blocks.append([
                _conv(f"enc{b}a", cin, w, dilation=dil),
                _conv(f"enc{b}b", w, w, stride=stride, dilation=dil),
            ])
            cin = w
        self.side_taps = (0, 1, 2, 3)
        self.head = _conv("head", widths[-1], N_CLASSES, k=1, act=False)
        self.sides = [_conv(f"side{i + 1}", widths[i], 1, k=1, act=False) for i in self.side_taps]
        fw = self.fusion_width
        n_fuse_in = 3 + 1 + 1 + len(self.sides)
        self.fusion = [
            _conv("fuse1", n_fuse_in, fw),
            _conv("fuse2", fw, fw),
            _conv("fuse3", fw, 1, act=False),
        ]
        self.combine = _conv("combine", 3, N_CLASSES, k=1, act=False)
        hidden = 2 * N_CLASSES
        ctx = [_conv("ctx1", N_CLASSES, hidden, dilation=CONTEXT_DILATIONS[0])]
        ctx += [_conv(f"ctx{i + 1}", hidden, hidden, dilation=d) for i, d in enumerate(CONTEXT_DILATIONS[1:], start=1)]
        n = len(ctx)
        ctx.append(_conv(f"ctx{n + 1}", hidden, hidden))
        ctx.append(_conv(f"ctx{n + 2}", hidden, N_CLASSES, k=1, act=False))
        self.context = ctx

        self.params: dict[str, np.ndarray] = {}
        for layer in self.layers():
            s = layer.spec
            self.params[f"{layer.name}.weight"] = np.zeros((s.out_channels, s.in_channels, s.kernel, s.kernel))
            self.params[f"{layer.name}.bias"] = np.zeros(s.out_channels)
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.velocity = {k: np.zeros_like(v) for k, v in self.params.items()}

    def layers(self):
        for block in self.blocks:
            yield from block
        yield self.head
        yield from self.sides
        yield from self.fusion
        yield self.combine
        yield from self.context

    def layer(self, name: str) -> Layer:
        for layer in self.layers():
            if layer.name == name:
                return layer
        raise KeyError(name)

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def snap_float32(self):
        """Round parameters to float32-representable values (the checkpoint precision)."""
        for k, v in self.params.items():
            self.params[k] = v.astype(np.float32).astype(np.float64)

    def copy(self) -> "Model":
        m = Model(self.widths, self.fusion_width)
        for k in self.params:
            m.params[k] = self.params[k].copy()
            m.velocity[k] = self.velocity[k].copy()
        return m


def identity_init_context(model: Model):
    """Make the context module an exact identity map.

    The first layer splits each input channel into its positive and negative parts
    (``x -> [x, -x]`` before ReLU), the middle layers copy channels through their centre
    tap, and the final 1×1 projection recombines ``x+ - x-``.
    """
    hidden = 2 * N_CLASSES
    for i, layer in enumerate(model.context):
        w = np.zeros_like(model.params[f"{layer.name}.weight"])
        c = layer.spec.kernel // 2
        if i == 0:
            for ch in range(N_CLASSES):
                w[ch, ch, c, c] = 1.0
                w[ch + N_CLASSES, ch, c, c] = -1.0
        elif i == len(model.context) - 1:
            for ch in range(N_CLASSES):
                w[ch, ch, c, c] = 1.0
                w[ch, ch + N_CLASSES, c, c] = -1.0
        else:
            for ch in range(hidden):
                w[ch, ch, c, c] = 1.0
        model.params[f"{layer.name}.weight"] = w
        model.params[f"{layer.name}.bias"] = np.zeros(layer.spec.out_channels)


def build_model(widths=(8, 16, 16, 16), seed: int = 0, fusion_width: int = 16) -> Model:
    """Xavier-uniform weights (bound sqrt(3 / fan_in)), zero biases, identity context module."""
    model = Model(widths, fusion_width)
    rng = np.random.default_rng(seed)
    ctx = {layer.name for layer in model.context}
    for layer in model.layers():
        if layer.name in ctx:
            continue
        s = layer.spec
        fan_in = s.in_channels * s.kernel * s.kernel
        bound = np.sqrt(3.0 / fan_in)
        model.params[f"{layer.name}.weight"] = rng.uniform(-bound, bound, size=model.params[f"{layer.name}.weight"].shape)
    identity_init_context(model)
    model.snap_float32()
    return model


def prepare_inputs(image, s_rbd):
    """Map the [0, 1] image and prior to the zero-centred [-1, 1] range the network consumes."""
    image = 2.0 * np.asarray(image, dtype=np.float64) - 1.0
    s_rbd = np.asarray(s_rbd, dtype=np.float64)
    if s_rbd.ndim == 2:
        s_rbd = s_rbd[None]
    return image, 2.0 * s_rbd - 1.0


# ---------------------------------------------------------------------------
# forward / backward

def _run(model: Model, layer: Layer, x, cache):
    pre = conv2d_forward(x, model.params[f"{layer.name}.weight"], model.params[f"{layer.name}.bias"], layer.spec)
    if cache is not None:
        cache[layer.name] = (x, pre)
    return relu(pre) if layer.relu else pre


def _back(model: Model, layer: Layer, cache, g):
    x, pre = cache[layer.name]
    if layer.relu:
        g = relu_backward(pre, g)
    gx, gw, gb = conv2d_backward(x, model.params[f"{layer.name}.weight"], layer.spec, g)
    model.grads[f"{layer.name}.weight"] += gw
    model.grads[f"{layer.name}.bias"] += gb
    return gx


def check_input_size(image):
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeError(f"expected a 3×H×W image, got shape {image.shape}")
    h, w = image.shape[1:]
    if h % OUTPUT_STRIDE or w % OUTPUT_STRIDE:
        ph, pw = (-h) % OUTPUT_STRIDE, (-w) % OUTPUT_STRIDE
        raise ShapeError(
            f"image {h}x{w} is not divisible by {OUTPUT_STRIDE}; pad by {ph} rows and {pw} columns"
        )


def _frontend(model, image, cache):
    check_input_size(image)
    h = np.asarray(image, dtype=np.float64)
    taps = []
    for block in model.blocks:
        for layer in block:
            h = _run(model, layer, h, cache)
        taps.append(h)
    H, W = image.shape[1:]
    low = _run(model, model.head, h, cache)
    side_low = [_run(model, side, taps[i], cache) for side, i in zip(model.sides, model.side_taps)]
    if cache is not None:
        cache["low_shape"] = low.shape
        cache["side_shapes"] = [s.shape for s in side_low]
    s_deep = bilinear_upsample(low, H, W)
    sides = [bilinear_upsample(s, H, W) for s in side_low]
    return s_deep, sides


def _frontend_back(model, cache, g_deep, g_sides):
    g = _back(model, model.head, cache, bilinear_upsample_backward(cache["low_shape"], g_deep))
    g_taps = [
        _back(model, side, cache, bilinear_upsample_backward(shape, gs))
        for side, shape, gs in zip(model.sides, cache["side_shapes"], g_sides)
    ]
    for b in reversed(range(len(model.blocks))):
        if b in model.side_taps:
            g = g + g_taps[model.side_taps.index(b)]
        for layer in reversed(model.blocks[b]):
            g = _back(model, layer, cache, g)
    return g


def _fuse(model, image, s_deep, sides, s_rbd, cache):
    s_rbd = np.asarray(s_rbd, dtype=np.float64)
    if s_rbd.ndim == 2:
        s_rbd = s_rbd[None]
    f = concat_channels([image, s_deep[2:3], s_rbd, *sides])
    for layer in model.fusion:
        f = _run(model, layer, f, cache)
    return _run(model, model.combine, concat_channels([s_deep[0:1], s_deep[1:2], f]), cache)


def _fuse_back(model, cache, g_logits):
    """Returns (grad wrt S_deep, grads wrt sides, grad wrt S_RBD)."""
    g_b, g_e, g = split_channels(_back(model, model.combine, cache, g_logits), [1, 1, 1])
    for layer in reversed(model.fusion):
        g = _back(model, layer, cache, g)
    parts = split_channels(g, [3, 1, 1] + [1] * len(model.sides))
    g_s, g_rbd, g_sides = parts[1], parts[2], parts[3:]
    return concat_channels([g_b, g_e, g_s]), g_sides, g_rbd


def _context(model, x, cache, n_layers=None):
    layers = model.context if n_layers is None else model.context[:n_layers]
    for layer in layers:
        x = _run(model, layer, x, cache)
    return x


def _context_back(model, cache, g):
    for layer in reversed(model.context):
        g = _back(model, layer, cache, g)
    return g


def forward_frontend(model: Model, image):
    """Return ``(S_deep 3×H×W, [S_1..S_4] each 1×H×W)`` at input resolution."""
    return _frontend(model, image, None)


def fuse(model: Model, image, s_deep, sides, s_rbd):
    """Combine image, deep prediction, side maps and the RBD prior into 3-channel logits."""
    H, W = image.shape[1:]
    named = [("S_deep", s_deep), ("S_RBD", np.asarray(s_rbd))]
    named += [(f"side {i + 1}", s) for i, s in enumerate(sides)]
    for name, t in named:
        if t.shape[-2:] != (H, W):
            raise ShapeError(f"{name} is {t.shape[-2]}x{t.shape[-1]}, image is {H}x{W}")
    return _fuse(model, image, s_deep, sides, s_rbd, None)


def context_refine(model: Model, logits, n_layers=None):
    """Run the dilated context module (optionally only its first ``n_layers`` layers)."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 3 or logits.shape[0] != N_CLASSES:
        raise ShapeError(f"context module expects 3 channels, got shape {logits.shape}")
    return _context(model, logits, None, n_layers)


def forward(model: Model, image, s_rbd, use_context: bool = True, cache=None):
    """Full network. Returns ``(S_deep, final_logits)``."""
    s_deep, sides = _frontend(model, image, cache)
    logits = _fuse(model, image, s_deep, sides, s_rbd, cache)
    if use_context:
        logits = _context(model, logits, cache)
    return s_deep, logits


def backward(model: Model, cache, g_deep, g_final, use_context: bool = True):
    """Accumulate parameter gradients into ``model.grads``; returns grad wrt S_RBD."""
    g = _context_back(model, cache, g_final) if use_context else g_final
    g_deep_fused, g_sides, g_rbd = _fuse_back(model, cache, g)
    _frontend_back(model, cache, g_deep + g_deep_fused, g_sides)
    return g_rbd
