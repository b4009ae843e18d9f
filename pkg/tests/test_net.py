import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgesal.labels import TriLabelMap, three_category_labels
from edgesal.net import (
    TrainConfig,
    balanced_loss,
    build_model,
    context_refine,
    forward,
    forward_frontend,
    fuse,
    infer,
    loss_and_grads,
    poly_lr,
    sgd_step,
    train,
)
from edgesal.net.model import _frontend, prepare_inputs
from edgesal.rbd import rbd_saliency
from edgesal.synth import synth_dataset
from edgesal.tensor import ShapeError, softmax_pixelwise

SMALL = (4, 8, 8, 8)


@pytest.fixture(scope="module")
def small_data():
    return synth_dataset(4, 32, seed=3)


def test_build_is_deterministic_and_invariants_hold():
    a, b = build_model(SMALL, seed=5), build_model(SMALL, seed=5)
    for k in a.params:
        assert a.params[k].tobytes() == b.params[k].tobytes()
        assert a.grads[k].shape == a.params[k].shape == a.velocity[k].shape
    assert list(a.side_taps) == sorted(a.side_taps) and max(a.side_taps) < len(a.blocks)
    c = build_model(SMALL, seed=6)
    assert any(not np.array_equal(a.params[k], c.params[k]) for k in a.params)
    assert all(not a.params[k].any() for k in a.params if k.endswith(".bias"))


@pytest.mark.parametrize("widths", [(4, 8, 8), (4, 8, 0, 8), (4, -1, 8, 8)])
def test_invalid_width_plan_rejected(widths):
    with pytest.raises(ValueError):
        build_model(widths)


def test_head_has_three_channels_and_stride_four():
    m = build_model(SMALL)
    cache = {}
    s_deep, sides = _frontend(m, np.random.default_rng(0).normal(size=(3, 24, 32)), cache)
    assert s_deep.shape == (3, 24, 32)
    assert cache["low_shape"] == (3, 6, 8)
    assert all(s.shape == (1, 24, 32) for s in sides)


def test_indivisible_size_reports_padding():
    with pytest.raises(ShapeError, match="pad by 2 rows and 1 columns"):
        forward_frontend(build_model(SMALL), np.zeros((3, 18, 19)))


def test_zero_image_zero_outputs():
    s_deep, sides = forward_frontend(build_model(SMALL), np.zeros((3, 16, 16)))
    assert not s_deep.any() and not any(s.any() for s in sides)


def test_block1_perturbation_reaches_every_map():
    m = build_model(SMALL, seed=1)
    img = np.random.default_rng(1).normal(size=(3, 16, 16))
    s0, sides0 = forward_frontend(m, img)
    m.params["enc1a.weight"] = m.params["enc1a.weight"] + 0.1
    s1, sides1 = forward_frontend(m, img)
    assert not np.array_equal(s0, s1)
    for a, b in zip(sides0, sides1):
        assert not np.array_equal(a, b)


def test_fusion_channel_counts():
    m = build_model(SMALL)
    assert m.fusion[0].spec.in_channels == 9
    assert m.combine.spec.in_channels == 3
    assert m.combine.spec.out_channels == 3


def test_fuse_rejects_resolution_mismatch():
    m = build_model(SMALL)
    img = np.zeros((3, 16, 16))
    s_deep, sides = forward_frontend(m, img)
    with pytest.raises(ShapeError, match="S_RBD"):
        fuse(m, img, s_deep, sides, np.zeros((1, 8, 8)))
    assert fuse(m, img, s_deep, sides, np.zeros((1, 16, 16))).shape == (3, 16, 16)


def test_s_rbd_sensitivity_after_one_step(small_data):
    img, mask = small_data[0]
    labels = three_category_labels(mask)
    x, prior = prepare_inputs(img, np.random.default_rng(0).uniform(size=(1, 32, 32)))
    m = build_model(SMALL, seed=0)
    cfg = TrainConfig(max_iter=10)
    loss_and_grads(m, x, prior, labels)
    sgd_step(m, 0, cfg)
    _, _, g_rbd = loss_and_grads(m, x, prior, labels)
    h = 1e-4
    fds = []
    for (i, j) in [(10, 10), (16, 16), (5, 20)]:
        p = prior.copy()
        p[0, i, j] += h
        lp = sum(loss_and_grads(m, x, p, labels)[:2])
        p[0, i, j] -= 2 * h
        lm = sum(loss_and_grads(m, x, p, labels)[:2])
        fd = (lp - lm) / (2 * h)
        fds.append(fd)
        assert abs(fd - g_rbd[0, i, j]) <= 1e-3 * max(abs(fd), 1e-6)
    assert any(abs(v) > 0 for v in fds)


def test_context_identity_after_init():
    m = build_model(SMALL)
    x = np.random.default_rng(0).normal(size=(3, 16, 16))
    np.testing.assert_allclose(context_refine(m, x), x, atol=1e-12, rtol=0)


def positive_context(seed=0):
    m = build_model(SMALL)
    rng = np.random.default_rng(seed)
    for layer in m.context:
        m.params[f"{layer.name}.weight"] = rng.uniform(0.1, 1.0, m.params[f"{layer.name}.weight"].shape)
    return m


def receptive_extent(model, n_layers, size=41):
    c = size // 2
    base = np.ones((3, size, size))
    ref = context_refine(model, base, n_layers)[:, c, c]
    reach = 0
    for r in range(1, c):
        x = base.copy()
        x[:, c + r, c - r] += 1.0
        if not np.array_equal(context_refine(model, x, n_layers)[:, c, c], ref):
            reach = r
    return 2 * reach + 1


@pytest.mark.parametrize("n_layers,extent", [(1, 3), (2, 7), (3, 15)])
def test_receptive_field_recursion(n_layers, extent):
    assert receptive_extent(positive_context(), n_layers) == extent == 2 ** (n_layers + 1) - 1


def test_balanced_loss_examples():
    labels = np.zeros(100, dtype=np.uint8)
    labels[50:60] = 1
    labels[60:] = 2
    t = TriLabelMap(labels.reshape(10, 10))
    bb, be, bs = t.betas
    assert (bb, be, bs) == pytest.approx((0.5, 0.9, 0.6)) and bb + be + bs == 2.0
    loss, _ = balanced_loss(np.zeros((3, 10, 10)), t)
    assert loss == pytest.approx((0.5 * 50 + 0.9 * 10 + 0.6 * 40) * math.log(3), rel=1e-12)
    with pytest.raises(ShapeError):
        balanced_loss(np.zeros((3, 9, 10)), t)


def test_balanced_loss_finite_differences():
    rng = np.random.default_rng(2)
    logits = rng.normal(size=(3, 8, 8))
    t = TriLabelMap(rng.integers(0, 3, (8, 8)).astype(np.uint8))
    _, grad = balanced_loss(logits, t)
    h = 1e-4
    flat = logits.reshape(-1)
    for i in range(flat.size):
        o = flat[i]
        flat[i] = o + h
        lp = balanced_loss(logits, t)[0]
        flat[i] = o - h
        lm = balanced_loss(logits, t)[0]
        flat[i] = o
        fd = (lp - lm) / (2 * h)
        an = grad.reshape(-1)[i]
        assert abs(fd - an) <= 1e-3 * max(abs(fd), abs(an), 1e-6)


def test_single_class_image_loss_is_finite():
    t = TriLabelMap(np.zeros((4, 4), dtype=np.uint8))
    assert t.betas == (0.0, 1.0, 1.0)
    loss, grad = balanced_loss(np.random.default_rng(0).normal(size=(3, 4, 4)), t)
    assert loss == 0.0 and not grad.any()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 20))
def test_loss_nonnegative(seed, scale):
    rng = np.random.default_rng(seed)
    t = TriLabelMap(rng.integers(0, 3, (5, 5)).astype(np.uint8))
    loss, _ = balanced_loss(rng.normal(0, scale, size=(3, 5, 5)), t)
    assert loss >= 0
    b = t.betas
    assert sum(b) == 2.0 and all(0 <= x <= 1 for x in b)


def test_loss_vanishes_with_confident_correct_logits():
    rng = np.random.default_rng(1)
    t = TriLabelMap(rng.integers(0, 3, (5, 5)).astype(np.uint8))
    logits = 50.0 * (np.arange(3)[:, None, None] == t.labels[None])
    assert balanced_loss(logits, t)[0] < 1e-15


def test_sgd_examples():
    m = build_model(SMALL)
    before = {k: v.copy() for k, v in m.params.items()}
    cfg = TrainConfig(max_iter=100, power=0.9)
    m.zero_grad()
    sgd_step(m, 0, cfg)
    for k in before:
        np.testing.assert_array_equal(m.params[k], before[k])
    assert poly_lr(0, cfg) == 1e-3
    half_it = cfg.max_iter * (1 - 0.5 ** (1 / cfg.power))
    assert poly_lr(half_it, cfg) == pytest.approx(5e-4, rel=1e-12)
    with pytest.raises(ValueError):
        sgd_step(m, 100, cfg)


def test_sgd_momentum_update():
    m = build_model(SMALL)
    cfg = TrainConfig(max_iter=10, power=1.0, base_lr=0.1, momentum=0.5)
    k = "head.bias"
    m.zero_grad()
    m.grads[k][:] = 1.0
    sgd_step(m, 0, cfg)  # v = -0.1
    sgd_step(m, 5, cfg)  # lr 0.05, v = -0.05 - 0.05
    np.testing.assert_allclose(m.params[k], -0.2, rtol=1e-6)


@pytest.mark.parametrize("bad", [dict(base_lr=0), dict(momentum=1.0), dict(max_iter=0)])
def test_train_config_validation(bad):
    with pytest.raises(ValueError):
        TrainConfig(**bad)


def test_training_reduces_final_loss():
    data = synth_dataset(20, 32, seed=0)
    m = build_model(SMALL, seed=0)
    cfg = TrainConfig(max_iter=300, seed=0)
    res = train(m, data, cfg)
    first = res.trace[0].loss_final
    # the first iteration's sample, re-scored by the trained model
    k = np.random.default_rng(0).permutation(len(data))[0]
    img, mask = data[k]
    labels = three_category_labels(mask)
    x, prior = prepare_inputs(img, rbd_saliency(img))
    after = loss_and_grads(m, x, prior, labels, scale=1.0 / labels.total)[1]
    assert after < first
    assert len(res.trace) == 300


def test_training_is_deterministic(small_data):
    cfg = TrainConfig(max_iter=12, seed=4)
    a = train(build_model(SMALL, seed=4), small_data, cfg).trace
    b = train(build_model(SMALL, seed=4), small_data, cfg).trace
    assert a == b


def test_disabling_rbd_changes_training(small_data):
    cfg = TrainConfig(max_iter=50, seed=1)
    with_rbd = train(build_model(SMALL, seed=1), small_data, cfg)
    without = train(build_model(SMALL, seed=1), small_data, cfg, use_rbd=False)
    assert [r.loss_final for r in with_rbd.trace] != [r.loss_final for r in without.trace]
    assert any(not np.array_equal(with_rbd.model.params[k], without.model.params[k]) for k in with_rbd.model.params)


def test_mismatched_pairs_are_skipped(small_data):
    bad = [(np.zeros((3, 32, 32)), np.zeros((16, 16), dtype=bool))]
    res = train(build_model(SMALL), list(small_data) + bad, TrainConfig(max_iter=2))
    assert res.n_skipped == 1
    with pytest.raises(ValueError):
        train(build_model(SMALL), bad, TrainConfig(max_iter=2))


def test_infer_outputs(small_data):
    m = build_model(SMALL, seed=2)
    img, _ = small_data[1]
    sal, edge, labels = infer(m, img)
    assert sal.shape == edge.shape == (1, 32, 32)
    x, prior = prepare_inputs(img, rbd_saliency(img))
    p = softmax_pixelwise(forward(m, x, prior)[1])
    np.testing.assert_array_equal(sal[0], p[2])
    np.testing.assert_array_equal(edge[0], p[1])
    np.testing.assert_allclose(p.sum(axis=0), 1.0, atol=1e-12)
    np.testing.assert_array_equal(labels.labels, np.argmax(p, axis=0))


def test_context_is_identity_in_inference_before_training(small_data):
    m = build_model(SMALL, seed=3)
    img, _ = small_data[2]
    a = infer(m, img, use_context=True)
    b = infer(m, img, use_context=False)
    for x, y in zip(a[:2], b[:2]):
        assert x.tobytes() == y.tobytes()
    assert a[2] == b[2]


def test_translation_covariance_at_feature_resolution():
    m = build_model(SMALL, seed=7)
    rng = np.random.default_rng(7)
    img = rng.normal(size=(3, 160, 160))
    shifted = np.roll(img, (4, 4), axis=(1, 2))
    c0, c1 = {}, {}
    _frontend(m, img, c0)
    _frontend(m, shifted, c1)
    low0, low1 = c0["head"][1], c1["head"][1]
    # encoder receptive field is 109 px, so 14 feature cells per side see the border
    margin = 15
    inner0 = low0[:, margin:-margin - 1, margin:-margin - 1]
    inner1 = low1[:, margin + 1 : -margin, margin + 1 : -margin]
    np.testing.assert_allclose(inner1, inner0, atol=1e-12)
