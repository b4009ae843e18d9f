from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..labels import TriLabelMap, three_category_labels
from ..rbd import RBDParams, rbd_saliency
from ..tensor import softmax_pixelwise
from .loss import balanced_loss
from .model import Model, backward, forward, prepare_inputs
from .optim import TrainConfig, sgd_step

log = logging.getLogger(__name__)


@dataclass
class TraceRow:
    it: int
    lr: float
    loss_frontend: float
    loss_final: float


@dataclass
class TrainResult:
    model: Model
    trace: list[TraceRow] = field(default_factory=list)
    n_skipped: int = 0


def loss_and_grads(model: Model, image, s_rbd, labels: TriLabelMap, scale: float = 1.0,
                   use_context: bool = True):
    """Two-term deep supervision: front-end head and final output, both class-balanced.

    Leaves parameter gradients in ``model.grads`` (zeroed first). Returns
    ``(loss_frontend, loss_final, grad wrt S_RBD)``.
    """
    model.zero_grad()
    cache = {}
    s_deep, final = forward(model, image, s_rbd, use_context, cache)
    l_front, g_front = balanced_loss(s_deep, labels, scale)
    l_final, g_final = balanced_loss(final, labels, scale)
    g_rbd = backward(model, cache, g_front, g_final, use_context)
    return l_front, l_final, g_rbd


def train(model: Model, dataset, config: TrainConfig, rbd_params: RBDParams = RBDParams(),
          use_rbd: bool = True, rbd_maps=None, progress=None) -> TrainResult:
    """SGD with momentum and poly decay over ``(image, mask)`` pairs, batch size 1.

    Images are 3×H×W in [0, 1]. ``rbd_maps`` may supply precomputed priors aligned with
    ``dataset``; otherwise they are computed once per image. With ``use_rbd=False`` the
    prior channel fed to the network is all zeros.
    """
    pairs, priors, labels = [], [], []
    skipped = 0
    for i, (image, mask) in enumerate(dataset):
        image = np.asarray(image, dtype=np.float64)
        if image.shape[1:] != np.shape(mask):
            log.warning("skipping pair %d: image %s vs mask %s", i, image.shape[1:], np.shape(mask))
            skipped += 1
            continue
        labels.append(three_category_labels(mask))
        if rbd_maps is not None:
            prior = np.asarray(rbd_maps[i], dtype=np.float64).reshape(1, *image.shape[1:])
        elif use_rbd:
            prior = rbd_saliency(image, rbd_params)
        else:
            prior = np.zeros((1, *image.shape[1:]))
        x, prior = prepare_inputs(image, prior)
        pairs.append(x)
        # a disabled prior is a constant-zero network input channel
        priors.append(prior if use_rbd else np.zeros_like(prior))
    if not pairs:
        raise ValueError("training set is empty")

    rng = np.random.default_rng(config.seed)
    order = np.empty(0, dtype=int)
    result = TrainResult(model=model, n_skipped=skipped)
    for it in range(config.max_iter):
        if it % len(pairs) == 0:
            order = rng.permutation(len(pairs))
        k = order[it % len(pairs)]
        scale = 1.0 / labels[k].total if config.normalize_loss else 1.0
        lf, ll, _ = loss_and_grads(model, pairs[k], priors[k], labels[k], scale)
        lr = sgd_step(model, it, config)
        result.trace.append(TraceRow(it, lr, lf, ll))
        if progress is not None:
            progress(result.trace[-1])
    return result


def infer(model: Model, image, s_rbd=None, rbd_params: RBDParams = RBDParams(), use_context: bool = True):
    """Return ``(saliency 1×H×W, salient_edge 1×H×W, TriLabelMap)`` from the final logits."""
    image = np.asarray(image, dtype=np.float64)
    if s_rbd is None:
        s_rbd = rbd_saliency(image, rbd_params)
    x, prior = prepare_inputs(image, s_rbd)
    _, logits = forward(model, x, prior, use_context)
    p = softmax_pixelwise(logits)
    # argmax returns the first maximum, so ties go to the lower class index
    labels = TriLabelMap(np.argmax(p, axis=0).astype(np.uint8))
    return p[2:3], p[1:2], labels
