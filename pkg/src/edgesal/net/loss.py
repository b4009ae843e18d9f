import numpy as np

from ..labels import TriLabelMap
from ..tensor import ShapeError


def balanced_loss(logits, labels: TriLabelMap, scale: float = 1.0):
    """Class-balanced softmax cross-entropy over a 3×H×W logit map.

    Each pixel of class c is weighted by the share of pixels *not* in c. Returns
    ``(loss, grad_logits)``; ``scale`` multiplies both (1.0 gives the plain pixel sum).
    """
    logits = np.asarray(logits, dtype=np.float64)
    y = labels.labels
    if logits.ndim != 3 or logits.shape[0] != 3 or logits.shape[1:] != y.shape:
        raise ShapeError(f"logits {logits.shape} do not match a 3-class map of {y.shape}")
    z = logits - logits.max(axis=0, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=0))
    log_p = z - lse
    beta = np.asarray(labels.betas)[y]
    onehot = np.arange(3)[:, None, None] == y[None]
    loss = -float((beta * (log_p * onehot).sum(axis=0)).sum()) * scale
    grad = (np.exp(log_p) - onehot) * (beta * scale)[None]
    return loss, grad
