from .loss import balanced_loss
from .model import (
    Model,
    build_model,
    context_refine,
    forward,
    forward_frontend,
    fuse,
    identity_init_context,
)
from .optim import TrainConfig, poly_lr, sgd_step
from .train import TrainResult, infer, loss_and_grads, train

__all__ = [
    "Model",
    "TrainConfig",
    "TrainResult",
    "balanced_loss",
    "build_model",
    "context_refine",
    "forward",
    "forward_frontend",
    "fuse",
    "identity_init_context",
    "infer",
    "loss_and_grads",
    "poly_lr",
    "sgd_step",
    "train",
]
