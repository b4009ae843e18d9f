from __future__ import annotations

from dataclasses import dataclass


@dataclass
class TrainConfig:
    base_lr: float = 1e-3
    momentum: float = 0.9
    power: float = 0.9
    max_iter: int = 1000
    seed: int = 0
    image_size: int = 64
    # the pixel-summed loss is divided by |Y| before backprop (Caffe's VALID normalization)
    normalize_loss: bool = True

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


def poly_lr(it: int, config: TrainConfig) -> float:
    return config.base_lr * (1.0 - it / config.max_iter) ** config.power


def sgd_step(model, it: int, config: TrainConfig) -> float:
    """One momentum step using ``model.grads``; returns the learning rate used.

    ``v <- momentum * v - lr * g`` then ``w <- w + v``.
    """
    if not 0 <= it < config.max_iter:
        raise ValueError(f"iteration {it} outside [0, {config.max_iter})")
    lr = poly_lr(it, config)
    for name, w in model.params.items():
        v = model.velocity[name]
        v *= config.momentum
        v -= lr * model.grads[name]
        w += v
    model.snap_float32()
    return lr
