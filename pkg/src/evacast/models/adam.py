"""Adam optimizer with the conventional default moments."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import _kernels as kernels
from ..errors import ValidationError


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    epochs: int = 150

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")


class AdamState:
    """First/second moment buffers for one parameter list, updated in place."""

    def __init__(self, params: list[np.ndarray]):
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray],
             cfg: AdamConfig) -> None:
        self.t += 1
        for p, g, m, v in zip(params, grads, self.m, self.v):
            kernels.adam_update(p, g, m, v, self.t, cfg.learning_rate,
                                cfg.beta1, cfg.beta2, cfg.epsilon)


@dataclass
class TrainHistory:
    """Per-epoch curves plus the index of the weights that were kept."""

    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_metric: list[float] = field(default_factory=list)
    selected_epoch: int = -1
