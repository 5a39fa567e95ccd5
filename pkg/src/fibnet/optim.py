"""Adam optimizer and the hold-then-decay learning-rate schedule."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, MissingGradientError
from .params import ParamStore


@dataclass(frozen=True)
class TrainConfig:
    """Training protocol knobs.

    Defaults follow the reference recipe: 25 epochs, batches of 8, Adam at
    1e-4 held for 13 epochs then decayed by 0.9 per epoch, no early
    stopping, no augmentation.
    """
    epochs: int = 25
    batch_size: int = 8
    base_lr: float = 1e-4
    lr_hold_epochs: int = 13
    lr_decay: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 1337
    shuffle: bool = True

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0.0 < self.lr_decay < 1.0:
            raise ConfigError("lr_decay must lie in (0, 1)")
        if self.lr_hold_epochs > self.epochs:
            raise ConfigError("lr_hold_epochs must be <= epochs")
        if self.base_lr <= 0.0:
            raise ConfigError("base_lr must be positive")


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    """Learning rate for a 1-based epoch: base through the hold epochs,
    then base * decay^(epoch - hold)."""
    if not 1 <= epoch <= cfg.epochs:
        raise ValueError(f"epoch must be in [1, {cfg.epochs}], got {epoch}")
    if epoch <= cfg.lr_hold_epochs:
        return cfg.base_lr
    return cfg.base_lr * cfg.lr_decay ** (epoch - cfg.lr_hold_epochs)


def adam_step(store: ParamStore, lr: float, t: int, cfg: TrainConfig) -> None:
    """One bias-corrected Adam update over all trainable entries.

    Requires every trainable entry to carry a gradient; clears gradients
    afterwards. t is the 1-based global step counter.
    """
    if t < 1:
        raise ValueError(f"step counter must be >= 1, got {t}")
    b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p in store:
        if not p.trainable:
            continue
        if p.grad is None:
            raise MissingGradientError(
                f"no gradient for trainable entry {p.name} at step {t}")
        g = p.grad
        if p.adam_m is None:
            p.adam_m = np.zeros_like(p.value)
            p.adam_v = np.zeros_like(p.value)
        p.adam_m = b1 * p.adam_m + (1.0 - b1) * g
        p.adam_v = b2 * p.adam_v + (1.0 - b2) * (g * g)
        m_hat = p.adam_m / c1
        v_hat = p.adam_v / c2
        p.value = (p.value - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(
            p.value.dtype, copy=False)
    store.clear_grads()
