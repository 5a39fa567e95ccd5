"""Ordered, named storage for trainable arrays and optimizer state."""
from __future__ import annotations

import numpy as np

from .exceptions import ConfigError


class Param:
    """One named array with its gradient and Adam moment buffers.

    grad is None until a backward pass deposits into it; adam_m/adam_v are
    allocated lazily on the first optimizer step.
    """
    __slots__ = ("name", "value", "grad", "adam_m", "adam_v", "trainable")

    def __init__(self, name: str, value: np.ndarray, trainable: bool = True):
        self.name = name
        self.value = value
        self.grad = None
        self.adam_m = None
        self.adam_v = None
        self.trainable = trainable

    def add_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    @property
    def size(self) -> int:
        return int(self.value.size)

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.value.shape}, trainable={self.trainable})"


class ParamStore:
    """Insertion-ordered mapping of unique names to Params.

    Iteration order equals construction order, which fixes the checkpoint
    byte layout and the optimizer update order.
    """

    def __init__(self):
        self._entries: dict[str, Param] = {}

    def add(self, name: str, value: np.ndarray, trainable: bool = True) -> Param:
        if name in self._entries:
            raise ConfigError(f"duplicate parameter name: {name}")
        p = Param(name, value, trainable)
        self._entries[name] = p
        return p

    def __getitem__(self, name: str) -> Param:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __iter__(self):
        return iter(self._entries.values())

    def __len__(self):
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def trainable(self) -> list[Param]:
        return [p for p in self if p.trainable]

    def num_trainable(self) -> int:
        return sum(p.size for p in self if p.trainable)

    def clear_grads(self) -> None:
        for p in self:
            p.grad = None
