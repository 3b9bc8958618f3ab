"""Trainable parameters and initializers."""

from __future__ import annotations

import math

import numpy as np


class Parameter:
    """A named tensor with a gradient accumulator and lazy Adam state."""

    __slots__ = ("name", "value", "grad", "m", "v")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.ascontiguousarray(value)
        self.grad = np.zeros_like(self.value)
        self.m = None
        self.v = None

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def accumulate(self, g: np.ndarray) -> None:
        if g.shape != self.grad.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match parameter "
                f"{self.name!r} shape {self.grad.shape}"
            )
        self.grad += g

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int,
                   dtype=np.float32) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def zeros(shape, dtype=np.float32) -> np.ndarray:
    return np.zeros(shape, dtype=dtype)
