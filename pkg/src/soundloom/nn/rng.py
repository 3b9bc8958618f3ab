"""Seeded RNG helpers. Every stochastic component takes an explicit generator."""

from __future__ import annotations

import numpy as np


def new_generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def generator_state(rng: np.random.Generator) -> dict:
    """JSON-serializable snapshot of the generator state."""
    return rng.bit_generator.state


def restore_generator(state: dict) -> np.random.Generator:
    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = state
    return rng
