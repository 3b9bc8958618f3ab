"""Smooth diversity control.

The retrieval k drifts over time following 1-D gradient (Perlin) noise, so
the stream alternates stretches of closely related clips (low k) with more
adventurous jumps (high k) without ever changing k abruptly. Defaults:
frequency 0.05 per step, 2 octaves, so k wanders over roughly 20-clip
horizons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MODES = ("auto-perlin", "manual")

_PRIME_1 = np.uint64(0x9E3779B97F4A7C15)
_PRIME_2 = np.uint64(0xBF58476D1CE4E5B9)
_PRIME_3 = np.uint64(0x94D049BB133111EB)


def _gradient(lattice: np.ndarray, seed: int) -> np.ndarray:
    """Deterministic pseudo-random gradient in [-1, 1] per lattice point.

    splitmix64-style avalanche; unbounded domain, no repetition period.
    """
    with np.errstate(over="ignore"):
        h = lattice.astype(np.int64).view(np.uint64) + _PRIME_1 * np.uint64(
            np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + np.uint64(1))
        h = (h ^ (h >> np.uint64(30))) * _PRIME_2
        h = (h ^ (h >> np.uint64(27))) * _PRIME_3
        h = h ^ (h >> np.uint64(31))
    # top 53 bits -> [0, 1) -> [-1, 1)
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53) * 2.0 - 1.0


def _octave(x: np.ndarray, seed: int) -> np.ndarray:
    i0 = np.floor(x)
    u = x - i0
    g0 = _gradient(i0, seed)
    g1 = _gradient(i0 + 1.0, seed)
    s = g0 * u
    e = g1 * (u - 1.0)
    t = u * u * u * (u * (u * 6.0 - 15.0) + 10.0)  # quintic fade
    # Single-octave gradient noise spans [-0.5, 0.5]; scale to [-1, 1].
    return 2.0 * (s + t * (e - s))


_MASK64 = (1 << 64) - 1


def _octave_scalar(x: float, seed: int) -> float:
    # Same arithmetic as _octave, in plain Python; results are bit-identical.
    i0 = math.floor(x)
    u = x - i0
    mixed_seed = (0x9E3779B97F4A7C15 * ((seed & _MASK64) + 1 & _MASK64)) & _MASK64
    gs = []
    for i in (i0, i0 + 1):
        h = (i + mixed_seed) & _MASK64
        h = ((h ^ (h >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        h = ((h ^ (h >> 27)) * 0x94D049BB133111EB) & _MASK64
        h = h ^ (h >> 31)
        gs.append((h >> 11) / float(1 << 53) * 2.0 - 1.0)
    s = gs[0] * u
    e = gs[1] * (u - 1.0)
    t = u * u * u * (u * (u * 6.0 - 15.0) + 10.0)
    return 2.0 * (s + t * (e - s))


def perlin1d(x, seed: int = 0, octaves: int = 2):
    """Gradient noise in [-1, 1]; accepts a scalar or an array."""
    if octaves < 1:
        raise ValueError(f"octaves must be >= 1, got {octaves}")
    if isinstance(x, (int, float)):
        total = 0.0
        amp_sum = 0.0
        for o in range(octaves):
            amp = 0.5 ** o
            total += amp * _octave_scalar(float(x) * (2.0 ** o), seed + o)
            amp_sum += amp
        return total / amp_sum
    arr = np.asarray(x, dtype=np.float64)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    total = np.zeros_like(arr)
    amp_sum = 0.0
    for o in range(octaves):
        amp = 0.5 ** o
        total += amp * _octave(arr * (2.0 ** o), seed + o)
        amp_sum += amp
    out = total / amp_sum
    return float(out[0]) if scalar else out


@dataclass
class DiversityController:
    """Owns the retrieval k: either a hand-set value or a Perlin drift."""

    mode: str = "auto-perlin"
    k_min: int = 1
    k_max: int = 20
    frequency: float = 0.05
    octaves: int = 2
    seed: int = 0
    manual_k: int = 5

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown diversity mode {self.mode!r}; "
                             f"pick from {MODES}")
        if self.k_min < 1 or self.k_max < self.k_min:
            raise ValueError(
                f"need 1 <= k_min <= k_max, got [{self.k_min}, {self.k_max}]")
        if self.frequency <= 0:
            raise ValueError(f"frequency must be positive, got {self.frequency}")


def next_k(controller: DiversityController, t: int) -> int:
    """k for step t; always within [k_min, k_max]."""
    c = controller
    if c.mode == "manual":
        return min(max(c.manual_k, c.k_min), c.k_max)
    noise = perlin1d(t * c.frequency, seed=c.seed, octaves=c.octaves)
    k = round(c.k_min + (c.k_max - c.k_min) * (noise + 1.0) / 2.0)
    return min(max(k, c.k_min), c.k_max)


def continuity_bound(controller: DiversityController) -> int:
    """Largest step-to-step k change the default drift should exhibit."""
    return math.ceil(0.2 * (controller.k_max - controller.k_min))
