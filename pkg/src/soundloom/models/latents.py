"""Latent-space value types shared by the audio VAE, the text CVAE, and the
predictor GAN."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LATENT_DIM = 128

ORIGINS = ("spec", "text", "gan-predicted")


@dataclass
class LatentDistribution:
    mean: np.ndarray        # [latent_dim]
    log_sigma: np.ndarray   # [latent_dim]

    def __post_init__(self):
        if self.mean.shape != self.log_sigma.shape:
            raise ValueError(
                f"mean {self.mean.shape} vs log_sigma {self.log_sigma.shape}")
        if not (np.all(np.isfinite(self.mean))
                and np.all(np.isfinite(self.log_sigma))):
            raise ValueError("non-finite latent distribution")

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]


@dataclass
class LatentCode:
    z: np.ndarray           # [latent_dim]
    origin: str = "spec"

    def __post_init__(self):
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown latent origin {self.origin!r}")
        if not np.all(np.isfinite(self.z)):
            raise ValueError("non-finite latent code")

    @property
    def dim(self) -> int:
        return self.z.shape[-1]


def sample_latent(dist: LatentDistribution, tau: float,
                  rng: np.random.Generator, origin: str = "spec") -> LatentCode:
    """z = mu + tau * (eps element-wise sigma), eps ~ N(0, I).

    tau = 0 returns the mean exactly (no RNG draw is consumed).
    """
    if tau < 0:
        raise ValueError(f"temperature {tau} must be >= 0")
    if tau == 0.0:
        return LatentCode(z=dist.mean.copy(), origin=origin)
    eps = rng.standard_normal(dist.mean.shape).astype(dist.mean.dtype)
    z = dist.mean + tau * eps * np.exp(dist.log_sigma)
    return LatentCode(z=z, origin=origin)
