"""The four losses: BCE, Gaussian KL, sequence NLL, MSE.

Each returns (scalar, gradient(s)). Reductions: BCE and MSE average over the
batch axis and sum over remaining axes unless noted; KL sums over latent dims
and averages over the batch; NLL sums over time and averages over the batch.
"""

from __future__ import annotations

import numpy as np

BCE_EPS = 1e-7  # numerical floor keeping log() finite


def loss_bce(pred, target):
    """Binary cross-entropy, summed per sample, averaged over the batch.

    pred is clamped into (BCE_EPS, 1-BCE_EPS); target must lie in [0, 1].
    """
    if target.min() < 0.0 or target.max() > 1.0:
        raise ValueError("bce target outside [0, 1]")
    n = pred.shape[0]
    p = np.clip(pred, BCE_EPS, 1.0 - BCE_EPS)
    loss = -(target * np.log(p) + (1.0 - target) * np.log1p(-p)).sum() / n
    grad = (-(target / p) + (1.0 - target) / (1.0 - p)) / n
    # No gradient through the clamp.
    grad = np.where((pred > BCE_EPS) & (pred < 1.0 - BCE_EPS), grad, 0.0).astype(pred.dtype)
    return loss, grad


def loss_bce_mean(pred, target):
    """BCE averaged over every cell (for per-pixel reporting)."""
    total, grad = loss_bce(pred, target)
    cells = int(np.prod(pred.shape[1:]))
    return total / cells, grad / cells


def loss_kl_gaussian(mu, log_sigma):
    """KL(N(mu, sigma^2) || N(0, I)), summed over dims, batch-averaged.

    Per dim: 0.5 * (mu^2 + sigma^2 - 1) - log_sigma.
    """
    n = mu.shape[0]
    var = np.exp(2.0 * log_sigma)
    kl = (0.5 * (mu * mu + var - 1.0) - log_sigma).sum() / n
    dmu = mu / n
    dlog_sigma = (var - 1.0) / n
    return kl, dmu, dlog_sigma


def loss_nll_sequence(logits, targets, mask=None):
    """Token-level negative log-likelihood under softmax.

    logits: [T, N, V], targets: int [T, N], mask: optional [T, N] in {0,1}.
    Returns (nll summed over time and averaged over batch, dlogits,
    per-token nll).
    """
    t_len, n, vocab = logits.shape
    if targets.shape != (t_len, n):
        raise ValueError(f"targets {targets.shape} vs logits {logits.shape}")
    shifted = logits - logits.max(axis=2, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=2, keepdims=True)
    flat_idx = targets.reshape(-1)
    picked = probs.reshape(-1, vocab)[np.arange(t_len * n), flat_idx].reshape(t_len, n)
    logp = np.log(np.maximum(picked, 1e-30))
    if mask is None:
        mask = np.ones((t_len, n), dtype=logits.dtype)
    total = -(logp * mask).sum() / n
    n_tokens = max(mask.sum(), 1.0)
    per_token = -(logp * mask).sum() / n_tokens
    dlogits = probs.copy()
    dlogits.reshape(-1, vocab)[np.arange(t_len * n), flat_idx] -= 1.0
    dlogits *= (mask / n)[:, :, None]
    return total, dlogits.astype(logits.dtype), per_token


def loss_mse(pred, target):
    """Mean squared error over all elements."""
    diff = pred - target
    loss = float((diff * diff).mean())
    grad = (2.0 / diff.size) * diff
    return loss, grad.astype(pred.dtype)
