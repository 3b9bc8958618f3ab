"""Finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_input: list[float]

    def ok(self, tolerance: float) -> bool:
        return self.max_rel_error < tolerance


def numeric_gradient(loss_fn, x: np.ndarray, eps: float | None = None) -> np.ndarray:
    """Central differences of a scalar loss w.r.t. every element of x.

    loss_fn must not mutate x. eps defaults to cbrt(machine eps) scaled by
    the element magnitude, the usual optimum for central differences.
    """
    if eps is None:
        eps = float(np.finfo(x.dtype).eps) ** (1.0 / 3.0)
    grad = np.zeros(x.shape, dtype=np.float64)
    flat = x.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        h = eps * (1.0 + abs(float(orig)))
        flat[i] = orig + h
        f_plus = float(loss_fn())
        flat[i] = orig - h
        f_minus = float(loss_fn())
        flat[i] = orig
        grad.reshape(-1)[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def grad_check(loss_fn, inputs: list[np.ndarray],
               analytic_grads: list[np.ndarray],
               eps: float | None = None) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    loss_fn() recomputes the scalar loss from the current contents of
    `inputs` (perturbed in place). The relative error per input is
    ||a - n||_inf / max(||a||_inf, ||n||_inf, floor), which absorbs
    finite-difference noise on near-zero entries while still catching any
    gradient that is wrong at the scale the optimizer would see.
    """
    if len(inputs) != len(analytic_grads):
        raise ValueError("one analytic gradient per checked input required")
    errors = []
    for x, a in zip(inputs, analytic_grads):
        n = numeric_gradient(loss_fn, x, eps=eps)
        a64 = np.asarray(a, dtype=np.float64)
        scale = max(float(np.abs(a64).max(initial=0.0)),
                    float(np.abs(n).max(initial=0.0)), 1e-8)
        errors.append(float(np.abs(a64 - n).max(initial=0.0)) / scale)
    return GradCheckReport(max_rel_error=max(errors), per_input=errors)
