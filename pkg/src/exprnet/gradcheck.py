"""Finite-difference validation of analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor, TensorError


def finite_diff_check(f: Callable[[Tensor], Tensor], point: Tensor,
                      epsilon: float = 1e-5) -> float:
    """Max relative error between analytic grad of f at point and central differences.

    f must be scalar-valued and smooth at point. The relative error per
    coordinate is |analytic - central| / max(1, |central|); the max over all
    coordinates is returned. Run at float64 for meaningful tolerances.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    x = Tensor(point.data.copy(), requires_grad=True)
    loss = f(x)
    if loss.size != 1:
        raise TensorError("finite_diff_check requires a scalar-valued function")
    loss.backward()
    analytic = x.grad.copy() if x.grad is not None else np.zeros_like(x.data)

    flat = x.data.reshape(-1)
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + epsilon
        fp = f(Tensor(x.data.copy())).item()
        flat[i] = orig - epsilon
        fm = f(Tensor(x.data.copy())).item()
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise TensorError("non-finite value during finite differencing")
        numeric[i] = (fp - fm) / (2.0 * epsilon)
    numeric = numeric.reshape(x.shape)

    denom = np.maximum(1.0, np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom))
