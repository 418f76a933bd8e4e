"""Finite-difference gradient verification.

Runs a scalar-valued function twice per probed coordinate with a central
difference in float64 and compares against the analytic gradient from
:meth:`Tensor.backward`. Callers should switch the default dtype to
float64 first (see :func:`set_default_dtype`) so the analytic side has
matching precision.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0))
    if denom == 0.0:
        return 0.0
    return float(np.abs(analytic - numeric).max() / denom)


def check_gradients(
    fn: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-5,
    max_coords: int = 24,
    rng: np.random.Generator | None = None,
) -> float:
    """Return the worst relative error across all probed coordinates.

    ``fn`` must rebuild the graph from ``inputs`` on every call (their
    ``data`` arrays are perturbed in place between calls). At most
    ``max_coords`` randomly chosen coordinates are probed per input.
    """
    rng = rng or np.random.default_rng(0)
    for t in inputs:
        t.zero_grad()
    loss = fn()
    loss.backward()
    analytic = [np.array(t.grad, copy=True) for t in inputs]
    worst = 0.0
    for t, grad in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        n = flat.shape[0]
        coords = (
            np.arange(n)
            if n <= max_coords
            else rng.choice(n, size=max_coords, replace=False)
        )
        numeric = np.zeros(coords.shape[0], dtype=np.float64)
        for j, c in enumerate(coords):
            original = flat[c]
            flat[c] = original + eps
            up = float(fn().data)
            flat[c] = original - eps
            down = float(fn().data)
            flat[c] = original
            numeric[j] = (up - down) / (2.0 * eps)
        picked = grad.reshape(-1)[coords]
        worst = max(worst, relative_error(picked, numeric))
    return worst
