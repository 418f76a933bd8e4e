"""Classification losses.

Focal loss down-weights well-classified examples:
``FL(p_t) = -alpha_t * (1 - p_t)^gamma * log(p_t)``. With ``gamma = 0``
and uniform ``alpha`` it reduces to ordinary cross-entropy (``0**0`` is 1
under numpy, so the reduction is exact, not approximate).
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, log_softmax


def focal_loss(
    logits: Tensor,
    targets: np.ndarray,
    gamma: float = 2.0,
    alpha: np.ndarray | float = 1.0,
    valid: np.ndarray | None = None,
) -> Tensor:
    """Mean focal loss over the valid positions of ``logits`` [..., C].

    ``targets`` holds class indices shaped like ``logits`` minus the class
    axis. ``alpha`` may be a scalar or a per-class weight vector. ``valid``
    is an optional boolean array matching ``targets``; positions marked
    false (padding) are excluded from the mean.
    """
    targets = np.asarray(targets, dtype=np.int64)
    flat_logits = logits.reshape(-1, logits.shape[-1])
    flat_targets = targets.reshape(-1)
    if valid is not None:
        keep = np.flatnonzero(np.asarray(valid, bool).reshape(-1))
        if keep.size == 0:
            raise ValueError("no valid positions to average over")
        flat_logits = flat_logits[keep]
        flat_targets = flat_targets[keep]
    n = flat_targets.shape[0]
    log_probs = log_softmax(flat_logits, axis=-1)
    picked = log_probs[np.arange(n), flat_targets]
    p_t = picked.exp()
    if np.isscalar(alpha):
        alpha_t = float(alpha)
    else:
        alpha_t = Tensor(np.asarray(alpha, dtype=log_probs.dtype)[flat_targets])
    if gamma == 0.0:
        # (1 - p_t)^0 is identically 1; skipping the power keeps the
        # gradient finite when p_t saturates to exactly 1.
        return -(alpha_t * picked).mean()
    modulation = (1.0 - p_t) ** gamma
    return -(alpha_t * modulation * picked).mean()
