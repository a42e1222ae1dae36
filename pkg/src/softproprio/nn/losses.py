from __future__ import annotations

import numpy as np

from .spec import ShapeMismatchError


def l2_loss(a: np.ndarray, b: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean over all leading axes of the Euclidean norm of ``a - b`` along the last axis.

    Returns the loss and its gradient with respect to ``a`` (the gradient with respect
    to ``b`` is the negative). Where a per-step difference is exactly zero the
    subgradient 0 is used.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"l2_loss operands differ in shape: {a.shape} vs {b.shape}")
    diff = a - b
    norms = np.sqrt(np.sum(diff * diff, axis=-1))
    n = norms.size
    safe = np.where(norms > 0, norms, 1.0)
    grad = np.where(norms[..., None] > 0, diff / safe[..., None], 0.0) / n
    return float(norms.mean()), grad
