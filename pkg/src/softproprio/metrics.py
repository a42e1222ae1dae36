"""Confusion accounting with one-step-delayed true positives, F1/accuracy, latent projection."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

UNDEFINED_MARK = "-"


@dataclass(frozen=True)
class ConfusionCounts:
    tp_current: int = 0
    tp_next: int = 0
    fn: int = 0
    fp: int = 0
    tn: int = 0

    @property
    def tp(self) -> int:
        return self.tp_current + self.tp_next

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(*(a + b for a, b in zip(astuple(self), astuple(other))))

    def to_dict(self) -> dict:
        return asdict(self)


def astuple(c: ConfusionCounts) -> tuple:
    return (c.tp_current, c.tp_next, c.fn, c.fp, c.tn)


def confusion(truth: Sequence[bool], pred: Sequence[bool]) -> ConfusionCounts:
    """Count detections, allowing a collision to be caught one step late.

    Truth positives are matched earliest first: a prediction at ``t`` gives a current
    hit, otherwise a prediction at ``t + 1`` gives a delayed hit. Each prediction is
    matched at most once; unmatched predictions are false positives.
    """
    truth = np.asarray(truth, dtype=bool)
    pred = np.asarray(pred, dtype=bool)
    if truth.shape != pred.shape or truth.ndim != 1:
        raise ValueError(f"truth and prediction lengths differ: {truth.shape} vs {pred.shape}")
    used = np.zeros_like(pred)
    cur = nxt = fn = 0
    n = len(truth)
    for t in np.flatnonzero(truth):
        if pred[t] and not used[t]:
            used[t] = True
            cur += 1
        elif t + 1 < n and pred[t + 1] and not used[t + 1]:
            used[t + 1] = True
            nxt += 1
        else:
            fn += 1
    fp = int(np.count_nonzero(pred & ~used))
    tn = int(np.count_nonzero(~truth & ~pred))
    return ConfusionCounts(cur, nxt, fn, fp, tn)


class Scores(NamedTuple):
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    accuracy: Optional[float]


def _ratio(a, b):
    return a / b if b > 0 else None


def f1_accuracy(c: ConfusionCounts) -> Scores:
    """Precision, recall, F1 and accuracy; ``None`` where a denominator vanishes."""
    p = _ratio(c.tp, c.tp + c.fp)
    r = _ratio(c.tp, c.tp + c.fn)
    f1 = None
    if p is not None and r is not None and p + r > 0:
        f1 = 2 * p * r / (p + r)
    a = _ratio(c.tp + c.tn, c.tp + c.tn + c.fp + c.fn)
    return Scores(p, r, f1, a)


def f1_from(p: float, r: float) -> Optional[float]:
    return 2 * p * r / (p + r) if p + r > 0 else None


def fmt_metric(v: Optional[float], digits: int = 3) -> str:
    return UNDEFINED_MARK if v is None else f"{v:.{digits}f}"


class DegenerateCovarianceError(ValueError):
    pass


class Projection(NamedTuple):
    coords: list[np.ndarray]  # one (n_i, 2) array per input set
    components: np.ndarray  # (D, 2)
    mean: np.ndarray
    overlap: float


def pca_2d(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and top-2 principal axes from the covariance eigendecomposition."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 3:
        raise ValueError("PCA needs at least three points")
    mean = points.mean(axis=0)
    cov = np.cov(points - mean, rowvar=False)
    w, v = np.linalg.eigh(np.atleast_2d(cov))
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    tol = max(w[0], 0.0) * 1e-12
    rank = int(np.count_nonzero(w > tol)) if w[0] > 0 else 0
    if rank < 2:
        raise DegenerateCovarianceError(
            f"covariance of {points.shape[0]} points in {points.shape[1]}-D has rank {rank} "
            f"(eigenvalues {np.array2string(w, precision=3)}); need rank >= 2"
        )
    # sign convention: largest-magnitude loading of each axis is positive
    for j in range(2):
        if v[np.argmax(np.abs(v[:, j])), j] < 0:
            v[:, j] = -v[:, j]
    return mean, v[:, :2]


def _mean_dist(a: np.ndarray, b: np.ndarray, same: bool) -> float:
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    if same:
        n = len(a)
        return float(d.sum() / (n * (n - 1))) if n > 1 else 0.0
    return float(d.mean())


def overlap_score(a: np.ndarray, b: np.ndarray) -> float:
    """Mean cross-set pairwise distance over mean within-set pairwise distance.

    About 1 when the two clouds are draws from the same distribution, large when
    they are separated.
    """
    within = 0.5 * (_mean_dist(a, a, True) + _mean_dist(b, b, True))
    if within <= 0:
        return float("inf") if _mean_dist(a, b, False) > 0 else 1.0
    return _mean_dist(a, b, False) / within


def _thin(x: np.ndarray, max_points: int) -> np.ndarray:
    step = max(1, int(np.ceil(len(x) / max_points)))
    return x[::step]


def latent_projection_2d(sets: Sequence[np.ndarray], max_points: int = 1000) -> Projection:
    """Project each ``(n_i, D)`` set onto the pooled top-2 principal plane.

    The overlap score compares the first two sets (one per domain) in that plane.
    Sets longer than ``max_points`` are thinned by a fixed stride.
    """
    if len(sets) < 2:
        raise ValueError("need at least two point sets")
    sets = [_thin(np.asarray(s, dtype=np.float64).reshape(-1, np.shape(s)[-1]), max_points) for s in sets]
    mean, comp = pca_2d(np.concatenate(sets))
    coords = [(s - mean) @ comp for s in sets]
    return Projection(coords, comp, mean, overlap_score(coords[0], coords[1]))
