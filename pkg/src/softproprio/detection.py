"""Collision detection from reconstruction (or prediction) error.

The error at each step is summed over the five sensor channels in normalized
units. Autoencoders use the gated error ``max(0, x_hat - x)``: contact holds a
chamber back, so the reading falls below what the commanded pressure implies
and only over-reconstruction counts. The prediction baseline uses ``|x_hat - x|``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .adaptation.bundle import TrainedBundle, reconstruct_normalized
from .adaptation.models import AE_VARIANTS

GATED = "reconstruction_gated"
ABSOLUTE = "prediction_abs"
SEGMENT_LEN = 5
RANK = 10
REQUIRED_SIM = 1
REQUIRED_REAL = 2


class ErrorTrace(NamedTuple):
    e: np.ndarray
    method: str


def error_trace(x: np.ndarray, x_hat: np.ndarray, method: str = GATED) -> ErrorTrace:
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {x_hat.shape}")
    d = x_hat - x
    if method == GATED:
        d = np.maximum(d, 0.0)
    elif method == ABSOLUTE:
        d = np.abs(d)
    else:
        raise ValueError(f"unknown error method {method!r}")
    return ErrorTrace(d.sum(axis=-1), method)


def recon_error_trace(bundle: TrainedBundle, x: np.ndarray, p: np.ndarray, domain: str) -> ErrorTrace:
    xn, xhat = reconstruct_normalized(bundle, x, p, domain)
    return error_trace(xn, xhat, GATED if bundle.variant in AE_VARIANTS else ABSOLUTE)


@dataclass(frozen=True)
class DetectorCalibration:
    threshold: float
    exceed_count_required: int = REQUIRED_SIM
    segment_len: int = SEGMENT_LEN

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValueError(f"threshold must be positive, got {self.threshold}")
        if not 1 <= self.exceed_count_required <= self.segment_len:
            raise ValueError("exceed_count_required must lie in 1..segment_len")

    def with_required(self, n: int) -> "DetectorCalibration":
        return DetectorCalibration(self.threshold, n, self.segment_len)


def kth_largest(e: np.ndarray, k: int = RANK) -> float:
    e = np.asarray(e, dtype=np.float64).ravel()
    if e.size < k:
        raise ValueError(f"trace has {e.size} samples, needs at least {k}")
    return float(np.partition(e, e.size - k)[e.size - k])


def calibrate_threshold(traces_by_motion: Mapping[str, Sequence[ErrorTrace | np.ndarray]],
                        exceed_count_required: int = REQUIRED_SIM) -> DetectorCalibration:
    """Threshold = mean over models of (mean over motions of the 10th-largest error).

    ``traces_by_motion[motion][i]`` is model ``i``'s (pooled) trace for that motion.
    """
    if not traces_by_motion:
        raise ValueError("no calibration traces")
    counts = {len(v) for v in traces_by_motion.values()}
    if len(counts) != 1 or 0 in counts:
        raise ValueError("every motion needs one trace per model")
    n_models = counts.pop()
    per_model = []
    for i in range(n_models):
        vals = [kth_largest(_values(tr[i])) for tr in traces_by_motion.values()]
        per_model.append(float(np.mean(vals)))
    return DetectorCalibration(float(np.mean(per_model)), exceed_count_required)


def _values(t) -> np.ndarray:
    return t.e if isinstance(t, ErrorTrace) else np.asarray(t, dtype=np.float64)


def label_segments(trace: ErrorTrace | np.ndarray, calib: DetectorCalibration) -> np.ndarray:
    """One label per complete segment: exceedances (strictly above threshold) >= required."""
    e = _values(trace)
    n = len(e) // calib.segment_len
    seg = e[: n * calib.segment_len].reshape(n, calib.segment_len)
    return (seg > calib.threshold).sum(axis=1) >= calib.exceed_count_required


def expand_segments(labels: np.ndarray, segment_len: int = SEGMENT_LEN) -> np.ndarray:
    return np.repeat(np.asarray(labels, dtype=bool), segment_len)


def detect(trace: ErrorTrace | np.ndarray, calib: DetectorCalibration) -> np.ndarray:
    """Per-step predictions over the complete segments of ``trace``."""
    return expand_segments(label_segments(trace, calib), calib.segment_len)


def write_detection_log(path: str | Path, t: np.ndarray, trace: ErrorTrace, calib: DetectorCalibration,
                        truth: np.ndarray) -> None:
    pred = detect(trace, calib)
    n = len(pred)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "error", "threshold", "segment_label", "truth_label"])
        for k in range(n):
            w.writerow([f"{t[k]:.1f}", f"{trace.e[k]:.9g}", f"{calib.threshold:.9g}",
                        int(pred[k]), int(truth[k])])
