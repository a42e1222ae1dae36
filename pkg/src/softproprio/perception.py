"""Shape estimation from trained bundles and its error metrics."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .adaptation.bundle import TrainedBundle, estimate_nodes_normalized
from .dataset import NormStats
from .robot.kinematics import MID_CHAMBER_MARKERS, N_NODES


class ShapeEstimate(NamedTuple):
    nodes_hat: np.ndarray  # (T, 123, 3), normalized units
    stats: NormStats

    def mm(self) -> np.ndarray:
        flat = self.nodes_hat.reshape(self.nodes_hat.shape[:-2] + (-1,))
        return self.stats.nodes_inv(flat)


class ShapeErrorReport(NamedTuple):
    mae_nodes: float  # normalized units
    mae_nodes_mm: float
    marker_height_mae_mm: float


def estimate_shape(bundle: TrainedBundle, x: np.ndarray, p: np.ndarray, domain: str) -> ShapeEstimate:
    """Node positions for raw sensors ``x`` and pressures ``p`` read through ``domain``."""
    out = estimate_nodes_normalized(bundle, x, p, domain)
    return ShapeEstimate(out.reshape(out.shape[:-1] + (N_NODES, 3)), bundle.stats)


def mae_nodes(est: np.ndarray, truth: np.ndarray) -> float:
    """Mean absolute difference over every coordinate of every node and frame."""
    est = np.asarray(est, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if est.shape != truth.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {truth.shape}")
    return float(np.mean(np.abs(est - truth)))


def marker_error(nodes_mm: np.ndarray, markers_truth: np.ndarray,
                 correspondence=MID_CHAMBER_MARKERS) -> float:
    """Mean absolute height (z) difference between the mid-chamber markers and their nodes, mm.

    ``correspondence`` lists ``(marker index, node index)`` pairs, one per chamber.
    """
    if not correspondence:
        raise ValueError("empty marker-to-node correspondence")
    m_idx = [m for m, _ in correspondence]
    n_idx = [n for _, n in correspondence]
    if max(m_idx) >= markers_truth.shape[-2] or max(n_idx) >= nodes_mm.shape[-2]:
        raise ValueError("marker correspondence refers to a missing marker or node")
    return float(np.mean(np.abs(nodes_mm[..., n_idx, 2] - markers_truth[..., m_idx, 2])))


def shape_errors(est: ShapeEstimate, truth_nodes_mm: np.ndarray, markers_mm: np.ndarray) -> ShapeErrorReport:
    truth_norm = est.stats.nodes(truth_nodes_mm).reshape(est.nodes_hat.shape)
    mm = est.mm()
    return ShapeErrorReport(mae_nodes(est.nodes_hat, truth_norm), mae_nodes(mm, truth_nodes_mm),
                            marker_error(mm, markers_mm))
