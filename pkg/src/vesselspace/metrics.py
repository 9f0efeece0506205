"""Quantitative space-comparison metrics.

`trustworthiness` grades how honestly a 2-D embedding represents its
high-dimensional source; `neighbor_iou` measures local morphological
coherence: how similar each vessel is to the vessels placed next to it.
Together they turn the qualitative side-by-side figures into numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DomainError
from .voxelizer import grid_iou


def _rank_matrix(X: np.ndarray) -> np.ndarray:
    """ranks[i, j] = 1-based rank of j among i's neighbors in X (ties by index)."""
    n = X.shape[0]
    d = np.linalg.norm(X[:, None, :] - X[None, :, :], axis=2)
    np.fill_diagonal(d, np.inf)
    order = np.argsort(d, axis=1, kind="stable")
    ranks = np.empty((n, n), dtype=np.int64)
    rows = np.arange(n)[:, None]
    ranks[rows, order] = np.arange(1, n + 1)
    return ranks, order


def trustworthiness(X_high: np.ndarray, Y_low: np.ndarray, k: int) -> float:
    """Penalty-normalized score in [0, 1] for embedding neighbor honesty.

    Every point that appears among a point's k nearest embedding neighbors
    but not among its k nearest source-space neighbors contributes its
    source-space rank excess (rank - k).
    """
    X_high = np.asarray(X_high, dtype=np.float64)
    Y_low = np.asarray(Y_low, dtype=np.float64)
    n = X_high.shape[0]
    if Y_low.shape[0] != n:
        raise DomainError(f"row mismatch: {n} high-dim vs {Y_low.shape[0]} low-dim")
    if not 1 <= k < n / 2:
        raise DomainError(f"k must satisfy 1 <= k < N/2 = {n / 2}, got {k}")
    ranks_high, order_high = _rank_matrix(X_high)
    _, order_low = _rank_matrix(Y_low)
    penalty = 0
    for i in range(n):
        high_set = set(order_high[i, :k].tolist())
        for j in order_low[i, :k]:
            if int(j) not in high_set:
                penalty += int(ranks_high[i, j]) - k
    return 1.0 - (2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0))) * penalty


def neighbor_iou(
    coords: np.ndarray, ids: np.ndarray, voxels: dict, k: int = 5
) -> float:
    """Mean over vessels of the mean voxel IoU with their k nearest 2-D neighbors.

    `voxels` maps vessel id -> occupancy array; every embedding id must be
    present.
    """
    coords = np.asarray(coords, dtype=np.float64)
    ids = np.asarray(ids)
    missing = [int(i) for i in ids if int(i) not in voxels]
    if missing:
        raise DataError(f"no voxels for embedding ids {missing[:8]}")
    n = len(ids)
    if not 1 <= k < n:
        raise DomainError(f"k must satisfy 1 <= k < N = {n}, got {k}")
    d = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=2)
    np.fill_diagonal(d, np.inf)
    order = np.argsort(d, axis=1, kind="stable")
    per_vessel = np.empty(n)
    for row in range(n):
        own = voxels[int(ids[row])]
        vals = [
            grid_iou(own, voxels[int(ids[j])]) for j in order[row, :k]
        ]
        per_vessel[row] = np.mean(vals)
    return float(per_vessel.mean())


@dataclass
class SpaceMetrics:
    kind: str
    cluster_count: int
    noise_fraction: float
    trustworthiness: float
    mean_neighbor_iou: float

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "cluster_count": self.cluster_count,
            "noise_fraction": self.noise_fraction,
            "trustworthiness": self.trustworthiness,
            "mean_neighbor_iou": self.mean_neighbor_iou,
        }


@dataclass
class CompareReport:
    parametric: SpaceMetrics
    feature: SpaceMetrics
    warnings: list = field(default_factory=list)

    @property
    def deltas(self) -> dict:
        return {
            "trustworthiness": self.feature.trustworthiness
            - self.parametric.trustworthiness,
            "mean_neighbor_iou": self.feature.mean_neighbor_iou
            - self.parametric.mean_neighbor_iou,
        }

    def to_dict(self) -> dict:
        return {
            "parametric": self.parametric.to_dict(),
            "feature": self.feature.to_dict(),
            "deltas": self.deltas,
            "warnings": self.warnings,
        }


def build_report(parametric: SpaceMetrics, feature: SpaceMetrics) -> CompareReport:
    """Assemble the report; an inverted coherence ordering warns, not fails."""
    report = CompareReport(parametric=parametric, feature=feature)
    if feature.mean_neighbor_iou < parametric.mean_neighbor_iou:
        report.warnings.append(
            "expected ordering inverted: feature-space mean neighbor IoU "
            f"{feature.mean_neighbor_iou:.4f} < parametric "
            f"{parametric.mean_neighbor_iou:.4f}"
        )
    return report
