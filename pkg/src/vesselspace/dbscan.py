"""Density-based clustering of 2-D embeddings (classic DBSCAN).

Brute-force neighborhoods; the target N is a few thousand points. Border
points join the first cluster that reaches them in ascending-index
traversal order, which makes runs reproducible; cluster ids are contiguous
in order of discovery and noise is labeled -1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError

NOISE = -1


@dataclass(frozen=True)
class DbscanConfig:
    eps: float
    min_pts: int = 8

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigurationError(f"eps must be > 0, got {self.eps}")
        if self.min_pts < 1:
            raise ConfigurationError(f"min_pts must be >= 1, got {self.min_pts}")

    def to_dict(self) -> dict:
        return {"eps": self.eps, "min_pts": self.min_pts}

    @classmethod
    def from_dict(cls, d: dict) -> "DbscanConfig":
        return cls(**d)


@dataclass
class ClusterLabels:
    labels: np.ndarray  # int64, -1 = noise, clusters 0..k-1

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max() + 1) if self.labels.size else 0

    def noise_fraction(self) -> float:
        if self.labels.size == 0:
            return 0.0
        return float(np.mean(self.labels == NOISE))


def region_query(points: np.ndarray, i: int, eps: float) -> np.ndarray:
    """Indices within eps of point i (ties included, i itself included)."""
    d = np.linalg.norm(points - points[i], axis=1)
    return np.flatnonzero(d <= eps)


def dbscan(points: np.ndarray, config: DbscanConfig) -> ClusterLabels:
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    labels = np.full(n, NOISE, dtype=np.int64)
    visited = np.zeros(n, dtype=bool)
    cluster = 0
    for i in range(n):
        if visited[i]:
            continue
        visited[i] = True
        neighbors = region_query(points, i, config.eps)
        if neighbors.size < config.min_pts:
            continue  # stays noise unless a later cluster reaches it
        labels[i] = cluster
        queue = list(neighbors)
        qi = 0
        while qi < len(queue):
            j = queue[qi]
            qi += 1
            if labels[j] == NOISE:
                labels[j] = cluster  # border or newly reached point
            if visited[j]:
                continue
            visited[j] = True
            j_neighbors = region_query(points, j, config.eps)
            if j_neighbors.size >= config.min_pts:
                queue.extend(j_neighbors)
        cluster += 1
    return ClusterLabels(labels=labels)


def core_points(points: np.ndarray, config: DbscanConfig) -> np.ndarray:
    """Boolean mask of points with at least min_pts eps-neighbors."""
    points = np.asarray(points, dtype=np.float64)
    d = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    return (d <= config.eps).sum(axis=1) >= config.min_pts


def default_eps(points: np.ndarray, k: int = 4, percentile: float = 90.0) -> float:
    """Data-driven eps default: the 90th percentile of k-NN distances."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n <= k:
        raise ConfigurationError(f"need more than {k} points for a {k}-NN eps estimate")
    d = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    d_sorted = np.sort(d, axis=1)
    knn = d_sorted[:, k]  # column 0 is the self-distance
    eps = float(np.percentile(knn, percentile))
    if eps <= 0:
        # fully duplicated data: any positive radius reaches the duplicates
        eps = 1e-12
    return eps


def write_clustered_csv(path, ids, coords, labels) -> None:
    """clustered.csv with header id,x,y,cluster."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "x", "y", "cluster"])
        for i, (x, y), lab in zip(ids, coords, labels):
            writer.writerow([int(i), f"{x:.9g}", f"{y:.9g}", int(lab)])


def read_clustered_csv(path):
    """Returns (ids, coords, labels)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"clustered file not found: {path}")
    ids, coords, labels = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["id", "x", "y", "cluster"]:
            raise DataError(f"{path}: unexpected clustered header {header}")
        for row in reader:
            if len(row) != 4:
                raise DataError(f"{path}: malformed row {row}")
            ids.append(int(row[0]))
            coords.append((float(row[1]), float(row[2])))
            labels.append(int(row[3]))
    return (
        np.array(ids, dtype=np.int64),
        np.array(coords, dtype=np.float64),
        np.array(labels, dtype=np.int64),
    )
