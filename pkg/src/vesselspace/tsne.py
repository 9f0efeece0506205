"""Exact t-SNE: perplexity-calibrated Gaussian affinities, Student-t kernel,
KL gradient descent with early exaggeration and a two-stage momentum schedule.

Everything is O(N^2); the target workloads are a few thousand points. The
optimizer is plain momentum gradient descent (no per-dimension adaptive
gains) so every quantity has a closed form the tests can check.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError, DomainError, NumericError

P_FLOOR = 1e-12
SIGMA_LO = 1e-20
SIGMA_HI = 1e10
PERPLEXITY_TOL = 1e-4
MAX_SEARCH_ITERS = 100


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    learning_rate: float = 200.0
    iterations: int = 1000
    seed: int = 0
    early_exaggeration: float = 4.0
    exaggeration_duration: int | None = None  # default min(250, iterations // 4)
    momentum_switch: int = 250
    momentum_early: float = 0.5
    momentum_late: float = 0.8

    def __post_init__(self):
        if not self.perplexity > 1:
            raise ConfigurationError(f"perplexity must be > 1, got {self.perplexity}")
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be > 0")
        if self.iterations < 1:
            raise ConfigurationError("iterations must be >= 1")

    @property
    def exaggeration_iters(self) -> int:
        if self.exaggeration_duration is not None:
            return self.exaggeration_duration
        return min(250, self.iterations // 4)

    def to_dict(self) -> dict:
        return {
            "perplexity": self.perplexity,
            "learning_rate": self.learning_rate,
            "iterations": self.iterations,
            "seed": self.seed,
            "early_exaggeration": self.early_exaggeration,
            "exaggeration_duration": self.exaggeration_duration,
            "momentum_switch": self.momentum_switch,
            "momentum_early": self.momentum_early,
            "momentum_late": self.momentum_late,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TsneConfig":
        return cls(**d)


@dataclass
class AffinityMatrix:
    """Symmetric joint affinities, zero diagonal, floored off-diagonal."""

    P: np.ndarray


@dataclass
class Embedding2D:
    ids: np.ndarray
    coords: np.ndarray  # [N, 2]


def pairwise_sq_dists(X: np.ndarray) -> np.ndarray:
    """Exact symmetric squared Euclidean distances with a zero diagonal."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DomainError(f"need a [N>=2, D] matrix, got shape {X.shape}")
    sq = np.sum(X * X, axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(d, 0.0, out=d)
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return d


def _row_distribution(sq_dists: np.ndarray, sigma: float):
    """Neighbor probabilities and entropy (bits) for one bandwidth."""
    beta = 1.0 / (2.0 * sigma * sigma)
    shifted = sq_dists - sq_dists.min()  # invariant shift for exp stability
    e = np.exp(-beta * shifted)
    total = e.sum()
    p = e / total
    nz = p > 0
    entropy = float(-np.sum(p[nz] * np.log2(p[nz])))
    return p, entropy


def perplexity_search(dists_row: np.ndarray, perplexity: float,
                      row_index: int | None = None):
    """Calibrate one conditional row: find sigma with 2^H(p) = perplexity.

    `dists_row` holds the squared distances to the other N-1 points (self
    excluded). Bisects sigma over [1e-20, 1e10] (geometric midpoints) for at
    most 100 iterations. If the target is outside the achievable entropy
    range (all distances equal, for instance) the closest achievable row is
    returned instead of failing.
    """
    row = np.asarray(dists_row, dtype=np.float64)
    if row.ndim != 1 or row.size < 1:
        raise DomainError("dists_row must be a nonempty vector")
    if not 1 < perplexity <= row.size:
        raise DomainError(
            f"perplexity must lie in (1, {row.size}] for a row of {row.size} neighbors"
        )
    target = float(np.log2(perplexity))
    lo, hi = SIGMA_LO, SIGMA_HI
    p_lo, h_lo = _row_distribution(row, lo)
    p_hi, h_hi = _row_distribution(row, hi)
    # entropy is nondecreasing in sigma; clamp unreachable targets
    if target <= h_lo:
        return lo, p_lo
    if target >= h_hi - 1e-15:
        if abs(2.0**h_hi - perplexity) <= PERPLEXITY_TOL or h_hi <= target:
            return hi, p_hi
    sigma, p, h = hi, p_hi, h_hi
    for _ in range(MAX_SEARCH_ITERS):
        sigma = float(np.sqrt(lo * hi))  # geometric midpoint
        p, h = _row_distribution(row, sigma)
        if abs(2.0**h - perplexity) <= PERPLEXITY_TOL:
            return sigma, p
        if h > target:
            hi = sigma
        else:
            lo = sigma
    where = f" (row {row_index})" if row_index is not None else ""
    raise NumericError(
        f"perplexity search did not converge{where}: "
        f"achieved {2.0**h:.6f}, target {perplexity}"
    )


def conditional_affinities(sq_dists: np.ndarray, perplexity: float) -> np.ndarray:
    """Row-calibrated conditional matrix p_(j|i); zero diagonal."""
    n = sq_dists.shape[0]
    C = np.zeros((n, n))
    others = np.arange(n)
    for i in range(n):
        mask = others != i
        _, p = perplexity_search(sq_dists[i, mask], perplexity, row_index=i)
        C[i, mask] = p
    return C


def symmetrize(conditionals: np.ndarray) -> AffinityMatrix:
    """P_ij = (p_(j|i) + p_(i|j)) / (2N), floored at 1e-12 off-diagonal."""
    n = conditionals.shape[0]
    P = (conditionals + conditionals.T) / (2.0 * n)
    off = ~np.eye(n, dtype=bool)
    P[off] = np.maximum(P[off], P_FLOOR)
    return AffinityMatrix(P=P)


def affinities(X: np.ndarray, perplexity: float) -> AffinityMatrix:
    return symmetrize(conditional_affinities(pairwise_sq_dists(X), perplexity))


def _student_t_kernel(Y: np.ndarray):
    d2 = pairwise_sq_dists(Y)
    num = 1.0 / (1.0 + d2)
    np.fill_diagonal(num, 0.0)
    Q = num / num.sum()
    return np.maximum(Q, P_FLOOR), num


def kl_objective(P: np.ndarray, Y: np.ndarray) -> float:
    """KL(P || Q(Y)) over i != j with floored values."""
    Q, _ = _student_t_kernel(Y)
    off = ~np.eye(P.shape[0], dtype=bool)
    p = np.maximum(P[off], P_FLOOR)
    return float(np.sum(p * np.log(p / Q[off])))


def kl_gradient(P: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """dC/dY = 4 sum_j (P_ij - Q_ij) (y_i - y_j) / (1 + |y_i - y_j|^2)."""
    Q, num = _student_t_kernel(Y)
    PQn = (P - Q) * num
    return 4.0 * (PQn.sum(axis=1)[:, None] * Y - PQn @ Y)


def run(X: np.ndarray, config: TsneConfig, ids: np.ndarray | None = None) -> Embedding2D:
    """Embed X [N, D] into 2-D, deterministically for a given seed."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 4:
        raise DomainError(f"need at least 4 points, got shape {X.shape}")
    n = X.shape[0]
    if not config.perplexity < n - 1:
        raise ConfigurationError(
            f"perplexity {config.perplexity} must be < N-1 = {n - 1}"
        )
    P = affinities(X, config.perplexity).P
    rng = np.random.default_rng(config.seed)
    Y = rng.standard_normal((n, 2)) * 1e-2  # N(0, 1e-4 I)
    update = np.zeros_like(Y)
    exag_until = config.exaggeration_iters
    for it in range(config.iterations):
        P_eff = P * config.early_exaggeration if it < exag_until else P
        grad = kl_gradient(P_eff, Y)
        momentum = (
            config.momentum_early if it < config.momentum_switch else config.momentum_late
        )
        update = momentum * update - config.learning_rate * grad
        Y = Y + update
        Y = Y - Y.mean(axis=0)
        if not np.all(np.isfinite(Y)):
            raise NumericError(f"embedding diverged at iteration {it}")
    if ids is None:
        ids = np.arange(n, dtype=np.int64)
    return Embedding2D(ids=np.asarray(ids, dtype=np.int64), coords=Y)


def minmax_scale_columns(X: np.ndarray) -> np.ndarray:
    """Scale each column to [0, 1]; constant columns map to 0."""
    X = np.asarray(X, dtype=np.float64)
    lo = X.min(axis=0)
    span = X.max(axis=0) - lo
    span = np.where(span == 0.0, 1.0, span)
    return (X - lo) / span


def write_embedding_csv(path, embedding: Embedding2D) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "x", "y"])
        for i, (x, y) in zip(embedding.ids, embedding.coords):
            writer.writerow([int(i), f"{x:.9g}", f"{y:.9g}"])


def read_embedding_csv(path) -> Embedding2D:
    path = Path(path)
    if not path.exists():
        raise DataError(f"embedding file not found: {path}")
    ids, coords = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["id", "x", "y"]:
            raise DataError(f"{path}: unexpected embedding header {header}")
        for row in reader:
            if len(row) != 3:
                raise DataError(f"{path}: malformed row {row}")
            ids.append(int(row[0]))
            coords.append((float(row[1]), float(row[2])))
    return Embedding2D(ids=np.array(ids, dtype=np.int64), coords=np.array(coords))
