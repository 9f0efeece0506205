import numpy as np
import pytest

from vesselspace.errors import DataError, DomainError
from vesselspace.metrics import build_report, neighbor_iou, trustworthiness, SpaceMetrics


def reference_trustworthiness(X, Y, k):
    """Independent direct-formula implementation (double loops everywhere)."""
    n = len(X)
    def dists(A, i):
        return [float(np.linalg.norm(A[i] - A[j])) if j != i else np.inf for j in range(n)]
    penalty = 0
    for i in range(n):
        dh = dists(X, i)
        dl = dists(Y, i)
        order_h = sorted(range(n), key=lambda j: (dh[j], j))
        order_l = sorted(range(n), key=lambda j: (dl[j], j))
        rank_h = {j: r + 1 for r, j in enumerate(order_h)}
        top_h = set(order_h[:k])
        for j in order_l[:k]:
            if j not in top_h:
                penalty += rank_h[j] - k
    return 1.0 - 2.0 / (n * k * (2 * n - 3 * k - 1)) * penalty


class TestTrustworthiness:
    def test_isometry_scores_one(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((50, 2))
        theta = 0.7
        R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        Y = X @ R.T + np.array([5.0, -3.0])
        assert trustworthiness(X, Y, k=10) == pytest.approx(1.0, abs=1e-12)

    def test_matches_brute_force_on_shuffle(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((100, 4))
        Y = X[rng.permutation(100), :2].copy()
        for k in (3, 12, 20):
            got = trustworthiness(X, Y, k)
            want = reference_trustworthiness(X, Y, k)
            assert got == pytest.approx(want, abs=1e-9)

    def test_stability_under_duplicated_pair(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((100, 5))
        Y = rng.standard_normal((100, 2))
        base = trustworthiness(X, Y, k=10)
        X2 = np.vstack([X, X[0]])
        Y2 = np.vstack([Y, Y[0]])
        assert abs(trustworthiness(X2, Y2, k=10) - base) < 0.02

    def test_k_domain(self):
        X = np.random.default_rng(3).standard_normal((20, 3))
        Y = X[:, :2]
        with pytest.raises(DomainError):
            trustworthiness(X, Y, k=0)
        with pytest.raises(DomainError):
            trustworthiness(X, Y, k=10)  # k must stay below N/2


class TestNeighborIou:
    def grid(self, fill):
        g = np.zeros((4, 4, 4), dtype=np.uint8)
        g.ravel()[:fill] = 1
        return g

    def test_identical_vessels_score_one(self):
        coords = np.random.default_rng(4).standard_normal((6, 2))
        ids = np.arange(6)
        voxels = {i: self.grid(20) for i in range(6)}
        assert neighbor_iou(coords, ids, voxels, k=3) == 1.0

    def test_adjacent_duplicate_pair_contributes_one(self):
        coords = np.array([[0.0, 0.0], [0.001, 0.0], [50.0, 0.0], [50.0, 50.0]])
        ids = np.arange(4)
        voxels = {
            0: self.grid(10), 1: self.grid(10),  # duplicates, adjacent
            2: self.grid(30), 3: self.grid(50),
        }
        val = neighbor_iou(coords[:2], ids[:2], voxels, k=1)
        assert val == 1.0

    def test_missing_voxel_raises(self):
        coords = np.zeros((3, 2))
        with pytest.raises(DataError):
            neighbor_iou(coords, np.array([0, 1, 7]), {0: self.grid(5), 1: self.grid(5)})


class TestReport:
    def make(self, iou_par, iou_feat):
        par = SpaceMetrics("parametric", 3, 0.1, 0.9, iou_par)
        feat = SpaceMetrics("feature", 5, 0.05, 0.95, iou_feat)
        return build_report(par, feat)

    def test_expected_ordering_no_warning(self):
        report = self.make(0.5, 0.7)
        assert report.warnings == []
        assert report.deltas["mean_neighbor_iou"] == pytest.approx(0.2)

    def test_inverted_ordering_warns_not_fails(self):
        report = self.make(0.7, 0.5)
        assert len(report.warnings) == 1
        assert "inverted" in report.warnings[0]

    def test_dict_shape(self):
        d = self.make(0.4, 0.6).to_dict()
        assert set(d) == {"parametric", "feature", "deltas", "warnings"}
        assert set(d["parametric"]) == {
            "kind", "cluster_count", "noise_fraction",
            "trustworthiness", "mean_neighbor_iou",
        }
