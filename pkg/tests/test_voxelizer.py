import numpy as np
import pytest

from vesselspace.errors import DataError, DimensionError
from vesselspace.vesselgen import VesselParams, curve_from_params, sample_params, vessel_seed
from vesselspace.voxelizer import (
    SectionImage,
    VoxelGrid,
    grid_iou,
    iou,
    pack_record,
    read_voxl,
    read_voxl_matrix,
    record_size,
    section_slice,
    unpack_record,
    voxel_centers,
    voxelize,
    write_voxl,
)


def oracle_voxelize(params, resolution, samples=100_000):
    """Brute force: test every voxel center against a densely sampled profile
    polyline, same <= tie rule as production."""
    curve = curve_from_params(params)
    t = np.linspace(0.0, 1.0, samples)
    u = 1.0 - t
    prof_r = u * u * curve.p0[0] + 2 * t * u * curve.p1[0] + t * t * curve.p2[0]
    prof_h = 2 * t * u * curve.p1[1] + t * t * curve.p2[1]
    cx, cy, cz = voxel_centers(resolution)
    occ = np.zeros((resolution,) * 3, dtype=np.uint8)
    for x in range(resolution):
        for y in range(resolution):
            if cy[y] > params.height:
                continue
            r = np.interp(cy[y], prof_h, prof_r)
            for z in range(resolution):
                if np.sqrt(cx[x] ** 2 + cz[z] ** 2) <= r:
                    occ[x, y, z] = 1
    return occ


def cylinder_params(height=0.75, width=0.5):
    # collinear control point keeps the profile constant at width/2
    return VesselParams(
        height=height,
        base_width=width,
        top_width=width,
        ctrl_r=width / 2,
        ctrl_h=height / 2,
    )


class TestVoxelize:
    def test_cylinder_slices_identical(self):
        grid = voxelize(cylinder_params(), resolution=32)
        _, cy, _ = voxel_centers(32)
        occupied_ys = [y for y in range(32) if cy[y] <= 0.75]
        base = grid.occupancy[:, occupied_ys[0], :]
        assert base.sum() > 0
        for y in occupied_ys[1:]:
            assert np.array_equal(grid.occupancy[:, y, :], base)
        for y in set(range(32)) - set(occupied_ys):
            assert grid.occupancy[:, y, :].sum() == 0

    def test_cylinder_disk_radius(self):
        grid = voxelize(cylinder_params(), resolution=32)
        cx, cy, cz = voxel_centers(32)
        y = 0
        dist = np.sqrt(cx[:, None] ** 2 + cz[None, :] ** 2)
        assert np.array_equal(grid.occupancy[:, y, :], (dist <= 0.25).astype(np.uint8))

    @pytest.mark.parametrize("seed", range(8))
    def test_rotational_symmetries(self, seed):
        grid = voxelize(sample_params(seed), resolution=32).occupancy
        assert np.array_equal(grid, grid[::-1, :, :])  # x -> R-1-x
        assert np.array_equal(grid, grid[:, :, ::-1])  # z -> R-1-z
        assert np.array_equal(grid, grid.transpose(2, 1, 0))  # x/z swap

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(7)
        for i in range(10):
            params = sample_params(vessel_seed(7, i))
            got = voxelize(params, resolution=16).occupancy
            want = oracle_voxelize(params, 16)
            assert np.array_equal(got, want), f"vessel {i} mismatch"

    def test_monotone_width_response(self):
        base = VesselParams(0.8, 0.3, 0.4, 0.2, 0.4)
        wider = VesselParams(0.8, 0.5, 0.6, 0.2, 0.4)
        assert voxelize(wider, 24).count() >= voxelize(base, 24).count()

    def test_resolution_refinement(self):
        for seed in range(5):
            params = sample_params(seed)
            f32 = voxelize(params, 32).count() / 32**3
            f64 = voxelize(params, 64).count() / 64**3
            assert abs(f32 - f64) < 0.02


class TestSection:
    def test_empty_and_full(self):
        empty = VoxelGrid(8, np.zeros((8, 8, 8), dtype=np.uint8))
        full = VoxelGrid(8, np.ones((8, 8, 8), dtype=np.uint8))
        assert section_slice(empty).pixels.sum() == 0
        assert section_slice(full).pixels.sum() == 64

    def test_cylinder_section_columns(self):
        grid = voxelize(cylinder_params(), resolution=32)
        img = section_slice(grid)
        cx, cy, cz = voxel_centers(32)
        mid = 16
        for x in range(32):
            expected_col = (
                (np.sqrt(cx[x] ** 2 + cz[mid] ** 2) <= 0.25) & (cy <= 0.75)
            ).astype(np.uint8)
            assert np.array_equal(img.pixels[x], expected_col)


class TestIou:
    def test_identical(self):
        g = voxelize(cylinder_params(), 16)
        assert iou(g, g) == 1.0

    def test_disjoint(self):
        a = np.zeros((8, 8, 8), dtype=np.uint8)
        b = np.zeros((8, 8, 8), dtype=np.uint8)
        a[0, 0, 0] = 1
        b[7, 7, 7] = 1
        assert iou(VoxelGrid(8, a), VoxelGrid(8, b)) == 0.0

    def test_subset_count(self):
        a = np.zeros((8, 8, 8), dtype=np.uint8)
        b = np.zeros((8, 8, 8), dtype=np.uint8)
        a.ravel()[:10] = 1
        b.ravel()[:40] = 1
        assert iou(VoxelGrid(8, a), VoxelGrid(8, b)) == pytest.approx(0.25)

    def test_both_empty(self):
        z = np.zeros((4, 4, 4), dtype=np.uint8)
        assert iou(VoxelGrid(4, z), VoxelGrid(4, z.copy())) == 1.0

    def test_resolution_mismatch(self):
        with pytest.raises(DimensionError):
            iou(
                VoxelGrid(4, np.zeros((4, 4, 4), dtype=np.uint8)),
                VoxelGrid(8, np.zeros((8, 8, 8), dtype=np.uint8)),
            )


class TestVoxlFormat:
    def test_bit_order(self):
        # bit for idx lives in byte idx>>3, LSB first
        occ = np.zeros((2, 2, 2), dtype=np.uint8)
        occ.ravel()[0] = 1  # idx 0 -> byte 0 bit 0
        occ.ravel()[3] = 1  # idx 3 -> byte 0 bit 3
        assert pack_record(occ) == bytes([0b00001001])
        assert record_size(2) == 1

    def test_record_roundtrip(self):
        rng = np.random.default_rng(0)
        occ = (rng.random((5, 5, 5)) < 0.4).astype(np.uint8)
        assert np.array_equal(unpack_record(pack_record(occ), 5), occ)

    def test_file_roundtrip_bit_exact(self, tmp_path):
        grids = [voxelize(sample_params(s), 16) for s in range(4)]
        path = tmp_path / "vessels.voxl"
        write_voxl(path, grids)
        first = path.read_bytes()
        back = read_voxl(path)
        assert len(back) == 4
        for g, h in zip(grids, back):
            assert np.array_equal(g.occupancy, h.occupancy)
        write_voxl(path, back)
        assert path.read_bytes() == first
        assert read_voxl_matrix(path).shape == (4, 16, 16, 16)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.voxl"
        path.write_bytes(b"NOPE" + bytes(12))
        with pytest.raises(DataError):
            read_voxl(path)

    def test_truncated(self, tmp_path):
        grids = [voxelize(sample_params(0), 16)]
        path = tmp_path / "t.voxl"
        write_voxl(path, grids)
        path.write_bytes(path.read_bytes()[:-7])
        with pytest.raises(DataError):
            read_voxl(path)
