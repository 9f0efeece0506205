"""Analytic solid-of-revolution voxelization and the VOXL container format.

World frame: the unit cube with the revolution axis through (0, y, 0) and the
base plane at y = 0. Voxel (x, y, z) of an R-sized grid has its center at

    cx = (x + 0.5) / R - 0.5
    cy = (y + 0.5) / R
    cz = (z + 0.5) / R - 0.5

and is occupied iff cy <= height and sqrt(cx^2 + cz^2) <= radius(cy), with
ties counting as occupied. The interior is filled (solid, not a shell).

Grids are numpy uint8 arrays of shape [R, R, R] indexed (x, y, z); the linear
index of a voxel is x*R*R + y*R + z, which is exactly C-order raveling.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionError, DomainError
from .vesselgen import VesselParams, curve_from_params, profile_radius

VOXL_MAGIC = b"VOXL"
VOXL_VERSION = 1
_HEADER = struct.Struct("<4sHHII")  # magic, version, resolution, count, reserved


@dataclass
class VoxelGrid:
    """Binary occupancy of one vessel; y is the vertical axis."""

    resolution: int
    occupancy: np.ndarray  # uint8 [R, R, R], values in {0, 1}

    def __post_init__(self):
        if self.resolution < 2:
            raise DomainError(f"resolution must be >= 2, got {self.resolution}")
        if self.occupancy.shape != (self.resolution,) * 3:
            raise DimensionError(
                f"occupancy shape {self.occupancy.shape} does not match R={self.resolution}"
            )

    def count(self) -> int:
        return int(self.occupancy.sum())


@dataclass
class SectionImage:
    """Central slice z = floor(R/2); pixels[x, y] with y vertical."""

    resolution: int
    pixels: np.ndarray  # uint8 [R, R]


def voxel_centers(resolution: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(cx, cy, cz) center coordinates along each axis."""
    idx = np.arange(resolution, dtype=np.float64)
    cx = (idx + 0.5) / resolution - 0.5
    cy = (idx + 0.5) / resolution
    cz = (idx + 0.5) / resolution - 0.5
    return cx, cy, cz


def voxelize(params: VesselParams, resolution: int = 32) -> VoxelGrid:
    """Rasterize one vessel by testing every voxel center against the profile."""
    if resolution < 2:
        raise DomainError(f"resolution must be >= 2, got {resolution}")
    curve = curve_from_params(params)
    cx, cy, cz = voxel_centers(resolution)
    # Radial distance of every (x, z) center pair; shared by all slices.
    dist_sq = cx[:, None] ** 2 + cz[None, :] ** 2
    occ = np.zeros((resolution,) * 3, dtype=np.uint8)
    for y in range(resolution):
        if cy[y] > params.height:
            continue
        r = profile_radius(curve, cy[y])
        occ[:, y, :] = (dist_sq <= r * r).astype(np.uint8)
    return VoxelGrid(resolution=resolution, occupancy=occ)


def section_slice(grid: VoxelGrid) -> SectionImage:
    """pixels[x, y] = occupancy[x, y, floor(R/2)]."""
    mid = grid.resolution // 2
    return SectionImage(
        resolution=grid.resolution, pixels=grid.occupancy[:, :, mid].copy()
    )


def iou(a: VoxelGrid, b: VoxelGrid) -> float:
    """Intersection over union; 1.0 when both grids are empty."""
    if a.resolution != b.resolution:
        raise DimensionError(
            f"resolution mismatch: {a.resolution} vs {b.resolution}"
        )
    return grid_iou(a.occupancy, b.occupancy)


def grid_iou(a: np.ndarray, b: np.ndarray) -> float:
    """IoU of two same-shaped binary arrays."""
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    a = a.astype(bool)
    b = b.astype(bool)
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        return 1.0
    inter = int(np.logical_and(a, b).sum())
    return inter / union


# --- VOXL container -------------------------------------------------------
#
# magic 'VOXL', u16 version=1, u16 resolution, u32 count, u32 reserved=0,
# then count records of ceil(R^3 / 8) bytes. The bit for linear index
# idx = x*R*R + y*R + z lives in byte idx >> 3, LSB first. Little endian.


def record_size(resolution: int) -> int:
    return (resolution**3 + 7) // 8


def pack_record(occupancy: np.ndarray) -> bytes:
    """Bit-pack one grid into its VOXL record."""
    flat = occupancy.astype(np.uint8).ravel()  # C order == x*R*R + y*R + z
    return np.packbits(flat, bitorder="little").tobytes()


def unpack_record(data: bytes, resolution: int) -> np.ndarray:
    """Inverse of pack_record."""
    if len(data) != record_size(resolution):
        raise DataError(
            f"record has {len(data)} bytes, expected {record_size(resolution)}"
        )
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    return bits[: resolution**3].reshape((resolution,) * 3)


def write_voxl(path: str | Path, grids: list[VoxelGrid]) -> None:
    if not grids:
        raise DataError("refusing to write an empty VOXL file")
    resolution = grids[0].resolution
    for g in grids:
        if g.resolution != resolution:
            raise DimensionError("all grids in one VOXL file must share a resolution")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(VOXL_MAGIC, VOXL_VERSION, resolution, len(grids), 0))
        for g in grids:
            fh.write(pack_record(g.occupancy))


def read_voxl(path: str | Path) -> list[VoxelGrid]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"VOXL file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated VOXL header")
    magic, version, resolution, count, reserved = _HEADER.unpack_from(raw)
    if magic != VOXL_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if version != VOXL_VERSION:
        raise DataError(f"{path}: unsupported VOXL version {version}")
    rec = record_size(resolution)
    expected = _HEADER.size + rec * count
    if len(raw) != expected:
        raise DataError(f"{path}: expected {expected} bytes, found {len(raw)}")
    grids = []
    for i in range(count):
        start = _HEADER.size + i * rec
        occ = unpack_record(raw[start : start + rec], resolution)
        grids.append(VoxelGrid(resolution=resolution, occupancy=occ))
    return grids


def read_voxl_matrix(path: str | Path) -> np.ndarray:
    """All records as one uint8 array [N, R, R, R]."""
    grids = read_voxl(path)
    return np.stack([g.occupancy for g in grids])
