"""Synthetic vessel dataset: 5-parameter vectors and their revolved Bezier profiles.

A vessel is a surface of revolution. Its profile is a quadratic Bezier curve in
the (radius, height) plane with control points

    p0 = (base_width / 2, 0)       base rim
    p1 = (ctrl_r, ctrl_h)          free control point
    p2 = (top_width / 2, height)   top rim

Constraining ``0 <= ctrl_h <= height`` makes the height component of the curve
monotone in t, so radius-at-height is single valued and invertible in closed
form.

Sampling uses numpy's Philox counter-based generator keyed per vessel with
``(dataset_seed << 64) | vessel_id``, so every vessel has its own stream:
results do not depend on how many vessels are drawn or in what order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError, DomainError, NumericError

PARAM_FIELDS = ("height", "base_width", "top_width", "ctrl_r", "ctrl_h")

# Quadratic coefficient below this is treated as linear in the root solve.
_LINEAR_EPS = 1e-12
# Acceptance slack for the root's membership in [0, 1].
_ROOT_TOL = 1e-9


@dataclass(frozen=True)
class VesselParams:
    """One vessel's 5-parameter vector (world units inside the unit cube)."""

    height: float
    base_width: float
    top_width: float
    ctrl_r: float
    ctrl_h: float

    def __post_init__(self):
        if not self.height > 0:
            raise DomainError(f"height must be > 0, got {self.height}")
        if self.base_width < 0 or self.top_width < 0 or self.ctrl_r < 0:
            raise DomainError("widths and ctrl_r must be >= 0")
        if not 0 <= self.ctrl_h <= self.height:
            raise DomainError(
                f"ctrl_h must lie in [0, height]: got {self.ctrl_h} with height {self.height}"
            )

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in PARAM_FIELDS], dtype=np.float64)


@dataclass(frozen=True)
class ParamRanges:
    """Closed sampling interval [lo, hi] per parameter.

    ``ctrl_h`` is expressed as a fraction of the sampled height, so the
    monotone-height invariant holds by construction. Defaults fill the unit
    modeling cube while keeping every wall inside the voxel grid.
    """

    height: tuple[float, float] = (0.40, 0.95)
    base_width: tuple[float, float] = (0.10, 0.90)
    top_width: tuple[float, float] = (0.10, 0.90)
    ctrl_r: tuple[float, float] = (0.05, 0.45)
    ctrl_h_fraction: tuple[float, float] = (0.15, 0.85)

    def __post_init__(self):
        for name in ("height", "base_width", "top_width", "ctrl_r", "ctrl_h_fraction"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigurationError(f"range for {name} has lo > hi: [{lo}, {hi}]")
        if not 0 < self.height[0] or self.height[1] > 1:
            raise ConfigurationError("height range must sit inside (0, 1]")
        for name in ("base_width", "top_width"):
            if getattr(self, name)[1] > 1:
                raise ConfigurationError(f"{name} upper bound exceeds the unit cube")
        if self.ctrl_r[1] > 0.5:
            raise ConfigurationError("ctrl_r upper bound exceeds the unit cube radius")
        lo, hi = self.ctrl_h_fraction
        if lo < 0 or hi > 1:
            raise ConfigurationError("ctrl_h_fraction range must sit inside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "height": list(self.height),
            "base_width": list(self.base_width),
            "top_width": list(self.top_width),
            "ctrl_r": list(self.ctrl_r),
            "ctrl_h_fraction": list(self.ctrl_h_fraction),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParamRanges":
        return cls(**{k: tuple(v) for k, v in d.items()})


@dataclass(frozen=True)
class ProfileCurve:
    """Quadratic Bezier control points in the (radius, height) plane."""

    p0: tuple[float, float]
    p1: tuple[float, float]
    p2: tuple[float, float]

    @property
    def height(self) -> float:
        return self.p2[1]


def curve_from_params(params: VesselParams) -> ProfileCurve:
    return ProfileCurve(
        p0=(params.base_width / 2.0, 0.0),
        p1=(params.ctrl_r, params.ctrl_h),
        p2=(params.top_width / 2.0, params.height),
    )


def vessel_seed(dataset_seed: int, vessel_id: int) -> int:
    """Philox key for one vessel's private stream."""
    if dataset_seed < 0 or vessel_id < 0:
        raise ConfigurationError("seeds and vessel ids must be nonnegative")
    return (int(dataset_seed) << 64) | int(vessel_id)


def sample_params(rng_seed: int, ranges: ParamRanges | None = None) -> VesselParams:
    """Draw one parameter vector, each field uniform and independent in its range."""
    ranges = ranges or ParamRanges()
    rng = np.random.Generator(np.random.Philox(key=rng_seed))
    height = rng.uniform(*ranges.height)
    base_width = rng.uniform(*ranges.base_width)
    top_width = rng.uniform(*ranges.top_width)
    ctrl_r = rng.uniform(*ranges.ctrl_r)
    fraction = rng.uniform(*ranges.ctrl_h_fraction)
    return VesselParams(
        height=height,
        base_width=base_width,
        top_width=top_width,
        ctrl_r=ctrl_r,
        ctrl_h=fraction * height,
    )


def generate_dataset(
    count: int, seed: int, ranges: ParamRanges | None = None
) -> list[VesselParams]:
    """Vessels 0..count-1, each from its own seed-derived stream."""
    if count < 1:
        raise ConfigurationError(f"count must be >= 1, got {count}")
    ranges = ranges or ParamRanges()
    return [sample_params(vessel_seed(seed, i), ranges) for i in range(count)]


def bezier_point(curve: ProfileCurve, t: float) -> tuple[float, float]:
    """Evaluate the quadratic Bezier at t in [0, 1], returning (r, h)."""
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"t must lie in [0, 1], got {t}")
    u = 1.0 - t
    w0 = u * u
    w1 = 2.0 * t * u
    w2 = t * t
    r = w0 * curve.p0[0] + w1 * curve.p1[0] + w2 * curve.p2[0]
    h = w0 * curve.p0[1] + w1 * curve.p1[1] + w2 * curve.p2[1]
    return (r, h)


def _invert_height(curve: ProfileCurve, h: float) -> float:
    """Unique t in [0, 1] with height(t) = h, via the closed-form quadratic root."""
    p1h = curve.p1[1]
    p2h = curve.p2[1]
    # height(t) = 2 t (1-t) p1h + t^2 p2h  =  a t^2 + b t, with:
    a = p2h - 2.0 * p1h
    b = 2.0 * p1h
    c = -h
    scale = max(abs(p2h), abs(p1h), 1.0)
    if abs(a) <= _LINEAR_EPS * scale:
        t = h / b if b != 0.0 else 0.0
    else:
        disc = b * b - 4.0 * a * c
        disc = max(disc, 0.0)
        sq = np.sqrt(disc)
        if b + sq == 0.0:  # only when b = 0 and disc = 0, i.e. h = 0
            t = 0.0
        else:
            q = -(b + sq) / 2.0
            roots = [q / a, c / q]
            in_range = [r for r in roots if -_ROOT_TOL <= r <= 1.0 + _ROOT_TOL]
            if not in_range:
                raise NumericError(
                    f"no Bezier height root in [0, 1] for h={h} (roots {roots})"
                )
            t = in_range[0]
    return min(max(t, 0.0), 1.0)


def profile_radius(curve: ProfileCurve, h: float) -> float:
    """Radius of the revolved profile at height h in [0, curve.height]."""
    if not 0.0 <= h <= curve.height:
        raise DomainError(f"h must lie in [0, {curve.height}], got {h}")
    t = _invert_height(curve, h)
    return bezier_point(curve, t)[0]


def params_to_matrix(params: list[VesselParams]) -> np.ndarray:
    """[N, 5] matrix in PARAM_FIELDS column order."""
    return np.array([p.as_array() for p in params], dtype=np.float64)


def write_params_csv(path: str | Path, params: list[VesselParams]) -> None:
    """params.csv with header id,height,base_width,top_width,ctrl_r,ctrl_h.

    Reals are printed with 9 significant digits.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("id",) + PARAM_FIELDS)
        for i, p in enumerate(params):
            writer.writerow([i] + [f"{getattr(p, f):.9g}" for f in PARAM_FIELDS])


def read_params_csv(path: str | Path) -> tuple[np.ndarray, list[VesselParams]]:
    """Read params.csv back as (ids, vessels)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"params file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["id"] + list(PARAM_FIELDS):
            raise DataError(f"{path}: unexpected params.csv header {header}")
        ids = []
        vessels = []
        for row in reader:
            if len(row) != 6:
                raise DataError(f"{path}: malformed row {row}")
            ids.append(int(row[0]))
            vals = [float(v) for v in row[1:]]
            vessels.append(VesselParams(*vals))
    return np.array(ids, dtype=np.int64), vessels
