"""Design-space maps: section glyphs placed at 2-D embedding coordinates.

Output is deterministic SVG 1.1 text: equal inputs produce byte-equal
documents, so golden-file tests and provenance replay work. Each glyph is a
single path of run-length-merged filled pixel rectangles; cluster colors
come from a fixed 12-color palette with noise in gray.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError
from .tsne import Embedding2D
from .voxelizer import SectionImage

PALETTE = (
    "#e6194b", "#3cb44b", "#ffe119", "#4363d8", "#f58231", "#911eb4",
    "#46f0f0", "#f032e6", "#bcf60c", "#fabebe", "#008080", "#e6beff",
)
NOISE_COLOR = "#9e9e9e"
PLAIN_COLOR = "#37474f"
MARGIN_FRACTION = 0.05


@dataclass
class SpaceMap:
    embedding: Embedding2D
    glyphs: dict  # id -> SectionImage
    labels: np.ndarray | None = None  # aligned with embedding.ids; -1 = noise
    canvas_size: int = 1024
    glyph_size: float = 24.0
    title: str = ""

    def __post_init__(self):
        if self.canvas_size < 10 * self.glyph_size:
            raise ConfigurationError(
                f"canvas {self.canvas_size} must be at least 10x the glyph "
                f"size {self.glyph_size}"
            )
        missing = [int(i) for i in self.embedding.ids if int(i) not in self.glyphs]
        if missing:
            raise DimensionError(f"embedding ids without glyphs: {missing[:8]}")
        if self.labels is not None and len(self.labels) != len(self.embedding.ids):
            raise DimensionError("labels must align with embedding ids")


def _fmt(v: float) -> str:
    s = f"{v:.4f}".rstrip("0").rstrip(".")
    return s if s not in ("-0", "") else "0"


def _scale_positions(coords: np.ndarray, canvas: int) -> np.ndarray:
    """Min-max map into the canvas with a 5% margin; y flipped for SVG."""
    margin = MARGIN_FRACTION * canvas
    inner = canvas - 2.0 * margin
    out = np.empty_like(coords)
    for axis in range(2):
        lo = coords[:, axis].min()
        hi = coords[:, axis].max()
        if hi > lo:
            unit = (coords[:, axis] - lo) / (hi - lo)
        else:
            unit = np.full(coords.shape[0], 0.5)
        out[:, axis] = margin + unit * inner
    out[:, 1] = canvas - out[:, 1]
    return out


def _glyph_path(section: SectionImage, left: float, top: float, size: float) -> str:
    """Run-length merged pixel rectangles as one path string."""
    R = section.resolution
    s = size / R
    parts = []
    pixels = section.pixels
    for y in range(R):
        row_y = top + (R - 1 - y) * s  # image y axis points up
        x = 0
        while x < R:
            if pixels[x, y]:
                run = 1
                while x + run < R and pixels[x + run, y]:
                    run += 1
                parts.append(
                    f"M{_fmt(left + x * s)} {_fmt(row_y)}"
                    f"h{_fmt(run * s)}v{_fmt(s)}h{_fmt(-run * s)}z"
                )
                x += run
            else:
                x += 1
    return "".join(parts)


def color_for_label(label: int | None) -> str:
    if label is None:
        return PLAIN_COLOR
    if label < 0:
        return NOISE_COLOR
    return PALETTE[label % len(PALETTE)]


def _glyph_elements(space: SpaceMap, positions: np.ndarray, id_prefix: str) -> list[str]:
    parts = []
    for row, vid in enumerate(space.embedding.ids):
        vid = int(vid)
        section = space.glyphs[vid]
        label = int(space.labels[row]) if space.labels is not None else None
        cx, cy = positions[row]
        d = _glyph_path(
            section, cx - space.glyph_size / 2, cy - space.glyph_size / 2,
            space.glyph_size,
        )
        color = color_for_label(label)
        parts.append(f'<path id="{id_prefix}v{vid}" fill="{color}" d="{d}"/>')
    return parts


def _svg_document(width: int, height: int, body: list[str]) -> str:
    head = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">\n'
    )
    return head + "\n".join(body) + "\n</svg>\n"


def render_svg(space: SpaceMap) -> str:
    """One glyph map as a standalone SVG document."""
    c = space.canvas_size
    if len(space.embedding.ids) == 0:
        return _svg_document(
            c, c, ["<!-- warning: empty map, nothing to draw -->"]
        )
    positions = _scale_positions(space.embedding.coords, c)
    body = [f'<rect width="{c}" height="{c}" fill="white"/>']
    if space.title:
        body.append(
            f'<text x="{c // 2}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="18">{space.title}</text>'
        )
    body.extend(_glyph_elements(space, positions, ""))
    return _svg_document(c, c, body)


def medoid_index(coords: np.ndarray) -> int:
    """Index minimizing the summed Euclidean distance to the other points."""
    coords = np.asarray(coords, dtype=np.float64)
    d = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=2)
    return int(np.argmin(d.sum(axis=1)))


def cluster_medoids(embedding: Embedding2D, labels: np.ndarray) -> list[tuple[int, int]]:
    """(cluster id, vessel id of the medoid) per cluster, ascending cluster id."""
    out = []
    labels = np.asarray(labels)
    for cluster in range(int(labels.max()) + 1 if labels.size else 0):
        rows = np.flatnonzero(labels == cluster)
        if rows.size == 0:
            continue
        best = rows[medoid_index(embedding.coords[rows])]
        out.append((cluster, int(embedding.ids[best])))
    return out


def compose_compare(a: SpaceMap, b: SpaceMap, titles: tuple[str, str]) -> str:
    """Two maps side by side with per-cluster medoid glyph strips below."""
    c = max(a.canvas_size, b.canvas_size)
    strip_glyph = 2.0 * max(a.glyph_size, b.glyph_size)
    strip_height = int(strip_glyph * 1.5)
    gap = int(0.04 * c)
    width = 2 * c + gap
    height = c + strip_height + 40
    body = [f'<rect width="{width}" height="{height}" fill="white"/>']
    for panel, (space, title) in enumerate(zip((a, b), titles)):
        ox = panel * (c + gap)
        body.append(f'<g transform="translate({ox} 30)">')
        body.append(
            f'<text x="{c // 2}" y="-8" text-anchor="middle" '
            f'font-family="sans-serif" font-size="20">{title}</text>'
        )
        body.append(f'<rect width="{c}" height="{c}" fill="none" stroke="#ccc"/>')
        if len(space.embedding.ids) > 0:
            positions = _scale_positions(space.embedding.coords, c)
            body.extend(_glyph_elements(space, positions, f"p{panel}-"))
            if space.labels is not None:
                for slot, (cluster, vid) in enumerate(
                    cluster_medoids(space.embedding, space.labels)
                ):
                    left = slot * (strip_glyph + 8)
                    top = c + 12
                    body.append(
                        f'<rect x="{_fmt(left)}" y="{_fmt(top)}" '
                        f'width="{_fmt(strip_glyph)}" height="{_fmt(strip_glyph)}" '
                        f'fill="none" stroke="{color_for_label(cluster)}" stroke-width="2"/>'
                    )
                    d = _glyph_path(space.glyphs[vid], left, top, strip_glyph)
                    body.append(
                        f'<path id="p{panel}-medoid-c{cluster}" '
                        f'fill="{color_for_label(cluster)}" d="{d}"/>'
                    )
        else:
            body.append("<!-- warning: empty map, nothing to draw -->")
        body.append("</g>")
    return _svg_document(width, height, body)
