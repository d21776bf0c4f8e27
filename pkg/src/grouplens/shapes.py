"""Hard-edged 2D figure rasterization.

A pixel belongs to a figure iff its center lies inside the transformed
shape, with no anti-aliasing, so the rendered pixel set and the label mask
are identical by construction. Boundary semantics follow even-odd ray
casting with strict comparisons: half-open, deterministic, and such that an
axis-aligned square of side s covers exactly s*s pixels.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import LayoutError

# Unit-square outlines, (x, y) with y pointing down the image.
_UNIT_POLYGONS: dict[str, np.ndarray] = {
    "square": np.array(
        [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]
    ),
    # 3:1 bar; doubles as the oriented figure for orientation stimuli
    "rectangle": np.array(
        [(-0.5, -1 / 6), (0.5, -1 / 6), (0.5, 1 / 6), (-0.5, 1 / 6)]
    ),
    "triangle": np.array([(0.0, -0.5), (0.5, 0.5), (-0.5, 0.5)]),
    "right_triangle": np.array([(-0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]),
    "rhombus": np.array([(0.0, -0.5), (0.5, 0.0), (0.0, 0.5), (-0.5, 0.0)]),
    "trapezoid": np.array(
        [(-0.25, -0.5), (0.25, -0.5), (0.5, 0.5), (-0.5, 0.5)]
    ),
    "hexagon": np.array(
        [
            (0.5 * math.cos(k * math.pi / 3), 0.5 * math.sin(k * math.pi / 3))
            for k in range(6)
        ]
    ),
    "star": np.array(
        [
            (
                (0.5 if k % 2 == 0 else 0.2) * math.cos(-math.pi / 2 + k * math.pi / 5),
                (0.5 if k % 2 == 0 else 0.2) * math.sin(-math.pi / 2 + k * math.pi / 5),
            )
            for k in range(10)
        ]
    ),
}

_ELLIPSE_ASPECT = 0.6  # minor axis / major axis

# recenter each outline on its bounding box so placement centers and bbox
# centers coincide (the star is otherwise bottom-heavy); a no-op for the
# symmetric shapes, keeping the square's integer bounds exact
for _name, _poly in _UNIT_POLYGONS.items():
    _UNIT_POLYGONS[_name] = _poly - (_poly.min(axis=0) + _poly.max(axis=0)) / 2

SHAPES = tuple(sorted(_UNIT_POLYGONS)) + ("ellipse",)


def _rotation(deg: float) -> np.ndarray:
    t = math.radians(deg)
    return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])


def _points_in_polygon(px: np.ndarray, py: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Even-odd ray casting, vectorized over pixel-center coordinates."""
    inside = np.zeros(px.shape, dtype=bool)
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i - 1]
        x2, y2 = poly[i]
        crosses = (y1 > py) != (y2 > py)
        if not crosses.any():
            continue
        x_at = (x2 - x1) * (py - y1) / (y2 - y1) + x1
        inside ^= crosses & (px < x_at)
    return inside


def figure_bbox(shape: str, size_px: float, orientation_deg: float,
                center: tuple[float, float]) -> tuple[float, float, float, float]:
    """Axis-aligned (x0, y0, x1, y1) bounds of the transformed figure."""
    cx, cy = center
    if shape == "ellipse":
        a = 0.5 * size_px
        b = a * _ELLIPSE_ASPECT
        t = math.radians(orientation_deg)
        hw = math.hypot(a * math.cos(t), b * math.sin(t))
        hh = math.hypot(a * math.sin(t), b * math.cos(t))
        return cx - hw, cy - hh, cx + hw, cy + hh
    pts = _UNIT_POLYGONS[shape] * size_px @ _rotation(orientation_deg).T
    return (
        cx + pts[:, 0].min(),
        cy + pts[:, 1].min(),
        cx + pts[:, 0].max(),
        cy + pts[:, 1].max(),
    )


def figure_mask(shape: str, size_px: float, orientation_deg: float,
                center: tuple[float, float], canvas_hw: tuple[int, int]) -> np.ndarray:
    """Boolean H x W mask of the figure's pixel set on a blank canvas."""
    if shape not in SHAPES:
        raise LayoutError(f"unknown shape {shape!r}")
    h, w = canvas_hw
    x0, y0, x1, y1 = figure_bbox(shape, size_px, orientation_deg, center)
    eps = 1e-6  # rotation arithmetic fuzz, far below pixel-decision scale
    if x0 < -eps or y0 < -eps or x1 > w + eps or y1 > h + eps:
        raise LayoutError(
            f"{shape} of size {size_px} at {center} overflows {w}x{h} canvas "
            f"(bbox {x0:.1f},{y0:.1f},{x1:.1f},{y1:.1f})"
        )
    # window of candidate pixels
    ix0, iy0 = max(int(math.floor(x0)), 0), max(int(math.floor(y0)), 0)
    ix1, iy1 = min(int(math.ceil(x1)), w), min(int(math.ceil(y1)), h)
    mask = np.zeros((h, w), dtype=bool)
    if ix0 >= ix1 or iy0 >= iy1:
        return mask
    ys, xs = np.mgrid[iy0:iy1, ix0:ix1]
    px = xs + 0.5
    py = ys + 0.5
    cx, cy = center
    if shape == "ellipse":
        a = 0.5 * size_px
        b = a * _ELLIPSE_ASPECT
        t = math.radians(orientation_deg)
        u = (px - cx) * math.cos(t) + (py - cy) * math.sin(t)
        v = -(px - cx) * math.sin(t) + (py - cy) * math.cos(t)
        window = (u / a) ** 2 + (v / b) ** 2 <= 1.0
    else:
        poly = _UNIT_POLYGONS[shape] * size_px @ _rotation(orientation_deg).T
        poly = poly + np.array([cx, cy])
        window = _points_in_polygon(px, py, poly)
    mask[iy0:iy1, ix0:ix1] = window
    return mask


def rasterize_figure(shape: str, size_px: float, orientation_deg: float,
                     color_rgb: tuple[int, int, int], center: tuple[float, float],
                     canvas: np.ndarray) -> np.ndarray:
    """Paint a filled figure into an H x W x 3 uint8 canvas.

    Returns the boolean pixel set that was painted; callers stamp the same
    set into their label maps so labels match the rendering exactly.
    """
    mask = figure_mask(shape, size_px, orientation_deg, center, canvas.shape[:2])
    canvas[mask] = np.asarray(color_rgb, dtype=np.uint8)
    return mask
