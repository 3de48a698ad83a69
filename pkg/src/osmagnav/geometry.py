"""Planar geometry helpers shared by the map model, rasterizer and localizer.

Polygons are (N, 2) float arrays holding an *open* ring (no repeated closing
vertex). Everything is in local metric coordinates.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np


class Pose2D(NamedTuple):
    x: float
    y: float
    theta: float = 0.0
    level: str | None = None

    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


def wrap_angle(a: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


def angle_lerp(a: float, b: float, t: float) -> float:
    """Interpolate from heading a toward b along the shorter arc."""
    return wrap_angle(a + t * wrap_angle(b - a))


def signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_edges(poly: np.ndarray) -> np.ndarray:
    """(N, 2, 2) array of closed-ring edges."""
    return np.stack([poly, np.roll(poly, -1, axis=0)], axis=1)


def points_in_polygon(xs: np.ndarray, ys: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Even-odd ray casting, vectorized over query points."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    inside = np.zeros(np.broadcast(xs, ys).shape, dtype=bool)
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if y1 == y2:
            continue
        crosses = (y1 > ys) != (y2 > ys)
        x_at = x1 + (ys - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (xs < x_at)
    return inside


def point_in_polygon(x: float, y: float, poly: np.ndarray) -> bool:
    return bool(points_in_polygon(np.array(x), np.array(y), poly))


def point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0.0 else min(1.0, max(0.0, float((p - a) @ ab) / denom))
    return float(np.hypot(*(a + t * ab - p)))


def distance_to_boundary(p: np.ndarray, poly: np.ndarray) -> float:
    edges = polygon_edges(poly)
    a = edges[:, 0]
    ab = edges[:, 1] - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / np.where(denom == 0, 1, denom), 0, 1)
    closest = a + t[:, None] * ab
    return float(np.min(np.hypot(*(closest - p).T)))


def polyline_length(pts: np.ndarray) -> float:
    if len(pts) < 2:
        return 0.0
    return float(np.sum(np.hypot(*np.diff(pts, axis=0).T)))


def polyline_point_at(pts: np.ndarray, s: float) -> np.ndarray:
    """Point at arclength s along a polyline (clamped to the ends)."""
    seg = np.hypot(*np.diff(pts, axis=0).T)
    if s <= 0 or len(seg) == 0:
        return pts[0].astype(float).copy()
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    if s >= cum[-1]:
        return pts[-1].astype(float).copy()
    i = int(np.searchsorted(cum, s, side="right") - 1)
    t = (s - cum[i]) / seg[i] if seg[i] > 0 else 0.0
    return pts[i] + t * (pts[i + 1] - pts[i])


def polyline_midpoint(pts: np.ndarray) -> np.ndarray:
    return polyline_point_at(pts, 0.5 * polyline_length(pts))


def segment_box_hits(
    a: np.ndarray, b: np.ndarray, x0: np.ndarray, y0: np.ndarray, size: float, pad: float
) -> np.ndarray:
    """Which axis-aligned squares [x0-pad, x0+size+pad] x [y0-pad, y0+size+pad] meet segment ab.

    A negative pad shrinks the squares, so segments that only graze a square's
    edge or corner do not count.
    """
    lo_x, hi_x = x0 - pad, x0 + size + pad
    lo_y, hi_y = y0 - pad, y0 + size + pad
    hit = (
        (np.maximum(a[0], b[0]) >= lo_x)
        & (np.minimum(a[0], b[0]) <= hi_x)
        & (np.maximum(a[1], b[1]) >= lo_y)
        & (np.minimum(a[1], b[1]) <= hi_y)
    )
    dx, dy = b[0] - a[0], b[1] - a[1]
    # Side of each square corner relative to the supporting line.
    c1 = dx * (lo_y - a[1]) - dy * (lo_x - a[0])
    c2 = dx * (lo_y - a[1]) - dy * (hi_x - a[0])
    c3 = dx * (hi_y - a[1]) - dy * (lo_x - a[0])
    c4 = dx * (hi_y - a[1]) - dy * (hi_x - a[0])
    cmin = np.minimum(np.minimum(c1, c2), np.minimum(c3, c4))
    cmax = np.maximum(np.maximum(c1, c2), np.maximum(c3, c4))
    return hit & (cmin <= 0) & (cmax >= 0)


def ray_segment_distances(
    origin: np.ndarray, dirs: np.ndarray, seg_a: np.ndarray, seg_b: np.ndarray
) -> np.ndarray:
    """Range along each ray to each segment, inf where the ray misses.

    dirs: (B, 2) unit vectors; seg_a, seg_b: (S, 2). Returns (B, S).
    """
    e = seg_b - seg_a  # (S, 2)
    w = seg_a - origin  # (S, 2)
    dx, dy = dirs[:, 0:1], dirs[:, 1:2]
    denom = dx * e[None, :, 1] - dy * e[None, :, 0]  # cross(d, e)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (w[None, :, 0] * e[None, :, 1] - w[None, :, 1] * e[None, :, 0]) / denom
        u = (w[None, :, 0] * dy - w[None, :, 1] * dx) / denom
    ok = (np.abs(denom) > 1e-12) & (t > 1e-9) & (u >= -1e-12) & (u <= 1 + 1e-12)
    return np.where(ok, t, np.inf)


def clip_segment_to_box(
    p: np.ndarray, q: np.ndarray, lo: np.ndarray, hi: np.ndarray
) -> tuple[float, float] | None:
    """Liang-Barsky: parameter interval [t0, t1] of p + t (q - p) inside the box."""
    d = q - p
    t0, t1 = 0.0, 1.0
    for k in range(2):
        if d[k] == 0.0:
            if p[k] < lo[k] or p[k] > hi[k]:
                return None
            continue
        ta = (lo[k] - p[k]) / d[k]
        tb = (hi[k] - p[k]) / d[k]
        if ta > tb:
            ta, tb = tb, ta
        t0, t1 = max(t0, ta), min(t1, tb)
        if t0 > t1:
            return None
    return t0, t1
