"""Planar geometry helpers (local metric frame, no geographic math).

All coordinates are metres in a local planar frame; geographic conversion
is an import/export concern and never happens here.
"""

from __future__ import annotations

import numpy as np


def point_in_polygon(x: float, y: float, polygon) -> bool:
    """Even-odd rule containment test.

    Points exactly on an edge are reported inside.  ``polygon`` is a
    sequence of (x, y) vertices, not closed.
    """
    pts = np.asarray(polygon, dtype=float)
    n = len(pts)
    inside = False
    for i in range(n):
        x1, y1 = pts[i]
        x2, y2 = pts[(i + 1) % n]
        if _on_segment(x, y, x1, y1, x2, y2):
            return True
        if (y1 > y) != (y2 > y):
            x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < x_cross:
                inside = not inside
    return inside


def points_in_polygon(xy: np.ndarray, polygon) -> np.ndarray:
    """Vectorized even-odd test for an (n, 2) array of points."""
    pts = np.asarray(polygon, dtype=float)
    x = xy[:, 0]
    y = xy[:, 1]
    inside = np.zeros(len(xy), dtype=bool)
    n = len(pts)
    for i in range(n):
        x1, y1 = pts[i]
        x2, y2 = pts[(i + 1) % n]
        crosses = (y1 > y) != (y2 > y)
        if not crosses.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < x_cross)
    return inside


def _on_segment(px, py, x1, y1, x2, y2, eps: float = 1e-9) -> bool:
    cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
    seg_len = np.hypot(x2 - x1, y2 - y1)
    if seg_len == 0.0:
        return np.hypot(px - x1, py - y1) <= eps
    if abs(cross) / seg_len > eps:
        return False
    dot = (px - x1) * (x2 - x1) + (py - y1) * (y2 - y1)
    return -eps <= dot <= seg_len * seg_len + eps


def segments_intersect(p1, p2, q1, q2) -> bool:
    """True if closed segments p1-p2 and q1-q2 share at least one point."""

    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(v) < 1e-12:
            return 0
        return 1 if v > 0 else -1

    o1 = orient(p1, p2, q1)
    o2 = orient(p1, p2, q2)
    o3 = orient(q1, q2, p1)
    o4 = orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    for a, b, c in ((p1, p2, q1), (p1, p2, q2), (q1, q2, p1), (q1, q2, p2)):
        if orient(a, b, c) == 0 and _between(a, b, c):
            return True
    return False


def _between(a, b, c, eps: float = 1e-9) -> bool:
    return (
        min(a[0], b[0]) - eps <= c[0] <= max(a[0], b[0]) + eps
        and min(a[1], b[1]) - eps <= c[1] <= max(a[1], b[1]) + eps
    )


def polygon_is_simple(polygon) -> bool:
    """No two non-adjacent edges of the ring may touch."""
    pts = [tuple(map(float, p)) for p in polygon]
    n = len(pts)
    if n < 3:
        return False
    edges = [(pts[i], pts[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if segments_intersect(*edges[i], *edges[j]):
                return False
    return True


def polyline_intersects_polygon(polyline, polygon) -> bool:
    """True if any vertex lies inside or any segment crosses the boundary."""
    for p in polyline:
        if point_in_polygon(p[0], p[1], polygon):
            return True
    pts = [tuple(map(float, p)) for p in polygon]
    n = len(pts)
    for a, b in zip(polyline[:-1], polyline[1:]):
        for i in range(n):
            if segments_intersect(a, b, pts[i], pts[(i + 1) % n]):
                return True
    return False


def polygons_overlap(poly_a, poly_b) -> bool:
    """True when two simple polygons have intersecting interiors.

    Interiors intersect iff an edge of one properly crosses an edge of the
    other, or one polygon's vertex lies strictly inside the other.
    """
    pa = [tuple(map(float, p)) for p in poly_a]
    pb = [tuple(map(float, p)) for p in poly_b]
    for i in range(len(pa)):
        a1, a2 = pa[i], pa[(i + 1) % len(pa)]
        for j in range(len(pb)):
            b1, b2 = pb[j], pb[(j + 1) % len(pb)]
            if _proper_cross(a1, a2, b1, b2):
                return True
    # vertex or edge-midpoint strictly interior catches aligned overlaps whose
    # edge crossings all pass through vertices
    for pts, other in ((pa, pb), (pb, pa)):
        for i, p in enumerate(pts):
            if _strictly_inside(p, other):
                return True
            q = pts[(i + 1) % len(pts)]
            mid = (0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1]))
            if _strictly_inside(mid, other):
                return True
    return False


def _proper_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(v) < 1e-12:
            return 0
        return 1 if v > 0 else -1

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    return o1 != o2 and o3 != o4 and 0 not in (o1, o2, o3, o4)


def _strictly_inside(p, polygon) -> bool:
    pts = np.asarray(polygon, dtype=float)
    n = len(pts)
    for i in range(n):
        x1, y1 = pts[i]
        x2, y2 = pts[(i + 1) % n]
        if _on_segment(p[0], p[1], x1, y1, x2, y2):
            return False
    return point_in_polygon(p[0], p[1], polygon)


def nearest_point_on_segment(px, py, x1, y1, x2, y2):
    """Closest point of segment (x1,y1)-(x2,y2) to (px,py)."""
    dx, dy = x2 - x1, y2 - y1
    L2 = dx * dx + dy * dy
    if L2 == 0.0:
        return x1, y1
    t = ((px - x1) * dx + (py - y1) * dy) / L2
    t = min(1.0, max(0.0, t))
    return x1 + t * dx, y1 + t * dy


def polyline_length(polyline) -> float:
    pts = np.asarray(polyline, dtype=float)
    if len(pts) < 2:
        return 0.0
    return float(np.sum(np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))))
