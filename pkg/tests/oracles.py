"""Independent reference computations used to derive expected test values.

Nothing here imports the package's geometry or metrics code.
"""

from fractions import Fraction

import numpy as np

DENSE_SAMPLES = 10_000


def dense_points(a, b, n=DENSE_SAMPLES):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    t = np.linspace(0.0, 1.0, n)[:, None]
    return a + t * (b - a)


def sphere_hit_dense(a, b, center, radius, n=DENSE_SAMPLES):
    pts = dense_points(a, b, n)
    return bool(np.any(np.linalg.norm(pts - np.asarray(center, dtype=float), axis=1) <= radius))


def floor_footprint(geometry, center):
    """(kind, params) of the z = 0 cross-section, or None."""
    cx, cy, cz = center
    if "sphere" in geometry:
        r = geometry["sphere"]
        if abs(cz) > r:
            return None
        return ("disc", (cx, cy, (r * r - cz * cz) ** 0.5))
    hx, hy, hz = geometry["box"]
    if not (cz - hz <= 0.0 <= cz + hz):
        return None
    return ("rect", (cx - hx, cy - hy, cx + hx, cy + hy))


def footprint_distance(points, footprint):
    kind, p = footprint
    if kind == "disc":
        cx, cy, r = p
        return np.maximum(np.hypot(points[:, 0] - cx, points[:, 1] - cy) - r, 0.0)
    x0, y0, x1, y1 = p
    dx = np.maximum(np.maximum(x0 - points[:, 0], points[:, 0] - x1), 0.0)
    dy = np.maximum(np.maximum(y0 - points[:, 1], points[:, 1] - y1), 0.0)
    return np.hypot(dx, dy)


def base_path_dense(start, target, obstacles, base_radius, n=DENSE_SAMPLES):
    """Ids of obstacles (id, geometry, center) that the base disc touches anywhere on the path."""
    pts = dense_points(start, target, n)
    hits = []
    for oid, geometry, center in obstacles:
        fp = floor_footprint(geometry, center)
        if fp is not None and np.any(footprint_distance(pts, fp) <= base_radius):
            hits.append(oid)
    return hits


def first_dense_hit(start, target, obstacles, base_radius, n=DENSE_SAMPLES):
    pts = dense_points(start, target, n)
    best = None
    for oid, geometry, center in obstacles:
        fp = floor_footprint(geometry, center)
        if fp is None:
            continue
        idx = np.nonzero(footprint_distance(pts, fp) <= base_radius)[0]
        if idx.size and (best is None or (idx[0], oid) < best):
            best = (idx[0], oid)
    return None if best is None else best[1]


def weighted_total(rows):
    """Exact sample-weighted means of (num, sr, exec, gcr) rows given as decimal strings."""
    num = sum(int(r[0]) for r in rows)
    out = [num]
    for k in (1, 2, 3):
        out.append(float(sum(Fraction(r[0]) * Fraction(r[k]) for r in rows) / num))
    return tuple(out)
