"""6-DoF poses, obstacle shapes and collision queries.

Quaternions are stored scalar-first ``(w, x, y, z)``. Rotation arithmetic is
delegated to :mod:`scipy.spatial.transform`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial.transform import Rotation, Slerp

IDENTITY_QUAT = (1.0, 0.0, 0.0, 0.0)
QUAT_TOL = 1e-6


def _rot(q) -> Rotation:
    return Rotation.from_quat(np.asarray(q, dtype=float), scalar_first=True)


def _quat(r: Rotation) -> tuple:
    q = r.as_quat(scalar_first=True)
    # canonical hemisphere keeps serialized states stable
    if q[0] < 0 or (q[0] == 0 and next((c for c in q[1:] if c != 0), 0) < 0):
        q = -q
    return tuple(float(c) for c in q)


@dataclass(frozen=True)
class Pose6DoF:
    translation: tuple = (0.0, 0.0, 0.0)
    rotation: tuple = IDENTITY_QUAT

    def __post_init__(self):
        t = tuple(float(c) for c in self.translation)
        if len(t) != 3 or not all(math.isfinite(c) for c in t):
            raise ValueError(f"translation must be 3 finite numbers, got {self.translation!r}")
        q = tuple(float(c) for c in self.rotation)
        if len(q) != 4 or not all(math.isfinite(c) for c in q):
            raise ValueError(f"rotation must be 4 finite numbers, got {self.rotation!r}")
        norm = math.sqrt(sum(c * c for c in q))
        if norm < 1e-9:
            raise ValueError("rotation quaternion has zero norm")
        if abs(norm - 1.0) > QUAT_TOL:
            q = tuple(c / norm for c in q)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", q)

    @classmethod
    def from_position(cls, xyz: Sequence[float]) -> "Pose6DoF":
        return cls(tuple(xyz))

    @classmethod
    def from_dict(cls, d: dict) -> "Pose6DoF":
        return cls(tuple(d["translation"]), tuple(d.get("rotation", IDENTITY_QUAT)))

    def to_dict(self) -> dict:
        return {"translation": list(self.translation), "rotation": list(self.rotation)}

    @property
    def position(self) -> np.ndarray:
        return np.asarray(self.translation)

    def rotated_about_local_z(self, degrees: float) -> "Pose6DoF":
        r = _rot(self.rotation) * Rotation.from_euler("z", degrees, degrees=True)
        return Pose6DoF(self.translation, _quat(r))

    def compose(self, other: "Pose6DoF") -> "Pose6DoF":
        """self * other, both read as rigid transforms."""
        r1 = _rot(self.rotation)
        t = np.asarray(self.translation) + r1.apply(other.translation)
        return Pose6DoF(tuple(t), _quat(r1 * _rot(other.rotation)))

    def inverse(self) -> "Pose6DoF":
        r_inv = _rot(self.rotation).inv()
        return Pose6DoF(tuple(-r_inv.apply(self.translation)), _quat(r_inv))

    def with_translation(self, xyz) -> "Pose6DoF":
        return Pose6DoF(tuple(xyz), self.rotation)


def rotation_angle(q1, q2) -> float:
    """Geodesic angle in radians between two orientations."""
    return float((_rot(q1).inv() * _rot(q2)).magnitude())


def translation_distance(p1: Pose6DoF, p2: Pose6DoF) -> float:
    return float(np.linalg.norm(p1.position - p2.position))


def poses_close(p1: Pose6DoF, p2: Pose6DoF, tol_m: float = 1e-6, tol_rad: float = 1e-6) -> bool:
    return translation_distance(p1, p2) <= tol_m and rotation_angle(p1.rotation, p2.rotation) <= tol_rad


def planar_pose(x: float, y: float, heading: float, z: float = 0.0) -> Pose6DoF:
    return Pose6DoF((x, y, z), _quat(Rotation.from_euler("z", heading)))


def interpolate_poses(start: Pose6DoF, end: Pose6DoF, n_segments: int) -> list[Pose6DoF]:
    """Linear translation + slerp rotation; returns n_segments + 1 poses, endpoints exact."""
    if n_segments < 1:
        return [start]
    ts = np.linspace(0.0, 1.0, n_segments + 1)
    slerp = Slerp([0.0, 1.0], Rotation.concatenate([_rot(start.rotation), _rot(end.rotation)]))
    rots = slerp(ts)
    a, b = start.position, end.position
    poses = [Pose6DoF(tuple(a + t * (b - a)), _quat(rots[i])) for i, t in enumerate(ts)]
    poses[0] = start
    poses[-1] = end
    return poses


# ----------------------------------------------------------------------- shapes


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float

    def distance(self, p: np.ndarray) -> float:
        return max(0.0, float(np.linalg.norm(p - np.asarray(self.center))) - self.radius)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by its corners."""

    lo: tuple
    hi: tuple

    def distance(self, p: np.ndarray) -> float:
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        d = np.maximum(np.maximum(lo - p, p - hi), 0.0)
        return float(np.linalg.norm(d))


Shape = Sphere | Box


def shape_from_geometry(geometry: dict | None, center: Sequence[float]) -> Shape | None:
    """Scenario geometry is ``{"sphere": r}`` or ``{"box": [hx, hy, hz]}`` centred on the object."""
    if not geometry:
        return None
    c = np.asarray(center, dtype=float)
    if "sphere" in geometry:
        return Sphere(tuple(c), float(geometry["sphere"]))
    if "box" in geometry:
        h = np.asarray(geometry["box"], dtype=float)
        return Box(tuple(c - h), tuple(c + h))
    raise ValueError(f"unknown geometry {geometry!r}")


def floor_section(shape: Shape) -> Shape | None:
    """The shape's intersection with the plane z = 0, as a 2-D shape (None if empty)."""
    if isinstance(shape, Sphere):
        cz = shape.center[2]
        if abs(cz) > shape.radius:
            return None
        return Sphere(tuple(shape.center[:2]), math.sqrt(shape.radius**2 - cz**2))
    if shape.lo[2] <= 0.0 <= shape.hi[2]:
        return Box(tuple(shape.lo[:2]), tuple(shape.hi[:2]))
    return None


def shapes_overlap(a: Shape, b: Shape) -> bool:
    if isinstance(a, Sphere) and isinstance(b, Sphere):
        return float(np.linalg.norm(np.asarray(a.center) - np.asarray(b.center))) <= a.radius + b.radius
    if isinstance(a, Box) and isinstance(b, Box):
        return all(a.lo[i] <= b.hi[i] and b.lo[i] <= a.hi[i] for i in range(len(a.lo)))
    sphere, box = (a, b) if isinstance(a, Sphere) else (b, a)
    return box.distance(np.asarray(sphere.center)) <= sphere.radius


def segment_entry(a, b, shape: Shape, radius: float = 0.0) -> float | None:
    """Smallest t in [0, 1] with dist(a + t(b - a), shape) <= radius, or None.

    Distance to a convex set is convex along a line, so the minimum is found by
    bounded scalar minimisation and the entry point by bisection before it.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = b - a

    def f(t: float) -> float:
        return shape.distance(a + t * d)

    if f(0.0) <= radius:
        return 0.0
    if not np.any(d):
        return None
    if isinstance(shape, Sphere):
        # closed form: |a + t d - c| = r + radius
        c = np.asarray(shape.center)
        rr = shape.radius + radius
        m = a - c
        qa, qb, qc = float(d @ d), 2.0 * float(m @ d), float(m @ m) - rr * rr
        disc = qb * qb - 4 * qa * qc
        if disc < 0:
            return None
        t = (-qb - math.sqrt(disc)) / (2 * qa)
        return t if 0.0 <= t <= 1.0 else None
    res = minimize_scalar(f, bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-12})
    t_min, f_min = float(res.x), float(res.fun)
    if f(1.0) < f_min:
        t_min, f_min = 1.0, f(1.0)
    if f_min > radius:
        return None
    lo, hi = 0.0, t_min
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if f(mid) <= radius:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class Obstacle:
    id: str
    shape: Shape


def collision_check(
    a: Sequence[float],
    obstacles: Iterable[Obstacle],
    b: Sequence[float] | None = None,
    radius: float = 0.0,
) -> str | None:
    """First obstacle hit by a point (``b`` is None) or a segment a->b swept by a ball of ``radius``.

    "First" means earliest along the segment; ties go to the lower id.
    """
    hit = first_hit(a, a if b is None else b, obstacles, radius)
    return None if hit is None else hit[0]


def first_hit(a, b, obstacles: Iterable[Obstacle], radius: float = 0.0) -> tuple[str, float] | None:
    best = None
    for ob in obstacles:
        t = segment_entry(a, b, ob.shape, radius)
        if t is not None and (best is None or (t, ob.id) < best):
            best = (t, ob.id)
    return None if best is None else (best[1], best[0])
