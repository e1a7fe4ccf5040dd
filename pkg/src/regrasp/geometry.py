"""Rigid transforms, oriented boxes, convex hulls and stable placements.

Conventions
-----------
* Quaternions are stored scalar-first, ``(w, x, y, z)``.
* ``Transform(q, t)`` maps a point ``p`` expressed in the child frame to
  ``R(q) @ p + t`` in the parent frame.
* Lengths are meters, angles radians.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError

#: Interpenetration depth below which two boxes are considered in contact only.
CONTACT_EPS = 1e-6
#: Minimum distance from the projected center of mass to the support polygon boundary.
STABILITY_MARGIN = 1e-3


class DegenerateInput(ValueError):
    """Raised when a point set does not span three dimensions."""


class NoStablePlacement(RuntimeError):
    """Raised when no hull face supports the object."""


# ---------------------------------------------------------------------------
# quaternions / rotations


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Shepperd's method; returns the quaternion with ``w >= 0``."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    q = q / np.linalg.norm(q)
    return -q if q[0] < 0 else q


def axis_angle_quat(axis: Sequence[float], angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return np.concatenate([[np.cos(angle / 2)], np.sin(angle / 2) * axis])


def rotation_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimal rotation matrix taking unit vector ``a`` onto unit vector ``b``."""
    a = np.asarray(a, float) / np.linalg.norm(a)
    b = np.asarray(b, float) / np.linalg.norm(b)
    v = np.cross(a, b)
    c = float(np.dot(a, b))
    if c < -1 + 1e-12:
        # antiparallel: half turn about any axis perpendicular to a
        perp = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(perp) < 1e-6:
            perp = np.cross(a, [0.0, 1.0, 0.0])
        perp /= np.linalg.norm(perp)
        return 2.0 * np.outer(perp, perp) - np.eye(3)
    vx = skew(v)
    return np.eye(3) + vx + vx @ vx / (1.0 + c)


def skew(v: Sequence[float]) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def rotation_angle(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Geodesic distance on SO(3): the angle of ``Ra^T Rb``."""
    c = (np.trace(Ra.T @ Rb) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


# ---------------------------------------------------------------------------
# transforms


@dataclass(frozen=True, eq=False)
class Transform:
    """Element of SE(3) stored as unit quaternion and translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=float).reshape(4)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        n = np.linalg.norm(q)
        if not np.isfinite(n) or abs(n - 1.0) > 1e-6:
            raise ValueError(f"rotation quaternion must be unit length, got norm {n}")
        q = q / n
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "_R", quat_to_matrix(q))

    # constructors -----------------------------------------------------
    @classmethod
    def identity(cls) -> "Transform":
        return cls()

    @classmethod
    def from_matrix(cls, M: np.ndarray) -> "Transform":
        M = np.asarray(M, dtype=float)
        return cls(matrix_to_quat(M[:3, :3]), M[:3, 3])

    @classmethod
    def from_rt(cls, R: np.ndarray, t: Sequence[float] = (0.0, 0.0, 0.0)) -> "Transform":
        return cls(matrix_to_quat(R), t)

    @classmethod
    def from_axis_angle(cls, axis, angle, translation=(0.0, 0.0, 0.0)) -> "Transform":
        return cls(axis_angle_quat(axis, angle), translation)

    @classmethod
    def from_translation(cls, t) -> "Transform":
        return cls(translation=t)

    # group operations -------------------------------------------------
    @property
    def R(self) -> np.ndarray:
        return self._R

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self._R
        M[:3, 3] = self.translation
        return M

    def compose(self, other: "Transform") -> "Transform":
        q = quat_mul(self.rotation, other.rotation)
        return Transform(q / np.linalg.norm(q), self._R @ other.translation + self.translation)

    __matmul__ = compose

    def inverse(self) -> "Transform":
        w, x, y, z = self.rotation
        qi = np.array([w, -x, -y, -z])
        return Transform(qi, -(self._R.T @ self.translation))

    def apply(self, p: np.ndarray) -> np.ndarray:
        """Apply to one point (3,) or an array of points (N, 3)."""
        p = np.asarray(p, dtype=float)
        return p @ self._R.T + self.translation

    def isclose(self, other: "Transform", atol: float = 1e-9) -> bool:
        return bool(np.allclose(self.matrix(), other.matrix(), atol=atol))

    def to_dict(self) -> dict:
        return {"quaternion_wxyz": [float(v) for v in self.rotation],
                "translation_m": [float(v) for v in self.translation]}

    @classmethod
    def from_dict(cls, d: dict) -> "Transform":
        return cls(d.get("quaternion_wxyz", [1.0, 0.0, 0.0, 0.0]), d.get("translation_m", [0.0, 0.0, 0.0]))

    def __repr__(self):
        q = np.round(self.rotation, 6).tolist()
        t = np.round(self.translation, 6).tolist()
        return f"Transform(q={q}, t={t})"


def compose(a: Transform, b: Transform) -> Transform:
    return a.compose(b)


def invert(a: Transform) -> Transform:
    return a.inverse()


def apply(a: Transform, p) -> np.ndarray:
    return a.apply(p)


# ---------------------------------------------------------------------------
# boxes and SAT


@dataclass(frozen=True, eq=False)
class Box:
    half_extents: np.ndarray
    local_pose: Transform = field(default_factory=Transform)

    def __post_init__(self):
        h = np.asarray(self.half_extents, dtype=float).reshape(3)
        if not np.all(h > 0):
            raise ValueError(f"box half-extents must be strictly positive, got {h.tolist()}")
        object.__setattr__(self, "half_extents", h)

    @property
    def size(self) -> np.ndarray:
        return 2.0 * self.half_extents

    @property
    def volume(self) -> float:
        return float(np.prod(self.size))

    def corners(self, pose: Transform | None = None) -> np.ndarray:
        """The 8 corners, in the parent frame of ``local_pose`` (composed with ``pose`` if given)."""
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)
        T = self.local_pose if pose is None else pose.compose(self.local_pose)
        return T.apply(signs * self.half_extents)

    def contains(self, points: np.ndarray, pose: Transform | None = None, margin: float = 0.0) -> np.ndarray:
        """Strict interior membership of world points, shrunk by ``margin``."""
        T = self.local_pose if pose is None else pose.compose(self.local_pose)
        local = (np.atleast_2d(points) - T.translation) @ T.R
        return np.all(np.abs(local) < self.half_extents - margin, axis=1)


def sat_overlap(cA, RA, hA, cB, RB, hB, eps: float = CONTACT_EPS) -> np.ndarray:
    """Vectorized separating-axis test for K box pairs.

    All arguments are stacked arrays: centers ``(K, 3)``, rotations ``(K, 3, 3)``
    (columns are box axes in world frame), half extents ``(K, 3)``.
    Returns a boolean ``(K,)`` array, true where the interiors interpenetrate by
    more than ``eps`` along every candidate axis.
    """
    cA = np.asarray(cA, float).reshape(-1, 3)
    cB = np.asarray(cB, float).reshape(-1, 3)
    RA = np.asarray(RA, float).reshape(-1, 3, 3)
    RB = np.asarray(RB, float).reshape(-1, 3, 3)
    hA = np.broadcast_to(np.asarray(hA, float), cA.shape)
    hB = np.broadcast_to(np.asarray(hB, float), cB.shape)

    RAt = RA.transpose(0, 2, 1)
    R = RAt @ RB
    t = (RAt @ (cB - cA)[..., None])[..., 0]  # B center in A frame
    absR = np.abs(R) + 1e-12

    # face axes of A
    rb = (absR @ hB[..., None])[..., 0]
    sep = np.any(np.abs(t) >= hA + rb - eps, axis=1)
    # face axes of B
    ra = (hA[:, None, :] @ absR)[:, 0]
    tb = (t[:, None, :] @ R)[:, 0]
    sep |= np.any(np.abs(tb) >= ra + hB - eps, axis=1)
    # edge-edge axes A_i x B_j
    for i in range(3):
        i1, i2 = (i + 1) % 3, (i + 2) % 3
        for j in range(3):
            j1, j2 = (j + 1) % 3, (j + 2) % 3
            ra = hA[:, i1] * absR[:, i2, j] + hA[:, i2] * absR[:, i1, j]
            rb = hB[:, j1] * absR[:, i, j2] + hB[:, j2] * absR[:, i, j1]
            proj = np.abs(t[:, i2] * R[:, i1, j] - t[:, i1] * R[:, i2, j])
            norm = np.sqrt(np.clip(1.0 - R[:, i, j] ** 2, 0.0, None))
            sep |= proj >= ra + rb - eps * norm
    return ~sep


def obb_overlap(box_a: Box, pose_a: Transform, box_b: Box, pose_b: Transform, eps: float = CONTACT_EPS) -> bool:
    """True iff the two posed boxes interpenetrate by more than ``eps``.

    ``pose_*`` is the frame the box's ``local_pose`` is expressed in (usually the
    object or link frame).  Exact contact is not a collision.
    """
    Ta = pose_a.compose(box_a.local_pose)
    Tb = pose_b.compose(box_b.local_pose)
    return bool(sat_overlap(Ta.translation, Ta.R, box_a.half_extents,
                            Tb.translation, Tb.R, box_b.half_extents, eps)[0])


# ---------------------------------------------------------------------------
# convex hull


@dataclass(frozen=True, eq=False)
class HullFace:
    outward_normal: np.ndarray
    vertices: np.ndarray  # (k, 3), counter-clockwise seen from outside
    offset: float  # normal . x == offset on the face plane

    @property
    def area(self) -> float:
        v = self.vertices
        c = np.cross(v - v[0], np.roll(v, -1, axis=0) - v[0]).sum(axis=0)
        return float(0.5 * abs(np.dot(c, self.outward_normal)))

    @property
    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def plane_basis(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.outward_normal
        ref = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        e1 = np.cross(n, ref)
        e1 /= np.linalg.norm(e1)
        return e1, np.cross(n, e1)

    def support_polygon(self) -> np.ndarray:
        """Face polygon in 2D coordinates of the face plane, counter-clockwise."""
        e1, e2 = self.plane_basis()
        return np.stack([self.vertices @ e1, self.vertices @ e2], axis=1)


def _order_polygon(points: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """2D convex hull of coplanar points, returned counter-clockwise about ``normal``."""
    ref = np.array([1.0, 0.0, 0.0]) if abs(normal[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(normal, ref)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(normal, e1)
    uv = np.stack([points @ e1, points @ e2], axis=1)
    try:
        hull2 = ConvexHull(uv)
        idx = hull2.vertices  # counter-clockwise for 2D input
    except QhullError:
        idx = np.arange(len(points))
    return points[idx]


def convex_hull(points: Iterable[Sequence[float]], angle_tol: float = 1e-6, dist_tol: float = 1e-7) -> list[HullFace]:
    """Facets of the 3D convex hull with coplanar triangles merged.

    Raises :class:`DegenerateInput` when the points are coplanar or collinear.
    """
    pts = np.unique(np.round(np.asarray(points, dtype=float), 12), axis=0)
    if len(pts) < 4:
        raise DegenerateInput("need at least 4 distinct points")
    centered = pts - pts.mean(axis=0)
    if np.linalg.matrix_rank(centered, tol=1e-9 * max(1.0, np.abs(centered).max())) < 3:
        raise DegenerateInput("points are coplanar or collinear")
    try:
        hull = ConvexHull(pts)
    except QhullError as exc:  # pragma: no cover - rank test catches the usual cases
        raise DegenerateInput(str(exc)) from exc

    centroid = pts.mean(axis=0)
    groups: list[tuple[np.ndarray, float, set]] = []
    for simplex, eq in zip(hull.simplices, hull.equations):
        n = eq[:3] / np.linalg.norm(eq[:3])
        off = -eq[3] / np.linalg.norm(eq[:3])
        if np.dot(n, centroid) > off:
            n, off = -n, -off
        for gn, goff, members in groups:
            ang = np.arccos(np.clip(np.dot(gn, n), -1.0, 1.0))
            if ang <= angle_tol and abs(goff - off) <= dist_tol:
                members.update(simplex.tolist())
                break
        else:
            groups.append((n, off, set(simplex.tolist())))

    faces = []
    for n, off, members in groups:
        # include every input point lying on the plane (qhull may drop coplanar ones)
        on_plane = np.abs(pts @ n - off) <= dist_tol
        verts = _order_polygon(pts[on_plane], n)
        faces.append(HullFace(n, verts, float(off)))
    return faces


# ---------------------------------------------------------------------------
# stable placements


@dataclass(frozen=True, eq=False)
class PlacementClass:
    """A stable resting face of the object's convex hull (index starts at 1)."""

    index: int
    face: HullFace
    com: np.ndarray

    @property
    def normal(self) -> np.ndarray:
        return self.face.outward_normal

    def resting_rotation(self) -> np.ndarray:
        """Canonical object rotation putting this face's outward normal along world -z."""
        return rotation_between(self.face.outward_normal, np.array([0.0, 0.0, -1.0]))


def point_in_polygon_margin(poly: np.ndarray, p: np.ndarray) -> float:
    """Signed distance from 2D point to the boundary of a convex CCW polygon (positive inside)."""
    d = np.inf
    for k in range(len(poly)):
        a, b = poly[k], poly[(k + 1) % len(poly)]
        e = b - a
        # inward normal of a CCW edge
        n = np.array([-e[1], e[0]]) / np.linalg.norm(e)
        d = min(d, float(np.dot(p - a, n)))
    return d


def object_points(boxes: Sequence[Box]) -> np.ndarray:
    return np.concatenate([b.corners() for b in boxes])


def volume_centroid(boxes: Sequence[Box]) -> np.ndarray:
    vols = np.array([b.volume for b in boxes])
    cents = np.array([b.local_pose.translation for b in boxes])
    return (vols[:, None] * cents).sum(axis=0) / vols.sum()


def _face_sort_key(face: HullFace):
    return (-round(face.area, 9),) + tuple(round(float(v), 9) for v in face.outward_normal)


def stable_placement_classes(boxes: Sequence[Box], com: Sequence[float] | None = None,
                             margin: float = STABILITY_MARGIN) -> list[PlacementClass]:
    """One placement class per hull face whose support polygon contains the COM projection.

    Classes are ordered by descending face area, then lexicographically by outward normal.
    """
    com = volume_centroid(boxes) if com is None else np.asarray(com, dtype=float)
    faces = sorted(convex_hull(object_points(boxes)), key=_face_sort_key)
    result = []
    for face in faces:
        e1, e2 = face.plane_basis()
        poly = face.support_polygon()
        p = np.array([com @ e1, com @ e2])
        if point_in_polygon_margin(poly, p) > margin:
            result.append(PlacementClass(len(result) + 1, face, com))
    if not result:
        raise NoStablePlacement("no hull face supports the center of mass")
    return result
