"""Box-composed objects, the parallel gripper, grasp and placement parameterization.

Grasp classes follow the ``i + 6 (j - 1)`` rule: ``i`` in 1..6 encodes the
approach direction ``+x, +y, +z, -x, -y, -z`` in the frame of box ``j``.
The gripper frame has ``x`` = lateral (normal to the finger pads),
``y`` = sliding and ``z`` = approach; its origin is the center of the
fingertip plane.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .geometry import (Box, PlacementClass, Transform, object_points, point_in_polygon_margin,
                       stable_placement_classes, volume_centroid)


class OutOfRange(ValueError):
    pass


class InfeasibleGrasp(ValueError):
    pass


class OutOfTableBounds(ValueError):
    pass


# ---------------------------------------------------------------------------
# object


@dataclass(frozen=True, eq=False)
class ObjectModel:
    boxes: tuple
    name: str = "object"

    def __post_init__(self):
        boxes = tuple(self.boxes)
        if not boxes:
            raise ValueError("object needs at least one box")
        object.__setattr__(self, "boxes", boxes)

    @property
    def m(self) -> int:
        return len(self.boxes)

    @cached_property
    def com(self) -> np.ndarray:
        return volume_centroid(self.boxes)

    @cached_property
    def placement_classes(self) -> list[PlacementClass]:
        return stable_placement_classes(self.boxes, self.com)

    @cached_property
    def hull_points(self) -> np.ndarray:
        return object_points(self.boxes)

    @cached_property
    def radius(self) -> float:
        """Largest horizontal-or-not distance from the COM to a hull point."""
        return float(np.max(np.linalg.norm(self.hull_points - self.com, axis=1)))

    def box(self, j: int) -> Box:
        if not 1 <= j <= self.m:
            raise OutOfRange(f"box index {j} not in 1..{self.m}")
        return self.boxes[j - 1]

    @property
    def num_grasp_classes(self) -> int:
        return 6 * self.m

    def to_dict(self) -> dict:
        return {"name": self.name,
                "boxes": [{"half_extents_m": b.half_extents.tolist(), "pose": b.local_pose.to_dict()}
                          for b in self.boxes]}

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectModel":
        boxes = [Box(b["half_extents_m"], Transform.from_dict(b.get("pose", {}))) for b in d["boxes"]]
        return cls(tuple(boxes), d.get("name", "object"))


def box_object(size: Sequence[float], name: str = "box") -> ObjectModel:
    return ObjectModel((Box(np.asarray(size, float) / 2.0),), name)


# ---------------------------------------------------------------------------
# gripper


@dataclass(frozen=True)
class GripperModel:
    """Parallel-jaw gripper made of a palm box and two finger boxes.

    ``palm_size`` and ``finger_size`` are full extents ordered
    (lateral, sliding, approach).
    """

    max_opening: float = 0.085
    finger_length: float = 0.04
    finger_thickness: float = 0.01
    finger_width: float = 0.02
    palm_size: tuple = (0.125, 0.09, 0.05)

    def __post_init__(self):
        if self.max_opening <= 0 or self.finger_length <= 0:
            raise ValueError("gripper opening and finger length must be positive")
        if min(self.palm_size) <= 0 or self.finger_thickness <= 0 or self.finger_width <= 0:
            raise ValueError("gripper dimensions must be positive")

    @property
    def length(self) -> float:
        """Distance from the palm's back face to the fingertips."""
        return self.finger_length + self.palm_size[2]

    def boxes(self, width: float) -> list[Box]:
        """Palm and fingers in the gripper frame with pads ``width`` apart."""
        ft, fw, fl = self.finger_thickness, self.finger_width, self.finger_length
        px, py, pz = self.palm_size
        off = width / 2.0 + ft / 2.0
        return [
            Box([px / 2, py / 2, pz / 2], Transform.from_translation([0.0, 0.0, -fl - pz / 2])),
            Box([ft / 2, fw / 2, fl / 2], Transform.from_translation([off, 0.0, -fl / 2])),
            Box([ft / 2, fw / 2, fl / 2], Transform.from_translation([-off, 0.0, -fl / 2])),
        ]

    def to_dict(self) -> dict:
        return {"max_opening_m": self.max_opening, "finger_length_m": self.finger_length,
                "finger_thickness_m": self.finger_thickness, "finger_width_m": self.finger_width,
                "palm_size_m": list(self.palm_size)}

    @classmethod
    def from_dict(cls, d: dict) -> "GripperModel":
        base = cls()
        return cls(d.get("max_opening_m", base.max_opening), d.get("finger_length_m", base.finger_length),
                   d.get("finger_thickness_m", base.finger_thickness), d.get("finger_width_m", base.finger_width),
                   tuple(d.get("palm_size_m", base.palm_size)))


# ---------------------------------------------------------------------------
# grasp classes


def grasp_class_index(i: int, j: int, m: int | None = None) -> int:
    if not 1 <= i <= 6:
        raise OutOfRange(f"approach direction {i} not in 1..6")
    if j < 1 or (m is not None and j > m):
        raise OutOfRange(f"box index {j} out of range")
    return i + 6 * (j - 1)


def decode_grasp_class(g: int, m: int | None = None) -> tuple[int, int]:
    if g < 1 or (m is not None and g > 6 * m):
        raise OutOfRange(f"grasp class {g} out of range")
    j, r = divmod(g - 1, 6)
    return r + 1, j + 1


def approach_axis(i: int) -> tuple[int, float]:
    """Box axis index and sign of the face the gripper comes from in direction ``i``."""
    return (i - 1) % 3, (1.0 if i <= 3 else -1.0)


@dataclass(frozen=True)
class GraspClass:
    i: int
    j: int

    @property
    def index(self) -> int:
        return grasp_class_index(self.i, self.j)

    @classmethod
    def from_index(cls, g: int) -> "GraspClass":
        return cls(*decode_grasp_class(g))


@dataclass(frozen=True)
class GraspParams:
    lateral_axis: int
    slide: float = 0.0
    depth: float | None = None  # None: half of the engageable depth
    roll: float = 0.0

    def to_dict(self) -> dict:
        return {"lateral_axis": self.lateral_axis, "slide_m": self.slide, "depth_m": self.depth, "roll_rad": self.roll}


@dataclass(frozen=True)
class PlacementParams:
    x: float
    y: float
    theta: float = 0.0


def engage_depth(obj: ObjectModel, gripper: GripperModel, gc: GraspClass) -> float:
    k, _ = approach_axis(gc.i)
    return min(gripper.finger_length, 2.0 * obj.box(gc.j).half_extents[k])


def lateral_choices(obj: ObjectModel, gripper: GripperModel, gc: GraspClass) -> list[int]:
    """Box axes usable as the lateral axis: perpendicular to approach and narrow enough."""
    k, _ = approach_axis(gc.i)
    h = obj.box(gc.j).half_extents
    return [a for a in range(3) if a != k and 2.0 * h[a] <= gripper.max_opening + 1e-12]


def slide_limit(obj: ObjectModel, gripper: GripperModel, gc: GraspClass, lateral: int) -> float:
    """Largest |slide| keeping the finger pads fully on the grasped faces."""
    k, _ = approach_axis(gc.i)
    s_axis = 3 - k - lateral
    return max(0.0, obj.box(gc.j).half_extents[s_axis] - gripper.finger_width / 2.0)


def grasp_in_box(obj: ObjectModel, gripper: GripperModel, gc: GraspClass, params: GraspParams) -> Transform:
    """Gripper frame expressed in the frame of box ``gc.j``."""
    box = obj.box(gc.j)
    k, s = approach_axis(gc.i)
    lat = params.lateral_axis
    if lat == k or lat not in (0, 1, 2):
        raise InfeasibleGrasp(f"lateral axis {lat} invalid for approach direction {gc.i}")
    if 2.0 * box.half_extents[lat] > gripper.max_opening + 1e-12:
        raise InfeasibleGrasp(f"grasped width {2 * box.half_extents[lat]:.4f} exceeds opening {gripper.max_opening}")
    # the gripper comes from face i, so it approaches against that face's normal
    a = np.zeros(3)
    a[k] = -s
    l = np.zeros(3)
    l[lat] = 1.0
    sl = np.cross(a, l)
    depth = engage_depth(obj, gripper, gc) / 2.0 if params.depth is None else params.depth
    p = a * (-box.half_extents[k] + depth) + sl * params.slide
    R = np.column_stack([l, sl, a])
    if params.roll:
        c, sn = np.cos(params.roll), np.sin(params.roll)
        R = R @ np.array([[1, 0, 0], [0, c, -sn], [0, sn, c]])
    return Transform.from_rt(R, p)


def grasp_transform(obj: ObjectModel, gripper: GripperModel, gc: GraspClass, params: GraspParams) -> Transform:
    """Gripper frame expressed in the object frame."""
    return obj.box(gc.j).local_pose.compose(grasp_in_box(obj, gripper, gc, params))


def gripper_pose(obj: ObjectModel, gripper: GripperModel, object_pose: Transform, gc: GraspClass,
                 params: GraspParams) -> Transform:
    return object_pose.compose(grasp_transform(obj, gripper, gc, params))


def grasp_width(obj: ObjectModel, gc: GraspClass, params: GraspParams) -> float:
    return 2.0 * float(obj.box(gc.j).half_extents[params.lateral_axis])


def sweep_grasps(obj: ObjectModel, gripper: GripperModel, gc: GraspClass, n_slide: int = 11) -> list[GraspParams]:
    """Deterministic grasp parameter sweep: lateral choices x evenly spaced slides."""
    out = []
    for lat in lateral_choices(obj, gripper, gc):
        u = slide_limit(obj, gripper, gc, lat)
        slides = np.linspace(-u, u, n_slide) if u > 0 else [0.0]
        out.extend(GraspParams(lat, float(v)) for v in slides)
    return out


def sample_grasp(obj: ObjectModel, gripper: GripperModel, gc: GraspClass, rng: np.random.Generator,
                 roll_range: float = 0.0) -> GraspParams:
    lats = lateral_choices(obj, gripper, gc)
    if not lats:
        raise InfeasibleGrasp(f"no lateral axis of box {gc.j} fits the opening for direction {gc.i}")
    lat = lats[int(rng.integers(len(lats)))]
    u = slide_limit(obj, gripper, gc, lat)
    e = engage_depth(obj, gripper, gc)
    slide = float(rng.uniform(-u, u)) if u > 0 else 0.0
    depth = float(rng.uniform(0.25 * e, 0.75 * e))
    roll = float(rng.uniform(-roll_range, roll_range)) if roll_range > 0 else 0.0
    return GraspParams(lat, slide, depth, roll)


def classify_grasp(obj: ObjectModel, gripper: GripperModel, grasp: Transform, tol: float = 1e-6):
    """Grasp class index and parameters of an object->gripper transform, or None."""
    for j, box in enumerate(obj.boxes, start=1):
        rel = box.local_pose.inverse().compose(grasp)
        R, p = rel.R, rel.translation
        a, l = R[:, 2], R[:, 0]
        for i in range(1, 7):
            k, s = approach_axis(i)
            if abs(a[k] * s + 1.0) > tol:
                continue
            gc = GraspClass(i, j)
            lat = int(np.argmax(np.abs(l)))
            if lat == k or abs(l[lat] - 1.0) > tol or lat not in lateral_choices(obj, gripper, gc):
                continue
            sl_axis = 3 - k - lat
            depth = box.half_extents[k] - p[k] * s
            slide = p[sl_axis] * float(np.cross(a, l)[sl_axis])
            e = engage_depth(obj, gripper, gc)
            if abs(p[lat]) > tol or not (-tol <= depth <= e + tol):
                continue
            if abs(slide) > slide_limit(obj, gripper, gc, lat) + tol:
                continue
            return gc.index, GraspParams(lat, float(slide), float(depth))
    return None


# ---------------------------------------------------------------------------
# table and placements


@dataclass(frozen=True)
class Table:
    """Axis-aligned tabletop; ``height`` is the z of the top surface."""

    center: tuple = (0.0, 0.0)
    size: tuple = (1.0, 1.0)
    height: float = 0.0
    thickness: float = 0.04

    def __post_init__(self):
        if min(self.size) <= 0 or self.thickness <= 0:
            raise ValueError("table dimensions must be positive")

    @property
    def box(self) -> Box:
        return Box([self.size[0] / 2, self.size[1] / 2, self.thickness / 2])

    @property
    def pose(self) -> Transform:
        return Transform.from_translation([self.center[0], self.center[1], self.height - self.thickness / 2])

    def contains_xy(self, xy: np.ndarray, tol: float = 1e-9) -> bool:
        xy = np.atleast_2d(xy)
        lo = np.asarray(self.center) - np.asarray(self.size) / 2
        hi = np.asarray(self.center) + np.asarray(self.size) / 2
        return bool(np.all((xy >= lo - tol) & (xy <= hi + tol)))

    def to_dict(self) -> dict:
        return {"center_m": list(self.center), "size_m": list(self.size), "height_m": self.height,
                "thickness_m": self.thickness}

    @classmethod
    def from_dict(cls, d: dict) -> "Table":
        return cls(tuple(d.get("center_m", (0.0, 0.0))), tuple(d.get("size_m", (1.0, 1.0))),
                   float(d.get("height_m", 0.0)), float(d.get("thickness_m", 0.04)))


def object_pose_from_placement(obj: ObjectModel, pclass: int | PlacementClass, params: PlacementParams,
                               table: Table | float = 0.0) -> Transform:
    """Object pose resting on placement class ``pclass`` with the COM projected at (x, y).

    ``table`` may be a :class:`Table` (footprint is then bounds-checked) or a bare height.
    """
    pc = obj.placement_classes[pclass - 1] if isinstance(pclass, int) else pclass
    R0 = pc.resting_rotation()
    c, s = np.cos(params.theta), np.sin(params.theta)
    R = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]) @ R0
    height = table.height if isinstance(table, Table) else float(table)
    rc = R @ obj.com
    t = np.array([params.x - rc[0], params.y - rc[1], height + pc.face.offset])
    T = Transform.from_rt(R, t)
    if isinstance(table, Table):
        foot = T.apply(obj.hull_points)[:, :2]
        if not table.contains_xy(foot):
            raise OutOfTableBounds(f"footprint at ({params.x:.3f}, {params.y:.3f}) leaves the table")
    return T


def sample_placement(obj: ObjectModel, pclass: int, table: Table, rng: np.random.Generator,
                     region: Table | None = None) -> PlacementParams:
    """Uniform (x, y, theta) keeping the whole footprint inside ``region`` (default: the table)."""
    region = region or table
    pc = obj.placement_classes[pclass - 1]
    pts = obj.hull_points - obj.com
    # horizontal footprint radius is rotation invariant about the vertical through the COM
    horiz = pts @ pc.resting_rotation().T
    r = float(np.max(np.linalg.norm(horiz[:, :2], axis=1)))
    half = np.asarray(region.size) / 2 - r
    if np.any(half < 0):
        raise OutOfTableBounds("object footprint does not fit the placement region")
    x, y = np.asarray(region.center) + rng.uniform(-half, half)
    return PlacementParams(float(x), float(y), float(rng.uniform(-np.pi, np.pi)))


def classify_placement(obj: ObjectModel, T: Transform, table: Table, tol: float = 1e-6) -> int:
    """Placement class index of an object pose resting on the table, 0 if none."""
    for pc in obj.placement_classes:
        n_world = T.R @ pc.normal
        if np.dot(n_world, [0.0, 0.0, -1.0]) < 1.0 - tol:
            continue
        z = T.apply(obj.hull_points)[:, 2]
        if abs(z.min() - table.height) > tol:
            continue
        com = T.apply(obj.com)
        face_xy = T.apply(pc.face.vertices)[:, :2]
        # polygon from world xy, re-ordered counter-clockwise
        ctr = face_xy.mean(axis=0)
        order = np.argsort(np.arctan2(face_xy[:, 1] - ctr[1], face_xy[:, 0] - ctr[0]))
        if point_in_polygon_margin(face_xy[order], com[:2]) <= 0:
            continue
        if not table.contains_xy(T.apply(obj.hull_points)[:, :2]):
            continue
        return pc.index
    return 0
