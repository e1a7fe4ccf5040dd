"""Serial-chain kinematics, damped least-squares IK and scene collision checks.

The robot is a chain of revolute joints.  Joint ``i`` sits at ``origin_i``
(relative to the previous joint frame after its rotation) and rotates about
``axis_i``; its link collision box is expressed in the rotated joint frame.
The tool frame is the gripper frame.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .geometry import Box, Transform, sat_overlap
from .object_gripper import GripperModel, ObjectModel, Table
from .paths import TRANSFER, TRANSIT, CompositeConfig

LIMIT_TOL = 1e-9


class JointLimit(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Joint:
    axis: np.ndarray
    origin: Transform
    limits: tuple
    box: Box
    name: str = ""

    def __post_init__(self):
        a = np.asarray(self.axis, float)
        object.__setattr__(self, "axis", a / np.linalg.norm(a))
        lo, hi = map(float, self.limits)
        if not lo < hi:
            raise ValueError(f"joint {self.name!r}: lower limit must be below upper limit")
        object.__setattr__(self, "limits", (lo, hi))


@dataclass(frozen=True, eq=False)
class RobotModel:
    joints: tuple
    tool: Transform = field(default_factory=Transform)
    base: Transform = field(default_factory=Transform)
    inflation: float = 0.002
    ignore_pairs: tuple = ()
    home: np.ndarray | None = None
    name: str = "robot"

    def __post_init__(self):
        if not self.joints:
            raise ValueError("robot needs at least one joint")
        object.__setattr__(self, "joints", tuple(self.joints))
        if self.home is not None:
            object.__setattr__(self, "home", np.asarray(self.home, float))

    @property
    def n(self) -> int:
        return len(self.joints)

    @cached_property
    def lower(self) -> np.ndarray:
        return np.array([j.limits[0] for j in self.joints])

    @cached_property
    def upper(self) -> np.ndarray:
        return np.array([j.limits[1] for j in self.joints])

    @cached_property
    def _axes(self) -> np.ndarray:
        return np.array([j.axis for j in self.joints])

    @cached_property
    def _origins(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([j.origin.R for j in self.joints]), np.array([j.origin.translation for j in self.joints]))

    @cached_property
    def link_boxes(self) -> list[Box]:
        """Link boxes grown by the conservative inflation margin."""
        return [Box(j.box.half_extents + self.inflation, j.box.local_pose) for j in self.joints]

    @cached_property
    def lever_arms(self) -> np.ndarray:
        """Upper bound on the distance from joint ``i`` to any point of the distal chain (tool excluded)."""
        t = [np.linalg.norm(j.origin.translation) for j in self.joints]
        boxes = [np.linalg.norm(j.box.local_pose.translation) + np.linalg.norm(j.box.half_extents + self.inflation)
                 for j in self.joints]
        out = np.zeros(self.n)
        for i in range(self.n):
            chain = sum(t[i + 1:])
            out[i] = max([chain + np.linalg.norm(self.tool.translation)] +
                         [sum(t[i + 1:k + 1]) + boxes[k] for k in range(i, self.n)])
        return out

    def within_limits(self, q) -> bool:
        q = np.asarray(q, float)
        return bool(np.all(q >= self.lower - LIMIT_TOL) and np.all(q <= self.upper + LIMIT_TOL))

    def check_limits(self, q) -> np.ndarray:
        q = np.asarray(q, float)
        if q.shape[-1] != self.n:
            raise DimensionMismatch(f"expected {self.n} joint values, got {q.shape[-1]}")
        if not self.within_limits(q):
            raise JointLimit("configuration outside joint limits")
        return q

    def random_q(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=None if size is None else (size, self.n))

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "base": self.base.to_dict(),
            "tool": self.tool.to_dict(),
            "inflation_m": self.inflation,
            "ignore_pairs": [list(p) for p in self.ignore_pairs],
            "home_q_rad": None if self.home is None else self.home.tolist(),
            "joints": [{"name": j.name, "axis": j.axis.tolist(), "origin": j.origin.to_dict(),
                        "limits_rad": list(j.limits),
                        "link_box": {"half_extents_m": j.box.half_extents.tolist(),
                                     "pose": j.box.local_pose.to_dict()}}
                       for j in self.joints],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RobotModel":
        joints = []
        for jd in d["joints"]:
            lb = jd["link_box"]
            joints.append(Joint(jd["axis"], Transform.from_dict(jd.get("origin", {})), tuple(jd["limits_rad"]),
                                Box(lb["half_extents_m"], Transform.from_dict(lb.get("pose", {}))),
                                jd.get("name", "")))
        return cls(tuple(joints), Transform.from_dict(d.get("tool", {})), Transform.from_dict(d.get("base", {})),
                   float(d.get("inflation_m", 0.002)), tuple(tuple(p) for p in d.get("ignore_pairs", [])),
                   d.get("home_q_rad"), d.get("name", "robot"))


def load_robot(path: str | Path | None = None) -> RobotModel:
    """Load a robot description; the bundled ``denso-like.json`` by default."""
    if path is None:
        text = resources.files("regrasp.data").joinpath("denso-like.json").read_text()
    else:
        text = Path(path).read_text()
    return RobotModel.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# forward kinematics


def _axis_rotations(axes: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Rodrigues rotations for a batch: axes (n, 3), q (B, n) -> (B, n, 3, 3)."""
    K = np.zeros((len(axes), 3, 3))
    K[:, 0, 1], K[:, 0, 2] = -axes[:, 2], axes[:, 1]
    K[:, 1, 0], K[:, 1, 2] = axes[:, 2], -axes[:, 0]
    K[:, 2, 0], K[:, 2, 1] = -axes[:, 1], axes[:, 0]
    K2 = K @ K
    s, c = np.sin(q)[..., None, None], np.cos(q)[..., None, None]
    return np.eye(3) + s * K + (1.0 - c) * K2


def joint_frames(robot: RobotModel, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """World frames of every joint after its rotation, batched.

    ``q`` is (n,) or (B, n).  Returns rotations (B, n + 1, 3, 3) and positions
    (B, n + 1, 3); the last entry is the tool frame.
    """
    q = np.atleast_2d(np.asarray(q, float))
    B, n = q.shape
    Ro, po = robot._origins
    Rq = _axis_rotations(robot._axes, q)
    Rs = np.empty((B, n + 1, 3, 3))
    ps = np.empty((B, n + 1, 3))
    R = np.broadcast_to(robot.base.R, (B, 3, 3))
    p = np.broadcast_to(robot.base.translation, (B, 3))
    for i in range(n):
        p = p + R @ po[i]
        R = R @ Ro[i] @ Rq[:, i]
        Rs[:, i], ps[:, i] = R, p
    Rs[:, n] = R @ robot.tool.R
    ps[:, n] = p + R @ robot.tool.translation
    return Rs, ps


def fk(robot: RobotModel, q) -> Transform:
    q = robot.check_limits(q)
    Rs, ps = joint_frames(robot, q)
    return Transform.from_rt(Rs[0, -1], ps[0, -1])


def fk_unchecked(robot: RobotModel, q) -> Transform:
    Rs, ps = joint_frames(robot, q)
    return Transform.from_rt(Rs[0, -1], ps[0, -1])


def _jacobian_from_frames(robot: RobotModel, Rs: np.ndarray, ps: np.ndarray) -> np.ndarray:
    # world joint axes: the axis is fixed in the rotated joint frame
    w = np.einsum("bnij,nj->bni", Rs[:, :-1], robot._axes)
    r = ps[:, -1:, :] - ps[:, :-1]
    J = np.empty((Rs.shape[0], 6, robot.n))
    J[:, :3] = np.cross(w, r).transpose(0, 2, 1)
    J[:, 3:] = w.transpose(0, 2, 1)
    return J


def jacobian(robot: RobotModel, q) -> np.ndarray:
    """Geometric Jacobian (6, n): rows are tool linear then angular velocity in the world frame."""
    q = robot.check_limits(q)
    Rs, ps = joint_frames(robot, q)
    return _jacobian_from_frames(robot, Rs, ps)[0]


# ---------------------------------------------------------------------------
# inverse kinematics


def pose_error(robot: RobotModel, q, target: Transform) -> tuple[float, float]:
    """Position error (m) and rotation error (rad) of fk(q) against ``target``."""
    T = fk_unchecked(robot, q)
    dp = float(np.linalg.norm(T.translation - target.translation))
    dr = float(np.linalg.norm(Rotation.from_matrix(target.R @ T.R.T).as_rotvec()))
    return dp, dr


def _dls(robot: RobotModel, Q: np.ndarray, t_p: np.ndarray, t_R: np.ndarray, *, damping: float, step_clamp: float,
         max_iter: int, pos_tol: float, rot_tol: float, fine: float, stop_on_first: bool = False) -> np.ndarray:
    """Damped least-squares iterations on rows of ``Q`` (modified in place) toward per-row targets.

    Returns a mask of rows that reached the acceptance tolerance at some point.
    """
    B = Q.shape[0]
    active = np.ones(B, bool)
    done = np.zeros(B, bool)
    I6 = np.eye(6)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        Rs, ps = joint_frames(robot, Q[idx])
        ep = t_p[idx] - ps[:, -1]
        er = Rotation.from_matrix(t_R[idx] @ Rs[:, -1].transpose(0, 2, 1)).as_rotvec()
        e = np.concatenate([ep, er], axis=1)
        pn, rn = np.linalg.norm(ep, axis=1), np.linalg.norm(er, axis=1)
        ok = (pn < pos_tol) & (rn < rot_tol)
        conv = ok & (np.maximum(pn, rn) < fine)
        done[idx[ok]] = True
        active[idx[conv]] = False
        if stop_on_first and conv.any():
            break
        step = ~conv
        if not step.any():
            break
        idx, e = idx[step], e[step]
        J = _jacobian_from_frames(robot, Rs[step], ps[step])
        lam2 = (damping ** 2) * np.minimum(1.0, np.linalg.norm(e, axis=1))[:, None, None]
        A = J @ J.transpose(0, 2, 1) + lam2 * I6
        dq = (J.transpose(0, 2, 1) @ np.linalg.solve(A, e[..., None]))[..., 0]
        big = np.max(np.abs(dq), axis=1, keepdims=True)
        dq *= np.minimum(1.0, step_clamp / np.maximum(big, 1e-300))
        Q[idx] = np.clip(Q[idx] + dq, robot.lower, robot.upper)
    return done


def ik(robot: RobotModel, target: Transform, seeds: int = 16, rng: np.random.Generator | None = None, *,
       q_init=None, damping: float = 1e-2, step_clamp: float = 0.2, max_iter: int = 300,
       pos_tol: float = 1e-4, rot_tol: float = 1e-3, polish_tol: float | None = None,
       stop_on_first: bool = False) -> list[np.ndarray]:
    """Damped least-squares IK from several seeds.

    Returns distinct in-limit solutions (closest to ``q_init`` first when given).
    An empty list only means no seed converged.  ``polish_tol`` keeps iterating
    converged seeds until the pose error falls below it.  With ``stop_on_first``
    the batch stops as soon as one seed is polished.
    """
    rng = rng if rng is not None else np.random.default_rng()
    Q = robot.random_q(rng, seeds)
    if q_init is not None:
        Q[0] = np.clip(np.asarray(q_init, float), robot.lower, robot.upper)
    fine = min(pos_tol, rot_tol) if polish_tol is None else polish_tol
    done = _dls(robot, Q, np.tile(target.translation, (seeds, 1)), np.tile(target.R, (seeds, 1, 1)),
                damping=damping, step_clamp=step_clamp, max_iter=max_iter, pos_tol=pos_tol, rot_tol=rot_tol,
                fine=fine, stop_on_first=stop_on_first)
    sols = []
    for i in np.flatnonzero(done):
        dp, dr = pose_error(robot, Q[i], target)
        if dp < pos_tol and dr < rot_tol and robot.within_limits(Q[i]):
            if all(np.max(np.abs(Q[i] - s)) > 1e-3 for s in sols):
                sols.append(Q[i].copy())
    if q_init is not None:
        q0 = np.asarray(q_init, float)
        sols.sort(key=lambda s: float(np.linalg.norm(s - q0)))
    return sols


def ik_many(robot: RobotModel, targets: Sequence[Transform], seeds: int, rng: np.random.Generator, *,
            q_init=None, max_iter: int = 100, tol: float = 1e-10) -> list[list[np.ndarray]]:
    """Solve many IK problems in one batch; returns the converged solutions per target."""
    T = len(targets)
    if T == 0:
        return []
    Q = robot.random_q(rng, T * seeds)
    if q_init is not None:
        Q[::seeds] = np.clip(np.asarray(q_init, float), robot.lower, robot.upper)
    t_p = np.repeat(np.array([t.translation for t in targets]), seeds, axis=0)
    t_R = np.repeat(np.array([t.R for t in targets]), seeds, axis=0)
    _dls(robot, Q, t_p, t_R, damping=1e-2, step_clamp=0.2, max_iter=max_iter, pos_tol=tol, rot_tol=tol, fine=tol)
    Rs, ps = joint_frames(robot, Q)
    ep = np.linalg.norm(t_p - ps[:, -1], axis=1)
    er = np.linalg.norm(Rotation.from_matrix(t_R @ Rs[:, -1].transpose(0, 2, 1)).as_rotvec(), axis=1)
    good = (ep < tol) & (er < tol)
    out = []
    for t in range(T):
        sols = []
        for i in range(t * seeds, (t + 1) * seeds):
            if good[i] and all(np.max(np.abs(Q[i] - s)) > 1e-3 for s in sols):
                sols.append(Q[i].copy())
        out.append(sols)
    return out


# ---------------------------------------------------------------------------
# world and collision checking


@dataclass(frozen=True, eq=False)
class WorldModel:
    robot: RobotModel
    gripper: GripperModel
    table: Table
    object: ObjectModel
    obstacles: tuple = ()
    # where intermediate placements are sampled (defaults to the whole table)
    placement_region: Table | None = None
    # object boxes are shrunk by this much in collision checks so that resting
    # contact and near-contact interpolation error are not reported as collisions
    object_margin: float = 5e-4

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))

    @cached_property
    def static_boxes(self) -> list[tuple[Box, Transform]]:
        """Table plus static obstacles as (box, world pose of its frame)."""
        out = [(self.table.box, self.table.pose)]
        out.extend((b, Transform()) for b in self.obstacles)
        return out

    @cached_property
    def _pairs(self):
        return _PairPlan(self)

    def tool_pose(self, q) -> Transform:
        return fk(self.robot, q)

    def grasp_of(self, config: CompositeConfig) -> Transform:
        """Gripper pose relative to the object."""
        return config.T.inverse().compose(fk_unchecked(self.robot, config.q))

    def config_from_grasp(self, q, grasp: Transform) -> CompositeConfig:
        F = fk(self.robot, q)
        return CompositeConfig(q, F.compose(grasp.inverse()))

    def step_bound(self, dq: np.ndarray, mode: str) -> float:
        """Upper bound on Cartesian displacement of any body point for the joint step ``dq``."""
        reach = self.robot.lever_arms + self.gripper_reach
        if mode == TRANSFER:
            reach = reach + 2.0 * self.object.radius
        return float(np.abs(dq) @ reach)

    @cached_property
    def gripper_reach(self) -> float:
        pts = np.concatenate([b.corners() for b in self.gripper.boxes(self.gripper.max_opening)])
        return float(np.max(np.linalg.norm(pts, axis=1)))


class _PairPlan:
    """Precomputed body layout and collision pair index arrays for a world."""

    def __init__(self, world: WorldModel):
        robot, n = world.robot, world.robot.n
        m = world.object.m
        # moving bodies: links 0..n-1, gripper parts (palm, finger, finger), attached object boxes
        link_of = list(range(n)) + [n, n, n]
        self.n_robot = nr = len(link_of)
        ignore = {tuple(sorted(p)) for p in robot.ignore_pairs}
        self_pairs = [(a, b) for a in range(nr) for b in range(a + 1, nr)
                      if abs(link_of[a] - link_of[b]) >= 2 and tuple(sorted((link_of[a], link_of[b]))) not in ignore]
        sc, sR, sh = [], [], []
        for box, pose in world.static_boxes:
            T = pose.compose(box.local_pose)
            sc.append(T.translation)
            sR.append(T.R)
            sh.append(box.half_extents)
        self.static = (np.array(sc), np.array(sR), np.array(sh))
        ns = len(sc)
        obj = [(b.local_pose.R, b.local_pose.translation, b.half_extents) for b in world.object.boxes]
        self.obj_R = np.array([o[0] for o in obj])
        self.obj_t = np.array([o[1] for o in obj])
        self.obj_h = np.maximum(np.array([o[2] for o in obj]) - world.object_margin, 1e-6)
        lb = robot.link_boxes
        self.link_R = np.array([b.local_pose.R for b in lb])
        self.link_t = np.array([b.local_pose.translation for b in lb])
        gb = world.gripper.boxes(world.gripper.max_opening)
        self.grip_t = np.array([b.local_pose.translation for b in gb])
        self.robot_h = np.array([b.half_extents for b in lb] + [b.half_extents for b in gb])
        # transit: robot vs (static + object boxes), robot self pairs
        ms = [(a, s) for a in range(nr) for s in range(ns + m)]
        self.transit = (np.array([p[0] for p in ms]), np.array([p[1] for p in ms]),
                        np.array([p[0] for p in self_pairs]), np.array([p[1] for p in self_pairs]))
        # transfer: robot + object vs static, self pairs, object vs links
        ms = [(a, s) for a in range(nr + m) for s in range(ns)]
        mm = self_pairs + [(nr + k, a) for k in range(m) for a in range(n)]
        self.transfer = (np.array([p[0] for p in ms]), np.array([p[1] for p in ms]),
                         np.array([p[0] for p in mm]), np.array([p[1] for p in mm]))


def _moving_boxes(world: WorldModel, qs: np.ndarray, opening: np.ndarray, grasp: Transform | None):
    """Centers, rotations and half extents of robot (and attached object) boxes.

    Returns c (B, M, 3), R (B, M, 3, 3), h (M, 3).
    """
    plan = world._pairs
    Rs, ps = joint_frames(world.robot, qs)
    B, n = qs.shape
    c_links = ps[:, :n] + np.einsum("bnij,nj->bni", Rs[:, :n], plan.link_t)
    R_links = Rs[:, :n] @ plan.link_R
    g = world.gripper
    Rt, pt = Rs[:, n], ps[:, n]
    local = np.repeat(plan.grip_t[None], B, axis=0)
    fo = opening / 2.0 + g.finger_thickness / 2.0
    local[:, 1, 0] = fo
    local[:, 2, 0] = -fo
    c_grip = pt[:, None] + np.einsum("bij,bkj->bki", Rt, local)
    R_grip = np.repeat(Rt[:, None], 3, axis=1)
    cs, rs, hs = [c_links, c_grip], [R_links, R_grip], [plan.robot_h]
    if grasp is not None:
        Gi = grasp.inverse()
        oR = Rt @ Gi.R
        op = pt + Rt @ Gi.translation
        cs.append(op[:, None] + np.einsum("bij,kj->bki", oR, plan.obj_t))
        rs.append(oR[:, None] @ plan.obj_R)
        hs.append(plan.obj_h)
    return np.concatenate(cs, 1), np.concatenate(rs, 1), np.concatenate(hs, 0)


def collisions(world: WorldModel, qs, mode: str, *, object_pose: Transform | None = None,
               grasp: Transform | None = None, opening=None) -> np.ndarray:
    """Boolean array, true where configuration ``qs[b]`` is in collision.

    Transit: ``object_pose`` is a static obstacle, fingers at ``opening``
    (default fully open).  Transfer: the object is attached through ``grasp``
    (object-to-gripper transform), gripper-object contact is ignored, and the
    fingers are at ``opening`` (default the grasped width).
    """
    qs = np.atleast_2d(np.asarray(qs, float))
    B = qs.shape[0]
    plan = world._pairs
    g = world.gripper
    sc, sR, sh = plan.static
    if mode == TRANSIT:
        if object_pose is None:
            raise ValueError("transit check needs the object pose")
        width = g.max_opening if opening is None else opening
        c, R, h = _moving_boxes(world, qs, np.broadcast_to(np.asarray(width, float), (B,)), None)
        oR = object_pose.R
        sc = np.concatenate([sc, object_pose.translation + plan.obj_t @ oR.T])
        sR = np.concatenate([sR, oR @ plan.obj_R])
        sh = np.concatenate([sh, plan.obj_h])
        a_s, s_s, a_m, b_m = plan.transit
    elif mode == TRANSFER:
        if grasp is None:
            raise ValueError("transfer check needs the grasp")
        width = _grasp_width(world, grasp) if opening is None else opening
        c, R, h = _moving_boxes(world, qs, np.broadcast_to(np.asarray(width, float), (B,)), grasp)
        a_s, s_s, a_m, b_m = plan.transfer
    else:
        raise ValueError(f"unknown mode {mode!r}")
    P, Q = len(a_s), len(a_m)
    cA = np.concatenate([c[:, a_s], c[:, a_m]], 1).reshape(-1, 3)
    RA = np.concatenate([R[:, a_s], R[:, a_m]], 1).reshape(-1, 3, 3)
    hA = np.broadcast_to(np.concatenate([h[a_s], h[a_m]]), (B, P + Q, 3)).reshape(-1, 3)
    cB = np.concatenate([np.broadcast_to(sc[s_s], (B, P, 3)), c[:, b_m]], 1).reshape(-1, 3)
    RB = np.concatenate([np.broadcast_to(sR[s_s], (B, P, 3, 3)), R[:, b_m]], 1).reshape(-1, 3, 3)
    hB = np.broadcast_to(np.concatenate([sh[s_s], h[b_m]]), (B, P + Q, 3)).reshape(-1, 3)
    return sat_overlap(cA, RA, hA, cB, RB, hB).reshape(B, P + Q).any(axis=1)


def _grasp_width(world: WorldModel, grasp: Transform) -> float:
    """Extent of the object between the finger pads for ``grasp``."""
    lat = grasp.R[:, 0]
    pts = world.object.hull_points - grasp.translation
    # width of the grasped box along the lateral axis, centred on the gripper
    best = world.gripper.max_opening
    for box in world.object.boxes:
        local = box.local_pose.inverse().compose(grasp)
        c = np.abs(local.translation)
        if np.all(c <= box.half_extents + 1e-9):
            axis_in_box = box.local_pose.R.T @ lat
            best = float(2.0 * np.abs(axis_in_box) @ box.half_extents)
            break
    else:
        proj = pts @ lat
        best = float(min(world.gripper.max_opening, 2 * np.max(np.abs(proj))))
    return best


def collision_free(world: WorldModel, config: CompositeConfig, mode: str, *, grasp: Transform | None = None,
                   opening=None) -> bool:
    if not world.robot.within_limits(config.q):
        return False
    if mode == TRANSIT:
        return not collisions(world, config.q, TRANSIT, object_pose=config.T, opening=opening)[0]
    if grasp is None:
        grasp = world.grasp_of(config)
    return not collisions(world, config.q, TRANSFER, grasp=grasp, opening=opening)[0]


def edge_samples(world: WorldModel, qa: np.ndarray, qb: np.ndarray, mode: str, resolution: float) -> np.ndarray:
    """Interpolated configurations between ``qa`` and ``qb`` (inclusive) spaced for ``resolution`` metres."""
    d = world.step_bound(qb - qa, mode)
    k = max(1, int(np.ceil(d / resolution)))
    u = np.linspace(0.0, 1.0, k + 1)[:, None]
    return qa + u * (qb - qa)


def edge_collision_free(world: WorldModel, qa, qb, mode: str, resolution: float = 0.004, **kw) -> bool:
    qs = edge_samples(world, np.asarray(qa, float), np.asarray(qb, float), mode, resolution)
    return not collisions(world, qs, mode, **kw).any()
