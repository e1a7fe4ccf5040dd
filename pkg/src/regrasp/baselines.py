"""Comparison planners: an unguided bidirectional tree planner and a discretized regrasp-graph planner."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .geometry import Transform, rotation_angle
from .gp_table import TableNode, gripper_hits_table
from .kinematics import DimensionMismatch, WorldModel, ik_many
from .object_gripper import (GraspClass, InfeasibleGrasp, OutOfTableBounds, PlacementParams, classify_placement,
                             grasp_transform, grasp_width, object_pose_from_placement,
                             sample_grasp, sample_placement, sweep_grasps)
from .paths import TRANSFER, TRANSIT, CompositeConfig, ManipulationPath, compose_all, reduce
from .planner import (FINGER_CLEARANCE, ConnectFailed, GuidedPlanner, NoSolution, PlannerConfig,
                      PlanResult, SearchTree, Vertex, classify_config, config_grasp, config_valid, local_plan)


# ---------------------------------------------------------------------------
# composite distance


@dataclass(frozen=True)
class CompositeMetricConfig:
    alpha: float = 0.5
    w_rot: float = 1.0
    w_trans: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.w_rot < 0 or self.w_trans < 0:
            raise ValueError("weights must be non-negative")


def composite_distance(a: CompositeConfig, b: CompositeConfig, cfg: CompositeMetricConfig = CompositeMetricConfig()
                       ) -> float:
    """alpha * |q_b - q_a|^2 + (1 - alpha) * (w_rot * geodesic angle + w_trans * |t_b - t_a|)."""
    if a.q.shape != b.q.shape:
        raise DimensionMismatch("configurations have different robot dimensions")
    dq = float(np.sum((b.q - a.q) ** 2))
    w = cfg.w_rot * rotation_angle(a.T.R, b.T.R) + cfg.w_trans * float(np.linalg.norm(b.T.translation - a.T.translation))
    return cfg.alpha * dq + (1.0 - cfg.alpha) * w


# ---------------------------------------------------------------------------
# unguided planner


class PrimitivePlanner(GuidedPlanner):
    """Bidirectional tree planner that follows only the P / G-and-P transition diagram.

    Each iteration samples a random composite configuration with random
    placement and grasp classes, extends the nearest vertex toward it with one
    transit or transfer step, then tries to join the new vertex to the nearest
    vertex of the other tree.
    """

    uses_table = False

    def __init__(self, world: WorldModel, cfg: PlannerConfig = PlannerConfig(),
                 metric: CompositeMetricConfig = CompositeMetricConfig()):
        super().__init__(world, cfg)
        self.metric = metric

    def solve(self, start: CompositeConfig, goal: CompositeConfig) -> PlanResult:
        t0 = time.perf_counter()
        deadline = t0 + self.cfg.t_max
        if start.isclose(goal):
            return PlanResult(ManipulationPath((), start), [], 0, 0.0, 0.0)
        w = self.world
        c_s, c_g = classify_config(w, start), classify_config(w, goal)
        fw, bw = SearchTree(0, +1), SearchTree(0, -1)
        fw.add(Vertex(start, c_s, 0, grasp=config_grasp(w, start) if c_s.g else None))
        bw.add(Vertex(goal, c_g, 0, grasp=config_grasp(w, goal) if c_g.g else None))
        ta, tb = fw, bw
        n_place = len(w.object.placement_classes)
        while time.perf_counter() < deadline:
            self.iterations += 1
            p = int(self.rng.integers(1, n_place + 1))
            g = int(self.rng.integers(1, w.object.num_grasp_classes + 1))
            try:
                pp = sample_placement(w.object, p, w.table, self.rng, w.placement_region)
                T_rand = object_pose_from_placement(w.object, p, pp, w.table)
            except OutOfTableBounds:
                ta, tb = tb, ta
                continue
            target = CompositeConfig(w.robot.random_q(self.rng), T_rand)
            i = self._nearest(ta, target)
            k = self._extend(ta, i, TableNode(p, g), T_rand, deadline)
            if k is not None:
                link = self._join(ta, tb, k, deadline)
                if link is not None:
                    path, seq = self._extract(fw, bw, ta, link)
                    return PlanResult(path, seq, len(seq) - 1, 0.0, time.perf_counter() - t0, self.iterations)
            ta, tb = tb, ta
        raise NoSolution(f"no manipulation path found within {self.cfg.t_max:.1f} s")

    def _nearest(self, tree: SearchTree, target: CompositeConfig) -> int:
        d = [composite_distance(v.config, target, self.metric) for v in tree.vertices]
        return int(np.argmin(d))

    def _extend(self, tree: SearchTree, i: int, cls: TableNode, T_rand: Transform, deadline: float) -> int | None:
        """One transition from vertex ``i``; returns the new vertex index or None."""
        w = self.world
        v = tree.vertices[i]
        if v.label.g == 0:
            mode = TRANSIT
        elif v.label.p == 0:
            mode = TRANSFER
        else:
            mode = TRANSIT if self.rng.random() < 0.5 else TRANSFER
        if mode == TRANSIT:
            gc = GraspClass.from_index(cls.g)
            try:
                params = sample_grasp(w.object, w.gripper, gc, self.rng)
            except InfeasibleGrasp:
                return None
            G = grasp_transform(w.object, w.gripper, gc, params)
            T = v.config.T
            label = TableNode(v.label.p, cls.g)
        else:
            G, T = v.grasp, T_rand
            label = TableNode(cls.p, v.label.g)
        u = self._make_config(v.config.q, T, G)
        if u is None:
            return None
        seg = self._connect(v.config, u, label, v.label, tree.direction, deadline, mode)
        if seg is None:
            return None
        return tree.add(Vertex(u, label, v.level + 1, i, seg, G))

    def _connect(self, x, y, c_y, c_x, s, deadline, mode=None):
        if mode is None:
            return super()._connect(x, y, c_y, c_x, s, deadline)
        a, b = (x, y) if s > 0 else (y, x)
        try:
            return local_plan(self.world, a, b, mode, self.cfg, self.rng, deadline)
        except ConnectFailed:
            return None

    def _join(self, ta: SearchTree, tb: SearchTree, k: int, deadline: float):
        """Connect new vertex ``k`` to the nearest vertex of the other tree, directly or through one bridge."""
        u = ta.vertices[k]
        j = self._nearest(tb, u.config)
        wv = tb.vertices[j]
        s = ta.direction
        if u.config.T.isclose(wv.config.T, 1e-9):
            seg = self._connect(u.config, wv.config, wv.label, u.label, s, deadline, TRANSIT)
            return None if seg is None else (k, j, [], seg)
        if u.grasp is not None and wv.grasp is not None and u.grasp.isclose(wv.grasp, 1e-9):
            seg = self._connect(u.config, wv.config, wv.label, u.label, s, deadline, TRANSFER)
            return None if seg is None else (k, j, [], seg)
        options = []
        if wv.grasp is not None and u.label.p != 0:
            # transit at u's object pose to wv's grasp, then transfer into wv
            options.append((u.config.T, wv.grasp, TRANSIT, TRANSFER, TableNode(u.label.p, wv.label.g)))
        if u.grasp is not None and wv.label.p != 0:
            # transfer with u's grasp to wv's object pose, then transit into wv
            options.append((wv.config.T, u.grasp, TRANSFER, TRANSIT, TableNode(wv.label.p, u.label.g)))
        if not options:
            return None
        T, G, m1, m2, label = options[int(self.rng.integers(len(options)))]
        x = self._make_config(u.config.q, T, G)
        if x is None:
            return None
        seg1 = self._connect(u.config, x, label, u.label, s, deadline, m1)
        if seg1 is None:
            return None
        kx = ta.add(Vertex(x, label, u.level + 1, k, seg1, G))
        seg2 = self._connect(x, wv.config, wv.label, label, s, deadline, m2)
        return None if seg2 is None else (kx, j, [], seg2)


def pmp_plan(world: WorldModel, start: CompositeConfig, goal: CompositeConfig, cfg: PlannerConfig = PlannerConfig(),
             metric: CompositeMetricConfig = CompositeMetricConfig()) -> ManipulationPath:
    return PrimitivePlanner(world, cfg, metric).solve(start, goal).path


# ---------------------------------------------------------------------------
# discretized regrasp graph


@dataclass
class RegraspGraph:
    """Two-layer graph: discrete placements and the discrete grasps valid at each."""

    placements: list  # (placement class, rotation rad or None, object Transform)
    grasps: list  # (grasp class index, GraspParams, object->gripper Transform)
    valid: list  # per placement: dict grasp id -> joint configuration
    build_time: float = 0.0

    @property
    def grasp_set_size(self) -> int:
        return len(self.grasps)

    def common(self, a: int, b: int) -> set:
        return set(self.valid[a]) & set(self.valid[b])

    def edges(self) -> set:
        out = set()
        n = len(self.placements)
        for a in range(n):
            for b in range(a + 1, n):
                if self.common(a, b):
                    out.add((a, b))
        return out

    def neighbors(self, a: int) -> list:
        return [b for b in range(len(self.placements)) if b != a and self.common(a, b)]


def object_grasp_set(world: WorldModel, n_slide: int = 11) -> list:
    """All discrete grasps of the object: every class, lateral axis and slide offset."""
    out = []
    for g in range(1, world.object.num_grasp_classes + 1):
        gc = GraspClass.from_index(g)
        for params in sweep_grasps(world.object, world.gripper, gc, n_slide):
            out.append((g, params, grasp_transform(world.object, world.gripper, gc, params)))
    return out


def dbmp_build(world: WorldModel, n_rot: int = 8, n_slide: int = 11, extra_poses=(), location=None,
               q_seed=None, rng: np.random.Generator | None = None, ik_seeds: int = 4) -> RegraspGraph:
    """Placements = class x ``n_rot`` rotations at one location (plus ``extra_poses``).

    A discrete grasp is valid at a placement when the gripper clears the
    table, IK reaches it and the configuration is collision-free.
    """
    t0 = time.perf_counter()
    rng = rng if rng is not None else np.random.default_rng(0)
    region = world.placement_region or world.table
    loc = location if location is not None else region.center
    placements = []
    for pc in world.object.placement_classes:
        for r in range(n_rot):
            th = 2 * np.pi * r / n_rot
            try:
                T = object_pose_from_placement(world.object, pc.index, PlacementParams(loc[0], loc[1], th), world.table)
            except OutOfTableBounds:
                continue
            placements.append((pc.index, th, T))
    for T in extra_poses:
        p = classify_config_placement(world, T)
        placements.append((p, None, T))
    grasps = object_grasp_set(world, n_slide)
    jobs, targets = [], []
    for pi, (_, _, T) in enumerate(placements):
        for gi, (g, params, G) in enumerate(grasps):
            gc = GraspClass.from_index(g)
            F = T.compose(G)
            if gripper_hits_table(world.gripper, F, grasp_width(world.object, gc, params), world.table):
                continue
            jobs.append((pi, gi))
            targets.append(F)
    sols = ik_many(world.robot, targets, ik_seeds, rng, q_init=q_seed)
    valid = [dict() for _ in placements]
    for (pi, gi), qs in zip(jobs, sols):
        T = placements[pi][2]
        g, params, G = grasps[gi]
        width = grasp_width(world.object, GraspClass.from_index(g), params)
        opening = min(world.gripper.max_opening, width + FINGER_CLEARANCE)
        for q in qs:
            if config_valid(world, CompositeConfig(q, T), G, opening):
                valid[pi][gi] = q
                break
    return RegraspGraph(placements, grasps, valid, time.perf_counter() - t0)


def classify_config_placement(world: WorldModel, T: Transform) -> int:
    return classify_placement(world.object, T, world.table)


class DiscretePlanner:
    """Depth-first search over placement sequences, then grasps, then motions."""

    def __init__(self, world: WorldModel, cfg: PlannerConfig = PlannerConfig(), n_rot: int = 8):
        self.world = world
        self.cfg = cfg
        self.n_rot = n_rot
        self.rng = np.random.default_rng(cfg.seed)
        self.graph: RegraspGraph | None = None
        self.prep_time = 0.0

    def prepare(self, start: CompositeConfig, goal: CompositeConfig) -> RegraspGraph:
        self.graph = dbmp_build(self.world, self.n_rot, self.cfg.n_slide, extra_poses=(start.T, goal.T),
                                q_seed=start.q, rng=np.random.default_rng(self.cfg.seed))
        self.prep_time = self.graph.build_time
        return self.graph

    def solve(self, start: CompositeConfig, goal: CompositeConfig) -> PlanResult:
        if start.isclose(goal):
            return PlanResult(ManipulationPath((), start), [], 0, 0.0, 0.0)
        if self.graph is None:
            self.prepare(start, goal)
        t0 = time.perf_counter()
        path, seq = dbmp_plan(self.graph, self.world, start, goal, t0 + self.cfg.t_max, self.cfg, self.rng)
        return PlanResult(path, seq, len(seq) - 1, self.prep_time, time.perf_counter() - t0)


def _find_pose(graph: RegraspGraph, T: Transform) -> int:
    for i, (_, _, P) in enumerate(graph.placements):
        if P.isclose(T, 1e-9):
            return i
    raise ValueError("pose is not a placement of the regrasp graph")


def placement_sequences(graph: RegraspGraph, a: int, b: int, rng: np.random.Generator, max_len: int | None = None):
    """Simple placement sequences from ``a`` to ``b``, shortest first, neighbours in shuffled order."""
    n = len(graph.placements)
    order = rng.permutation(n)
    rank = {int(p): r for r, p in enumerate(order)}
    adj = {x: sorted(graph.neighbors(x), key=rank.get) for x in range(n)}
    max_len = max_len or n

    def dfs(path, limit):
        u = path[-1]
        if u == b:
            yield list(path)
            return
        if len(path) > limit:
            return
        for v in adj[u]:
            if v not in path:
                path.append(v)
                yield from dfs(path, limit)
                path.pop()

    seen = set()
    for limit in range(1, max_len + 1):
        for seq in dfs([a], limit):
            if len(seq) - 1 == limit and tuple(seq) not in seen:
                seen.add(tuple(seq))
                yield seq
        if a == b:
            return


def dbmp_plan(graph: RegraspGraph, world: WorldModel, start: CompositeConfig, goal: CompositeConfig, deadline: float,
              cfg: PlannerConfig = PlannerConfig(), rng: np.random.Generator | None = None):
    """Returns (path, placement-class/grasp-class label sequence); raises NoSolution."""
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    a, b = _find_pose(graph, start.T), _find_pose(graph, goal.T)
    grasp_rank = {int(g): r for r, g in enumerate(rng.permutation(len(graph.grasps)))}
    if a == b:
        seqs = iter([[a, a]])
    else:
        seqs = placement_sequences(graph, a, b, rng)
    for seq in seqs:
        if time.perf_counter() > deadline:
            break
        pairs = list(zip(seq, seq[1:]))
        choices = [sorted(graph.common(x, y), key=grasp_rank.get) for x, y in pairs]
        if any(not c for c in choices):
            continue
        result = _assign(graph, world, start, goal, seq, choices, deadline, cfg, rng)
        if result is not None:
            return result
    raise NoSolution("regrasp graph search found no executable placement sequence")


def _assign(graph, world, start, goal, seq, choices, deadline, cfg, rng):
    """Depth-first grasp assignment with motion generation for one placement sequence."""
    pose = lambda i: graph.placements[i][2]

    def gp_config(pi, gi):
        return CompositeConfig(graph.valid[pi][gi], pose(pi))

    def plan_seg(x, y, mode):
        try:
            return local_plan(world, x, y, mode, cfg, rng, deadline)
        except (ConnectFailed, ValueError):
            return None

    def rec(step, cur, parts, labels):
        if time.perf_counter() > deadline:
            return None
        if step == len(choices):
            last = plan_seg(cur, goal, TRANSIT)
            if last is None:
                return None
            return parts + [last], labels + [TableNode(graph.placements[seq[-1]][0], 0)]
        x, y = seq[step], seq[step + 1]
        for gi in choices[step]:
            g = graph.grasps[gi][0]
            pick = gp_config(x, gi)
            s1 = plan_seg(cur, pick, TRANSIT)
            if s1 is None:
                continue
            place = gp_config(y, gi)
            s2 = plan_seg(pick, place, TRANSFER)
            if s2 is None:
                continue
            out = rec(step + 1, place, parts + [s1, s2],
                      labels + [TableNode(graph.placements[x][0], g), TableNode(graph.placements[y][0], g)])
            if out is not None:
                return out
        return None

    got = rec(0, start, [], [TableNode(graph.placements[seq[0]][0], 0)])
    if got is None:
        return None
    parts, labels = got
    return reduce(compose_all(parts)), labels
