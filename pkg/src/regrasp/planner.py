"""Guidance-graph-driven bidirectional tree search over composite configurations.

The outer loop enumerates task plans of increasing length on the grasp-placement
table and merges them into a levelled guidance graph.  The inner loop grows a
forward tree from the start and a backward tree from the goal.  A vertex at
level ``d`` with label ``c`` only extends along guidance edges leaving
``(d, c)``, so every tree branch follows some task plan.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .geometry import Transform
from .gp_table import (GPTable, TableNode, UnclassifiableConfig, add_query_nodes, build_table, edge_kind,
                       VERTICAL)
from .kinematics import WorldModel, collisions, edge_collision_free, fk_unchecked, ik, pose_error
from .object_gripper import (GraspClass, OutOfTableBounds, classify_grasp, classify_placement, grasp_transform,
                             grasp_width, object_pose_from_placement, sample_grasp, sample_placement)
from .paths import (TRANSFER, TRANSIT, CompositeConfig, ManipulationPath, SingleModePath, compose_all, reduce)
from .task_plans import GuidanceGraph, build_guidance_graph, plans_of_length, shortest_plan_length

REACHED, ADVANCED, FAILED = "reached", "advanced", "failed"

FINGER_CLEARANCE = 0.002


class NoSolution(RuntimeError):
    pass


class ConnectFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class PlannerConfig:
    t_max: float = 60.0
    threshold_n: int = 20
    delta: int | None = None  # None: chosen from the query
    rrt_step: float = 0.1
    rrt_goal_bias: float = 0.0
    rrt_max_iter: int = 2000
    sample_weight_exponent: float = 1.0
    seed: int = 0
    bridge_prob: float = 0.5
    ik_seeds: int = 8
    ik_max_iter: int = 60
    retreat: float = 0.05
    retreat_steps: int = 5
    resolution: float = 0.004
    # finished local plans are rechecked at this spacing; gripper boxes carry no inflation
    verify_resolution: float = 0.0004
    n_slide: int = 11

    def __post_init__(self):
        if self.t_max <= 0:
            raise ValueError("t_max must be positive")
        if self.threshold_n < 1:
            raise ValueError("threshold_n must be at least 1")
        if self.delta not in (None, 1, 2):
            raise ValueError("delta must be 1 or 2")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


# ---------------------------------------------------------------------------
# configuration classification


def config_grasp(world: WorldModel, c: CompositeConfig) -> Transform:
    """Gripper pose relative to the object."""
    return c.T.inverse().compose(fk_unchecked(world.robot, c.q))


def classify_config(world: WorldModel, c: CompositeConfig, tol: float = 1e-6) -> TableNode:
    """Table node of a configuration; zero marks 'not in P' / 'not in G'."""
    p = classify_placement(world.object, c.T, world.table, tol)
    got = classify_grasp(world.object, world.gripper, config_grasp(world, c), tol)
    g = got[0] if got else 0
    return TableNode(p, g)


def choose_path_length_increment(start: TableNode, goal: TableNode) -> int:
    """1 when an endpoint is already in G and P, else 2 (keeps results irreducible)."""
    both = lambda n: n.p != 0 and n.g != 0
    return 1 if both(start) or both(goal) else 2


def held_width(world: WorldModel, c: CompositeConfig) -> float | None:
    got = classify_grasp(world.object, world.gripper, config_grasp(world, c), 1e-6)
    if got is None:
        return None
    return grasp_width(world.object, GraspClass.from_index(got[0]), got[1])


def transit_opening(world: WorldModel, a: CompositeConfig, b: CompositeConfig) -> float:
    """Finger opening used while moving without the object.

    Slightly wider than the widest grasp at either end so the fingers never
    touch the object; fully open when neither end holds a grasp.
    """
    widths = [w for w in (held_width(world, a), held_width(world, b)) if w is not None]
    if not widths:
        return world.gripper.max_opening
    return min(world.gripper.max_opening, max(widths) + FINGER_CLEARANCE)


def config_valid(world: WorldModel, c: CompositeConfig, grasp: Transform | None, opening: float | None) -> bool:
    """A configuration in G and P must be free in both modes."""
    if not world.robot.within_limits(c.q):
        return False
    if collisions(world, c.q, TRANSIT, object_pose=c.T,
                  opening=world.gripper.max_opening if opening is None else opening)[0]:
        return False
    if grasp is not None and collisions(world, c.q, TRANSFER, grasp=grasp)[0]:
        return False
    return True


# ---------------------------------------------------------------------------
# local planner


def _escape(world: WorldModel, c: CompositeConfig, mode: str, cfg: PlannerConfig, rng, check) -> list[np.ndarray]:
    """Short Cartesian motion away from a contact state, as joint waypoints.

    Transit: back off along the approach axis.  Transfer: lift straight up.
    Returns the joint waypoints after ``c`` (empty when no escape is needed).
    """
    if mode == TRANSIT:
        if held_width(world, c) is None:
            return []
    elif classify_placement(world.object, c.T, world.table) == 0:
        return []
    F = fk_unchecked(world.robot, c.q)
    qs, q = [], c.q
    for k in range(1, cfg.retreat_steps + 1):
        d = cfg.retreat * k / cfg.retreat_steps
        if mode == TRANSIT:
            target = F.compose(Transform.from_translation([0.0, 0.0, -d]))
        else:
            target = Transform.from_translation([0.0, 0.0, d]).compose(F)
        sols = ik(world.robot, target, 1, rng, q_init=q, polish_tol=1e-10, max_iter=50)
        if not sols or np.max(np.abs(sols[0] - q)) > 0.5:
            raise ConnectFailed("escape motion has no nearby IK solution")
        if not check(q, sols[0]):
            raise ConnectFailed("escape motion collides")
        q = sols[0]
        qs.append(q)
    return qs


def rrt_connect(qa: np.ndarray, qb: np.ndarray, lower: np.ndarray, upper: np.ndarray, edge_free, rng,
                step: float = 0.1, max_iter: int = 2000, goal_bias: float = 0.0,
                deadline: float | None = None) -> list[np.ndarray]:
    """Bidirectional RRT-Connect in joint space; returns joint waypoints qa..qb."""
    if edge_free(qa, qb):
        return [qa, qb]
    trees = [([qa], [-1]), ([qb], [-1])]

    def nearest(tree, q):
        pts = np.asarray(tree[0])
        return int(np.argmin(np.sum((pts - q) ** 2, axis=1)))

    def steer(q_from, q_to):
        d = q_to - q_from
        n = float(np.linalg.norm(d))
        return (q_to, True) if n <= step else (q_from + d * (step / n), False)

    def extend(tree, q):
        i = nearest(tree, q)
        q_new, reached = steer(tree[0][i], q)
        if not edge_free(tree[0][i], q_new):
            return None, False
        tree[0].append(q_new)
        tree[1].append(i)
        return len(tree[0]) - 1, reached

    def branch(tree, i):
        out = []
        while i >= 0:
            out.append(tree[0][i])
            i = tree[1][i]
        return out

    a, b = 0, 1
    for _ in range(max_iter):
        if deadline is not None and time.perf_counter() > deadline:
            break
        if goal_bias > 0 and rng.random() < goal_bias:
            q_rand = trees[b][0][0]
        else:
            q_rand = rng.uniform(lower, upper)
        i_new, _ = extend(trees[a], q_rand)
        if i_new is not None:
            target = trees[a][0][i_new]
            while True:
                j, reached = extend(trees[b], target)
                if j is None:
                    break
                if reached:
                    pa = branch(trees[a], i_new)[::-1]
                    pb = branch(trees[b], j)
                    path = pa + pb[1:]
                    return path if a == 0 else path[::-1]
        a, b = b, a
    raise ConnectFailed("RRT-Connect budget exhausted")


def local_plan(world: WorldModel, a: CompositeConfig, b: CompositeConfig, mode: str, cfg: PlannerConfig,
               rng: np.random.Generator, deadline: float | None = None) -> SingleModePath:
    """Single-mode path from ``a`` to ``b`` (object fixed for transit, grasp fixed for transfer)."""
    if mode == TRANSIT:
        if not a.T.isclose(b.T, 1e-9):
            raise ValueError("transit endpoints must share the object pose")
        opening = transit_opening(world, a, b)
        kw = dict(object_pose=a.T, opening=opening)
        grasp = None
    elif mode == TRANSFER:
        grasp = config_grasp(world, a)
        if not grasp.isclose(config_grasp(world, b), 1e-6):
            raise ValueError("transfer endpoints must share the grasp")
        kw = dict(grasp=grasp)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if np.array_equal(a.q, b.q):
        return SingleModePath(mode, (a,))

    def check(q1, q2):
        return edge_collision_free(world, q1, q2, mode, cfg.resolution, **kw)

    pre = _escape(world, a, mode, cfg, rng, check)
    post = _escape(world, b, mode, cfg, rng, check)
    q_from = pre[-1] if pre else a.q
    q_to = post[-1] if post else b.q
    middle = rrt_connect(q_from, q_to, world.robot.lower, world.robot.upper, check, rng, cfg.rrt_step,
                         cfg.rrt_max_iter, cfg.rrt_goal_bias, deadline)
    qs = [a.q] + pre + middle + post[::-1] + [b.q]
    qs = [x for n, x in enumerate(qs) if n == 0 or not np.array_equal(x, qs[n - 1])]
    for x, y in zip(qs, qs[1:]):
        if not edge_collision_free(world, x, y, mode, cfg.verify_resolution, **kw):
            raise ConnectFailed("local plan grazes an obstacle between samples")
    Gi = grasp.inverse() if grasp is not None else None
    wps = [a]
    for x in qs[1:-1]:
        T = a.T if mode == TRANSIT else fk_unchecked(world.robot, x).compose(Gi)
        wps.append(CompositeConfig(x, T))
    wps.append(b)
    return SingleModePath(mode, tuple(wps))


# ---------------------------------------------------------------------------
# search trees


@dataclass
class Vertex:
    config: CompositeConfig
    label: TableNode
    level: int
    parent: int = -1
    # segment joining parent and this vertex, oriented in execution order
    segment: SingleModePath | None = None
    grasp: Transform | None = None


@dataclass
class SearchTree:
    root_level: int
    direction: int  # +1 forward (levels increase), -1 backward
    vertices: list = field(default_factory=list)

    def add(self, v: Vertex) -> int:
        self.vertices.append(v)
        return len(self.vertices) - 1

    def depth(self, i: int) -> int:
        return abs(self.vertices[i].level - self.root_level)

    def at(self, level: int, label: TableNode | None = None) -> list[int]:
        return [i for i, v in enumerate(self.vertices)
                if v.level == level and (label is None or v.label == label)]

    def branch(self, i: int) -> list[int]:
        out = []
        while i >= 0:
            out.append(i)
            i = self.vertices[i].parent
        return out


def sample_tree(tree: SearchTree, rng: np.random.Generator, exponent: float = 1.0) -> int:
    """Vertex index drawn with probability proportional to (depth + 1) ** exponent."""
    n = len(tree.vertices)
    if n == 1:
        return 0
    w = np.array([(tree.depth(i) + 1.0) ** exponent for i in range(n)])
    return int(rng.choice(n, p=w / w.sum()))


# ---------------------------------------------------------------------------
# planner


@dataclass
class PlanResult:
    path: ManipulationPath
    node_sequence: list
    k: int
    prep_time: float
    plan_time: float
    iterations: int = 0


class GuidedPlanner:
    """Guided regrasp planner bound to one world; one instance per query."""

    uses_table = True

    def __init__(self, world: WorldModel, cfg: PlannerConfig = PlannerConfig(), table: GPTable | None = None):
        self.world = world
        self.cfg = cfg
        t0 = time.perf_counter()
        self.table = table
        if table is None and self.uses_table:
            self.table = build_table(world.object, world.gripper, world.table, n_slide=cfg.n_slide)
        self.prep_time = time.perf_counter() - t0
        self.rng = np.random.default_rng(cfg.seed)
        self.iterations = 0
        self.trace: list = []

    # -- entry point -------------------------------------------------------
    def solve(self, start: CompositeConfig, goal: CompositeConfig) -> PlanResult:
        t0 = time.perf_counter()
        deadline = t0 + self.cfg.t_max
        if start.isclose(goal):
            return PlanResult(ManipulationPath((), start), [], 0, self.prep_time, 0.0)
        c_s = classify_config(self.world, start)
        c_g = classify_config(self.world, goal)
        for c, name in ((c_s, "start"), (c_g, "goal")):
            if c.p == 0 and c.g == 0:
                raise UnclassifiableConfig(f"{name} configuration is in neither P nor G")
        table = add_query_nodes(self.table, c_s, c_g)
        l = shortest_plan_length(table, c_s, c_g)
        delta = self.cfg.delta or choose_path_length_increment(c_s, c_g)
        k = l
        max_k = len(table.nodes) - 1
        while time.perf_counter() < deadline and k <= max_k:
            plans = plans_of_length(table, k, c_s, c_g)
            if plans:
                q = build_guidance_graph(plans)
                found, path, seq = self.plan_path(q, start, goal, c_s, c_g, deadline)
                if found:
                    return PlanResult(path, seq, k, self.prep_time, time.perf_counter() - t0, self.iterations)
            k += delta
        raise NoSolution(f"no manipulation path found within {self.cfg.t_max:.1f} s")

    # -- inner loop --------------------------------------------------------
    def plan_path(self, q: GuidanceGraph, start: CompositeConfig, goal: CompositeConfig, c_s: TableNode,
                  c_g: TableNode, deadline: float):
        w = self.world
        fw = SearchTree(0, +1)
        bw = SearchTree(q.k, -1)
        fw.add(Vertex(start, c_s, 0, grasp=config_grasp(w, start) if c_s.g else None))
        bw.add(Vertex(goal, c_g, q.k, grasp=config_grasp(w, goal) if c_g.g else None))
        ta, tb = fw, bw
        while time.perf_counter() < deadline and q.has_path():
            self.iterations += 1
            i = sample_tree(ta, self.rng, self.cfg.sample_weight_exponent)
            status, link = self.extend_from(ta, tb, i, q, deadline)
            q.remove_infeasible_edges(self.cfg.threshold_n)
            if status == REACHED:
                return (True, *self._extract(fw, bw, ta, link))
            ta, tb = tb, ta
        return False, None, None

    def _q_targets(self, q: GuidanceGraph, tree: SearchTree, v: Vertex) -> list:
        node = (v.level, v.label)
        if tree.direction > 0:
            return [(node, n) for n in q.successors(node)]
        return [(n, node) for n in q.predecessors(node)]

    @staticmethod
    def _q_neighbors(q: GuidanceGraph, node, direction: int) -> list:
        return q.successors(node) if direction > 0 else q.predecessors(node)

    def extend_from(self, ta: SearchTree, tb: SearchTree, i: int, q: GuidanceGraph, deadline: float):
        """Try to grow ``ta`` from vertex ``i`` along one guidance edge.

        Returns (status, link) where link describes the tree connection on REACHED.
        """
        v = ta.vertices[i]
        edges = self._q_targets(q, ta, v)
        if not edges:
            return FAILED, None
        edge = edges[int(self.rng.integers(len(edges)))]
        s = ta.direction
        nxt = edge[1] if s > 0 else edge[0]
        d1, c1 = nxt
        terminal = d1 == tb.root_level
        # 1. direct connection to a compatible opposite vertex at the next level
        for j in self._compatible(v, tb, d1, c1):
            seg = self._connect(v.config, tb.vertices[j].config, c1, v.label, s, deadline)
            if seg is not None:
                return REACHED, (i, j, [], seg)
            q.record_failure(edge)
            return FAILED, None
        if terminal:
            return FAILED, None
        # 2. bridge to an opposite vertex two levels away
        bridges = [(j, n2) for n2 in self._q_neighbors(q, nxt, s) for j in tb.at(n2[0], n2[1])]
        if bridges and self.rng.random() < self.cfg.bridge_prob:
            j, n2 = bridges[int(self.rng.integers(len(bridges)))]
            return self._bridge(ta, tb, i, j, edge, nxt, n2, q, deadline)
        # 3. fresh sample in the next class
        u = self._sample_next(v, c1)
        if u is None:
            q.record_failure(edge)
            return FAILED, None
        seg = self._connect(v.config, u[0], c1, v.label, s, deadline)
        if seg is None:
            q.record_failure(edge)
            return FAILED, None
        ta.add(Vertex(u[0], c1, d1, i, seg, u[1]))
        self.trace.append(("advance", s, d1, tuple(c1)))
        return ADVANCED, None

    # helpers ---------------------------------------------------------------
    def _compatible(self, v: Vertex, tb: SearchTree, level: int, label: TableNode) -> list[int]:
        kind = TRANSIT if edge_kind(v.label, label) == VERTICAL else TRANSFER
        out = []
        for j in tb.at(level, label):
            w = tb.vertices[j]
            if kind == TRANSIT and v.config.T.isclose(w.config.T, 1e-9):
                out.append(j)
            elif kind == TRANSFER and v.grasp is not None and w.grasp is not None and v.grasp.isclose(w.grasp, 1e-9):
                out.append(j)
        out.sort(key=lambda j: float(np.linalg.norm(tb.vertices[j].config.q - v.config.q)))
        return out

    def _connect(self, x: CompositeConfig, y: CompositeConfig, c_y: TableNode, c_x: TableNode, s: int,
                 deadline: float) -> SingleModePath | None:
        """Local plan between tree vertex ``x`` and new config ``y``, in execution order."""
        kind = TRANSIT if edge_kind(c_x, c_y) == VERTICAL else TRANSFER
        a, b = (x, y) if s > 0 else (y, x)
        try:
            return local_plan(self.world, a, b, kind, self.cfg, self.rng, deadline)
        except ConnectFailed:
            return None

    def _make_config(self, q_seed: np.ndarray, T: Transform, G: Transform) -> CompositeConfig | None:
        w = self.world
        sols = ik(w.robot, T.compose(G), self.cfg.ik_seeds, self.rng, q_init=q_seed, polish_tol=1e-10,
                  stop_on_first=True, max_iter=self.cfg.ik_max_iter)
        for qs in sols:
            if max(pose_error(w.robot, qs, T.compose(G))) > 1e-9:
                continue
            c = CompositeConfig(qs, T)
            width = grasp_width_of(w, G)
            if config_valid(w, c, G, None if width is None else min(w.gripper.max_opening,
                                                                     width + FINGER_CLEARANCE)):
                return c
        return None

    def _sample_next(self, v: Vertex, c1: TableNode):
        """Fresh configuration in class ``c1`` reachable from ``v`` by one single-mode path."""
        w = self.world
        if edge_kind(v.label, c1) == VERTICAL:
            gc = GraspClass.from_index(c1.g)
            params = sample_grasp(w.object, w.gripper, gc, self.rng)
            G = grasp_transform(w.object, w.gripper, gc, params)
            T = v.config.T
        else:
            G = v.grasp
            try:
                pp = sample_placement(w.object, c1.p, w.table, self.rng, w.placement_region)
                T = object_pose_from_placement(w.object, c1.p, pp, w.table)
            except OutOfTableBounds:
                return None
        c = self._make_config(v.config.q, T, G)
        return None if c is None else (c, G)

    def _bridge(self, ta: SearchTree, tb: SearchTree, i: int, j: int, edge, n1, n2, q: GuidanceGraph,
                deadline: float):
        v, wv = ta.vertices[i], tb.vertices[j]
        d1, c1 = n1
        s = ta.direction
        if edge_kind(v.label, c1) == VERTICAL:
            T, G = v.config.T, wv.grasp
        else:
            T, G = wv.config.T, v.grasp
        if G is None:
            return FAILED, None
        u = self._make_config(v.config.q, T, G)
        if u is None:
            q.record_failure(edge)
            return FAILED, None
        seg1 = self._connect(v.config, u, c1, v.label, s, deadline)
        if seg1 is None:
            q.record_failure(edge)
            return FAILED, None
        k = ta.add(Vertex(u, c1, d1, i, seg1, G))
        self.trace.append(("bridge", s, d1, tuple(c1)))
        seg2 = self._connect(u, wv.config, wv.label, c1, s, deadline)
        q_edge = (n1, n2) if s > 0 else (n2, n1)
        if seg2 is None:
            q.record_failure(q_edge)
            return ADVANCED, None
        return REACHED, (k, j, [], seg2)

    def _extract(self, fw: SearchTree, bw: SearchTree, ta: SearchTree, link):
        i, j, _, seg = link
        if ta is fw:
            fi, bj = i, j
        else:
            fi, bj = j, i
        f_branch = fw.branch(fi)[::-1]
        b_branch = bw.branch(bj)
        parts = [fw.vertices[x].segment for x in f_branch[1:]]
        parts.append(seg)
        parts += [bw.vertices[x].segment for x in b_branch[:-1]]
        seq = [fw.vertices[x].label for x in f_branch] + [bw.vertices[x].label for x in b_branch]
        path = reduce(compose_all(parts))
        return path, seq


def grasp_width_of(world: WorldModel, G: Transform) -> float | None:
    got = classify_grasp(world.object, world.gripper, G, 1e-6)
    if got is None:
        return None
    return grasp_width(world.object, GraspClass.from_index(got[0]), got[1])


def plan(world: WorldModel, start: CompositeConfig, goal: CompositeConfig, cfg: PlannerConfig = PlannerConfig(),
         table: GPTable | None = None) -> ManipulationPath:
    return GuidedPlanner(world, cfg, table).solve(start, goal).path


# ---------------------------------------------------------------------------
# validation


def audit_path(world: WorldModel, path: ManipulationPath, resolution: float = 0.0004) -> list[str]:
    """Re-check a manipulation path; returns a list of problems (empty when valid)."""
    problems = []
    kinds = path.kinds
    for a, b in zip(kinds, kinds[1:]):
        if a == b:
            problems.append("consecutive segments of the same kind")
    for n, seg in enumerate(path.segments):
        wps = seg.waypoints
        for c in wps:
            if not world.robot.within_limits(c.q):
                problems.append(f"segment {n}: joint limits violated")
                break
        if seg.kind == TRANSIT:
            if any(not wps[0].T.isclose(c.T, 1e-9) for c in wps):
                problems.append(f"segment {n}: object moved during transit")
            kw = dict(object_pose=wps[0].T, opening=transit_opening(world, wps[0], wps[-1]))
        else:
            G0 = config_grasp(world, wps[0])
            if any(not G0.isclose(config_grasp(world, c), 1e-6) for c in wps):
                problems.append(f"segment {n}: grasp changed during transfer")
            kw = dict(grasp=G0)
        for x, y in zip(wps, wps[1:]):
            if not edge_collision_free(world, x.q, y.q, seg.kind, resolution, **kw):
                problems.append(f"segment {n}: collision")
                break
    return problems
