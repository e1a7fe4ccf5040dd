"""Task plans over the grasp-placement table and the levelled guidance graph."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .gp_table import GPTable, TableNode, UnknownNode, edge_kind


class Disconnected(RuntimeError):
    pass


class MixedPlanLengths(ValueError):
    pass


class UnknownEdge(KeyError):
    pass


@dataclass(frozen=True)
class TaskPlan:
    nodes: tuple

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(TableNode(*n) for n in self.nodes))

    @property
    def k(self) -> int:
        return len(self.nodes) - 1

    def edge_kinds(self) -> list[str]:
        return [edge_kind(a, b) for a, b in zip(self.nodes, self.nodes[1:])]

    def __str__(self):
        return " -> ".join(str(n) for n in self.nodes)


def _bfs(table: GPTable, src: TableNode) -> dict:
    dist = {src: 0}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for v in table.neighbors(u):
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def shortest_plan_length(table: GPTable, a, b) -> int:
    a, b = TableNode(*a), TableNode(*b)
    for n in (a, b):
        if n not in table.nodes:
            raise UnknownNode(n)
    dist = _bfs(table, a)
    if b not in dist:
        raise Disconnected(f"no task plan from {a} to {b}")
    return dist[b]


def plans_of_length(table: GPTable, k: int, a, b) -> list[TaskPlan]:
    """All simple plans with exactly ``k`` edges whose edge orientations alternate.

    Plans are returned in lexicographic order of their node sequences.
    """
    a, b = TableNode(*a), TableNode(*b)
    if k < 0 or a not in table.nodes or b not in table.nodes:
        return []
    to_goal = _bfs(table, b)
    if a not in to_goal:
        return []
    adj = {n: sorted(table.neighbors(n)) for n in table.nodes}
    out: list[TaskPlan] = []
    path = [a]
    on_path = {a}

    def dfs(u: TableNode, last_kind: str | None, left: int):
        if left == 0:
            if u == b:
                out.append(TaskPlan(tuple(path)))
            return
        for v in adj[u]:
            if v in on_path or to_goal.get(v, left + 1) > left - 1:
                continue
            kind = edge_kind(u, v)
            if kind == last_kind:
                continue
            path.append(v)
            on_path.add(v)
            dfs(v, kind, left - 1)
            path.pop()
            on_path.discard(v)

    dfs(a, None, k)
    return out


# ---------------------------------------------------------------------------
# guidance graph


@dataclass
class GuidanceGraph:
    """Directed levelled graph; node ``(d, c)`` means table node ``c`` at step ``d``."""

    k: int = 0
    start: tuple | None = None
    goal: tuple | None = None
    succ: dict = field(default_factory=dict)
    pred: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    @property
    def nodes(self) -> set:
        return set(self.succ)

    @property
    def edges(self) -> list:
        return sorted((u, v) for u, vs in self.succ.items() for v in vs)

    def successors(self, n) -> list:
        return sorted(self.succ.get(n, ()))

    def predecessors(self, n) -> list:
        return sorted(self.pred.get(n, ()))

    def has_path(self) -> bool:
        if self.start is None or self.start not in self.succ or self.goal not in self.succ:
            return False
        seen = {self.start}
        stack = [self.start]
        while stack:
            u = stack.pop()
            if u == self.goal:
                return True
            for v in self.succ[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return False

    def record_failure(self, edge) -> int:
        self.failures[edge] = self.failures.get(edge, 0) + 1
        return self.failures[edge]

    def remove_edge(self, edge) -> "GuidanceGraph":
        u, v = edge
        if v not in self.succ.get(u, ()):
            raise UnknownEdge(edge)
        self.succ[u].discard(v)
        self.pred[v].discard(u)
        self.failures.pop(edge, None)
        self._prune()
        return self

    def remove_infeasible_edges(self, threshold: int) -> list:
        bad = [e for e, n in self.failures.items() if n > threshold and e[1] in self.succ.get(e[0], ())]
        for e in sorted(bad):
            if e[1] in self.succ.get(e[0], ()):
                self.remove_edge(e)
        return bad

    def _prune(self):
        """Drop nodes that are no longer on any start-to-goal path."""
        fwd = self._reach(self.start, self.succ)
        bwd = self._reach(self.goal, self.pred)
        keep = fwd & bwd
        if not keep:
            # keep the two endpoints so callers can still inspect the query
            keep = {n for n in (self.start, self.goal) if n is not None}
        for n in list(self.succ):
            if n not in keep:
                for v in self.succ.pop(n):
                    self.pred.get(v, set()).discard(n)
                for u in self.pred.pop(n):
                    self.succ.get(u, set()).discard(n)
        for n in keep:
            self.succ.setdefault(n, set())
            self.pred.setdefault(n, set())
            self.succ[n] &= keep
            self.pred[n] &= keep
        self.failures = {e: c for e, c in self.failures.items() if e[1] in self.succ.get(e[0], ())}

    @staticmethod
    def _reach(src, adj) -> set:
        if src is None or src not in adj:
            return set()
        seen = {src}
        stack = [src]
        while stack:
            u = stack.pop()
            for v in adj.get(u, ()):
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return seen

    def level_paths(self) -> list[TaskPlan]:
        """Enumerate all level-monotone start-to-goal paths as task plans."""
        if not self.has_path():
            return []
        out = []

        def walk(u, acc):
            if u == self.goal:
                out.append(TaskPlan(tuple(c for _, c in acc)))
                return
            for v in self.successors(u):
                walk(v, acc + [v])

        walk(self.start, [self.start])
        return sorted(out, key=lambda p: p.nodes)

    def to_dict(self) -> dict:
        return {"k": self.k,
                "nodes": [[d, list(c)] for d, c in sorted(self.nodes)],
                "edges": [[[u[0], list(u[1])], [v[0], list(v[1])]] for u, v in self.edges]}


def build_guidance_graph(plans) -> GuidanceGraph:
    plans = list(plans)
    if not plans:
        return GuidanceGraph()
    ks = {p.k for p in plans}
    if len(ks) != 1:
        raise MixedPlanLengths(f"plans have different lengths: {sorted(ks)}")
    if len({p.nodes[0] for p in plans}) != 1 or len({p.nodes[-1] for p in plans}) != 1:
        raise MixedPlanLengths("plans do not share their endpoints")
    k = ks.pop()
    q = GuidanceGraph(k=k, start=(0, plans[0].nodes[0]), goal=(k, plans[0].nodes[-1]))
    for plan in plans:
        levelled = list(enumerate(plan.nodes))
        for n in levelled:
            q.succ.setdefault(n, set())
            q.pred.setdefault(n, set())
        for u, v in zip(levelled, levelled[1:]):
            q.succ[u].add(v)
            q.pred[v].add(u)
    return q


def remove_edge(q: GuidanceGraph, e) -> GuidanceGraph:
    return q.remove_edge(e)


def has_path(q: GuidanceGraph) -> bool:
    return q.has_path()
