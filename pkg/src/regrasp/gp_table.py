"""High-level grasp-placement table.

Nodes are ``(placement class, grasp class)`` pairs.  Two distinct nodes are
adjacent when they share the placement class (a *vertical* edge, realized by a
transit path) or the grasp class (a *horizontal* edge, realized by a transfer
path).  Index 0 marks the special query nodes for configurations that lie only
in P (grasp 0) or only in G (placement 0).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .geometry import Transform, sat_overlap
from .object_gripper import (GraspClass, GripperModel, ObjectModel, PlacementParams, Table, grasp_transform,
                             grasp_width, gripper_pose, object_pose_from_placement, sweep_grasps)


class UnknownNode(KeyError):
    pass


class UnclassifiableConfig(ValueError):
    pass


class TableNode(NamedTuple):
    p: int
    g: int

    def __str__(self):
        return f"({self.p},{self.g})"


VERTICAL = "vertical"
HORIZONTAL = "horizontal"


def edge_kind(a: TableNode, b: TableNode) -> str | None:
    """Orientation of the table edge between ``a`` and ``b`` (None if not adjacent)."""
    if a == b:
        return None
    if a.p == b.p and a.p != 0:
        return VERTICAL
    if a.g == b.g and a.g != 0:
        return HORIZONTAL
    return None


@dataclass(frozen=True)
class GPTable:
    nodes: frozenset
    num_placement_classes: int
    num_grasp_classes: int
    # per-node self-loops: both kinds exist for every node
    self_loops: tuple = ("transit", "transfer")

    def __post_init__(self):
        nodes = frozenset(TableNode(*n) for n in self.nodes)
        for n in nodes:
            if n.p == 0 and n.g == 0:
                raise ValueError("node (0, 0) is not allowed")
        object.__setattr__(self, "nodes", nodes)

    def __contains__(self, n) -> bool:
        return TableNode(*n) in self.nodes

    def __len__(self) -> int:
        return len(self.nodes)

    def sorted_nodes(self) -> list[TableNode]:
        return sorted(self.nodes)

    def column(self, p: int) -> list[TableNode]:
        return sorted(n for n in self.nodes if n.p == p)

    def row(self, g: int) -> list[TableNode]:
        return sorted(n for n in self.nodes if n.g == g)

    def neighbors(self, n) -> set:
        n = TableNode(*n)
        if n not in self.nodes:
            raise UnknownNode(n)
        return {m for m in self.nodes if edge_kind(n, m) is not None}

    def edges(self) -> list[tuple[TableNode, TableNode, str]]:
        nodes = self.sorted_nodes()
        out = []
        for a_i, a in enumerate(nodes):
            for b in nodes[a_i + 1:]:
                k = edge_kind(a, b)
                if k:
                    out.append((a, b, k))
        return out

    def with_nodes(self, extra: Iterable) -> "GPTable":
        return GPTable(self.nodes | {TableNode(*n) for n in extra}, self.num_placement_classes,
                       self.num_grasp_classes)

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return {"num_placement_classes": self.num_placement_classes,
                "num_grasp_classes": self.num_grasp_classes,
                "nodes": [list(n) for n in self.sorted_nodes()],
                "edges": [[list(a), list(b), k] for a, b, k in self.edges()],
                "self_loops": list(self.self_loops)}

    @classmethod
    def from_dict(cls, d: dict) -> "GPTable":
        return cls(frozenset(TableNode(*n) for n in d["nodes"]), int(d["num_placement_classes"]),
                   int(d["num_grasp_classes"]))


def neighbors(table: GPTable, n) -> set:
    return table.neighbors(n)


# ---------------------------------------------------------------------------
# construction


def _gripper_table_hits(gripper: GripperModel, R: np.ndarray, t: np.ndarray, widths: np.ndarray,
                        table: Table) -> np.ndarray:
    """Batched gripper/table overlap for gripper poses ``R`` (K, 3, 3), ``t`` (K, 3)."""
    K = len(t)
    fl = gripper.finger_length
    pz = gripper.palm_size[2]
    off = widths / 2.0 + gripper.finger_thickness / 2.0
    local = np.zeros((K, 3, 3))
    local[:, 0, 2] = -fl - pz / 2.0
    local[:, 1, 0], local[:, 1, 2] = off, -fl / 2.0
    local[:, 2, 0], local[:, 2, 2] = -off, -fl / 2.0
    c = (local @ R.transpose(0, 2, 1)) + t[:, None, :]
    h = np.array([b.half_extents for b in gripper.boxes(0.0)])
    tb, tp = table.box, table.pose
    hits = sat_overlap(c.reshape(-1, 3), np.repeat(R, 3, axis=0), np.tile(h, (K, 1)),
                       np.broadcast_to(tp.translation, (3 * K, 3)), np.broadcast_to(tp.R, (3 * K, 3, 3)),
                       tb.half_extents)
    return hits.reshape(K, 3).any(axis=1)


def gripper_hits_table(gripper: GripperModel, pose: Transform, width: float, table: Table) -> bool:
    return bool(_gripper_table_hits(gripper, pose.R[None], pose.translation[None], np.array([width]), table)[0])


def object_grasp_sweep(obj: ObjectModel, gripper: GripperModel, n_slide: int = 11):
    """Every swept grasp as (class index, params, gripper pose in the object frame, width)."""
    out = []
    for g in range(1, obj.num_grasp_classes + 1):
        gc = GraspClass.from_index(g)
        for params in sweep_grasps(obj, gripper, gc, n_slide):
            out.append((g, params, grasp_transform(obj, gripper, gc, params), grasp_width(obj, gc, params)))
    return out


def feasible_grasp_params(obj: ObjectModel, gripper: GripperModel, table: Table, object_pose: Transform,
                          gc: GraspClass, n_slide: int = 11):
    """First swept grasp parameter set of class ``gc`` whose gripper clears the table, or None."""
    for params in sweep_grasps(obj, gripper, gc, n_slide):
        pose = gripper_pose(obj, gripper, object_pose, gc, params)
        if not gripper_hits_table(gripper, pose, grasp_width(obj, gc, params), table):
            return params
    return None


def build_table(obj: ObjectModel, gripper: GripperModel, table: Table | None = None,
                nominal: PlacementParams | None = None, n_slide: int = 11) -> GPTable:
    """Build the grasp-placement table from gripper/table collision checks only."""
    table = table or Table(size=(2.0, 2.0))
    nominal = nominal or PlacementParams(table.center[0], table.center[1], 0.0)
    sweep = object_grasp_sweep(obj, gripper, n_slide)
    nodes = set()
    if not sweep:
        return GPTable(frozenset(), len(obj.placement_classes), obj.num_grasp_classes)
    g_idx = np.array([s[0] for s in sweep])
    GR = np.array([s[2].R for s in sweep])
    Gt = np.array([s[2].translation for s in sweep])
    widths = np.array([s[3] for s in sweep])
    for pc in obj.placement_classes:
        T = object_pose_from_placement(obj, pc, nominal, table)
        clear = ~_gripper_table_hits(gripper, T.R @ GR, Gt @ T.R.T + T.translation, widths, table)
        nodes.update(TableNode(pc.index, int(g)) for g in np.unique(g_idx[clear]))
    return GPTable(frozenset(nodes), len(obj.placement_classes), obj.num_grasp_classes)


def add_query_nodes(table: GPTable, start, goal) -> GPTable:
    """Add the special (p, 0) / (0, g) nodes for query endpoints.

    ``start`` and ``goal`` are classified nodes (p, g); a zero index marks a
    configuration lying only in P (g = 0) or only in G (p = 0).
    """
    extra = []
    for n in (start, goal):
        n = TableNode(*n)
        if n.p == 0 and n.g == 0:
            raise UnclassifiableConfig("configuration is in neither P nor G")
        if n not in table.nodes:
            extra.append(n)
    return table.with_nodes(extra) if extra else table


# ---------------------------------------------------------------------------
# export


def export_table(table: GPTable, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(table.to_dict(), indent=2)
    if fmt in ("grid", "grid-text"):
        return _grid_text(table)
    if fmt == "svg":
        return _svg(table)
    raise ValueError(f"unknown table format {fmt!r}")


def import_table(doc: str) -> GPTable:
    return GPTable.from_dict(json.loads(doc))


def _grid_text(table: GPTable) -> str:
    """Rows are grasp classes (top = highest), columns placement classes."""
    ps = range(0 if any(n.p == 0 for n in table.nodes) else 1, table.num_placement_classes + 1)
    gs = range(0 if any(n.g == 0 for n in table.nodes) else 1, table.num_grasp_classes + 1)
    width = max(2, len(str(table.num_grasp_classes)))
    lines = []
    for g in reversed(gs):
        cells = ["o" if (p, g) in table else "." for p in ps]
        lines.append(f"{g:>{width}} | " + "  ".join(cells))
    lines.append(" " * width + " +-" + "-" * (3 * len(ps) - 2))
    lines.append(" " * width + "   " + "  ".join(str(p % 10) for p in ps))
    return "\n".join(lines) + "\n"


def _svg(table: GPTable, cell: int = 24) -> str:
    P, G = table.num_placement_classes, table.num_grasp_classes
    w, h = (P + 2) * cell, (G + 2) * cell

    def xy(p, g):
        return (p + 1) * cell, h - (g + 1) * cell

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">']
    for p in range(1, P + 1):
        x, _ = xy(p, 0)
        parts.append(f'<line x1="{x}" y1="{cell}" x2="{x}" y2="{h - cell}" stroke="#ccc"/>')
        parts.append(f'<text x="{x}" y="{h - 4}" font-size="10" text-anchor="middle">{p}</text>')
    for g in range(1, G + 1):
        _, y = xy(0, g)
        parts.append(f'<line x1="{cell}" y1="{y}" x2="{w - cell}" y2="{y}" stroke="#eee"/>')
    for g in range(1, G + 1):
        row = table.row(g)
        if len(row) > 1:
            (x1, y1), (x2, y2) = xy(row[0].p, g), xy(row[-1].p, g)
            parts.append(f'<line x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" stroke="teal" stroke-width="3"/>')
    for p in range(0, P + 1):
        col = table.column(p)
        if len(col) > 1:
            (x1, y1), (x2, y2) = xy(p, col[0].g), xy(p, col[-1].g)
            parts.append(f'<line x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" stroke="teal" stroke-width="3"/>')
    for n in table.sorted_nodes():
        x, y = xy(n.p, n.g)
        parts.append(f'<circle cx="{x}" cy="{y}" r="4" fill="black"><title>{n}</title></circle>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# comparison with reference tables (index relabeling)


def match_relabeling(nodes, reference) -> dict | None:
    """Find placement/grasp relabelings mapping ``nodes`` onto ``reference``.

    Returns ``{"placement": {ours: theirs}, "grasp": {ours: theirs}}`` or None.
    Placement permutations are enumerated; grasp rows are then matched by
    their column signatures.
    """
    from itertools import permutations

    ours = {TableNode(*n) for n in nodes}
    ref = {TableNode(*n) for n in reference}
    if len(ours) != len(ref):
        return None
    P_o = sorted({n.p for n in ours})
    P_r = sorted({n.p for n in ref})
    if len(P_o) != len(P_r):
        return None

    def rows(ns, pmap=None):
        sig = {}
        for n in ns:
            p = pmap[n.p] if pmap else n.p
            sig.setdefault(n.g, set()).add(p)
        return {g: frozenset(s) for g, s in sig.items()}

    ref_rows = rows(ref)
    # prefer keeping grasp indices fixed
    for perm in permutations(P_r):
        pmap = dict(zip(P_o, perm))
        if rows(ours, pmap) == ref_rows:
            return {"placement": pmap, "grasp": {g: g for g in ref_rows}}
    for perm in permutations(P_r):
        pmap = dict(zip(P_o, perm))
        our_rows = rows(ours, pmap)
        if sorted(map(sorted, our_rows.values())) != sorted(map(sorted, ref_rows.values())):
            continue
        gmap = {}
        pool = {}
        for g, s in ref_rows.items():
            pool.setdefault(s, []).append(g)
        for s in pool.values():
            s.sort()
        for g in sorted(our_rows):
            gmap[g] = pool[our_rows[g]].pop(0)
        return {"placement": pmap, "grasp": gmap}
    return None
