"""Single-mode paths and their composition into manipulation paths.

A manipulation path is a sequence of transit/transfer segments.  Its domain
is ``[0, |M|]``; segment ``i`` occupies ``[i, i + 1]`` and is parameterized
uniformly by waypoint index, so evaluation depends only on the waypoint
lists and composition stays exactly associative.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import Transform

TRANSIT = "transit"
TRANSFER = "transfer"
KINDS = (TRANSIT, TRANSFER)

ENDPOINT_TOL = 1e-9


class EndpointMismatch(ValueError):
    pass


class NotIrreducible(ValueError):
    pass


class OutOfDomain(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CompositeConfig:
    """Robot joint vector ``q`` together with the object pose ``T``."""

    q: np.ndarray
    T: Transform

    def __post_init__(self):
        q = np.array(self.q, dtype=float).reshape(-1)
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    def isclose(self, other: "CompositeConfig", atol: float = ENDPOINT_TOL) -> bool:
        return (self.q.shape == other.q.shape and bool(np.all(np.abs(self.q - other.q) <= atol))
                and self.T.isclose(other.T, atol))

    def to_dict(self) -> dict:
        return {"q_rad": [float(v) for v in self.q], "T": self.T.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "CompositeConfig":
        return cls(d["q_rad"], Transform.from_dict(d["T"]))

    def __repr__(self):
        return f"CompositeConfig(q={np.round(self.q, 4).tolist()}, T={self.T!r})"


def _slerp(qa: np.ndarray, qb: np.ndarray, u: float) -> np.ndarray:
    d = float(np.dot(qa, qb))
    if d < 0:
        qb, d = -qb, -d
    if d > 1.0 - 1e-12:
        q = qa + u * (qb - qa)
    else:
        th = np.arccos(min(d, 1.0))
        q = (np.sin((1 - u) * th) * qa + np.sin(u * th) * qb) / np.sin(th)
    return q / np.linalg.norm(q)


def interpolate(a: CompositeConfig, b: CompositeConfig, u: float) -> CompositeConfig:
    if u <= 0.0:
        return a
    if u >= 1.0:
        return b
    q = a.q + u * (b.q - a.q)
    rot = _slerp(a.T.rotation, b.T.rotation, u)
    t = a.T.translation + u * (b.T.translation - a.T.translation)
    return CompositeConfig(q, Transform(rot, t))


@dataclass(frozen=True)
class SingleModePath:
    kind: str
    waypoints: tuple

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown path kind {self.kind!r}")
        wps = tuple(self.waypoints)
        if not wps:
            raise ValueError("a single-mode path needs at least one waypoint")
        object.__setattr__(self, "waypoints", wps)

    @property
    def start(self) -> CompositeConfig:
        return self.waypoints[0]

    @property
    def end(self) -> CompositeConfig:
        return self.waypoints[-1]

    def __call__(self, u: float) -> CompositeConfig:
        if not 0.0 <= u <= 1.0:
            raise OutOfDomain(f"{u} outside [0, 1]")
        n = len(self.waypoints) - 1
        if n == 0:
            return self.waypoints[0]
        x = u * n
        i = min(int(np.floor(x)), n - 1)
        return interpolate(self.waypoints[i], self.waypoints[i + 1], x - i)

    def reversed(self) -> "SingleModePath":
        return SingleModePath(self.kind, self.waypoints[::-1])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "waypoints": [w.to_dict() for w in self.waypoints]}

    @classmethod
    def from_dict(cls, d: dict) -> "SingleModePath":
        return cls(d["kind"], tuple(CompositeConfig.from_dict(w) for w in d["waypoints"]))


def pose_deviation(a: Transform, b: Transform) -> float:
    return float(np.max(np.abs(a.matrix() - b.matrix())))


def mode_deviation(seg: SingleModePath, tool_poses: Sequence[Transform] | None = None) -> float:
    """Largest violation of the segment's constancy invariant.

    Transit: object pose drift.  Transfer: drift of the object-to-gripper
    transform, which needs the tool pose of every waypoint.
    """
    if seg.kind == TRANSIT:
        T0 = seg.waypoints[0].T
        return max(pose_deviation(T0, w.T) for w in seg.waypoints)
    if tool_poses is None:
        raise ValueError("transfer deviation needs tool poses")
    grasps = [w.T.inverse().compose(F) for w, F in zip(seg.waypoints, tool_poses)]
    return max(pose_deviation(grasps[0], g) for g in grasps)


@dataclass(frozen=True)
class ManipulationPath:
    segments: tuple = ()
    # configuration of an empty path (start equals goal)
    anchor: CompositeConfig | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        for a, b in zip(self.segments, self.segments[1:]):
            if not a.end.isclose(b.start):
                raise EndpointMismatch("consecutive segments do not meet")

    @property
    def domain_length(self) -> int:
        return len(self.segments)

    def __len__(self) -> int:
        return self.domain_length

    @property
    def kinds(self) -> list[str]:
        return [s.kind for s in self.segments]

    @property
    def start(self) -> CompositeConfig:
        return self.segments[0].start if self.segments else self.anchor

    @property
    def end(self) -> CompositeConfig:
        return self.segments[-1].end if self.segments else self.anchor

    def is_irreducible(self) -> bool:
        k = self.kinds
        return all(a != b for a, b in zip(k, k[1:]))

    def to_dict(self) -> dict:
        d = {"domain_length": self.domain_length, "segments": [s.to_dict() for s in self.segments]}
        if not self.segments and self.anchor is not None:
            d["anchor"] = self.anchor.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ManipulationPath":
        anchor = CompositeConfig.from_dict(d["anchor"]) if d.get("anchor") else None
        return cls(tuple(SingleModePath.from_dict(s) for s in d["segments"]), anchor)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def as_path(p) -> ManipulationPath:
    if isinstance(p, ManipulationPath):
        return p
    if isinstance(p, SingleModePath):
        return ManipulationPath((p,))
    raise TypeError(f"cannot compose {type(p).__name__}")


def _merge(a: SingleModePath, b: SingleModePath) -> SingleModePath:
    return SingleModePath(a.kind, a.waypoints + b.waypoints[1:])


def compose(p1, p2) -> ManipulationPath:
    """Concatenate two paths; same-type segments meeting at the junction merge."""
    a, b = as_path(p1), as_path(p2)
    if a.end is not None and b.start is not None and not a.end.isclose(b.start):
        raise EndpointMismatch("end of the first path differs from start of the second")
    if not a.segments:
        return b if b.segments or b.anchor is not None else ManipulationPath((), a.anchor)
    if not b.segments:
        return a
    left, right = list(a.segments), list(b.segments)
    if left[-1].kind == right[0].kind:
        left[-1] = _merge(left[-1], right.pop(0))
    return ManipulationPath(tuple(left + right))


def compose_all(parts) -> ManipulationPath:
    """Left fold of :func:`compose`."""
    parts = list(parts)
    if not parts:
        return ManipulationPath()
    out = as_path(parts[0])
    for p in parts[1:]:
        out = compose(out, p)
    return out


def reduce(m: ManipulationPath) -> ManipulationPath:
    """Merge neighbouring same-type segments so kinds strictly alternate."""
    if not m.segments:
        return m
    out = [m.segments[0]]
    for s in m.segments[1:]:
        if s.kind == out[-1].kind:
            out[-1] = _merge(out[-1], s)
        else:
            out.append(s)
    return ManipulationPath(tuple(out), m.anchor)


def transitions(m: ManipulationPath) -> int:
    if not m.is_irreducible():
        raise NotIrreducible(f"kinds do not alternate: {m.kinds}")
    return max(0, m.domain_length - 1)


def evaluate(m: ManipulationPath, s: float) -> CompositeConfig:
    n = m.domain_length
    if n == 0:
        if s != 0 or m.anchor is None:
            raise OutOfDomain("empty path is only defined at s = 0")
        return m.anchor
    if not 0.0 <= s <= n:
        raise OutOfDomain(f"{s} outside [0, {n}]")
    i = min(int(np.floor(s)), n - 1)
    return m.segments[i](s - i)


def dumps(m: ManipulationPath) -> str:
    return m.to_json()


def loads(doc: str) -> ManipulationPath:
    return ManipulationPath.from_dict(json.loads(doc))
