"""Scene files, seeded benchmark runs and report generation."""
from __future__ import annotations

import csv
import io
import json
import statistics
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .geometry import Box, Transform
from .kinematics import RobotModel, WorldModel, load_robot
from .object_gripper import GripperModel, ObjectModel, PlacementParams, Table, object_pose_from_placement
from .paths import CompositeConfig, transitions
from .planner import GuidedPlanner, NoSolution, PlannerConfig

DEFAULT_TIMEOUT_S = 100.0


class ParseError(ValueError):
    """The scene file is not readable json."""


class ValidationError(ValueError):
    """The scene file is json but violates the schema; ``field`` names the offending path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


_vec3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_vec2 = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_pos3 = {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 3, "maxItems": 3}
_pos2 = {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 2, "maxItems": 2}
_pose = {"type": "object", "additionalProperties": False,
         "properties": {"quaternion_wxyz": {"type": "array", "items": {"type": "number"}, "minItems": 4,
                                            "maxItems": 4},
                        "translation_m": _vec3}}
_box = {"type": "object", "required": ["half_extents_m"], "additionalProperties": False,
        "properties": {"half_extents_m": _pos3, "pose": _pose}}
_table = {"type": "object", "required": ["size_m"], "additionalProperties": False,
          "properties": {"center_m": _vec2, "size_m": _pos2, "height_m": {"type": "number"},
                         "thickness_m": {"type": "number", "exclusiveMinimum": 0}}}
_endpoint = {
    "type": "object", "required": ["object"], "additionalProperties": False,
    "properties": {
        "q_rad": {"oneOf": [{"type": "array", "items": {"type": "number"}}, {"const": "home"}]},
        "object": {"oneOf": [
            {"type": "object", "required": ["placement_class"], "additionalProperties": False,
             "properties": {"placement_class": {"type": "integer", "minimum": 1}, "x_m": {"type": "number"},
                            "y_m": {"type": "number"}, "theta_rad": {"type": "number"}}},
            {"type": "object", "required": ["pose"], "additionalProperties": False, "properties": {"pose": _pose}},
        ]},
    },
}
_planner = {
    "type": "object", "additionalProperties": False,
    "properties": {"t_max_s": {"type": "number", "exclusiveMinimum": 0},
                   "threshold_n": {"type": "integer", "minimum": 1},
                   "delta": {"enum": [None, 1, 2]},
                   "seed": {"type": "integer", "minimum": 0},
                   "rrt_step_rad": {"type": "number", "exclusiveMinimum": 0},
                   "rrt_max_iter": {"type": "integer", "minimum": 1},
                   "sample_weight_exponent": {"type": "number"},
                   "bridge_prob": {"type": "number", "minimum": 0, "maximum": 1},
                   "resolution_rad": {"type": "number", "exclusiveMinimum": 0},
                   "n_slide": {"type": "integer", "minimum": 1}},
}
SCENE_SCHEMA = {
    "type": "object",
    "required": ["object", "table", "start", "goal"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "object": {"type": "object", "required": ["boxes"], "additionalProperties": False,
                   "properties": {"name": {"type": "string"},
                                  "boxes": {"type": "array", "items": _box, "minItems": 1}}},
        "gripper": {"type": "object", "additionalProperties": False,
                    "properties": {"max_opening_m": {"type": "number", "exclusiveMinimum": 0},
                                   "finger_length_m": {"type": "number", "exclusiveMinimum": 0},
                                   "finger_thickness_m": {"type": "number", "exclusiveMinimum": 0},
                                   "finger_width_m": {"type": "number", "exclusiveMinimum": 0},
                                   "palm_size_m": _pos3}},
        "robot_file": {"type": "string"},
        "home_q_rad": {"type": "array", "items": {"type": "number"}},
        "table": _table,
        "placement_region": _table,
        "obstacles": {"type": "array", "items": _box},
        "start": _endpoint,
        "goal": _endpoint,
        "planner": _planner,
    },
}

# scene-file names of PlannerConfig fields that carry a unit suffix
_UNIT_KEYS = {"t_max_s": "t_max", "rrt_step_rad": "rrt_step", "resolution_rad": "resolution"}


@dataclass(frozen=True, eq=False)
class Scene:
    name: str
    world: WorldModel
    start: CompositeConfig
    goal: CompositeConfig
    planner: dict = field(default_factory=dict)  # PlannerConfig overrides
    robot_file: str = "denso-like.json"

    def config(self, **overrides) -> PlannerConfig:
        kw = {"t_max": DEFAULT_TIMEOUT_S}
        kw.update(self.planner)
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return PlannerConfig(**kw)


def _field_path(err) -> str:
    out = "$"
    for part in err.absolute_path:
        out += f"[{part}]" if isinstance(part, int) else f".{part}"
    return out


def _resolve_robot(ref: str, base: Path | None) -> RobotModel:
    if base is not None and (base / ref).is_file():
        return load_robot(base / ref)
    if Path(ref).is_file():
        return load_robot(ref)
    bundled = resources.files("regrasp.data").joinpath(ref)
    if bundled.is_file():
        return RobotModel.from_dict(json.loads(bundled.read_text()))
    raise ValidationError("$.robot_file", f"robot file {ref!r} not found")


def _endpoint(d: dict, key: str, obj: ObjectModel, table: Table, robot: RobotModel, home) -> CompositeConfig:
    o = d["object"]
    if "pose" in o:
        T = Transform.from_dict(o["pose"])
    else:
        p = o["placement_class"]
        if p > len(obj.placement_classes):
            raise ValidationError(f"$.{key}.object.placement_class",
                                  f"object has only {len(obj.placement_classes)} placement classes")
        pp = PlacementParams(o.get("x_m", table.center[0]), o.get("y_m", table.center[1]), o.get("theta_rad", 0.0))
        T = object_pose_from_placement(obj, p, pp, table)
    q = d.get("q_rad", "home")
    if isinstance(q, str):
        if home is None:
            raise ValidationError(f"$.{key}.q_rad", "'home' used but no home configuration is defined")
        q = home
    q = np.asarray(q, float)
    if q.shape != (robot.n,):
        raise ValidationError(f"$.{key}.q_rad", f"expected {robot.n} joint values, got {q.size}")
    if not robot.within_limits(q):
        raise ValidationError(f"$.{key}.q_rad", "configuration violates joint limits")
    return CompositeConfig(q, T)


def parse_scene(doc: dict, base: Path | None = None) -> Scene:
    """Validate a scene document and build the world and query."""
    errors = sorted(jsonschema.Draft202012Validator(SCENE_SCHEMA).iter_errors(doc), key=_field_path)
    if errors:
        e = errors[0]
        raise ValidationError(_field_path(e), e.message)
    obj = ObjectModel.from_dict({"name": doc["object"].get("name", doc.get("name", "object")),
                                 "boxes": doc["object"]["boxes"]})
    gripper = GripperModel.from_dict(doc.get("gripper", {}))
    ref = doc.get("robot_file", "denso-like.json")
    robot = _resolve_robot(ref, base)
    table = Table.from_dict(doc["table"])
    region = Table.from_dict(doc["placement_region"]) if "placement_region" in doc else None
    obstacles = [Box(b["half_extents_m"], Transform.from_dict(b.get("pose", {}))) for b in doc.get("obstacles", [])]
    home = doc.get("home_q_rad", None if robot.home is None else robot.home.tolist())
    if home is not None and len(home) != robot.n:
        raise ValidationError("$.home_q_rad", f"expected {robot.n} joint values, got {len(home)}")
    world = WorldModel(robot, gripper, table, obj, obstacles, region)
    start = _endpoint(doc["start"], "start", obj, table, robot, home)
    goal = _endpoint(doc["goal"], "goal", obj, table, robot, home)
    planner = {_UNIT_KEYS.get(k, k): v for k, v in doc.get("planner", {}).items()}
    return Scene(doc.get("name", obj.name), world, start, goal, planner, ref)


def bundled_scenes() -> list[str]:
    root = resources.files("regrasp.data").joinpath("scenes")
    return sorted(p.name.removesuffix(".scene.json") for p in root.iterdir() if p.name.endswith(".scene.json"))


def load_scene(path: str | Path) -> Scene:
    """Read a scene file; a bare bundled name such as ``box`` also works."""
    p = Path(path)
    if p.is_file():
        text, base = p.read_text(), p.parent
    else:
        name = p.name.removesuffix(".scene.json")
        bundled = resources.files("regrasp.data").joinpath("scenes", f"{name}.scene.json")
        if not bundled.is_file():
            raise FileNotFoundError(f"scene file {path} does not exist")
        text, base = bundled.read_text(), None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: {e}") from e
    return parse_scene(doc, base)


def _endpoint_dict(c: CompositeConfig) -> dict:
    return {"q_rad": c.q.tolist(), "object": {"pose": c.T.to_dict()}}


def serialize_scene(scene: Scene) -> dict:
    w = scene.world
    inv = {v: k for k, v in _UNIT_KEYS.items()}
    doc = {
        "name": scene.name,
        "object": w.object.to_dict(),
        "gripper": w.gripper.to_dict(),
        "robot_file": scene.robot_file,
        "table": w.table.to_dict(),
        "obstacles": [{"half_extents_m": b.half_extents.tolist(), "pose": b.local_pose.to_dict()} for b in w.obstacles],
        "start": _endpoint_dict(scene.start),
        "goal": _endpoint_dict(scene.goal),
        "planner": {inv.get(k, k): v for k, v in scene.planner.items()},
    }
    if w.placement_region is not None:
        doc["placement_region"] = w.placement_region.to_dict()
    return doc


# ---------------------------------------------------------------------------
# benchmark


def planner_classes() -> dict:
    from .baselines import DiscretePlanner, PrimitivePlanner
    return {"guided": GuidedPlanner, "pmp": PrimitivePlanner, "dbmp": DiscretePlanner}


def solve_scene(scene: Scene, algo: str, cfg: PlannerConfig):
    """Run one planner on the scene query; returns the PlanResult or raises NoSolution."""
    planner = planner_classes()[algo](scene.world, cfg)
    return planner.solve(scene.start, scene.goal)


@dataclass
class RunRecord:
    planner: str
    seed: int
    prep_time_s: float
    plan_time_s: float
    transitions: int | None
    success: bool
    path_file: str | None = None

    def __post_init__(self):
        if self.success != (self.transitions is not None):
            raise ValueError("transitions must be present exactly for successful runs")


def trial_seeds(master_seed: int, trials: int) -> list[int]:
    children = np.random.SeedSequence(master_seed).spawn(trials)
    return [int(c.generate_state(1)[0]) for c in children]


def run_benchmark(scene: Scene, planners, trials: int, budget: float | None = None, seed: int = 0,
                  out_dir: str | Path | None = None, progress=None) -> tuple[list[RunRecord], dict]:
    """Run every planner ``trials`` times; every planner sees the same per-trial seeds."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    records = []
    for n, s in enumerate(trial_seeds(seed, trials)):
        for algo in planners:
            cfg = scene.config(t_max=budget, seed=s)
            t0 = time.perf_counter()
            try:
                r = solve_scene(scene, algo, cfg)
            except NoSolution:
                rec = RunRecord(algo, s, 0.0, time.perf_counter() - t0, None, False)
            else:
                ref = None
                if out_dir is not None:
                    ref = str(Path(out_dir) / f"{algo}-{n:03d}.path.json")
                    Path(ref).parent.mkdir(parents=True, exist_ok=True)
                    Path(ref).write_text(r.path.to_json())
                rec = RunRecord(algo, s, r.prep_time, r.plan_time, transitions(r.path), True, ref)
            records.append(rec)
            if progress is not None:
                progress(n, rec)
    return records, summarize(records)


def summarize(records: list[RunRecord]) -> dict:
    """Per planner: success rate and means over successful runs (None when there are none)."""
    out = {}
    for algo in dict.fromkeys(r.planner for r in records):
        rs = [r for r in records if r.planner == algo]
        ok = [r for r in rs if r.success]
        mean = (lambda xs: statistics.fmean(xs)) if ok else (lambda xs: None)
        out[algo] = {
            "runs": len(rs),
            "success_rate": len(ok) / len(rs),
            "prep_time_s": mean([r.prep_time_s for r in ok]),
            "plan_time_s": mean([r.plan_time_s for r in ok]),
            "median_plan_time_s": statistics.median([r.plan_time_s for r in ok]) if ok else None,
            "transitions": mean([r.transitions for r in ok]),
        }
    return out


CSV_COLUMNS = ["planner", "seed", "prep_time_s", "plan_time_s", "transitions", "success"]


def emit_report(records: list[RunRecord], fmt: str = "csv") -> str:
    if not records:
        raise ValueError("no records to report")
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow([r.planner, r.seed, f"{r.prep_time_s:.6f}", f"{r.plan_time_s:.6f}",
                        "" if r.transitions is None else r.transitions, int(r.success)])
        return buf.getvalue()
    if fmt == "markdown":
        def cell(v, spec):
            return "n/a" if v is None else format(v, spec)

        lines = ["| planner | prep. time (s) | plan. time (s) | # transitions | success rate |",
                 "|---|---|---|---|---|"]
        for algo, s in summarize(records).items():
            lines.append(f"| {algo} | {cell(s['prep_time_s'], '.2f')} | {cell(s['plan_time_s'], '.2f')} | "
                         f"{cell(s['transitions'], '.2f')} | {s['success_rate'] * 100:.0f}% |")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def read_csv_records(text: str) -> list[RunRecord]:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        ok = row["success"] == "1"
        out.append(RunRecord(row["planner"], int(row["seed"]), float(row["prep_time_s"]), float(row["plan_time_s"]),
                             int(row["transitions"]) if ok else None, ok))
    return out


def with_query(scene: Scene, start: CompositeConfig | None = None, goal: CompositeConfig | None = None) -> Scene:
    return replace(scene, start=start or scene.start, goal=goal or scene.goal)
