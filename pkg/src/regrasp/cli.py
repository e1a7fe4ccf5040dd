"""Command line entry point: ``regrasp table|plan|bench|export``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from .gp_table import UnclassifiableConfig, add_query_nodes, build_table, export_table
from .harness import (DEFAULT_TIMEOUT_S, ParseError, ValidationError, _endpoint, emit_report, load_scene,
                      run_benchmark, solve_scene, with_query)
from .paths import evaluate, loads, transitions
from .planner import NoSolution, choose_path_length_increment, classify_config
from .task_plans import Disconnected, build_guidance_graph, plans_of_length, shortest_plan_length

EXIT_OK, EXIT_NO_SOLUTION, EXIT_INVALID = 0, 2, 3


def _write(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _seed(arg: int | None) -> int | None:
    env = os.environ.get("REGRASP_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ValidationError("REGRASP_SEED", f"not an integer: {env!r}")
    return arg


def _query(scene, args):
    w = scene.world
    home = None if scene.start is None else scene.start.q
    out = {}
    for key in ("start", "goal"):
        spec = getattr(args, key, None)
        if spec:
            try:
                d = json.loads(spec)
            except json.JSONDecodeError as e:
                raise ValidationError(f"--{key}", str(e))
            if not isinstance(d, dict) or "object" not in d:
                raise ValidationError(f"--{key}", "expected an object with an 'object' field")
            out[key] = _endpoint(d, key, w.object, w.table, w.robot, home)
    return with_query(scene, **out)


def cmd_table(args) -> int:
    scene = load_scene(args.scene)
    w = scene.world
    table = build_table(w.object, w.gripper, w.table)
    _write(export_table(table, args.format), args.out)
    return EXIT_OK


def _dry_run(scene, cfg) -> dict:
    w = scene.world
    c_s, c_g = classify_config(w, scene.start), classify_config(w, scene.goal)
    for c, name in ((c_s, "start"), (c_g, "goal")):
        if c.p == 0 and c.g == 0:
            raise UnclassifiableConfig(f"{name} configuration is in neither P nor G")
    table = add_query_nodes(build_table(w.object, w.gripper, w.table, n_slide=cfg.n_slide), c_s, c_g)
    l = shortest_plan_length(table, c_s, c_g)
    plans = plans_of_length(table, l, c_s, c_g) if l > 0 else []
    doc = {"start": list(c_s), "goal": list(c_g), "shortest_length": l,
           "length_increment": cfg.delta or choose_path_length_increment(c_s, c_g),
           "plans": [[list(n) for n in p.nodes] for p in plans]}
    if plans:
        doc["guidance_graph"] = build_guidance_graph(plans).to_dict()
    return doc


def cmd_plan(args) -> int:
    scene = _query(load_scene(args.scene), args)
    cfg = scene.config(t_max=args.tmax, threshold_n=args.threshold_n, seed=_seed(args.seed))
    if args.dry_run:
        try:
            doc = _dry_run(scene, cfg)
        except Disconnected as e:
            print(f"no task plan: {e}", file=sys.stderr)
            return EXIT_NO_SOLUTION
        _write(json.dumps(doc, indent=1), args.out)
        return EXIT_OK
    try:
        r = solve_scene(scene, args.algo, cfg)
    except (NoSolution, Disconnected) as e:
        print(f"no solution: {e}", file=sys.stderr)
        return EXIT_NO_SOLUTION
    _write(r.path.to_json(), args.out)
    if args.out:
        print(f"{args.algo}: {transitions(r.path)} transitions, prep {r.prep_time:.2f} s, "
              f"plan {r.plan_time:.2f} s -> {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_bench(args) -> int:
    scene = load_scene(args.scene)
    seed = _seed(args.seed)
    algos = args.algo or ["guided", "pmp"]

    def progress(n, rec):
        if args.verbose:
            print(f"trial {n}: {rec.planner} success={rec.success} transitions={rec.transitions} "
                  f"plan={rec.plan_time_s:.2f}s", file=sys.stderr)

    records, _ = run_benchmark(scene, algos, args.trials, args.tmax, 0 if seed is None else seed,
                               args.paths_dir, progress)
    _write(emit_report(records, args.format), args.out)
    return EXIT_OK


def cmd_export(args) -> int:
    """Resample a saved manipulation path at uniform parameter steps."""
    try:
        path = loads(Path(args.path).read_text())
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise ParseError(f"{args.path}: {e}") from e
    L = path.domain_length
    us = np.linspace(0.0, L, args.samples) if L > 0 else np.zeros(1)
    rows = []
    for u in us:
        c = evaluate(path, float(u))
        seg = min(int(u), len(path.segments) - 1) if path.segments else -1
        rows.append({"s": float(u), "mode": path.segments[seg].kind if seg >= 0 else "none",
                     "q_rad": c.q.tolist(), **c.T.to_dict()})
    if args.format == "json":
        _write(json.dumps(rows, indent=1), args.out)
    else:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        n = len(rows[0]["q_rad"])
        wr.writerow(["s", "mode"] + [f"q{i + 1}_rad" for i in range(n)] + ["qw", "qx", "qy", "qz", "x_m", "y_m", "z_m"])
        for r in rows:
            wr.writerow([f"{r['s']:.6f}", r["mode"]] + [f"{v:.9f}" for v in r["q_rad"]]
                        + [f"{v:.9f}" for v in r["quaternion_wxyz"] + r["translation_m"]])
        _write(buf.getvalue(), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="regrasp", description="Grasp-placement table regrasp planning.")
    sub = ap.add_subparsers(dest="command", required=True)

    t = sub.add_parser("table", help="build the grasp-placement table of a scene's object")
    t.add_argument("scene")
    t.add_argument("--format", choices=["grid", "svg", "json"], default="grid")
    t.add_argument("--out")
    t.set_defaults(func=cmd_table)

    p = sub.add_parser("plan", help="plan a pick-and-place path for a scene query")
    p.add_argument("scene")
    p.add_argument("--algo", choices=["guided", "pmp", "dbmp"], default="guided")
    p.add_argument("--start", help="json endpoint overriding the scene start")
    p.add_argument("--goal", help="json endpoint overriding the scene goal")
    p.add_argument("--tmax", type=float, help="time budget in seconds")
    p.add_argument("--threshold-n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--dry-run", action="store_true", help="print task plans and guidance graph only")
    p.set_defaults(func=cmd_plan)

    b = sub.add_parser("bench", help="seeded benchmark of several planners")
    b.add_argument("scene")
    b.add_argument("--algo", action="append", choices=["guided", "pmp", "dbmp"])
    b.add_argument("--trials", type=int, default=20)
    b.add_argument("--tmax", type=float, help=f"per-trial budget in seconds (scene value or {DEFAULT_TIMEOUT_S:g})")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--format", choices=["csv", "markdown"], default="markdown")
    b.add_argument("--out")
    b.add_argument("--paths-dir")
    b.add_argument("-v", "--verbose", action="store_true")
    b.set_defaults(func=cmd_bench)

    e = sub.add_parser("export", help="resample a saved path file into a waypoint table")
    e.add_argument("path")
    e.add_argument("--format", choices=["csv", "json"], default="csv")
    e.add_argument("--samples", type=int, default=101)
    e.add_argument("--out")
    e.set_defaults(func=cmd_export)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ParseError, UnclassifiableConfig, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
