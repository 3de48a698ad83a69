"""Command-line entry point: ``osmagnav <subcommand> ...``.

Exit codes: 0 success, 1 map/validation failure, 2 planning failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bench, executor, localization
from .errors import (
    AttachFailed,
    CacheMismatch,
    CrossFloorUnsupported,
    NoPath,
    NoRoute,
    NotInAnyArea,
    OsmagError,
)
from .geometry import Pose2D
from .model import parse_osmag, validate
from .passage_graph import build_base_graph, build_caches, load_cache, save_cache
from .planner import PlannerConfig, plan_flat, plan_hierarchical
from .raster import export_pgm, export_yaml, rasterize_floor, rolling_window
from .synthetic import CampusSpec, generate_synthetic_campus

EXIT_OK, EXIT_VALIDATION, EXIT_PLANNING, EXIT_IO = 0, 1, 2, 3
PLANNING_ERRORS = (NoRoute, NoPath, NotInAnyArea, AttachFailed, CrossFloorUnsupported)


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _read_map(path: str, lenient: bool = False):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc}") from None
    try:
        return parse_osmag(text, lenient=lenient), text
    except OsmagError as exc:
        raise CliError(EXIT_VALIDATION, f"{type(exc).__name__}: {exc}") from None


def _pose(text: str) -> Pose2D:
    parts = text.split(",")
    if len(parts) not in (2, 3, 4):
        raise argparse.ArgumentTypeError("expected x,y[,level[,theta]]")
    x, y = float(parts[0]), float(parts[1])
    level = parts[2] if len(parts) > 2 and parts[2] != "" else None
    theta = float(parts[3]) if len(parts) > 3 else 0.0
    return Pose2D(x, y, theta, level)


def _emit(args, payload, table: str | None = None) -> None:
    text = table if (args.pretty and table is not None) else json.dumps(payload, indent=2, default=_json_default)
    out = getattr(args, "output", None)
    if out:
        try:
            Path(out).write_text(text + "\n", encoding="utf-8")
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot write {out}: {exc}") from None
    else:
        print(text)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _graph_and_cache(args, graph):
    if getattr(args, "cache", None):
        try:
            return load_cache(args.cache, graph)
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read cache {args.cache}: {exc}") from None
        except CacheMismatch as exc:
            raise CliError(EXIT_IO, f"stale cache: {exc}") from None
    pg, _ = build_base_graph(graph)
    return pg, build_caches(pg, graph)


# -- subcommands ----------------------------------------------------------------

def cmd_validate(args) -> int:
    graph, _ = _read_map(args.map, args.lenient)
    report = validate(graph)
    payload = json.loads(report.to_json())
    table = "ok" if report.ok else "\n".join(f"[{v.invariant}] {v.message}" for v in report.violations)
    _emit(args, payload, table)
    return EXIT_OK if report.ok else EXIT_VALIDATION


def cmd_build_graph(args) -> int:
    graph, _ = _read_map(args.map, args.lenient)
    report = validate(graph)
    if not report.ok:
        raise CliError(EXIT_VALIDATION, f"map fails validation ({len(report.violations)} violations)")
    pg, build_report = build_base_graph(graph, args.leaf_resolution, args.c_vert)
    cache = build_caches(pg, graph)
    try:
        save_cache(args.output_cache, graph, pg, cache, build_report)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {args.output_cache}: {exc}") from None
    payload = {
        "cache": args.output_cache,
        "vertices": len(pg.vertices),
        "edges": pg.num_edges(),
        "summaries": len(cache.summaries),
        "report": build_report.to_dict(),
    }
    print(json.dumps(payload, indent=2))
    return EXIT_OK


def cmd_plan(args) -> int:
    graph, _ = _read_map(args.map, args.lenient)
    try:
        if args.planner == "grid":
            res = bench.grid_astar_baseline(graph, args.start, args.goal, args.resolution)
        else:
            pg, cache = _graph_and_cache(args, graph)
            fn = plan_flat if args.planner == "flat" else plan_hierarchical
            res = fn(graph, pg, cache, args.start, args.goal, PlannerConfig())
    except PLANNING_ERRORS as exc:
        raise CliError(EXIT_PLANNING, f"{type(exc).__name__}: {exc}") from None
    payload = res.to_record()
    payload["path_length"] = res.path_length()
    payload["dense_path"] = res.dense_path.round(4).tolist() if args.dense else len(res.dense_path)
    table = f"{res.planner}: cost {res.cost:.3f} m, {res.hops} passages, {res.closed_states} closed\n" + " -> ".join(
        res.passages
    )
    _emit(args, payload, table)
    return EXIT_OK


def _load_queries(path):
    try:
        return bench.load_queries(path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc}") from None


def cmd_bench(args) -> int:
    graph, _ = _read_map(args.map, args.lenient)
    queries = _load_queries(args.queries)
    pg, cache = _graph_and_cache(args, graph)
    report = bench.run_benchmark(
        graph, pg, cache, queries, tuple(args.planners.split(",")), args.orders, args.seed, args.resolution
    )
    _emit(args, json.loads(report.to_json()), report.table())
    return EXIT_OK


def cmd_ablate(args) -> int:
    graph, _ = _read_map(args.map, args.lenient)
    queries = _load_queries(args.queries)[: args.limit]
    pg, cache = _graph_and_cache(args, graph)
    report = bench.run_cache_ablation(graph, pg, cache, queries, args.trials)
    s = report.summary()
    table = "\n".join(f"{k:<20}{v}" for k, v in s.items())
    _emit(args, json.loads(report.to_json()), table)
    return EXIT_OK


def cmd_raster(args) -> int:
    graph, _ = _read_map(args.map, args.lenient)
    if args.window:
        x, y, w = (float(v) for v in args.window.split(","))
        raster = rolling_window(graph, (x, y), args.level, w, args.resolution)
    else:
        try:
            raster = rasterize_floor(graph, args.level, args.resolution)
        except OsmagError as exc:
            raise CliError(EXIT_VALIDATION, str(exc)) from None
    payload = {
        "width": raster.width,
        "height": raster.height,
        "resolution": raster.resolution,
        "origin": list(raster.origin),
        "free": raster.count(0),
        "occupied": raster.count(1),
        "unknown": raster.count(2),
    }
    if args.output:
        out = Path(args.output)
        try:
            out.write_bytes(export_pgm(raster))
            out.with_suffix(".yaml").write_text(export_yaml(raster, out.name), encoding="utf-8")
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot write {out}: {exc}") from None
        payload["pgm"] = str(out)
    print(json.dumps(payload, indent=2))
    return EXIT_OK


def cmd_simulate(args) -> int:
    graph, _ = _read_map(args.map, args.lenient)
    pg, cache = _graph_and_cache(args, graph)
    try:
        plan = plan_hierarchical(graph, pg, cache, args.start, args.goal)
    except PLANNING_ERRORS as exc:
        raise CliError(EXIT_PLANNING, f"{type(exc).__name__}: {exc}") from None
    log = executor.simulate_mission(
        graph,
        plan,
        executor.RobotModel(args.max_speed, args.tick),
        executor.MissionConfig(threshold=args.threshold, margin=args.margin),
    )
    if args.log:
        try:
            Path(args.log).write_text(log.to_csv(), encoding="utf-8")
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot write {args.log}: {exc}") from None
    summary = log.summary()
    summary["passages"] = plan.passages
    _emit(args, summary, "\n".join(f"{k:<32}{v}" for k, v in summary.items()))
    return EXIT_OK if log.status == "success" else EXIT_PLANNING


def cmd_localize_sim(args) -> int:
    graph, _ = _read_map(args.map, args.lenient)
    try:
        with open(args.trajectory, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {args.trajectory}: {exc}") from None
    try:
        truth = [
            (float(r["t"]), Pose2D(float(r["x"]), float(r["y"]), float(r.get("theta") or 0.0), r.get("level") or None))
            for r in rows
        ]
    except (KeyError, ValueError) as exc:
        raise CliError(EXIT_IO, f"bad trajectory row in {args.trajectory}: {exc}") from None
    if not truth:
        raise CliError(EXIT_IO, f"empty trajectory {args.trajectory}")
    cfg = localization.TrackerConfig(weighting=args.weighting)
    rng = np.random.default_rng(args.seed)
    segs: dict = {}
    est = truth[0][1]
    estimates, diverged = [], 0
    for i, (t, pose) in enumerate(truth):
        seg = segs.setdefault(pose.level, localization.map_segments(graph, pose.level))
        if i > 0:
            prev = truth[i - 1][1]
            # Odometry: true increment plus drift noise, applied to the last estimate.
            dx, dy = pose.x - prev.x, pose.y - prev.y
            odom = Pose2D(
                est.x + dx + rng.normal(0, args.odom_noise),
                est.y + dy + rng.normal(0, args.odom_noise),
                est.theta + (pose.theta - prev.theta),
                pose.level,
            )
        else:
            odom = est
        scan = localization.simulate_scan(graph, pose, args.beams, args.sigma, rng=rng, timestamp=t, segments=seg)
        try:
            res = localization.icp_track(scan, graph, odom, cfg, segments=seg)
            est = localization.fuse_with_odometry(localization.FusionInput(res.pose, res.s_icp, odom))
        except OsmagError:
            diverged += 1
            est = odom
        estimates.append((est.x, est.y))
    summary = localization.ate(np.array(estimates), np.array([(p.x, p.y) for _, p in truth]))
    summary["rejected_frames"] = diverged
    _emit(args, summary, "\n".join(f"{k:<16}{v}" for k, v in summary.items()))
    return EXIT_OK


def cmd_gen_map(args) -> int:
    spec = CampusSpec(
        floors=args.floors,
        sectors_per_floor=args.sectors,
        rooms_per_side=args.rooms_per_side,
        elevators=args.elevators,
        wings=args.wings,
    )
    try:
        xml, manifest = generate_synthetic_campus(args.seed, spec)
    except OsmagError as exc:
        raise CliError(EXIT_VALIDATION, f"{type(exc).__name__}: {exc}") from None
    try:
        Path(args.output).write_text(xml, encoding="utf-8")
        if args.manifest:
            Path(args.manifest).write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write output: {exc}") from None
    if args.queries:
        graph = parse_osmag(xml)
        pg, _ = build_base_graph(graph)
        cache = build_caches(pg, graph)
        queries = bench.generate_queries(graph, pg, cache, args.per_bucket, args.seed)
        try:
            bench.save_queries(queries, args.queries)
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot write {args.queries}: {exc}") from None
    summary = {k: manifest[k] for k in ("seed", "areas", "passages", "leaf_areas", "counts")}
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_storage(args) -> int:
    graph, text = _read_map(args.map, args.lenient)
    rep = bench.storage_report(graph, args.resolution, text)
    _emit(args, rep, "\n".join(f"{k:<28}{v}" for k, v in rep.items()))
    return EXIT_OK


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="osmagnav", description="Hierarchical area-graph navigation toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, output=True):
        sp.add_argument("--lenient", action="store_true", help="map legacy tag spellings to canonical keys")
        sp.add_argument("--pretty", action="store_true", help="human-readable table instead of JSON")
        if output:
            sp.add_argument("-o", "--output", help="write output here instead of stdout")

    sp = sub.add_parser("validate", help="check the four map invariants")
    sp.add_argument("map")
    common(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("build-graph", help="build the passage graph and caches")
    sp.add_argument("map")
    sp.add_argument("-o", "--output-cache", required=True)
    sp.add_argument("--leaf-resolution", type=float, default=0.1)
    sp.add_argument("--c-vert", type=float, default=15.0)
    common(sp, output=False)
    sp.set_defaults(func=cmd_build_graph)

    sp = sub.add_parser("plan", help="plan one query")
    sp.add_argument("map")
    sp.add_argument("--start", type=_pose, required=True, help="x,y[,level[,theta]]")
    sp.add_argument("--goal", type=_pose, required=True, help="x,y[,level[,theta]]")
    sp.add_argument("--planner", choices=("flat", "hier", "grid"), default="hier")
    sp.add_argument("--cache")
    sp.add_argument("--resolution", type=float, default=bench.GRID_RESOLUTION, help="grid planner resolution")
    sp.add_argument("--dense", action="store_true", help="include the dense path points")
    common(sp)
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("bench", help="three-way planner benchmark")
    sp.add_argument("map")
    sp.add_argument("queries")
    sp.add_argument("--orders", type=int, default=6)
    sp.add_argument("--planners", default="grid,flat,hier")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--resolution", type=float, default=bench.GRID_RESOLUTION)
    sp.add_argument("--jobs", type=int, default=1, help="accepted for compatibility; runs are serial")
    sp.add_argument("--cache")
    common(sp)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("ablate", help="static-cache ablation")
    sp.add_argument("map")
    sp.add_argument("queries")
    sp.add_argument("--trials", type=int, default=5)
    sp.add_argument("--limit", type=int, default=20, help="number of queries used")
    sp.add_argument("--cache")
    common(sp)
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("raster", help="export a floor or rolling-window raster")
    sp.add_argument("map")
    sp.add_argument("--level")
    sp.add_argument("--window", help="x,y,size for a rolling window")
    sp.add_argument("--resolution", type=float, default=0.05)
    common(sp)
    sp.set_defaults(func=cmd_raster)

    sp = sub.add_parser("simulate", help="simulate segmented execution of a plan")
    sp.add_argument("map")
    sp.add_argument("--start", type=_pose, required=True)
    sp.add_argument("--goal", type=_pose, required=True)
    sp.add_argument("--max-speed", type=float, default=1.0)
    sp.add_argument("--tick", type=float, default=0.1)
    sp.add_argument("--threshold", type=float, default=executor.GOAL_REACH_THRESHOLD)
    sp.add_argument("--margin", type=float, default=executor.PROJECTION_MARGIN)
    sp.add_argument("--log", help="CSV log path")
    sp.add_argument("--cache")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("localize-sim", help="track a trajectory with simulated scans")
    sp.add_argument("map")
    sp.add_argument("--trajectory", required=True, help="CSV with t,x,y,theta,level")
    sp.add_argument("--sigma", type=float, default=0.02)
    sp.add_argument("--beams", type=int, default=360)
    sp.add_argument("--odom-noise", type=float, default=0.02)
    sp.add_argument("--weighting", choices=localization.WEIGHTING_MODES, default="robust_times_corridor")
    sp.add_argument("--seed", type=int, default=0)
    common(sp)
    sp.set_defaults(func=cmd_localize_sim)

    sp = sub.add_parser("gen-map", help="generate a synthetic campus map")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--floors", type=int, default=3)
    sp.add_argument("--sectors", type=int, default=9, help="sectors per floor")
    sp.add_argument("--rooms-per-side", type=int, default=4)
    sp.add_argument("--elevators", type=int, default=1)
    sp.add_argument("--wings", type=int, default=2, choices=(1, 2))
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--manifest")
    sp.add_argument("--queries", help="also write a bucketed query set here")
    sp.add_argument("--per-bucket", type=int, default=10)
    sp.set_defaults(func=cmd_gen_map)

    sp = sub.add_parser("storage", help="vector vs grid vs point-cloud storage")
    sp.add_argument("map")
    sp.add_argument("--resolution", type=float, default=0.05)
    common(sp)
    sp.set_defaults(func=cmd_storage)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except PLANNING_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PLANNING
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
