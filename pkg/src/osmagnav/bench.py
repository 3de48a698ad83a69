"""Planner benchmark, static-cache ablation and storage comparison.

Three planners answer the same start/goal queries: a monolithic Grid A* over
the whole floor, flat passage-level A*, and the hierarchical planner. Queries
are bucketed by flat route length and topological hops.
"""

from __future__ import annotations

import json
import math
import random
import statistics
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import geometry as geo
from .errors import CrossFloorUnsupported, NoPath, OsmagError
from .geometry import Pose2D
from .model import AreaGraph, write_osmag
from .passage_graph import HierCache, PassageGraph
from .planner import PlanResult, PlannerConfig, STAGES, plan_flat, plan_hierarchical
from .raster import OccupancyRaster, export_pgm, grid_astar, rasterize_floor, snap_to_free

BUCKETS = ("short", "medium", "long", "cross_floor")
PLANNERS = ("grid", "flat", "hier")
GRID_RESOLUTION = 0.1
POINTCLOUD_SPACING = 0.1
POINTCLOUD_BYTES_PER_POINT = 16  # x, y, z, intensity as float32


def bucket_for(cost: float, hops: int, cross_floor: bool) -> str | None:
    """Length/hop bucket; None when the two criteria disagree."""
    if cross_floor:
        return "cross_floor"
    if cost < 50.0 and 1 <= hops <= 3:
        return "short"
    if 50.0 <= cost <= 150.0 and 4 <= hops <= 6:
        return "medium"
    if cost > 150.0 and hops > 6:
        return "long"
    return None


@dataclass
class Query:
    id: int
    start: Pose2D
    goal: Pose2D
    bucket: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "start": [self.start.x, self.start.y, self.start.level],
            "goal": [self.goal.x, self.goal.y, self.goal.level],
            "bucket": self.bucket,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Query":
        s, g = d["start"], d["goal"]
        return cls(
            int(d["id"]),
            Pose2D(float(s[0]), float(s[1]), 0.0, None if s[2] is None else str(s[2])),
            Pose2D(float(g[0]), float(g[1]), 0.0, None if g[2] is None else str(g[2])),
            d.get("bucket"),
        )


def save_queries(queries: list[Query], path) -> None:
    with open(path, "w") as fh:
        json.dump([q.to_dict() for q in queries], fh, indent=1)


def load_queries(path) -> list[Query]:
    with open(path) as fh:
        return [Query.from_dict(d) for d in json.load(fh)]


def random_interior_pose(graph: AreaGraph, area: str, rng: random.Random, clearance: float = 0.3) -> Pose2D:
    poly = graph.area_polygons[area]
    x0, y0, x1, y1 = graph.area_bboxes[area]
    for _ in range(1000):
        x, y = rng.uniform(x0, x1), rng.uniform(y0, y1)
        if geo.point_in_polygon(x, y, poly) and geo.distance_to_boundary(np.array([x, y]), poly) >= clearance:
            return Pose2D(round(x, 3), round(y, 3), 0.0, graph.areas[area].level)
    c = poly.mean(axis=0)
    return Pose2D(float(c[0]), float(c[1]), 0.0, graph.areas[area].level)


def random_queries(graph: AreaGraph, n: int, seed: int = 0, clearance: float = 0.3) -> list[Query]:
    """Uniform random leaf pairs, unbucketed."""
    rng = random.Random(seed)
    leaves = graph.leaf_areas()
    out = []
    for i in range(n):
        a, b = rng.choice(leaves), rng.choice(leaves)
        out.append(Query(i, random_interior_pose(graph, a, rng, clearance), random_interior_pose(graph, b, rng, clearance)))
    return out


def generate_queries(
    graph: AreaGraph,
    pg: PassageGraph,
    cache: HierCache | None,
    per_bucket: int = 10,
    seed: int = 0,
    buckets: tuple[str, ...] = BUCKETS,
    max_attempts: int = 20000,
    patience: int = 500,
) -> list[Query]:
    """Rejection-sample queries until every requested bucket holds `per_bucket` entries.

    Buckets the map cannot populate (no long routes in a small building, no
    cross-floor pairs on one floor) stay short: sampling stops after
    `patience` consecutive attempts that add nothing.
    """
    rng = random.Random(seed)
    leaves = graph.leaf_areas()
    filled = {b: [] for b in buckets}
    idle = 0
    for _ in range(max_attempts):
        if all(len(v) >= per_bucket for v in filled.values()) or idle >= patience:
            break
        idle += 1
        a, b = rng.choice(leaves), rng.choice(leaves)
        s = random_interior_pose(graph, a, rng)
        g = random_interior_pose(graph, b, rng)
        cross = s.level != g.level
        if cross and "cross_floor" not in buckets:
            continue
        try:
            res = plan_flat(graph, pg, cache, s, g)
        except OsmagError:
            continue
        bk = bucket_for(res.cost, res.hops, cross)
        if bk in filled and len(filled[bk]) < per_bucket:
            filled[bk].append((s, g))
            idle = 0
    out = []
    for bk in buckets:
        for s, g in filled[bk]:
            out.append(Query(len(out), s, g, bk))
    return out


# -- Grid A* baseline ---------------------------------------------------------------

class GridBaseline:
    """Monolithic per-floor rasters, built once per level."""

    def __init__(self, graph: AreaGraph, resolution: float = GRID_RESOLUTION):
        self.graph = graph
        self.resolution = resolution
        self._rasters: dict[str | None, OccupancyRaster] = {}

    def raster(self, level: str | None) -> OccupancyRaster:
        if level not in self._rasters:
            self._rasters[level] = rasterize_floor(self.graph, level, self.resolution)
        return self._rasters[level]

    def plan(self, start: Pose2D, goal: Pose2D) -> PlanResult:
        if start.level != goal.level:
            raise CrossFloorUnsupported(f"grid baseline cannot route {start.level} -> {goal.level}")
        raster = self.raster(start.level)
        t0 = time.perf_counter_ns()
        cs = snap_to_free(raster, start, 3)
        cg = snap_to_free(raster, goal, 3)
        if cs is None or cg is None:
            raise NoPath("start or goal has no free cell nearby")
        gp = grid_astar(raster, cs, cg)
        pts = [(start.x, start.y)] + [tuple(map(float, raster.center(r, c))) for r, c in gp.cells] + [(goal.x, goal.y)]
        cost = math.dist(pts[0], pts[1]) + gp.cost + math.dist(pts[-2], pts[-1])
        dt = (time.perf_counter_ns() - t0) / 1e3
        times = {k: 0.0 for k in STAGES}
        times["astar"] = dt
        return PlanResult(
            planner="grid",
            passages=[],
            dense_path=np.asarray(pts, dtype=float),
            cost=cost,
            steps=[],
            closed_states=gp.closed,
            closed_by_stage={"astar": gp.closed},
            stage_times_us=times,
            start=start,
            goal=goal,
        )


def grid_astar_baseline(graph: AreaGraph, start: Pose2D, goal: Pose2D, resolution: float = GRID_RESOLUTION,
                        baseline: GridBaseline | None = None) -> PlanResult:
    return (baseline or GridBaseline(graph, resolution)).plan(start, goal)


# -- benchmark ----------------------------------------------------------------------

@dataclass
class BenchRecord:
    query: int
    bucket: str | None
    planner: str
    ok: bool
    median_ms: float = math.nan
    closed_states: int = 0
    cost: float = math.nan
    hops: int = 0
    path_length: float = math.nan
    overhead_pct: float | None = None
    used_fallback: bool = False
    deterministic: bool = True
    error: str = ""


@dataclass
class BenchReport:
    records: list[BenchRecord] = field(default_factory=list)
    orders: int = 1

    def by(self, planner: str, bucket: str | None = None) -> list[BenchRecord]:
        return [r for r in self.records if r.planner == planner and (bucket is None or r.bucket == bucket) and r.ok]

    def aggregates(self) -> dict:
        out: dict = {}
        for bk in sorted({r.bucket for r in self.records}, key=str):
            row = {}
            for pl in sorted({r.planner for r in self.records}):
                rs = self.by(pl, bk)
                if not rs:
                    continue
                ov = [r.overhead_pct for r in rs if r.overhead_pct is not None]
                row[pl] = {
                    "n": len(rs),
                    "mean_ms": statistics.fmean(r.median_ms for r in rs),
                    "mean_closed": statistics.fmean(r.closed_states for r in rs),
                    "mean_cost": statistics.fmean(r.cost for r in rs),
                    "mean_overhead_pct": statistics.fmean(ov) if ov else None,
                    "fallbacks": sum(r.used_fallback for r in rs),
                }
            out[str(bk)] = row
        return out

    def to_json(self) -> str:
        return json.dumps(
            {"orders": self.orders, "records": [asdict(r) for r in self.records], "aggregates": self.aggregates()},
            indent=1,
        )

    def table(self) -> str:
        lines = [f"{'bucket':<12}{'planner':<8}{'n':>4}{'mean ms':>12}{'closed':>12}{'overhead %':>12}"]
        for bk, row in self.aggregates().items():
            for pl, a in row.items():
                ov = "" if a["mean_overhead_pct"] is None else f"{a['mean_overhead_pct']:.2f}"
                lines.append(f"{bk:<12}{pl:<8}{a['n']:>4}{a['mean_ms']:>12.3f}{a['mean_closed']:>12.1f}{ov:>12}")
        return "\n".join(lines)


def _runner(name: str, graph, pg, cache, grid: GridBaseline, config: PlannerConfig):
    if name == "grid":
        return lambda q: grid.plan(q.start, q.goal)
    if name == "flat":
        return lambda q: plan_flat(graph, pg, cache, q.start, q.goal, config)
    if name == "hier":
        return lambda q: plan_hierarchical(graph, pg, cache, q.start, q.goal, config)
    raise ValueError(f"unknown planner {name!r}")


def run_benchmark(
    graph: AreaGraph,
    pg: PassageGraph,
    cache: HierCache,
    queries: list[Query],
    planners: tuple[str, ...] = PLANNERS,
    orders: int = 6,
    seed: int = 0,
    grid_resolution: float = GRID_RESOLUTION,
    config: PlannerConfig | None = None,
) -> BenchReport:
    """Time every (query, planner) case under `orders` shuffled execution orders; keep medians.

    One untimed pass first fills the per-floor grids, the leaf raster memo and
    the JIT cache, so no planner pays one-off setup inside its timings.
    """
    config = config or PlannerConfig()
    grid = GridBaseline(graph, grid_resolution)
    runners = {p: _runner(p, graph, pg, cache, grid, config) for p in planners}
    cases = [(q, p) for q in queries for p in planners]
    for q, p in cases:
        try:
            runners[p](q)
        except OsmagError:
            pass
    times: dict[tuple[int, str], list[float]] = {}
    results: dict[tuple[int, str], list] = {}
    rng = random.Random(seed)
    for _ in range(orders):
        order = cases[:]
        rng.shuffle(order)
        for q, p in order:
            t0 = time.perf_counter_ns()
            try:
                res = runners[p](q)
            except OsmagError as exc:
                res = exc
            dt = (time.perf_counter_ns() - t0) / 1e6
            times.setdefault((q.id, p), []).append(dt)
            results.setdefault((q.id, p), []).append(res)
    report = BenchReport(orders=orders)
    for q in queries:
        grid_len = None
        first = results.get((q.id, "grid"), [None])[0]
        if isinstance(first, PlanResult):
            grid_len = first.path_length()
        for p in planners:
            runs = results[(q.id, p)]
            res = runs[0]
            if not isinstance(res, PlanResult):
                report.records.append(BenchRecord(q.id, q.bucket, p, False, error=f"{type(res).__name__}: {res}"))
                continue
            same = all(
                isinstance(r, PlanResult)
                and r.cost == res.cost
                and r.closed_states == res.closed_states
                and r.passages == res.passages
                for r in runs
            )
            length = res.path_length()
            overhead = None
            if grid_len is not None and grid_len > 0 and p != "grid":
                overhead = 100.0 * (length - grid_len) / grid_len
            report.records.append(
                BenchRecord(
                    q.id,
                    q.bucket,
                    p,
                    True,
                    statistics.median(times[(q.id, p)]),
                    res.closed_states,
                    res.cost,
                    res.hops,
                    length,
                    overhead,
                    res.used_fallback,
                    same,
                )
            )
    return report


# -- cache ablation -------------------------------------------------------------------

@dataclass
class AblationPair:
    query: int
    trial: int
    cached_wall_ms: float
    uncached_wall_ms: float
    rebuild_ms: float
    cached_astar_ms: float
    uncached_astar_ms: float
    equal: bool


@dataclass
class AblationReport:
    pairs: list[AblationPair]

    def summary(self) -> dict:
        p = self.pairs
        cached = statistics.fmean(x.cached_wall_ms for x in p)
        uncached = statistics.fmean(x.uncached_wall_ms for x in p)
        rebuild = statistics.fmean(x.rebuild_ms for x in p)
        return {
            "pairs": len(p),
            "equal_paths": sum(x.equal for x in p),
            "cached_wall_ms": cached,
            "uncached_wall_ms": uncached,
            "rebuild_ms": rebuild,
            "wall_gap_ms": uncached - cached,
            "gap_vs_rebuild": (uncached - cached) / rebuild if rebuild > 0 else math.nan,
            "cached_astar_ms": statistics.fmean(x.cached_astar_ms for x in p),
            "uncached_astar_ms": statistics.fmean(x.uncached_astar_ms for x in p),
            "slowdown": uncached / cached if cached > 0 else math.nan,
        }

    def to_json(self) -> str:
        return json.dumps({"summary": self.summary(), "pairs": [asdict(x) for x in self.pairs]}, indent=1)


def run_cache_ablation(
    graph: AreaGraph,
    pg: PassageGraph,
    cache: HierCache,
    queries: list[Query],
    trials: int = 5,
    config: PlannerConfig | None = None,
) -> AblationReport:
    """Paired cached/uncached hierarchical runs; the uncached run rebuilds every summary inside its timing.

    Each query is warmed once untimed, and the arm that runs first alternates
    between trials so neither side systematically inherits a warm CPU cache.
    """
    config = config or PlannerConfig()
    pairs = []

    def cached_run(q):
        t0 = time.perf_counter_ns()
        res = plan_hierarchical(graph, pg, cache, q.start, q.goal, config)
        return res, (time.perf_counter_ns() - t0) / 1e6

    def uncached_run(q):
        t1 = time.perf_counter_ns()
        fresh = HierCache(graph, pg)
        fresh.build_all()
        t2 = time.perf_counter_ns()
        res = plan_hierarchical(graph, pg, fresh, q.start, q.goal, config)
        return res, (time.perf_counter_ns() - t1) / 1e6, (t2 - t1) / 1e6

    for q in queries:
        plan_hierarchical(graph, pg, cache, q.start, q.goal, config)
        for trial in range(trials):
            if trial % 2 == 0:
                a, cached_wall = cached_run(q)
                b, uncached_wall, rebuild = uncached_run(q)
            else:
                b, uncached_wall, rebuild = uncached_run(q)
                a, cached_wall = cached_run(q)
            pairs.append(
                AblationPair(
                    q.id,
                    trial,
                    cached_wall,
                    uncached_wall,
                    rebuild,
                    a.stage_times_us["astar"] / 1e3,
                    b.stage_times_us["astar"] / 1e3,
                    a.passages == b.passages and a.cost == b.cost,
                )
            )
    return AblationReport(pairs)


# -- storage ----------------------------------------------------------------------------

def storage_report(graph: AreaGraph, resolution: float = 0.05, vector_text: str | None = None) -> dict:
    """Vector map bytes against a full-map PGM grid and an analytic point-cloud estimate."""
    text = vector_text if vector_text is not None else write_osmag(graph)
    vector = len(text.encode("utf-8"))
    levels = sorted({graph.areas[a].level for a in graph.leaf_areas()}, key=str)
    grid = 0
    cells = 0
    for lv in levels:
        r = rasterize_floor(graph, lv, resolution)
        grid += len(export_pgm(r))
        cells += r.width * r.height
    free_area = sum(abs(geo.signed_area(graph.area_polygons[a])) for a in graph.leaf_areas())
    points = free_area / POINTCLOUD_SPACING**2
    cloud = int(round(points * POINTCLOUD_BYTES_PER_POINT))
    return {
        "vector_bytes": vector,
        "grid_bytes": grid,
        "grid_resolution": resolution,
        "grid_cells": cells,
        "pointcloud_bytes_estimate": cloud,
        "pointcloud_formula": f"free_area / {POINTCLOUD_SPACING}^2 points x {POINTCLOUD_BYTES_PER_POINT} B",
        "grid_over_vector": grid / vector,
        "pointcloud_over_vector": cloud / vector,
        "levels": len(levels),
    }
