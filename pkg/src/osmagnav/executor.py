"""Segmented execution of a passage plan against a rolling local window.

A path-following robot stands in for a full navigation stack: each tick the
window is regenerated around the robot, the active passage goal is advanced
when the robot enters its handoff zone, goals beyond the window are replaced
by proxies inside it, and the robot moves along the dense path at bounded
speed.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import geometry as geo
from .errors import Aborted, NoProjection
from .geometry import Pose2D
from .model import AreaGraph
from .planner import GOAL, START, PlanResult
from .raster import WINDOW_RESOLUTION, WINDOW_SIZE, Cell, OccupancyRaster, RollingWindow

GOAL_REACH_THRESHOLD = 0.5
PROJECTION_MARGIN = 1.0
_INSIDE_EPS = 1e-9


@dataclass(frozen=True)
class SegmentGoal:
    pose: Pose2D
    passage: str | None  # None for the final goal
    is_proxy: bool = False
    s: float | None = None  # arclength along the dense path, when known


@dataclass(frozen=True)
class Done:
    pass


DONE = Done()


@dataclass
class RobotModel:
    max_speed: float = 1.0
    tick: float = 0.1


@dataclass
class MissionConfig:
    threshold: float = GOAL_REACH_THRESHOLD
    margin: float = PROJECTION_MARGIN
    window: float = WINDOW_SIZE
    resolution: float = WINDOW_RESOLUTION
    max_ticks: int | None = None  # None: twice the nominal travel time plus slack
    raise_on_abort: bool = False


class Route:
    """Dense path with per-vertex floor labels and the arclength of every passage goal."""

    def __init__(self, plan: PlanResult, graph: AreaGraph | None = None):
        pts: list[tuple[float, float]] = []
        levels: list[str | None] = []
        goals: list[tuple[str, int]] = []
        for step in plan.steps:
            lv = graph.areas[step.area].level if graph is not None else None
            tr = list(step.trace)
            if pts and np.allclose(pts[-1], tr[0], atol=1e-12):
                tr = tr[1:]
                levels[-1] = lv
            pts.extend(tr)
            levels.extend([lv] * len(tr))
            if step.v not in (START, GOAL):
                goals.append((step.v, len(pts) - 1))
        if not pts:
            pts = [tuple(plan.dense_path[0])] if len(plan.dense_path) else [(0.0, 0.0)]
            levels = [None]
        self.points = np.asarray(pts, dtype=float).reshape(-1, 2)
        self.levels = levels
        seg = np.hypot(*np.diff(self.points, axis=0).T) if len(self.points) > 1 else np.zeros(0)
        self.cum = np.concatenate([[0.0], np.cumsum(seg)])
        self.length = float(self.cum[-1])
        self.goal_pose = plan.goal
        final = self.points[-1]
        self.goals: list[SegmentGoal] = []
        for name, idx in goals:
            c = self.points[idx]
            theta = math.atan2(final[1] - c[1], final[0] - c[0])
            self.goals.append(
                SegmentGoal(Pose2D(float(c[0]), float(c[1]), theta, levels[idx]), name, False, float(self.cum[idx]))
            )
        theta = plan.goal.theta if plan.goal is not None else 0.0
        self.goals.append(
            SegmentGoal(
                Pose2D(float(final[0]), float(final[1]), geo.wrap_angle(theta), levels[-1]),
                None,
                False,
                self.length,
            )
        )

    def point_at(self, s: float) -> np.ndarray:
        return geo.polyline_point_at(self.points, s)

    def index_at(self, s: float) -> int:
        return int(min(len(self.points) - 1, max(0, np.searchsorted(self.cum, s, side="right") - 1)))

    def level_at(self, s: float) -> str | None:
        return self.levels[self.index_at(s)]

    def heading_at(self, s: float) -> float:
        i = min(self.index_at(s), len(self.points) - 2)
        if i < 0:
            return 0.0
        d = self.points[i + 1] - self.points[i]
        return math.atan2(d[1], d[0])


def next_segment_goal(
    plan: PlanResult | Route, robot: Pose2D, threshold: float = GOAL_REACH_THRESHOLD, active: int = 0
) -> tuple[SegmentGoal | Done, int]:
    """Active goal after continuous handoff, with its index. Done once the final pose is reached."""
    route = plan if isinstance(plan, Route) else Route(plan)
    goals = route.goals
    while active < len(goals) - 1 and _dist(robot, goals[active].pose) < threshold:
        active += 1
    if active == len(goals) - 1 and _dist(robot, goals[-1].pose) < threshold:
        return DONE, active
    return goals[active], active


def _dist(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def _inset_box(window: OccupancyRaster, margin: float):
    lo = np.array(window.origin, dtype=float) + margin + _INSIDE_EPS
    hi = np.array(window.origin, dtype=float) + np.array([window.width, window.height]) * window.resolution
    hi = hi - margin - _INSIDE_EPS
    return lo, hi


def _in_box(p, lo, hi) -> bool:
    return lo[0] <= p[0] <= hi[0] and lo[1] <= p[1] <= hi[1]


def project_goal_to_window(
    plan: PlanResult | Route,
    goal: SegmentGoal,
    window: OccupancyRaster,
    margin: float = PROJECTION_MARGIN,
    robot: Pose2D | None = None,
    robot_s: float = 0.0,
) -> SegmentGoal:
    """Keep goals inside the window; otherwise substitute the farthest in-window pose along the path."""
    route = plan if isinstance(plan, Route) else Route(plan)
    org = np.array(window.origin, dtype=float)
    full_hi = org + np.array([window.width, window.height]) * window.resolution
    if robot is not None and not _in_box(robot, org, full_hi):
        raise NoProjection(f"robot ({robot[0]:.2f}, {robot[1]:.2f}) is outside the window")
    if _in_box(goal.pose, org, full_hi):
        return goal
    lo, hi = _inset_box(window, margin)
    if np.any(lo > hi):
        raise NoProjection("window margin leaves no interior")
    s_goal = goal.s if goal.s is not None else route.length
    pts, cum = route.points, route.cum
    k_goal = route.index_at(s_goal)
    k_robot = route.index_at(robot_s)
    tail = route.point_at(s_goal)
    # Walk backward from the goal; the first in-box piece found is the farthest along the path.
    for k in range(k_goal, k_robot - 1, -1):
        a = pts[k]
        b = tail if k == k_goal else pts[k + 1]
        hit = geo.clip_segment_to_box(a, b, lo, hi)
        if hit is None:
            continue
        t = hit[1]
        p = a + t * (b - a)
        seg_len = float(np.hypot(*(b - a)))
        s = float(cum[k] + t * seg_len)
        if s < robot_s:
            break
        theta = route.heading_at(s)
        return SegmentGoal(Pose2D(float(p[0]), float(p[1]), theta, route.level_at(s)), goal.passage, True, s)
    if robot is None:
        raise NoProjection("no path pose inside the window and no robot pose for a straight projection")
    r = np.array([robot[0], robot[1]], dtype=float)
    g = np.array([goal.pose.x, goal.pose.y], dtype=float)
    hit = geo.clip_segment_to_box(r, g, lo, hi)
    if hit is None:
        raise NoProjection("straight projection toward the goal leaves the inset window")
    p = r + hit[1] * (g - r)
    theta = math.atan2(g[1] - r[1], g[0] - r[0])
    return SegmentGoal(Pose2D(float(p[0]), float(p[1]), theta, robot[3] if len(robot) > 3 else None), goal.passage, True, None)


@dataclass
class LogRow:
    t: float
    x: float
    y: float
    theta: float
    v: float
    level: str | None
    event: str = ""


@dataclass
class MissionLog:
    rows: list[LogRow] = field(default_factory=list)
    goal_switches: list[tuple[float, str | None]] = field(default_factory=list)
    map_switches: list[float] = field(default_factory=list)
    proxy_goals: list[tuple[float, float, float]] = field(default_factory=list)
    proxy_violations: int = 0
    collisions: int = 0
    status: str = "running"
    reason: str = ""
    ticks: int = 0

    @property
    def speeds(self) -> np.ndarray:
        return np.array([r.v for r in self.rows])

    def switch_perturbations(self) -> list[float]:
        """|v after - v before| at every goal or map switch (excluding the stop at the final goal)."""
        v = self.speeds
        out = []
        for i, row in enumerate(self.rows):
            if row.event and 0 < i < len(self.rows) - 1:
                out.append(abs(float(v[i + 1] - v[i - 1])))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "x", "y", "theta", "v", "level", "event"])
        for r in self.rows:
            w.writerow([f"{r.t:.3f}", f"{r.x:.6f}", f"{r.y:.6f}", f"{r.theta:.6f}", f"{r.v:.6f}", r.level or "", r.event])
        return buf.getvalue()

    def summary(self) -> dict:
        pert = self.switch_perturbations()
        return {
            "status": self.status,
            "reason": self.reason,
            "ticks": self.ticks,
            "duration_s": self.rows[-1].t if self.rows else 0.0,
            "goal_switches": len(self.goal_switches),
            "map_switches": len(self.map_switches),
            "proxy_goals": len(self.proxy_goals),
            "proxy_violations": self.proxy_violations,
            "collisions": self.collisions,
            "max_switch_speed_perturbation": max(pert) if pert else 0.0,
            "mean_speed": float(np.mean(self.speeds)) if self.rows else 0.0,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2)


def simulate_mission(
    graph: AreaGraph,
    plan: PlanResult,
    robot: RobotModel | None = None,
    config: MissionConfig | None = None,
) -> MissionLog:
    robot = robot or RobotModel()
    config = config or MissionConfig()
    route = Route(plan, graph)
    log = MissionLog()
    budget = config.max_ticks
    if budget is None:
        budget = int(math.ceil(2.0 * route.length / (robot.max_speed * robot.tick))) + 100
    windows: dict[str | None, RollingWindow] = {}
    s = 0.0
    active = 0
    prev_retained: tuple[str, ...] | None = None
    v = 0.0
    for tick in range(budget + 1):
        t = tick * robot.tick
        p = route.point_at(s)
        level = route.level_at(s)
        pose = Pose2D(float(p[0]), float(p[1]), route.heading_at(s), level)
        win = windows.get(level)
        if win is None:
            win = windows[level] = RollingWindow(graph, level, config.window, config.resolution)
        raster = win.tick(p)
        events = []
        retained = tuple(win.retained)
        if prev_retained is not None and retained != prev_retained:
            log.map_switches.append(t)
            events.append("map_switch")
        prev_retained = retained
        if raster.state_at(p[0], p[1]) == Cell.OCCUPIED:
            log.collisions += 1

        goal, new_active = next_segment_goal(route, pose, config.threshold, active)
        for k in range(active, new_active):
            log.goal_switches.append((t, route.goals[k].passage))
            events.append("goal_switch")
        active = new_active
        if goal is DONE:
            log.rows.append(LogRow(t, pose.x, pose.y, pose.theta, v, level, ";".join(events + ["done"])))
            log.status = "success"
            log.ticks = tick
            return log
        target = project_goal_to_window(route, goal, raster, config.margin, pose, s)
        if target.is_proxy:
            lo, hi = _inset_box(raster, config.margin)
            log.proxy_goals.append((t, target.pose.x, target.pose.y))
            if not _in_box(target.pose, lo - _INSIDE_EPS, hi + _INSIDE_EPS):
                log.proxy_violations += 1
        s_target = target.s
        if s_target is None:
            s_target = _nearest_s(route, target.pose, s)
        step = min(robot.max_speed * robot.tick, max(0.0, s_target - s))
        v = step / robot.tick
        log.rows.append(LogRow(t, pose.x, pose.y, pose.theta, v, level, ";".join(events)))
        s = min(route.length, s + step)
    log.status = "aborted"
    log.reason = f"tick budget {budget} exhausted"
    log.ticks = budget
    if config.raise_on_abort:
        raise Aborted(log.reason)
    return log


def _nearest_s(route: Route, p, s_min: float) -> float:
    best_s, best_d = s_min, math.inf
    pts, cum = route.points, route.cum
    for k in range(route.index_at(s_min), len(pts) - 1):
        a, b = pts[k], pts[k + 1]
        ab = b - a
        L2 = float(ab @ ab)
        t = 0.0 if L2 == 0 else min(1.0, max(0.0, float((np.asarray(p[:2]) - a) @ ab) / L2))
        q = a + t * ab
        d = math.hypot(q[0] - p[0], q[1] - p[1])
        if d < best_d:
            best_d, best_s = d, float(cum[k] + t * math.sqrt(L2))
    return max(best_s, s_min)


def mission_config_dict(robot: RobotModel, config: MissionConfig) -> dict:
    return {"robot": asdict(robot), "mission": asdict(config)}
