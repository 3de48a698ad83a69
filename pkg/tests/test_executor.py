import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maps import corridor, room_chain
from osmagnav.errors import NoProjection
from osmagnav.executor import (
    DONE,
    MissionConfig,
    RobotModel,
    Route,
    SegmentGoal,
    next_segment_goal,
    project_goal_to_window,
    simulate_mission,
)
from osmagnav.geometry import Pose2D
from osmagnav.passage_graph import build_base_graph, build_caches
from osmagnav.planner import GOAL, START, PlanResult, Step, plan_hierarchical
from osmagnav.raster import Cell, OccupancyRaster


def polyline_plan(points, passages_at=(), goal_theta=0.0):
    """A plan along `points` whose passages sit at the given vertex indices."""
    cuts = [0, *passages_at, len(points) - 1]
    names = [START, *[f"P{i}" for i in range(len(passages_at))], GOAL]
    steps = [
        Step("virtual", "A", names[k], names[k + 1], 0.0, tuple(map(tuple, points[cuts[k] : cuts[k + 1] + 1])))
        for k in range(len(cuts) - 1)
    ]
    pts = np.asarray(points, dtype=float)
    gx, gy = pts[-1]
    return PlanResult(
        "flat", names[1:-1], pts, 0.0, steps, 0, {}, {},
        start=Pose2D(*pts[0], 0.0, "1"), goal=Pose2D(gx, gy, goal_theta, "1"),
    )


def window(center, size=50.0, res=0.05):
    n = int(round(size / res))
    org = (center[0] - size / 2, center[1] - size / 2)
    return OccupancyRaster(org, res, n, n, np.full((n, n), Cell.FREE, dtype=np.uint8))


class TestHandoff:
    def setup_method(self):
        self.plan = polyline_plan([(0, 0), (10, 0), (20, 0), (30, 0)], passages_at=(1, 2), goal_theta=1.2)

    def test_advances_inside_threshold(self):
        g, k = next_segment_goal(self.plan, Pose2D(9.7, 0, 0))
        assert k == 1 and g.passage == "P1"
        g, k = next_segment_goal(self.plan, Pose2D(9.0, 0, 0))
        assert k == 0 and g.passage == "P0"

    def test_chain_of_handoffs(self):
        # two goals closer than the threshold are consumed in a single call
        plan = polyline_plan([(0, 0), (10, 0), (10.3, 0), (30, 0)], passages_at=(1, 2))
        g, k = next_segment_goal(plan, Pose2D(10.1, 0, 0))
        assert k == 2 and g.passage is None

    def test_done_and_final_theta(self):
        route = Route(self.plan)
        final = route.goals[-1]
        assert final.passage is None and final.pose.theta == pytest.approx(1.2)
        assert next_segment_goal(route, Pose2D(29.8, 0, 0), active=2)[0] is DONE
        assert next_segment_goal(route, Pose2D(29.0, 0, 0), active=2)[0] is final

    def test_passage_heading_points_at_goal(self):
        plan = polyline_plan([(0, 0), (4, 0), (4, 3), (8, 6)], passages_at=(1, 2))
        route = Route(plan)
        for goal in route.goals[:-1]:
            assert goal.pose.theta == pytest.approx(math.atan2(6 - goal.pose.y, 8 - goal.pose.x))


class TestProjection:
    def test_inside_goal_is_identity(self):
        plan = polyline_plan([(0, 0), (10, 0)])
        goal = Route(plan).goals[-1]
        assert project_goal_to_window(plan, goal, window((0, 0)), robot=Pose2D(0, 0, 0)) is goal

    def test_straight_forty_metres(self):
        plan = polyline_plan([(0, 0), (40, 0)])
        route = Route(plan)
        proxy = project_goal_to_window(route, route.goals[-1], window((0, 0)), 1.0, Pose2D(0, 0, 0))
        assert proxy.is_proxy and proxy.passage is None
        assert proxy.pose.x == pytest.approx(24.0, abs=1e-6) and proxy.pose.y == pytest.approx(0.0)
        assert proxy.s == pytest.approx(24.0, abs=1e-6)

    def test_s_curve_takes_farthest_along_path(self):
        pts = [(0, 0), (30, 0), (30, 10), (0, 10), (0, 20), (40, 20)]
        route = Route(polyline_plan(pts))
        proxy = project_goal_to_window(route, route.goals[-1], window((0, 0)), 1.0, Pose2D(0, 0, 0))
        assert (proxy.pose.x, proxy.pose.y) == pytest.approx((24.0, 20.0), abs=1e-6)
        assert proxy.s == pytest.approx(30 + 10 + 30 + 10 + 24, abs=1e-6)

    def test_robot_outside_window(self):
        route = Route(polyline_plan([(0, 0), (40, 0)]))
        with pytest.raises(NoProjection):
            project_goal_to_window(route, route.goals[-1], window((0, 0)), robot=Pose2D(30, 0, 0))

    def test_margin_too_large(self):
        route = Route(polyline_plan([(0, 0), (40, 0)]))
        with pytest.raises(NoProjection):
            project_goal_to_window(route, route.goals[-1], window((0, 0), size=4.0), margin=3.0)

    def test_straight_fallback_without_path_in_box(self):
        route = Route(polyline_plan([(100, 100), (140, 100)]))
        goal = SegmentGoal(Pose2D(140, 100, 0), None)
        proxy = project_goal_to_window(route, goal, window((100, 40)), 1.0, Pose2D(100, 40, 0), robot_s=0.0)
        assert proxy.is_proxy and proxy.s is None
        assert 76 <= proxy.pose.x <= 124 and 16 <= proxy.pose.y <= 64

    @settings(max_examples=60, deadline=None)
    @given(
        st.floats(-20, 20), st.floats(-20, 20),
        st.floats(0, 2 * math.pi), st.floats(30, 200), st.floats(0.0, 5.0),
    )
    def test_proxy_stays_inside_inset(self, x, y, heading, length, margin):
        start = np.array([x, y])
        end = start + length * np.array([math.cos(heading), math.sin(heading)])
        route = Route(polyline_plan([tuple(start), tuple(end)]))
        win = window((0, 0))
        out = project_goal_to_window(route, route.goals[-1], win, margin, Pose2D(x, y, 0))
        # goals already in the window pass through; proxies respect the margin
        inset = margin if out.is_proxy else 0.0
        lo, hi = -25 + inset - 1e-6, 25 - inset + 1e-6
        assert lo <= out.pose.x <= hi and lo <= out.pose.y <= hi


def planned(builder, s, t):
    g = builder.build()
    pg, _ = build_base_graph(g)
    return g, plan_hierarchical(g, pg, build_caches(pg, g), s, t)


class TestMission:
    def test_straight_twenty_metres_timing(self):
        g, plan = planned(corridor(60.0), Pose2D(1, 1.5, 0, "1"), Pose2D(21, 1.5, 0, "1"))
        log = simulate_mission(g, plan, RobotModel(1.0, 0.1))
        assert log.status == "success"
        assert abs(log.ticks - 200) <= 5
        assert log.proxy_goals == [] and log.collisions == 0

    def test_three_rooms(self):
        g, plan = planned(room_chain(3), Pose2D(2, 5, 0, "1"), Pose2D(28, 5, 0, "1"))
        log = simulate_mission(g, plan)
        assert log.status == "success"
        assert [p for _, p in log.goal_switches] == ["D0", "D1"]
        assert log.collisions == 0 and log.proxy_violations == 0

    def test_long_route_uses_proxies(self):
        g, plan = planned(corridor(120.0), Pose2D(1, 1.5, 0, "1"), Pose2D(110, 1.5, 0, "1"))
        log = simulate_mission(g, plan)
        assert log.status == "success" and log.proxy_goals and log.proxy_violations == 0
        assert np.all(log.speeds <= 1.0 + 1e-9)

    def test_abort_on_budget(self):
        g, plan = planned(corridor(60.0), Pose2D(1, 1.5, 0, "1"), Pose2D(21, 1.5, 0, "1"))
        log = simulate_mission(g, plan, config=MissionConfig(max_ticks=20))
        assert log.status == "aborted" and log.ticks == 20

    def test_csv_header(self):
        g, plan = planned(room_chain(2), Pose2D(2, 5, 0, "1"), Pose2D(18, 5, 0, "1"))
        log = simulate_mission(g, plan)
        lines = log.to_csv().splitlines()
        assert lines[0] == "t,x,y,theta,v,level,event" and len(lines) == len(log.rows) + 1
        assert lines[-1].endswith("done")
