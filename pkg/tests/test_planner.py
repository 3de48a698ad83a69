import math
import random

import numpy as np
import pytest

from maps import elevator_pair, lift_chain, room_chain
from oracles import passage_dijkstra
from osmagnav.bench import random_interior_pose
from osmagnav.builder import MapBuilder, rect
from osmagnav.errors import InvalidFrontier, NoRoute
from osmagnav.geometry import Pose2D
from osmagnav.passage_graph import (
    VirtualPassage,
    build_base_graph,
    build_caches,
    direct_link,
    inject_virtual_passage,
    passage_allowed,
)
from osmagnav.planner import (
    FloorConstraint,
    Frontier,
    FrontierEntry,
    PlannerConfig,
    attach,
    expand_compact_trace,
    lift,
    plan_flat,
    plan_hierarchical,
)

RES = 0.1


def setup(builder):
    g = builder.build()
    pg, _ = build_base_graph(g)
    return g, pg, build_caches(pg, g)


def flat_oracle(graph, pg, start, goal, phi):
    """Cost by plain Dijkstra over the base graph plus raster-costed endpoint edges."""
    hs, _ = inject_virtual_passage(graph, pg, None, start, start.level, "s")
    hg, _ = inject_virtual_passage(graph, pg, None, goal, goal.level, "g")
    direct = direct_link(graph, pg, hs, hg)
    allowed = {v for v, vx in pg.vertices.items() if passage_allowed(vx.level, phi)}
    seeds = {}
    for e in hs.edges:
        if e.v in allowed:
            seeds[e.v] = min(seeds.get(e.v, math.inf), e.weight)
    dist = passage_dijkstra([(e.u, e.v, e.weight) for e in pg.edges.values()], seeds, allowed)
    best = direct.weight if direct is not None else math.inf
    for e in hg.edges:
        if e.v in dist:
            best = min(best, dist[e.v] + e.weight)
    return best


def campus_phi(graph, start, goal):
    from osmagnav.model import locate_leaf_area

    ls = graph.areas[locate_leaf_area(graph, start, start.level)].level
    lg = graph.areas[locate_leaf_area(graph, goal, goal.level)].level
    return ls if ls and ls == lg else None


class TestFlat:
    def test_same_room(self):
        g, pg, cache = setup(room_chain(2))
        res = plan_flat(g, pg, cache, Pose2D(2, 2, 0, "1"), Pose2D(8, 8, 0, "1"))
        assert res.passages == [] and res.cost == pytest.approx(6 * math.sqrt(2), abs=2 * RES)
        assert res.steps[0].kind == "virtual"

    def test_forced_door(self):
        g, pg, cache = setup(room_chain(2))
        res = plan_flat(g, pg, cache, Pose2D(2, 5, 0, "1"), Pose2D(18, 5, 0, "1"))
        assert res.passages == ["D0"]
        assert res.dense_path[0].tolist() == [2, 5] and res.dense_path[-1].tolist() == [18, 5]

    def test_campus_against_oracle(self, campus, campus_planning):
        pg, cache, _ = campus_planning
        rng = random.Random(21)
        leaves = campus.leaf_areas("1")
        for _ in range(200):
            s = random_interior_pose(campus, rng.choice(leaves), rng)
            t = random_interior_pose(campus, rng.choice(leaves), rng)
            res = plan_flat(campus, pg, cache, s, t)
            assert res.cost == pytest.approx(flat_oracle(campus, pg, s, t, campus_phi(campus, s, t)), abs=1e-9)

    def test_no_route(self):
        b = MapBuilder()
        b.area("A", "room", rect(0, 0, 5, 5), level="1")
        b.area("B", "room", rect(10, 0, 15, 5), level="1")
        b.area("C", "room", rect(20, 0, 25, 5), level="1")
        b.passage("P", [(5, 1), (5, 2)], "A", "C", level="1")  # B stays isolated
        g, pg, cache = setup(b)
        with pytest.raises(NoRoute):
            plan_flat(g, pg, cache, Pose2D(1, 1, 0, "1"), Pose2D(12, 2, 0, "1"))
        with pytest.raises(NoRoute):
            plan_hierarchical(g, pg, cache, Pose2D(1, 1, 0, "1"), Pose2D(12, 2, 0, "1"))


class TestAttachLift:
    def test_frontier_distances(self):
        b = MapBuilder()
        b.area("F", "structure", rect(-3, 0, 13, 4), level="1")
        b.area("R", "room", rect(0, 0, 10, 4), parent="F", level="1")
        b.area("W", "room", rect(-3, 0, 0, 4), parent="F", level="1")
        b.area("E", "room", rect(10, 0, 13, 4), parent="F", level="1")
        b.passage("d1", [(0, 1.5), (0, 2.5)], "W", "R", level="1")
        b.passage("d2", [(10, 1.5), (10, 2.5)], "R", "E", level="1")
        g, pg, cache = setup(b)
        h, _ = inject_virtual_passage(g, pg, cache, (3, 2), "1")
        f = attach(h, pg, cache, FloorConstraint())
        assert f.costs()["d1"] == pytest.approx(3.0, abs=2 * RES)
        assert f.costs()["d2"] == pytest.approx(7.0, abs=2 * RES)

    def test_floor_filter_drops_interfloor(self):
        g, pg, cache = setup(elevator_pair())
        h, leaf = inject_virtual_passage(g, pg, cache, (12, 1), "1")
        assert leaf == "E1"
        assert "V12" in attach(h, pg, cache, FloorConstraint()).entries
        f = attach(h, pg, cache, FloorConstraint("1"))
        assert "V12" not in f.entries and "D1" in f.entries

    def test_blocked_room(self):
        g, pg, cache = setup(room_chain(2))
        h = VirtualPassage("s", (5.0, 5.0), "1", "R0", [])
        with pytest.raises(InvalidFrontier):
            attach(h, pg, cache, FloorConstraint())

    def test_single_boundary_chain(self):
        b = MapBuilder()
        b.area("B", "structure", rect(-5, 0, 30, 10), level="1")
        b.area("A", "room", rect(-5, 0, 0, 10), parent="B", level="1")
        b.area("F", "structure", rect(0, 0, 30, 10), parent="B", level="1")
        for i in range(3):
            b.area(f"R{i + 1}", "room", rect(10 * i, 0, 10 * i + 10, 10), parent="F", level="1")
        b.passage("PA", [(0, 4.5), (0, 5.5)], "A", "R1", level="1")
        b.passage("P12", [(10, 2), (10, 3)], "R1", "R2", level="1")
        b.passage("P23", [(20, 7), (20, 8)], "R2", "R3", level="1")
        g, pg, cache = setup(b)
        assert cache.summary("F", None).boundary == ("PA",)
        f, parent = lift(Frontier("R3", {"P23": FrontierEntry(2.0, ())}), g, cache, FloorConstraint())
        assert parent == "F" and list(f.entries) == ["PA"]
        w = pg.edge("P23", "P12").weight + pg.edge("P12", "PA").weight
        assert f.entries["PA"].cost == pytest.approx(2.0 + w, abs=1e-9)

    def test_lift_matches_subtree_oracle(self, campus, campus_planning):
        pg, cache, _ = campus_planning
        rng = random.Random(8)
        for _ in range(40):
            leaf = rng.choice(campus.leaf_areas())
            pose = random_interior_pose(campus, leaf, rng)
            h, _ = inject_virtual_passage(campus, pg, cache, pose, pose.level)
            f = attach(h, pg, cache, FloorConstraint())
            lifted, parent = lift(f, campus, cache, FloorConstraint())
            sub = {n for n in campus.areas if parent in campus.ancestors(n)}
            edges = [(e.u, e.v, e.weight) for e in pg.edges.values() if e.through_area in sub]
            edges += [("__v", e.v, e.weight) for e in h.edges]
            ref = passage_dijkstra(edges, {"__v": 0.0})
            glob = passage_dijkstra([(e.u, e.v, e.weight) for e in pg.edges.values()] + edges, {"__v": 0.0})
            for p, entry in lifted.entries.items():
                assert entry.cost == pytest.approx(ref[p], abs=1e-6)
                assert glob[p] <= entry.cost + 1e-9


class TestHierarchical:
    def test_same_leaf(self):
        g, pg, cache = setup(lift_chain())
        s, t = Pose2D(12, 2, 0, "1"), Pose2D(18, 8, 0, "1")
        h = plan_hierarchical(g, pg, cache, s, t)
        f = plan_flat(g, pg, cache, s, t)
        assert h.lift_areas == [] and h.passages == f.passages and h.cost == f.cost

    def test_chain_through_structure(self):
        g, pg, cache = setup(lift_chain())
        h = plan_hierarchical(g, pg, cache, Pose2D(-2, 5, 0, "1"), Pose2D(32, 5, 0, "1"))
        assert h.passages == ["PA", "P12", "P23", "PZ"] and not h.used_fallback

    def test_cross_floor_elevator(self, campus, campus_planning):
        pg, cache, _ = campus_planning
        s = random_interior_pose(campus, "F1_S0_S0", random.Random(1))
        t = random_interior_pose(campus, "F2_S8_N1", random.Random(2))
        res = plan_hierarchical(campus, pg, cache, s, t)
        assert any(p.startswith("V") for p in res.passages)
        assert len(res.floor_transitions) == 1
        assert res.floor_transitions[0][1:] == ("1", "2")
        assert res.cost == pytest.approx(plan_flat(campus, pg, cache, s, t).cost, abs=1e-6)

    def test_fallback_on_disjoint_trees(self):
        b = MapBuilder()
        b.area("T1", "structure", rect(0, 0, 10, 10), level="1")
        b.area("T2", "structure", rect(10, 0, 20, 10), level="1")
        b.area("A", "room", rect(0, 0, 10, 10), parent="T1", level="1")
        b.area("B", "room", rect(10, 0, 20, 10), parent="T2", level="1")
        b.passage("P", [(10, 4), (10, 5)], "A", "B", level="1")
        g, pg, cache = setup(b)
        s, t = Pose2D(2, 2, 0, "1"), Pose2D(18, 8, 0, "1")
        res = plan_hierarchical(g, pg, cache, s, t)
        assert res.used_fallback and res.passages == ["P"]
        assert res.cost == plan_flat(g, pg, cache, s, t).cost
        with pytest.raises(InvalidFrontier):
            plan_hierarchical(g, pg, cache, s, t, PlannerConfig(allow_fallback=False))

    def test_campus_properties(self, campus, campus_planning):
        pg, cache, _ = campus_planning
        rng = random.Random(99)
        leaves = campus.leaf_areas()
        for _ in range(150):
            s = random_interior_pose(campus, rng.choice(leaves), rng)
            t = random_interior_pose(campus, rng.choice(leaves), rng)
            h = plan_hierarchical(campus, pg, cache, s, t)
            f = plan_flat(campus, pg, cache, s, t)
            assert abs(h.cost - f.cost) < 1e-6
            assert not h.used_fallback
            assert abs(sum(st.weight for st in h.steps) - h.cost) < 1e-6
            for a, b in zip(h.passages, h.passages[1:]):
                assert set(pg.vertices[a].areas) & set(pg.vertices[b].areas)
            for p, la, lb in h.floor_transitions:
                assert any(campus.areas[x].is_vertical for x in pg.vertices[p].areas)
            if h.floor_constraint.level is not None:
                assert all(passage_allowed(pg.vertices[p].level, h.floor_constraint.level) for p in h.passages)
                assert h.floor_transitions == []

    def test_deterministic(self, campus, campus_planning):
        pg, cache, _ = campus_planning
        rng = random.Random(4)
        s = random_interior_pose(campus, "F1_S1_S2", rng)
        t = random_interior_pose(campus, "F3_S6_N0", rng)
        a = plan_hierarchical(campus, pg, cache, s, t)
        b = plan_hierarchical(campus, pg, cache, s, t)
        assert a.passages == b.passages and a.cost == b.cost and a.closed_states == b.closed_states
        assert np.array_equal(a.dense_path, b.dense_path)


class TestExpand:
    def test_leaf_edge_verbatim(self):
        g, pg, cache = setup(room_chain(3))
        e = pg.edge("D0", "D1")
        passages, pts = expand_compact_trace([("base", "R1", "D0", "D1")], pg, cache, FloorConstraint())
        assert passages == ["D0", "D1"]
        assert [tuple(p) for p in pts] == list(e.trace_from("D0"))

    def test_clique_expands_to_base_edges(self):
        g, pg, cache = setup(lift_chain())
        se = cache.summary("F", None).clique[("PA", "PZ")]
        passages, pts = expand_compact_trace([("clique", "F", "PA", "PZ")], pg, cache, FloorConstraint())
        assert passages == ["PA", "P12", "P23", "PZ"]
        assert len(passages) >= 2
        steps = sum(pg.edge(a, b).weight for a, b in zip(passages, passages[1:]))
        assert steps == pytest.approx(se.weight, abs=1e-6)
