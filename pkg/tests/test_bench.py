import json
import math

import pytest

from maps import room_chain, single_room
from osmagnav.bench import (
    GridBaseline,
    Query,
    bucket_for,
    generate_queries,
    load_queries,
    run_benchmark,
    run_cache_ablation,
    save_queries,
    storage_report,
)
from osmagnav.errors import CrossFloorUnsupported
from osmagnav.geometry import Pose2D
from osmagnav.model import parse_osmag
from osmagnav.passage_graph import build_base_graph, build_caches
from osmagnav.synthetic import CampusSpec, generate_synthetic_campus


@pytest.mark.parametrize(
    "cost, hops, cross, expect",
    [
        (10.0, 1, False, "short"),
        (49.9, 3, False, "short"),
        (49.9, 0, False, None),
        (50.0, 4, False, "medium"),
        (150.0, 6, False, "medium"),
        (150.1, 7, False, "long"),
        (40.0, 5, False, None),  # length and hops disagree
        (200.0, 2, True, "cross_floor"),
    ],
)
def test_buckets(cost, hops, cross, expect):
    assert bucket_for(cost, hops, cross) == expect


@pytest.fixture(scope="module")
def chain():
    g = room_chain(3).build()
    pg, _ = build_base_graph(g)
    return g, pg, build_caches(pg, g)


def test_single_query_report(chain):
    g, pg, cache = chain
    q = Query(0, Pose2D(2, 5, 0, "1"), Pose2D(28, 5, 0, "1"), "short")
    rep = run_benchmark(g, pg, cache, [q], orders=2)
    assert [r.planner for r in rep.records] == ["grid", "flat", "hier"]
    grid, flat, hier = rep.records
    assert all(r.ok and r.deterministic for r in rep.records)
    assert grid.overhead_pct is None and flat.overhead_pct == pytest.approx(hier.overhead_pct)
    assert flat.hops == hier.hops == 2
    assert hier.cost == flat.cost
    # hierarchical route length stays within a few percent of the fine grid
    assert abs(hier.overhead_pct) < 5.0
    doc = json.loads(rep.to_json())
    assert set(doc["aggregates"]["short"]) == {"grid", "flat", "hier"}
    assert "bucket" in rep.table()


def test_grid_rejects_cross_floor(campus):
    base = GridBaseline(campus)
    with pytest.raises(CrossFloorUnsupported):
        base.plan(Pose2D(5, 1, 0, "1"), Pose2D(5, 1, 0, "2"))


def test_generate_queries_respects_buckets(chain):
    g, pg, cache = chain
    qs = generate_queries(g, pg, cache, per_bucket=3, seed=1)
    # a three-room map has only short routes; other buckets stay empty
    assert qs and {q.bucket for q in qs} == {"short"} and len(qs) == 3


def test_queries_round_trip(tmp_path):
    qs = [Query(0, Pose2D(1.5, 2, 0, "1"), Pose2D(3, 4, 0, "2"), "cross_floor")]
    save_queries(qs, tmp_path / "q.json")
    back = load_queries(tmp_path / "q.json")
    assert back[0].to_dict() == qs[0].to_dict()


def test_ablation_paths_equal(chain):
    g, pg, cache = chain
    q = Query(0, Pose2D(2, 5, 0, "1"), Pose2D(28, 5, 0, "1"))
    rep = run_cache_ablation(g, pg, cache, [q], trials=3)
    s = rep.summary()
    assert s["pairs"] == 3 and s["equal_paths"] == 3 and s["rebuild_ms"] > 0


class TestStorage:
    def test_single_room_small(self):
        rep = storage_report(single_room().build())
        assert rep["vector_bytes"] < 10_000
        # 12 m including the 1 m margin, plus at most one cell of float rounding per axis
        assert 240 * 240 <= rep["grid_cells"] <= 241 * 241
        assert rep["pointcloud_bytes_estimate"] == 100 * 100 * 16

    def test_grid_grows_faster_than_vector(self):
        def rep(length):
            spec = CampusSpec(floors=1, sectors_per_floor=2, rooms_per_side=3, sector_length=length, elevators=0)
            xml, _ = generate_synthetic_campus(3, spec)
            return storage_report(parse_osmag(xml), vector_text=xml)

        a, b = rep(18.0), rep(36.0)
        assert b["grid_bytes"] / a["grid_bytes"] > 1.5
        assert b["vector_bytes"] / a["vector_bytes"] < 1.05
        assert math.isclose(b["pointcloud_bytes_estimate"] / a["pointcloud_bytes_estimate"], 2.0, rel_tol=0.1)


def test_same_room_grid_matches_passage_planners(campus, campus_planning):
    from osmagnav.planner import plan_flat, plan_hierarchical

    pg, cache, _ = campus_planning
    base = GridBaseline(campus)
    leaf = "F2_S3_C"
    x0, y0, x1, y1 = campus.area_bboxes[leaf]
    s = Pose2D(x0 + 1.0, 0.5 * (y0 + y1), 0, "2")
    t = Pose2D(x1 - 1.0, y0 + 0.7, 0, "2")
    grid = base.plan(s, t)
    flat = plan_flat(campus, pg, cache, s, t)
    hier = plan_hierarchical(campus, pg, cache, s, t)
    assert flat.passages == hier.passages == []
    assert abs(grid.cost - flat.cost) <= 2 * 0.1 and hier.cost == flat.cost
