import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from maps import l_room, room_chain, single_room
from oracles import grid_dijkstra, path_moves
from osmagnav.builder import rect
from osmagnav.errors import DegenerateArea, NoPath
from osmagnav.raster import (
    Cell,
    OccupancyRaster,
    RollingWindow,
    export_pgm,
    export_yaml,
    grid_astar,
    rasterize_floor,
    rasterize_leaf,
    rolling_window,
    snap_to_free,
)


def grid(free: np.ndarray, res: float = 0.1) -> OccupancyRaster:
    cells = np.where(free, Cell.FREE, Cell.OCCUPIED).astype(np.uint8)
    h, w = free.shape
    return OccupancyRaster((0.0, 0.0), res, w, h, cells)


def canonical(moves, res):
    return moves[0] * res + moves[1] * res * math.sqrt(2)


class TestLeafRaster:
    def test_square_room(self):
        r = rasterize_leaf("R1", single_room().build(), 0.1)
        assert r.count(Cell.FREE) == 98 * 98
        # one-cell occupied ring inside a one-cell unknown margin
        assert (r.cells[1, 1:-1] == Cell.OCCUPIED).all() and (r.cells[0] == Cell.UNKNOWN).all()
        assert r.count(Cell.OCCUPIED) == 4 * 99

    def test_door_reopens_wall(self):
        b = single_room()
        b.area("N", "room", rect(0, 10, 10, 15), level="1")
        b.passage("D", [(4.5, 10), (5.5, 10)], "R1", "N", level="1")
        r = rasterize_leaf("R1", b.build(), 0.1)
        top = r.cells[-2]  # the wall row along y = 10
        assert np.count_nonzero(top == Cell.FREE) >= math.ceil(1 / 0.1)

    def test_l_room_area(self):
        b, area = l_room()
        r = rasterize_leaf("L", b.build(), 0.1)
        perimeter_cells = (8 + 3 + 5 + 3 + 3 + 6) / 0.1
        assert abs(r.count(Cell.FREE) - area / 0.01) <= perimeter_cells

    def test_every_passage_reopened(self, campus):
        for leaf in campus.leaf_areas()[:40]:
            r = rasterize_leaf(leaf, campus, 0.1)
            for p in campus.resident_passages[leaf]:
                pts = campus.passage_polylines[p]
                hits = [r.state_at(*(pts[0] + t * (pts[-1] - pts[0]))) for t in np.linspace(0, 1, 21)]
                assert Cell.FREE in hits, (leaf, p)

    def test_structure_rejected(self):
        with pytest.raises(DegenerateArea):
            rasterize_leaf("F", room_chain(2).build())

    def test_deterministic(self, campus):
        leaf = campus.leaf_areas()[7]
        a, b = rasterize_leaf(leaf, campus), rasterize_leaf(leaf, campus)
        assert a.same_as(b)


class TestGridAstar:
    def test_straight(self):
        r = grid(np.ones((12, 3), dtype=bool))
        p = grid_astar(r, (0, 0), (9, 0))
        assert p.cost == pytest.approx(0.9) and len(p.cells) == 10

    def test_goal_occupied(self):
        free = np.ones((5, 5), dtype=bool)
        free[4, 4] = False
        with pytest.raises(NoPath):
            grid_astar(grid(free), (0, 0), (4, 4))

    def test_disconnected(self):
        free = np.ones((5, 5), dtype=bool)
        free[:, 2] = False
        with pytest.raises(NoPath):
            grid_astar(grid(free), (0, 0), (0, 4))

    def test_no_corner_cutting(self):
        free = np.ones((2, 2), dtype=bool)
        free[0, 1] = False
        p = grid_astar(grid(free, 1.0), (0, 0), (1, 1))
        assert path_moves(p.cells) == (2, 0)

    def test_octile_on_empty(self):
        r = grid(np.ones((30, 30), dtype=bool), 1.0)
        p = grid_astar(r, (2, 3), (20, 9))
        assert p.cost == pytest.approx(12 + 6 * math.sqrt(2))

    def test_random_against_dijkstra(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            free = rng.random((64, 64)) > rng.uniform(0.1, 0.35)
            cells = np.argwhere(free)
            s, g = (tuple(map(int, cells[i])) for i in rng.choice(len(cells), 2, replace=False))
            ref = grid_dijkstra(free, s, g)
            if ref is None:
                with pytest.raises(NoPath):
                    grid_astar(grid(free), s, g)
                continue
            p = grid_astar(grid(free), s, g)
            assert path_moves(p.cells) == ref
            assert p.cost == pytest.approx(canonical(ref, 0.1), abs=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_cost_at_least_euclid(self, seed):
        rng = np.random.default_rng(seed)
        free = rng.random((20, 20)) > 0.25
        cells = np.argwhere(free)
        s, g = (tuple(map(int, cells[i])) for i in rng.choice(len(cells), 2, replace=False))
        try:
            p = grid_astar(grid(free, 1.0), s, g)
        except NoPath:
            return
        assert p.cost >= math.dist(s, g) - 1e-9
        for a, b in zip(p.cells, p.cells[1:]):
            assert free[a] and free[b] and max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1


class TestSnap:
    def test_prefers_inside(self):
        free = np.ones((7, 7), dtype=bool)
        r = grid(free, 1.0)
        cell = snap_to_free(r, (3.0, 3.0), 1, prefer=lambda c: c[0] > 3.0)
        assert cell == (2, 3)  # four equidistant centers; the preferred column wins, then the lower row

    def test_none_when_blocked(self):
        r = grid(np.zeros((7, 7), dtype=bool), 1.0)
        assert snap_to_free(r, (3.5, 3.5), 3) is None


class TestRollingWindow:
    def test_cell_count_is_map_independent(self, campus):
        small = room_chain(4).build()
        a = rolling_window(small, (5, 5), "1", 50.0, 0.05)
        b = rolling_window(campus, (30, 3), "1", 50.0, 0.05)
        assert a.cells.size == b.cells.size == 1000 * 1000

    def test_outside_areas_unknown(self):
        g = single_room().build()
        r = rolling_window(g, (5, 5), "1", 20.0, 0.1)
        assert r.state_at(-3, 5) == Cell.UNKNOWN and r.state_at(5, 5) == Cell.FREE

    def test_empty_window(self):
        g = single_room().build()
        r = rolling_window(g, (500, 500), "1", 10.0, 0.1)
        assert r.count(Cell.UNKNOWN) == r.cells.size

    def test_overlap_consistent(self, campus):
        win = RollingWindow(campus, "1", 20.0, 0.05)
        a = win.tick((30.0, 3.0))
        b = win.tick((31.0, 3.0))
        shift = int(round((b.origin[0] - a.origin[0]) / 0.05))
        assert shift == 20
        assert np.array_equal(a.cells[:, shift:], b.cells[:, :-shift])

    def test_memo_matches_fresh(self, campus):
        win = RollingWindow(campus, "2", 30.0, 0.05)
        win.tick((10.0, 0.0))
        again = win.tick((40.0, 2.0))
        fresh = RollingWindow(campus, "2", 30.0, 0.05).tick((40.0, 2.0))
        assert again.same_as(fresh)


class TestExport:
    def test_tiny_pgm(self):
        data = export_pgm(grid(np.ones((2, 2), dtype=bool)))
        assert data.startswith(b"P5\n2 2\n255\n")
        assert data[len(b"P5\n2 2\n255\n"):] == bytes([254] * 4)

    def test_campus_floor_reads_back(self, campus):
        r = rasterize_floor(campus, "1", 0.1)
        img = Image.open(io.BytesIO(export_pgm(r)))
        assert img.size == (r.width, r.height)
        top = np.asarray(img)[0]
        assert np.array_equal(top, np.where(r.cells[-1] == Cell.FREE, 254, np.where(r.cells[-1] == Cell.OCCUPIED, 0, 205)))

    def test_yaml(self):
        import yaml

        doc = yaml.safe_load(export_yaml(grid(np.ones((2, 2), dtype=bool)), "m.pgm"))
        assert doc["image"] == "m.pgm" and doc["resolution"] == 0.1 and doc["origin"] == [0.0, 0.0, 0.0]
