"""Occupancy rasters from vector areas, rolling windows, and 8-connected grid A*."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property

import numpy as np
import yaml
from numba import njit

from . import geometry as geo
from .errors import DegenerateArea, NoPath
from .model import AreaGraph

LEAF_RESOLUTION = 0.1
WINDOW_SIZE = 50.0
WINDOW_RESOLUTION = 0.05

_NUDGE = 1e-6  # wall segments shift this far toward the area interior before rasterizing
_GRAZE = 1e-7  # square padding: negative for walls, positive for passages


class Cell(IntEnum):
    FREE = 0
    OCCUPIED = 1
    UNKNOWN = 2


@dataclass(frozen=True, eq=False)
class OccupancyRaster:
    """Row-major grid; row 0 is the bottom row (lowest y), column 0 the leftmost."""

    origin: tuple[float, float]
    resolution: float
    width: int
    height: int
    cells: np.ndarray
    level: str | None = None

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if self.cells.shape != (self.height, self.width):
            raise ValueError("cells shape does not match width/height")

    @cached_property
    def free_flat(self) -> np.ndarray:
        return np.ascontiguousarray((self.cells == Cell.FREE).ravel()).astype(np.uint8)

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return (
            int(math.floor((y - self.origin[1]) / self.resolution)),
            int(math.floor((x - self.origin[0]) / self.resolution)),
        )

    def center(self, row: int, col: int) -> np.ndarray:
        return np.array(
            [
                self.origin[0] + (col + 0.5) * self.resolution,
                self.origin[1] + (row + 0.5) * self.resolution,
            ]
        )

    def in_bounds(self, row: int, col: int) -> bool:
        return 0 <= row < self.height and 0 <= col < self.width

    def state_at(self, x: float, y: float) -> Cell:
        r, c = self.cell_of(x, y)
        if not self.in_bounds(r, c):
            return Cell.UNKNOWN
        return Cell(int(self.cells[r, c]))

    def count(self, state: Cell) -> int:
        return int(np.count_nonzero(self.cells == state))

    def same_as(self, other: "OccupancyRaster") -> bool:
        return (
            self.origin == other.origin
            and self.resolution == other.resolution
            and self.cells.shape == other.cells.shape
            and bool(np.array_equal(self.cells, other.cells))
        )


@dataclass(frozen=True)
class GridPath:
    cost: float
    cells: list[tuple[int, int]]
    closed: int = 0


# -- painting --------------------------------------------------------------

@dataclass(frozen=True)
class _Lattice:
    """Cell (r, c) covers [bx + (c0+c)*res, +res) x [by + (r0+r)*res, +res)."""

    bx: float
    by: float
    res: float
    r0: int
    c0: int
    rows: int
    cols: int

    def col_range(self, x_lo: float, x_hi: float) -> tuple[int, int]:
        lo = math.floor((x_lo - self.bx) / self.res) - self.c0
        hi = math.floor((x_hi - self.bx) / self.res) - self.c0
        return max(lo, 0), min(hi, self.cols - 1)

    def row_range(self, y_lo: float, y_hi: float) -> tuple[int, int]:
        lo = math.floor((y_lo - self.by) / self.res) - self.r0
        hi = math.floor((y_hi - self.by) / self.res) - self.r0
        return max(lo, 0), min(hi, self.rows - 1)

    def corner_x(self, cols: np.ndarray) -> np.ndarray:
        return self.bx + (self.c0 + cols) * self.res

    def corner_y(self, rows: np.ndarray) -> np.ndarray:
        return self.by + (self.r0 + rows) * self.res


def _interior_cells(lat: _Lattice, poly: np.ndarray) -> tuple[slice, slice, np.ndarray] | None:
    lo, hi = poly.min(axis=0), poly.max(axis=0)
    c_lo, c_hi = lat.col_range(lo[0], hi[0])
    r_lo, r_hi = lat.row_range(lo[1], hi[1])
    if c_lo > c_hi or r_lo > r_hi:
        return None
    cols = np.arange(c_lo, c_hi + 1)
    rows = np.arange(r_lo, r_hi + 1)
    xs = lat.corner_x(cols) + 0.5 * lat.res
    ys = lat.corner_y(rows) + 0.5 * lat.res
    mask = geo.points_in_polygon(xs[None, :], ys[:, None], poly)
    return slice(r_lo, r_hi + 1), slice(c_lo, c_hi + 1), mask


def _segment_cells(lat: _Lattice, a: np.ndarray, b: np.ndarray, pad: float) -> tuple[np.ndarray, np.ndarray]:
    reach = abs(pad) + 1e-12
    c_lo, c_hi = lat.col_range(min(a[0], b[0]) - reach, max(a[0], b[0]) + reach)
    r_lo, r_hi = lat.row_range(min(a[1], b[1]) - reach, max(a[1], b[1]) + reach)
    if c_lo > c_hi or r_lo > r_hi:
        return np.empty(0, int), np.empty(0, int)
    cols = np.arange(c_lo, c_hi + 1)
    rows = np.arange(r_lo, r_hi + 1)
    hit = geo.segment_box_hits(
        a, b, lat.corner_x(cols)[None, :], lat.corner_y(rows)[:, None], lat.res, pad
    )
    rr, cc = np.nonzero(hit)
    return rr + r_lo, cc + c_lo


def _wall_cells(lat: _Lattice, poly: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cells crossed by the polygon boundary, shifted a hair inside (CCW ring assumed)."""
    rows, cols = [], []
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        d = b - a
        length = math.hypot(*d)
        if length == 0:
            continue
        inward = np.array([-d[1], d[0]]) / length * _NUDGE
        r, c = _segment_cells(lat, a + inward, b + inward, -_GRAZE)
        rows.append(r)
        cols.append(c)
    if not rows:
        return np.empty(0, int), np.empty(0, int)
    return np.concatenate(rows), np.concatenate(cols)


def _polyline_cells(lat: _Lattice, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rows, cols = [], []
    for a, b in zip(pts[:-1], pts[1:]):
        r, c = _segment_cells(lat, a, b, _GRAZE)
        rows.append(r)
        cols.append(c)
    return np.concatenate(rows), np.concatenate(cols)


def _paint(lat: _Lattice, polys: list[np.ndarray], passages: list[np.ndarray]) -> np.ndarray:
    cells = np.full((lat.rows, lat.cols), Cell.UNKNOWN, dtype=np.uint8)
    for poly in polys:
        hit = _interior_cells(lat, poly)
        if hit is not None:
            rs, cs, mask = hit
            view = cells[rs, cs]
            view[mask] = Cell.FREE
    for poly in polys:
        r, c = _wall_cells(lat, poly)
        cells[r, c] = Cell.OCCUPIED
    for pl in passages:
        r, c = _polyline_cells(lat, pl)
        cells[r, c] = Cell.FREE
    return cells


# -- public rasterizers ----------------------------------------------------

def rasterize_leaf(area_name: str, graph: AreaGraph, resolution: float = LEAF_RESOLUTION) -> OccupancyRaster:
    """Raster of one planar leaf: bbox plus a one-cell margin, walls occupied, resident passages reopened."""
    area = graph.areas[area_name]
    if not area.is_leaf:
        raise DegenerateArea(f"{area_name} is a structure area")
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    poly = graph.area_polygons[area_name]
    lo, hi = poly.min(axis=0), poly.max(axis=0)
    extent = hi - lo
    if min(extent) < resolution:
        raise DegenerateArea(f"{area_name} is thinner than one cell")
    cols = int(math.ceil(extent[0] / resolution - 1e-6)) + 2
    rows = int(math.ceil(extent[1] / resolution - 1e-6)) + 2
    origin = (float(lo[0] - resolution), float(lo[1] - resolution))
    lat = _Lattice(origin[0], origin[1], resolution, 0, 0, rows, cols)
    passages = [graph.passage_polylines[p] for p in graph.resident_passages[area_name]]
    cells = _paint(lat, [poly], passages)
    return OccupancyRaster(origin, resolution, cols, rows, cells, area.level)


class RollingWindow:
    """Fixed-size raster regenerated around the robot at every :meth:`tick`.

    Windows sit on a global lattice (origin at multiples of the resolution), so
    successive windows label their overlap identically. Per-area cell masks are
    memoized; the composed output is the same as painting from scratch.
    """

    def __init__(
        self,
        graph: AreaGraph,
        level: str | None,
        window: float = WINDOW_SIZE,
        resolution: float = WINDOW_RESOLUTION,
    ):
        self.graph = graph
        self.level = level
        self.window = window
        self.resolution = resolution
        self.n = int(round(window / resolution))
        self._areas = [
            name for name in graph.leaf_areas() if graph.areas[name].level == level
        ]
        self._layers: dict[str, tuple] = {}
        self._passage_cells: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        self.retained: list[str] = []

    def _area_layer(self, name: str):
        if name not in self._layers:
            poly = self.graph.area_polygons[name]
            res = self.resolution
            lo, hi = poly.min(axis=0), poly.max(axis=0)
            r0 = math.floor(lo[1] / res) - 1
            c0 = math.floor(lo[0] / res) - 1
            rows = math.floor(hi[1] / res) + 2 - r0
            cols = math.floor(hi[0] / res) + 2 - c0
            lat = _Lattice(0.0, 0.0, res, r0, c0, rows, cols)
            free = np.zeros((rows, cols), dtype=bool)
            hit = _interior_cells(lat, poly)
            if hit is not None:
                rs, cs, mask = hit
                free[rs, cs] = mask
            wall = np.zeros((rows, cols), dtype=bool)
            r, c = _wall_cells(lat, poly)
            wall[r, c] = True
            self._layers[name] = (r0, c0, free, wall)
        return self._layers[name]

    def _passage_layer(self, name: str):
        if name not in self._passage_cells:
            # unbounded lattice anchored at the world origin
            big = 1 << 40
            lat = _Lattice(0.0, 0.0, self.resolution, -big, -big, 2 * big, 2 * big)
            r, c = _polyline_cells(lat, self.graph.passage_polylines[name])
            self._passage_cells[name] = (r - big, c - big)
        return self._passage_cells[name]

    def tick(self, center) -> OccupancyRaster:
        res, n = self.resolution, self.n
        half = 0.5 * self.window
        c0 = math.floor((float(center[0]) - half) / res + 0.5)
        r0 = math.floor((float(center[1]) - half) / res + 0.5)
        x_lo, y_lo = c0 * res, r0 * res
        x_hi, y_hi = x_lo + n * res, y_lo + n * res
        cells = np.full((n, n), Cell.UNKNOWN, dtype=np.uint8)
        retained = []
        for name in self._areas:
            bx0, by0, bx1, by1 = self.graph.area_bboxes[name]
            if bx1 < x_lo or bx0 > x_hi or by1 < y_lo or by0 > y_hi:
                continue
            retained.append(name)
        layers = [self._area_layer(name) for name in retained]
        for mask_idx, state in ((2, Cell.FREE), (3, Cell.OCCUPIED)):
            for layer in layers:
                ar0, ac0, mask = layer[0], layer[1], layer[mask_idx]
                rs = slice(max(ar0, r0), min(ar0 + mask.shape[0], r0 + n))
                cs = slice(max(ac0, c0), min(ac0 + mask.shape[1], c0 + n))
                if rs.start >= rs.stop or cs.start >= cs.stop:
                    continue
                sub = mask[rs.start - ar0 : rs.stop - ar0, cs.start - ac0 : cs.stop - ac0]
                view = cells[rs.start - r0 : rs.stop - r0, cs.start - c0 : cs.stop - c0]
                view[sub] = state
        reopen = sorted({p for name in retained for p in self.graph.resident_passages[name]})
        for pname in reopen:
            pr, pc = self._passage_layer(pname)
            pr, pc = pr - r0, pc - c0
            ok = (pr >= 0) & (pr < n) & (pc >= 0) & (pc < n)
            cells[pr[ok], pc[ok]] = Cell.FREE
        self.retained = retained
        return OccupancyRaster((x_lo, y_lo), res, n, n, cells, self.level)


def rolling_window(
    graph: AreaGraph,
    center,
    level: str | None,
    window: float = WINDOW_SIZE,
    resolution: float = WINDOW_RESOLUTION,
) -> OccupancyRaster:
    return RollingWindow(graph, level, window, resolution).tick(center)


def rasterize_floor(graph: AreaGraph, level: str | None, resolution: float, margin: float = 1.0) -> OccupancyRaster:
    """Monolithic raster of every leaf on a level (the Grid A* baseline's map)."""
    names = [n for n in graph.leaf_areas() if graph.areas[n].level == level]
    if not names:
        raise DegenerateArea(f"no leaf areas on level {level!r}")
    boxes = np.array([graph.area_bboxes[n] for n in names])
    x_lo, y_lo = boxes[:, 0].min() - margin, boxes[:, 1].min() - margin
    x_hi, y_hi = boxes[:, 2].max() + margin, boxes[:, 3].max() + margin
    c0, r0 = math.floor(x_lo / resolution), math.floor(y_lo / resolution)
    cols = math.ceil(x_hi / resolution) - c0
    rows = math.ceil(y_hi / resolution) - r0
    lat = _Lattice(0.0, 0.0, resolution, r0, c0, rows, cols)
    polys = [graph.area_polygons[n] for n in names]
    passages = sorted({p for n in names for p in graph.resident_passages[n]})
    cells = _paint(lat, polys, [graph.passage_polylines[p] for p in passages])
    return OccupancyRaster((c0 * resolution, r0 * resolution), resolution, cols, rows, cells, level)


# -- grid A* ---------------------------------------------------------------

_SQRT2 = math.sqrt(2.0)


@njit(cache=True)
def _astar_kernel(free, width, height, start, goal, res):
    n = width * height
    g = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.int64)
    closed = np.zeros(n, dtype=np.uint8)
    gr, gc = goal // width, goal % width
    diag = res * 1.4142135623730951
    k = 0.41421356237309515 * res
    sr, sc = start // width, start % width
    dr0, dc0 = abs(sr - gr), abs(sc - gc)
    h0 = res * max(dr0, dc0) + k * min(dr0, dc0)
    g[start] = 0.0
    heap = [(h0, 0.0, 0, start)]
    counter = 1
    n_closed = 0
    drs = (-1, -1, -1, 0, 0, 1, 1, 1)
    dcs = (-1, 0, 1, -1, 1, -1, 0, 1)
    while len(heap) > 0:
        f, neg_g, _, cur = heapq.heappop(heap)
        if closed[cur]:
            continue
        closed[cur] = 1
        n_closed += 1
        if cur == goal:
            return g[cur], n_closed, parent
        r, c = cur // width, cur % width
        gcur = g[cur]
        for m in range(8):
            dr, dc = drs[m], dcs[m]
            nr, nc = r + dr, c + dc
            if nr < 0 or nr >= height or nc < 0 or nc >= width:
                continue
            nb = nr * width + nc
            if free[nb] == 0 or closed[nb]:
                continue
            if dr != 0 and dc != 0:
                if free[r * width + nc] == 0 or free[nr * width + c] == 0:
                    continue
                step = diag
            else:
                step = res
            cand = gcur + step
            if cand < g[nb]:
                g[nb] = cand
                parent[nb] = cur
                ar, ac = abs(nr - gr), abs(nc - gc)
                h = res * max(ar, ac) + k * min(ar, ac)
                heapq.heappush(heap, (cand + h, -cand, counter, nb))
                counter += 1
    return np.inf, n_closed, parent


def grid_astar(raster: OccupancyRaster, start: tuple[int, int], goal: tuple[int, int]) -> GridPath:
    """Optimal 8-connected path over free cells (no corner cutting), octile heuristic."""
    for rc in (start, goal):
        if not raster.in_bounds(*rc):
            raise ValueError(f"cell {rc} out of bounds")
    w = raster.width
    free = raster.free_flat
    s = start[0] * w + start[1]
    t = goal[0] * w + goal[1]
    if not free[s] or not free[t]:
        raise NoPath("start or goal cell is not free")
    cost, n_closed, parent = _astar_kernel(free, w, raster.height, s, t, float(raster.resolution))
    if not math.isfinite(cost):
        raise NoPath(f"no path from {start} to {goal}")
    path = [t]
    while path[-1] != s:
        path.append(int(parent[path[-1]]))
    path.reverse()
    return GridPath(float(cost), [(i // w, i % w) for i in path], int(n_closed))


def snap_to_free(
    raster: OccupancyRaster, p, radius_cells: int = 3, prefer=None
) -> tuple[int, int] | None:
    """Nearest free cell to p within a square radius; cells where prefer(center) holds win first."""
    r0, c0 = raster.cell_of(float(p[0]), float(p[1]))
    best = None
    for r in range(r0 - radius_cells, r0 + radius_cells + 1):
        for c in range(c0 - radius_cells, c0 + radius_cells + 1):
            if not raster.in_bounds(r, c) or raster.cells[r, c] != Cell.FREE:
                continue
            ctr = raster.center(r, c)
            d = math.hypot(ctr[0] - p[0], ctr[1] - p[1])
            rank = 0 if prefer is None or prefer(ctr) else 1
            key = (rank, d, r, c)
            if best is None or key < best:
                best = key
    return None if best is None else (best[2], best[3])


# -- export ----------------------------------------------------------------

PGM_VALUES = {Cell.OCCUPIED: 0, Cell.FREE: 254, Cell.UNKNOWN: 205}


def export_pgm(raster: OccupancyRaster) -> bytes:
    """Binary P5 image, top row first (ROS map_server convention)."""
    lut = np.zeros(3, dtype=np.uint8)
    for state, value in PGM_VALUES.items():
        lut[state] = value
    data = lut[raster.cells[::-1]]
    header = f"P5\n{raster.width} {raster.height}\n255\n".encode("ascii")
    return header + data.tobytes()


def export_yaml(raster: OccupancyRaster, image_name: str) -> str:
    return yaml.safe_dump(
        {
            "image": image_name,
            "resolution": float(raster.resolution),
            "origin": [float(raster.origin[0]), float(raster.origin[1]), 0.0],
            "negate": 0,
            "occupied_thresh": 0.65,
            "free_thresh": 0.196,
        },
        sort_keys=False,
    )


def pgm_bytes(raster: OccupancyRaster) -> int:
    return len(export_pgm(raster))
