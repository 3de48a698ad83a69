"""Independent reference implementations the library is checked against.

None of these import library internals beyond plain data containers.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

EARTH_RADIUS = 6378137.0


def grid_dijkstra(free: np.ndarray, start, goal):
    """Plain 8-connected Dijkstra over a boolean grid, no corner cutting.

    Costs are kept as exact integer pairs (straight, diagonal) ordered by
    straight + diagonal * sqrt(2). Returns that pair or None if unreachable.
    """
    h, w = free.shape
    if not free[start] or not free[goal]:
        return None
    best = {start: (0, 0)}
    heap = [(0.0, 0, 0, start)]
    done = set()
    while heap:
        _, ns, nd, cur = heapq.heappop(heap)
        if cur in done:
            continue
        done.add(cur)
        if cur == goal:
            return ns, nd
        r, c = cur
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == dc == 0:
                    continue
                nr, nc = r + dr, c + dc
                if not (0 <= nr < h and 0 <= nc < w) or not free[nr, nc]:
                    continue
                diag = dr != 0 and dc != 0
                if diag and (not free[r, nc] or not free[nr, c]):
                    continue
                cand = (ns, nd + 1) if diag else (ns + 1, nd)
                old = best.get((nr, nc))
                if old is None or cand[0] + cand[1] * math.sqrt(2) < old[0] + old[1] * math.sqrt(2) - 1e-12:
                    best[(nr, nc)] = cand
                    heapq.heappush(heap, (cand[0] + cand[1] * math.sqrt(2), cand[0], cand[1], (nr, nc)))
    return None


def path_moves(cells) -> tuple[int, int]:
    """(straight, diagonal) move counts of a cell path."""
    s = d = 0
    for (r0, c0), (r1, c1) in zip(cells, cells[1:]):
        if abs(r1 - r0) + abs(c1 - c0) == 2:
            d += 1
        else:
            s += 1
    return s, d


def haversine_local(lat0: float, lon0: float, lat: float, lon: float) -> tuple[float, float]:
    """East/north offsets from great-circle distance and initial bearing on a sphere."""
    p0, p1 = math.radians(lat0), math.radians(lat)
    dl = math.radians(lon - lon0)
    a = math.sin((p1 - p0) / 2) ** 2 + math.cos(p0) * math.cos(p1) * math.sin(dl / 2) ** 2
    dist = 2 * EARTH_RADIUS * math.asin(math.sqrt(a))
    bearing = math.atan2(
        math.sin(dl) * math.cos(p1), math.cos(p0) * math.sin(p1) - math.sin(p0) * math.cos(p1) * math.cos(dl)
    )
    return dist * math.sin(bearing), dist * math.cos(bearing)


def lca_by_chains(parent: dict[str, str], a: str, b: str) -> str | None:
    """Intersect the full ancestor sets, then pick the deepest common element."""

    def chain(x):
        out = [x]
        while x in parent:
            x = parent[x]
            out.append(x)
        return out

    ca, cb = chain(a), chain(b)
    common = set(ca) & set(cb)
    if not common:
        return None
    return max(common, key=lambda n: len(chain(n)))


def ray_inside(x: float, y: float, poly) -> bool:
    """Even-odd crossing test, written independently of the library version."""
    inside = False
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xc:
                inside = not inside
    return inside


def passage_dijkstra(edges, sources: dict[str, float], allowed=None) -> dict[str, float]:
    """Dijkstra over undirected weighted edges given as (u, v, w) triples."""
    adj: dict[str, list[tuple[str, float]]] = {}
    for u, v, w in edges:
        if allowed is not None and (u not in allowed or v not in allowed):
            continue
        adj.setdefault(u, []).append((v, w))
        adj.setdefault(v, []).append((u, w))
    dist: dict[str, float] = {}
    heap = [(d, s) for s, d in sources.items()]
    heapq.heapify(heap)
    while heap:
        d, v = heapq.heappop(heap)
        if v in dist:
            continue
        dist[v] = d
        for nb, w in adj.get(v, ()):
            if nb not in dist:
                heapq.heappush(heap, (d + w, nb))
    return dist


def point_segment_distance(p, a, b) -> float:
    p, a, b = (np.asarray(v, dtype=float) for v in (p, a, b))
    ab = b - a
    t = np.clip(np.dot(p - a, ab) / max(np.dot(ab, ab), 1e-300), 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))
