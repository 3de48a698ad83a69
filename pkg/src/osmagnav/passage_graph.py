"""Passage-centric base graph with raster edge costs, and the hierarchical caches built on it.

The base graph has one vertex per passage (placed at the polyline's arclength
midpoint) and, for every leaf area, an edge between each pair of its resident
passages that are not two openings of the same area interface.

Caches, per area X and floor filter phi:

* boundary(X): passages with exactly one incident area inside X's subtree.
* clique(X):   shortest distances between boundary passages of X using only
               edges inside X's subtree (the lift graph of X, seen from X's parent).
* lift(X):     distances from every child-boundary passage of X to every
               boundary passage of X, inside X's subtree.

Distances are computed on X's overlay: the compact graphs of X's leaf children
plus the cliques of its structure children, so every cached edge expands
recursively into base edges.
"""

from __future__ import annotations

import gzip
import hashlib
import heapq
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path


from . import geometry as geo
from .errors import AttachFailed, CacheMismatch, DegenerateArea, NoPath
from .model import AreaGraph, locate_leaf_area, write_osmag
from .raster import LEAF_RESOLUTION, OccupancyRaster, grid_astar, rasterize_leaf, snap_to_free

FORMAT = "osmagnav-passage-graph"
VERSION = 1
DEFAULT_C_VERT = 15.0
SNAP_RADIUS = 3

Hop = tuple  # (kind, area, u, v): kind "base" | "clique" | "virtual"


@dataclass(frozen=True)
class PassageVertex:
    name: str
    position: tuple[float, float]
    level: str | None
    areas: tuple[str, str]


@dataclass(frozen=True)
class PassageEdge:
    u: str
    v: str
    weight: float
    through_area: str
    kind: str  # raster | vertical | euclidean_fallback | virtual
    trace: tuple[tuple[float, float], ...]

    def other(self, name: str) -> str:
        return self.v if name == self.u else self.u

    def trace_from(self, name: str) -> list[tuple[float, float]]:
        return list(self.trace) if name == self.u else list(reversed(self.trace))


@dataclass
class BuildReport:
    edges_by_kind: Counter = field(default_factory=Counter)
    skipped_same_interface: int = 0
    failures: list[tuple[str, str, str, str]] = field(default_factory=list)
    leaf_areas: int = 0

    def to_dict(self) -> dict:
        return {
            "edges_by_kind": dict(sorted(self.edges_by_kind.items())),
            "skipped_same_interface": self.skipped_same_interface,
            "failures": [list(f) for f in self.failures],
            "leaf_areas": self.leaf_areas,
        }


class LeafRasters:
    """Memo of per-leaf rasters at one resolution."""

    def __init__(self, graph: AreaGraph, resolution: float = LEAF_RESOLUTION):
        self.graph = graph
        self.resolution = resolution
        self._rasters: dict[str, OccupancyRaster] = {}

    def __getitem__(self, area: str) -> OccupancyRaster:
        if area not in self._rasters:
            self._rasters[area] = rasterize_leaf(area, self.graph, self.resolution)
        return self._rasters[area]


class PassageGraph:
    def __init__(self, vertices: dict[str, PassageVertex], edges: list[PassageEdge], params: dict):
        self.vertices = vertices
        self.edges = {(e.u, e.v): e for e in edges}
        self.params = dict(params)
        self.adjacency: dict[str, list[PassageEdge]] = {name: [] for name in vertices}
        self.by_area: dict[str, list[PassageEdge]] = {}
        for key in sorted(self.edges):
            e = self.edges[key]
            self.adjacency[e.u].append(e)
            self.adjacency[e.v].append(e)
            self.by_area.setdefault(e.through_area, []).append(e)
        ratios = [
            e.weight / d
            for e in self.edges.values()
            if (d := _dist(vertices[e.u].position, vertices[e.v].position)) > 1e-12
        ]
        # Scale keeping a Euclidean heuristic admissible even if some fixed-cost edge is short.
        self.heuristic_scale = min([1.0, *ratios])
        self.rasters: LeafRasters | None = None

    @property
    def traces(self) -> dict[tuple[str, str], tuple[tuple[float, float], ...]]:
        return {k: e.trace for k, e in self.edges.items()}

    def edge(self, a: str, b: str) -> PassageEdge:
        return self.edges[(a, b) if a < b else (b, a)]

    def num_edges(self) -> int:
        return len(self.edges)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self.vertices):
            h.update(repr(self.vertices[name]).encode())
        for key in sorted(self.edges):
            h.update(repr(self.edges[key]).encode())
        return h.hexdigest()


def _dist(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def leaf_prefer(graph: AreaGraph, area: str):
    poly = graph.area_polygons[area]
    return lambda p: geo.point_in_polygon(p[0], p[1], poly)


def raster_link(
    raster: OccupancyRaster, a, b, prefer=None
) -> tuple[float, list[tuple[float, float]]] | None:
    """Raster-costed connection between two world points, stitched to the exact endpoints."""
    ca = snap_to_free(raster, a, SNAP_RADIUS, prefer)
    cb = snap_to_free(raster, b, SNAP_RADIUS, prefer)
    if ca is None or cb is None:
        return None
    try:
        gp = grid_astar(raster, ca, cb)
    except NoPath:
        return None
    pts = [(float(a[0]), float(a[1]))]
    pts += [tuple(map(float, raster.center(r, c))) for r, c in gp.cells]
    pts.append((float(b[0]), float(b[1])))
    weight = _dist(pts[0], pts[1]) + gp.cost + _dist(pts[-2], pts[-1])
    return weight, pts


def build_base_graph(
    graph: AreaGraph,
    leaf_resolution: float = LEAF_RESOLUTION,
    c_vert: float = DEFAULT_C_VERT,
    euclidean_fallback: bool = True,
) -> tuple[PassageGraph, BuildReport]:
    report = BuildReport()
    rasters = LeafRasters(graph, leaf_resolution)
    centers = graph.passage_centers
    vertices: dict[str, PassageVertex] = {}
    edges: list[PassageEdge] = []
    for area_name in graph.leaf_areas():
        area = graph.areas[area_name]
        report.leaf_areas += 1
        resident = graph.resident_passages[area_name]
        for pname in resident:
            if pname not in vertices:
                p = graph.passages[pname]
                c = centers[pname]
                vertices[pname] = PassageVertex(
                    pname, (float(c[0]), float(c[1])), p.level, (p.from_area, p.to_area)
                )
        prefer = leaf_prefer(graph, area_name)
        for i, pi in enumerate(resident):
            for pj in resident[i + 1 :]:
                a, b = graph.passages[pi], graph.passages[pj]
                if a.areas == b.areas:
                    report.skipped_same_interface += 1
                    continue
                ci = (float(centers[pi][0]), float(centers[pi][1]))
                cj = (float(centers[pj][0]), float(centers[pj][1]))
                if area.is_vertical and a.level != b.level:
                    edges.append(PassageEdge(pi, pj, c_vert, area_name, "vertical", (ci, cj)))
                    report.edges_by_kind["vertical"] += 1
                    continue
                link = None
                try:
                    link = raster_link(rasters[area_name], ci, cj, prefer)
                except (DegenerateArea, ValueError) as exc:  # leaf too thin to rasterize
                    report.failures.append((area_name, pi, pj, repr(exc)))
                if link is not None:
                    w, pts = link
                    edges.append(PassageEdge(pi, pj, w, area_name, "raster", tuple(pts)))
                    report.edges_by_kind["raster"] += 1
                    continue
                report.failures.append((area_name, pi, pj, "raster search failed"))
                if euclidean_fallback:
                    edges.append(
                        PassageEdge(pi, pj, _dist(ci, cj), area_name, "euclidean_fallback", (ci, cj))
                    )
                    report.edges_by_kind["euclidean_fallback"] += 1
    params = {
        "leaf_resolution": leaf_resolution,
        "c_vert": c_vert,
        "euclidean_fallback": euclidean_fallback,
    }
    pg = PassageGraph(vertices, edges, params)
    pg.rasters = rasters
    return pg, report


# -- hierarchical caches ---------------------------------------------------

@dataclass(frozen=True)
class SummaryEdge:
    weight: float
    hops: tuple[Hop, ...]


@dataclass
class AreaSummary:
    boundary: tuple[str, ...]
    clique: dict[tuple[str, str], SummaryEdge]
    lift: dict[str, dict[str, SummaryEdge]]


def passage_allowed(level: str | None, phi: str | None) -> bool:
    """Floor filter: under same-floor mode only passages on that floor (or unlabeled) survive."""
    return phi is None or level is None or level == phi


class HierCache:
    def __init__(self, graph: AreaGraph, pg: PassageGraph):
        self.graph = graph
        self.pg = pg
        self.summaries: dict[tuple[str, str | None], AreaSummary] = {}
        self.area_compact: dict[str, list[PassageEdge]] = {
            name: list(pg.by_area.get(name, [])) for name in graph.leaf_areas()
        }
        self._subtree = {name: set() for name in graph.areas}
        for name in graph.areas:
            for anc in graph.ancestors(name):
                self._subtree[anc].add(name)

    # structure ----------------------------------------------------------
    def in_subtree(self, area: str, root: str) -> bool:
        return area in self._subtree.get(root, ())

    def uses_summary(self, area: str) -> bool:
        """Areas represented in their parent's overlay by a clique rather than raw edges."""
        return not self.graph.areas[area].is_leaf or bool(self.graph.children[area])

    def boundary(self, area: str, phi: str | None) -> list[str]:
        out = []
        for pname in sorted(self.pg.vertices):
            v = self.pg.vertices[pname]
            if not passage_allowed(v.level, phi):
                continue
            inside = sum(1 for a in v.areas if a in self._subtree[area])
            if inside == 1:
                out.append(pname)
        return out

    def overlay_edges(self, area: str, phi: str | None) -> list[tuple[str, str, float, Hop]]:
        """Directed edges of the area's overlay (both directions listed)."""
        out = []
        if self.graph.areas[area].is_leaf:
            out += self._base_edges(area, phi)
        for child in self.graph.children[area]:
            if self.uses_summary(child):
                summ = self.summary(child, phi)
                for (a, b), se in sorted(summ.clique.items()):
                    out.append((a, b, se.weight, ("clique", child, a, b)))
            else:
                out += self._base_edges(child, phi)
        return out

    def _base_edges(self, leaf: str, phi: str | None):
        out = []
        verts = self.pg.vertices
        for e in self.area_compact.get(leaf, []):
            if passage_allowed(verts[e.u].level, phi) and passage_allowed(verts[e.v].level, phi):
                out.append((e.u, e.v, e.weight, ("base", leaf, e.u, e.v)))
                out.append((e.v, e.u, e.weight, ("base", leaf, e.v, e.u)))
        return out

    def summary(self, area: str, phi: str | None) -> AreaSummary:
        key = (area, phi)
        if key not in self.summaries:
            self.summaries[key] = self._build_summary(area, phi)
        return self.summaries[key]

    def _build_summary(self, area: str, phi: str | None) -> AreaSummary:
        boundary = self.boundary(area, phi)
        adj: dict[str, list[tuple[str, float, Hop]]] = {}
        for a, b, w, hop in self.overlay_edges(area, phi):
            adj.setdefault(a, []).append((b, w, hop))
        sources = set(boundary)
        if self.graph.areas[area].is_leaf:
            sources.update(
                p for p in self.graph.resident_passages[area]
                if p in self.pg.vertices and passage_allowed(self.pg.vertices[p].level, phi)
            )
        for child in self.graph.children[area]:
            sources.update(self.boundary(child, phi))
        targets = set(boundary)
        clique: dict[tuple[str, str], SummaryEdge] = {}
        lift: dict[str, dict[str, SummaryEdge]] = {}
        for src in sorted(sources):
            dist, back = dijkstra(adj, {src: 0.0}, targets)
            row = {}
            for t in sorted(targets):
                if t in dist:
                    row[t] = SummaryEdge(dist[t], trace_hops(back, t))
            lift[src] = row
            if src in targets:
                for t, se in row.items():
                    if t != src:
                        clique[(src, t)] = se
        return AreaSummary(tuple(boundary), clique, lift)

    def build_all(self, phis=None) -> "HierCache":
        if phis is None:
            phis = [None, *self.graph.levels]
        order = sorted(self.graph.areas, key=lambda n: -self.graph.depth(n))
        for phi in phis:
            for name in order:
                if self.uses_summary(name):
                    self.summary(name, phi)
        return self

    def clear(self) -> None:
        self.summaries.clear()

    @property
    def parent_lift(self) -> dict[str, AreaSummary]:
        """Unconstrained summaries of every area that has one."""
        return {a: s for (a, phi), s in self.summaries.items() if phi is None}


def build_caches(pg: PassageGraph, graph: AreaGraph, phis=None) -> HierCache:
    return HierCache(graph, pg).build_all(phis)


def dijkstra(adj, seeds: dict[str, float], targets=None, closed_counter: list | None = None):
    """Multi-source Dijkstra. Stops once every target is settled. Returns (dist, back-pointers)."""
    dist: dict[str, float] = {}
    back: dict[str, tuple[str, Hop] | None] = {}
    best = dict(seeds)
    heap = [(d, i, v) for i, (v, d) in enumerate(sorted(seeds.items()))]
    heapq.heapify(heap)
    for v in seeds:
        back[v] = None
    remaining = set(targets) if targets is not None else None
    counter = len(heap)
    while heap:
        d, _, v = heapq.heappop(heap)
        if v in dist:
            continue
        dist[v] = d
        if closed_counter is not None:
            closed_counter[0] += 1
        if remaining is not None:
            remaining.discard(v)
            if not remaining:
                break
        for nb, w, hop in adj.get(v, ()):
            nd = d + w
            if nb not in dist and nd < best.get(nb, math.inf):
                best[nb] = nd
                back[nb] = (v, hop)
                heapq.heappush(heap, (nd, counter, nb))
                counter += 1
    return dist, back


def trace_hops(back, target) -> tuple[Hop, ...]:
    hops = []
    cur = target
    while back.get(cur) is not None:
        prev, hop = back[cur]
        hops.append(hop)
        cur = prev
    return tuple(reversed(hops))


# -- virtual passages ------------------------------------------------------

@dataclass
class VirtualPassage:
    """Temporary query endpoint. Lives only in this handle; the base graph is never touched."""

    name: str
    position: tuple[float, float]
    level: str | None
    leaf: str
    edges: list[PassageEdge]
    released: bool = False

    def release(self) -> None:
        self.edges = []
        self.released = True

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.release()


def inject_virtual_passage(
    graph: AreaGraph,
    pg: PassageGraph,
    cache: "HierCache | None",
    pose,
    level: str | None,
    name: str = "__start__",
    euclidean_fallback: bool = True,
) -> tuple[VirtualPassage, str]:
    """Ground a pose in its leaf area with raster-costed edges to every resident passage."""
    leaf = locate_leaf_area(graph, pose, level)
    if pg.rasters is None:
        pg.rasters = LeafRasters(graph, pg.params.get("leaf_resolution", LEAF_RESOLUTION))
    pos = (float(pose[0]), float(pose[1]))
    prefer = leaf_prefer(graph, leaf)
    edges = []
    failed = 0
    for pname in graph.resident_passages[leaf]:
        if pname not in pg.vertices:
            continue
        c = pg.vertices[pname].position
        try:
            link = raster_link(pg.rasters[leaf], pos, c, prefer)
        except (DegenerateArea, ValueError):
            link = None
        if link is not None:
            w, pts = link
            edges.append(PassageEdge(name, pname, w, leaf, "virtual", tuple(pts)))
        elif euclidean_fallback:
            edges.append(PassageEdge(name, pname, _dist(pos, c), leaf, "euclidean_fallback", (pos, c)))
        else:
            failed += 1
    if failed and not edges:
        raise AttachFailed(f"{name}: no raster connection from pose to any passage of {leaf}")
    return VirtualPassage(name, pos, level, leaf, edges), leaf


def direct_link(graph: AreaGraph, pg: PassageGraph, a: VirtualPassage, b: VirtualPassage) -> PassageEdge | None:
    """Edge between two virtual endpoints sharing a leaf."""
    if a.leaf != b.leaf:
        return None
    link = raster_link(pg.rasters[a.leaf], a.position, b.position, leaf_prefer(graph, a.leaf))
    if link is None:
        return None
    w, pts = link
    return PassageEdge(a.name, b.name, w, a.leaf, "virtual", tuple(pts))


# -- persistence -----------------------------------------------------------

def map_hash(graph_or_text) -> str:
    text = graph_or_text if isinstance(graph_or_text, str) else write_osmag(graph_or_text)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _hop_json(h: Hop) -> list:
    return list(h)


def save_cache(path, graph: AreaGraph, pg: PassageGraph, cache: HierCache, report: BuildReport | None = None) -> None:
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "source_sha256": map_hash(graph),
        "params": pg.params,
        "report": report.to_dict() if report else None,
        "vertices": [
            {"name": v.name, "position": list(v.position), "level": v.level, "areas": list(v.areas)}
            for v in (pg.vertices[k] for k in sorted(pg.vertices))
        ],
        "edges": [
            {
                "u": e.u,
                "v": e.v,
                "weight": e.weight,
                "through_area": e.through_area,
                "kind": e.kind,
                "trace": [list(p) for p in e.trace],
            }
            for e in (pg.edges[k] for k in sorted(pg.edges))
        ],
        "summaries": [
            {
                "area": area,
                "phi": phi,
                "boundary": list(s.boundary),
                "clique": [[a, b, se.weight, [_hop_json(h) for h in se.hops]] for (a, b), se in sorted(s.clique.items())],
                "lift": [
                    [q, [[b, se.weight, [_hop_json(h) for h in se.hops]] for b, se in sorted(s.lift[q].items())]]
                    for q in sorted(s.lift)
                ],
            }
            for (area, phi), s in sorted(cache.summaries.items(), key=lambda kv: (kv[0][0], str(kv[0][1])))
        ],
    }
    data = json.dumps(doc, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    if path.suffix == ".gz":
        data = gzip.compress(data, mtime=0)
    path.write_bytes(data)


def load_cache(path, graph: AreaGraph) -> tuple[PassageGraph, HierCache]:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    doc = json.loads(raw)
    if doc.get("format") != FORMAT or doc.get("version") != VERSION:
        raise CacheMismatch(f"unsupported cache format {doc.get('format')!r} v{doc.get('version')}")
    if doc["source_sha256"] != map_hash(graph):
        raise CacheMismatch("cache was built from a different map")
    vertices = {
        v["name"]: PassageVertex(v["name"], tuple(v["position"]), v["level"], tuple(v["areas"]))
        for v in doc["vertices"]
    }
    edges = [
        PassageEdge(
            e["u"], e["v"], e["weight"], e["through_area"], e["kind"], tuple(tuple(p) for p in e["trace"])
        )
        for e in doc["edges"]
    ]
    pg = PassageGraph(vertices, edges, doc["params"])
    cache = HierCache(graph, pg)
    for s in doc["summaries"]:
        clique = {(a, b): SummaryEdge(w, tuple(tuple(h) for h in hops)) for a, b, w, hops in s["clique"]}
        lift = {
            q: {b: SummaryEdge(w, tuple(tuple(h) for h in hops)) for b, w, hops in row} for q, row in s["lift"]
        }
        cache.summaries[(s["area"], s["phi"])] = AreaSummary(tuple(s["boundary"]), clique, lift)
    return pg, cache
