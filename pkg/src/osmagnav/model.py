"""osmAG map model: parsing, serialization, validation and hierarchy queries."""

from __future__ import annotations

import json
import math
import xml.etree.ElementTree as ET
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np
import shapely
from shapely.geometry import Polygon

from . import geometry as geo
from .errors import (
    AmbiguousContainment,
    DanglingNodeRef,
    DuplicateName,
    InvalidElement,
    LegacyTag,
    MalformedXml,
    MissingRequiredTag,
    MissingRoot,
    NoCommonAncestor,
    NotInAnyArea,
    PolarLatitude,
    UnknownArea,
)

EARTH_RADIUS = 6378137.0
AREA_TYPES = ("room", "corridor", "structure", "elevator", "stairs")
VERTICAL_TYPES = ("elevator", "stairs")
CONTAIN_TOL = 0.05  # m of slack for child vertices outside the parent
OVERLAP_TOL = 1e-4  # m^2 of sibling interior overlap tolerated as digitization noise

# Keys interpreted by the model; everything else is preserved in extra_tags.
AREA_KEYS = ("name", "osmAG:type", "osmAG:areaType", "osmAG:parent", "level", "height")
PASSAGE_KEYS = ("name", "osmAG:type", "osmAG:from", "osmAG:to", "level", "height")
LEGACY_KEYS = {"osmAG:areatype": "osmAG:areaType"}


@dataclass(frozen=True)
class GeoNode:
    id: int
    lat: float
    lon: float
    tags: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class RootAnchor:
    node: GeoNode

    @property
    def lat(self) -> float:
        return self.node.lat

    @property
    def lon(self) -> float:
        return self.node.lon


@dataclass(frozen=True)
class Area:
    name: str
    area_type: str
    node_refs: tuple[int, ...]
    parent: str | None = None
    level: str | None = None
    height: float | None = None
    extra_tags: dict[str, str] = field(default_factory=dict)
    way_id: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.area_type != "structure"

    @property
    def is_vertical(self) -> bool:
        return self.area_type in VERTICAL_TYPES


@dataclass(frozen=True)
class Passage:
    name: str
    node_refs: tuple[int, ...]
    from_area: str
    to_area: str
    level: str | None = None
    height: float | None = None
    extra_tags: dict[str, str] = field(default_factory=dict)
    way_id: int = 0

    @property
    def areas(self) -> frozenset[str]:
        return frozenset((self.from_area, self.to_area))


@dataclass(frozen=True)
class RawWay:
    """Non-osmAG way, kept only so that it survives a round trip."""

    id: int
    node_refs: tuple[int, ...]
    tags: dict[str, str]


@dataclass(frozen=True)
class Violation:
    invariant: str
    elements: tuple[str, ...]
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def by_invariant(self, invariant: str) -> list[Violation]:
        return [v for v in self.violations if v.invariant == invariant]

    def to_json(self) -> str:
        return json.dumps(
            {
                "ok": self.ok,
                "violations": [
                    {"invariant": v.invariant, "elements": list(v.elements), "message": v.message}
                    for v in self.violations
                ],
            },
            indent=2,
        )


def to_local(anchor: RootAnchor, lat: float, lon: float) -> np.ndarray:
    """Equirectangular projection about the root anchor, meters."""
    if abs(lat) >= 89.0 or abs(anchor.lat) >= 89.0:
        raise PolarLatitude(f"latitude {lat} too close to a pole")
    lat0 = math.radians(anchor.lat)
    x = EARTH_RADIUS * math.cos(lat0) * math.radians(lon - anchor.lon)
    y = EARTH_RADIUS * math.radians(lat - anchor.lat)
    return np.array([x, y])


def from_local(anchor: RootAnchor, x: float, y: float) -> tuple[float, float]:
    if abs(anchor.lat) >= 89.0:
        raise PolarLatitude(f"anchor latitude {anchor.lat} too close to a pole")
    lat0 = math.radians(anchor.lat)
    lat = anchor.lat + math.degrees(y / EARTH_RADIUS)
    lon = anchor.lon + math.degrees(x / (EARTH_RADIUS * math.cos(lat0)))
    return lat, lon


class AreaGraph:
    """Parsed osmAG map. Treated as immutable once constructed."""

    def __init__(
        self,
        nodes: dict[int, GeoNode],
        areas: dict[str, Area],
        passages: dict[str, Passage],
        root: RootAnchor,
        extra_ways: list[RawWay] | None = None,
    ):
        self.nodes = nodes
        self.areas = areas
        self.passages = passages
        self.root = root
        self.extra_ways = extra_ways or []
        self.hierarchy = {a.name: a.parent for a in areas.values() if a.parent is not None}
        self._xy = {
            nid: to_local(root, n.lat, n.lon) for nid, n in nodes.items()
        }

    # -- geometry -------------------------------------------------------
    def node_xy(self, nid: int) -> np.ndarray:
        return self._xy[nid]

    @cached_property
    def area_polygons(self) -> dict[str, np.ndarray]:
        return {
            name: np.array([self._xy[r] for r in a.node_refs[:-1]])
            for name, a in self.areas.items()
        }

    @cached_property
    def area_bboxes(self) -> dict[str, tuple[float, float, float, float]]:
        out = {}
        for name, poly in self.area_polygons.items():
            lo, hi = poly.min(axis=0), poly.max(axis=0)
            out[name] = (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))
        return out

    @cached_property
    def passage_polylines(self) -> dict[str, np.ndarray]:
        return {
            name: np.array([self._xy[r] for r in p.node_refs])
            for name, p in self.passages.items()
        }

    @cached_property
    def passage_centers(self) -> dict[str, np.ndarray]:
        """Arclength midpoint of every passage polyline."""
        return {name: geo.polyline_midpoint(pl) for name, pl in self.passage_polylines.items()}

    # -- hierarchy ------------------------------------------------------
    @cached_property
    def children(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {name: [] for name in self.areas}
        for child, parent in sorted(self.hierarchy.items()):
            if parent in out:
                out[parent].append(child)
        return out

    @cached_property
    def top_level(self) -> list[str]:
        return sorted(n for n, a in self.areas.items() if a.parent is None or a.parent not in self.areas)

    def ancestors(self, name: str) -> list[str]:
        """Chain [name, parent, grandparent, ...], stopping at a cycle or a dangling parent."""
        if name not in self.areas:
            raise UnknownArea(name)
        chain = [name]
        seen = {name}
        cur = self.hierarchy.get(name)
        while cur is not None and cur in self.areas and cur not in seen:
            chain.append(cur)
            seen.add(cur)
            cur = self.hierarchy.get(cur)
        return chain

    def depth(self, name: str) -> int:
        return len(self.ancestors(name)) - 1

    @cached_property
    def resident_passages(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {name: [] for name in self.areas}
        for pname in sorted(self.passages):
            p = self.passages[pname]
            for a in (p.from_area, p.to_area):
                if a in out:
                    out[a].append(pname)
        return out

    def leaf_areas(self, level: str | None = None) -> list[str]:
        """Non-structure areas, optionally only those on one level."""
        return sorted(
            n for n, a in self.areas.items() if a.is_leaf and (level is None or a.level == level)
        )

    @cached_property
    def levels(self) -> list[str]:
        return sorted({a.level for a in self.areas.values() if a.level is not None and a.is_leaf})


# -- parsing ---------------------------------------------------------------

def _float(value: str, what: str) -> float:
    try:
        return float(value)
    except ValueError as exc:
        raise MalformedXml(f"{what}: not a number: {value!r}") from exc


def _canonical_tags(tags: dict[str, str], element: str, lenient: bool) -> dict[str, str]:
    out: dict[str, str] = {}
    for k, v in tags.items():
        if k in LEGACY_KEYS:
            if not lenient:
                raise LegacyTag(f"{element}: legacy key {k!r}; use {LEGACY_KEYS[k]!r} or --lenient")
            k = LEGACY_KEYS[k]
        out[k] = v
    return out


def parse_osmag(xml_text: str | bytes, lenient: bool = False) -> AreaGraph:
    """Parse OSM XML into an AreaGraph.

    Geometry-level defects (degenerate polygons, self-loop passages) fail
    here; hierarchy and adjacency defects are left for :func:`validate`.
    """
    try:
        root_el = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise MalformedXml(str(exc)) from exc
    if root_el.tag != "osm":
        raise MalformedXml(f"root element is <{root_el.tag}>, expected <osm>")

    nodes: dict[int, GeoNode] = {}
    for el in root_el.iter("node"):
        try:
            nid = int(el.attrib["id"])
            lat = _float(el.attrib["lat"], f"node {nid} lat")
            lon = _float(el.attrib["lon"], f"node {nid} lon")
        except KeyError as exc:
            raise MalformedXml(f"node missing attribute {exc}") from exc
        if not (-90 <= lat <= 90 and -180 <= lon <= 180):
            raise MalformedXml(f"node {nid}: coordinates out of range")
        if nid in nodes:
            raise MalformedXml(f"duplicate node id {nid}")
        tags = {t.attrib["k"]: t.attrib["v"] for t in el.iter("tag")}
        nodes[nid] = GeoNode(nid, lat, lon, tags)

    roots = [n for n in nodes.values() if n.tags.get("name") == "root"]
    if not roots:
        raise MissingRoot("no node tagged name=root")
    if len(roots) > 1:
        raise DuplicateName(f"{len(roots)} nodes tagged name=root")
    anchor = RootAnchor(roots[0])

    areas: dict[str, Area] = {}
    passages: dict[str, Passage] = {}
    extra: list[RawWay] = []
    for el in root_el.iter("way"):
        wid = int(el.attrib.get("id", "0"))
        refs = tuple(int(nd.attrib["ref"]) for nd in el.iter("nd"))
        tags = {t.attrib["k"]: t.attrib["v"] for t in el.iter("tag")}
        element = f"way {wid}"
        tags = _canonical_tags(tags, element, lenient)
        kind = tags.get("osmAG:type")
        if kind not in ("area", "passage"):
            extra.append(RawWay(wid, refs, tags))
            continue
        for r in refs:
            if r not in nodes:
                raise DanglingNodeRef(f"{element} references missing node {r}")
        name = tags.get("name")
        if not name:
            raise MissingRequiredTag(element, "name")
        if name in areas or name in passages or name == "root":
            raise DuplicateName(name)
        height = _float(tags["height"], f"{name} height") if "height" in tags else None
        level = tags.get("level")
        if kind == "area":
            if "osmAG:areaType" not in tags:
                raise MissingRequiredTag(name, "osmAG:areaType")
            atype = tags["osmAG:areaType"]
            if atype not in AREA_TYPES:
                raise InvalidElement(f"{name}: unknown osmAG:areaType {atype!r}")
            refs = _normalize_ring(name, refs, nodes, anchor)
            areas[name] = Area(
                name=name,
                area_type=atype,
                node_refs=refs,
                parent=tags.get("osmAG:parent"),
                level=level,
                height=height,
                extra_tags={k: v for k, v in tags.items() if k not in AREA_KEYS},
                way_id=wid,
            )
        else:
            for key in ("osmAG:from", "osmAG:to"):
                if key not in tags:
                    raise MissingRequiredTag(name, key)
            if tags["osmAG:from"] == tags["osmAG:to"]:
                raise InvalidElement(f"{name}: passage connects {tags['osmAG:from']!r} to itself")
            if len(refs) < 2:
                raise InvalidElement(f"{name}: passage needs at least 2 nodes")
            passages[name] = Passage(
                name=name,
                node_refs=refs,
                from_area=tags["osmAG:from"],
                to_area=tags["osmAG:to"],
                level=level,
                height=height,
                extra_tags={k: v for k, v in tags.items() if k not in PASSAGE_KEYS},
                way_id=wid,
            )
    return AreaGraph(nodes, areas, passages, anchor, extra)


def _normalize_ring(name, refs, nodes, anchor) -> tuple[int, ...]:
    if len(refs) < 4 or refs[0] != refs[-1]:
        raise InvalidElement(f"{name}: area polygon is not closed")
    ring = refs[:-1]
    pts = np.array([to_local(anchor, nodes[r].lat, nodes[r].lon) for r in ring])
    distinct = {tuple(np.round(p, 9)) for p in pts}
    area = geo.signed_area(pts)
    if len(distinct) < 3 or abs(area) < 1e-9:
        raise InvalidElement(f"{name}: degenerate polygon")
    if area < 0:
        ring = (ring[0],) + tuple(reversed(ring[1:]))
    return tuple(ring) + (ring[0],)


# -- serialization ---------------------------------------------------------

def _num(v: float) -> str:
    s = repr(float(v))
    return s[:-2] if s.endswith(".0") else s


def write_osmag(graph: AreaGraph) -> str:
    """Serialize to canonical OSM XML. write(parse(write(g))) is byte-identical to write(g)."""
    osm = ET.Element("osm", {"version": "0.6", "generator": "osmagnav"})
    for nid in sorted(graph.nodes):
        n = graph.nodes[nid]
        el = ET.SubElement(osm, "node", {"id": str(nid), "lat": _num(n.lat), "lon": _num(n.lon)})
        for k, v in n.tags.items():
            ET.SubElement(el, "tag", {"k": k, "v": v})

    ways: list[tuple[int, str, ET.Element]] = []

    def way(wid, refs, tags, sort_name):
        el = ET.Element("way", {"id": str(wid)})
        for r in refs:
            ET.SubElement(el, "nd", {"ref": str(r)})
        for k, v in tags:
            ET.SubElement(el, "tag", {"k": k, "v": v})
        ways.append((wid, sort_name, el))

    for a in graph.areas.values():
        tags = [("name", a.name), ("osmAG:type", "area"), ("osmAG:areaType", a.area_type)]
        if a.parent is not None:
            tags.append(("osmAG:parent", a.parent))
        if a.level is not None:
            tags.append(("level", a.level))
        if a.height is not None:
            tags.append(("height", _num(a.height)))
        way(a.way_id, a.node_refs, tags + list(a.extra_tags.items()), a.name)
    for p in graph.passages.values():
        tags = [
            ("name", p.name),
            ("osmAG:type", "passage"),
            ("osmAG:from", p.from_area),
            ("osmAG:to", p.to_area),
        ]
        if p.level is not None:
            tags.append(("level", p.level))
        if p.height is not None:
            tags.append(("height", _num(p.height)))
        way(p.way_id, p.node_refs, tags + list(p.extra_tags.items()), p.name)
    for w in graph.extra_ways:
        way(w.id, w.node_refs, list(w.tags.items()), "")
    for _, _, el in sorted(ways, key=lambda t: (t[0], t[1])):
        osm.append(el)
    ET.indent(osm, space="  ")
    return "<?xml version='1.0' encoding='UTF-8'?>\n" + ET.tostring(osm, encoding="unicode") + "\n"


def graphs_equal(a: AreaGraph, b: AreaGraph, places: int = 7) -> bool:
    """Element-wise equality: names, tags, references, coordinates to `places` decimals."""

    def nodes_key(g):
        return {
            nid: (round(n.lat, places), round(n.lon, places), n.tags) for nid, n in g.nodes.items()
        }

    return (
        nodes_key(a) == nodes_key(b)
        and {k: asdict(v) for k, v in a.areas.items()} == {k: asdict(v) for k, v in b.areas.items()}
        and {k: asdict(v) for k, v in a.passages.items()}
        == {k: asdict(v) for k, v in b.passages.items()}
        and a.root.node.id == b.root.node.id
        and a.hierarchy == b.hierarchy
        and [asdict(w) for w in a.extra_ways] == [asdict(w) for w in b.extra_ways]
    )


# -- validation ------------------------------------------------------------

def validate(graph: AreaGraph) -> ValidationReport:
    """Check the four map invariants. Never raises on a parsed graph."""
    report = ValidationReport()
    for check in (_check_tree, _check_containment, _check_geometry, _check_passages):
        try:
            report.violations.extend(check(graph))
        except Exception as exc:  # validation must stay total
            report.violations.append(Violation("internal", (), f"{check.__name__}: {exc!r}"))
    return report


def _check_tree(g: AreaGraph):
    for child, parent in sorted(g.hierarchy.items()):
        if parent not in g.areas:
            yield Violation("tree", (child,), f"{child}: parent {parent!r} does not exist")
        elif parent == child:
            yield Violation("tree", (child,), f"{child}: area is its own parent")
    reported: set[frozenset[str]] = set()
    for start in sorted(g.hierarchy):
        path: list[str] = []
        cur: str | None = start
        while cur is not None and cur in g.areas and cur not in path:
            path.append(cur)
            cur = g.hierarchy.get(cur)
        if cur is not None and cur in path:
            cycle = frozenset(path[path.index(cur):])
            if len(cycle) > 1 and cycle not in reported:
                reported.add(cycle)
                names = tuple(sorted(cycle))
                yield Violation("tree", names, "parent references form a cycle: " + " -> ".join(names))


def _check_containment(g: AreaGraph):
    polys = g.area_polygons
    for child, parent in sorted(g.hierarchy.items()):
        if parent not in g.areas or parent == child:
            continue
        outer = polys[parent]
        for p in polys[child]:
            if geo.point_in_polygon(p[0], p[1], outer):
                continue
            d = geo.distance_to_boundary(p, outer)
            if d > CONTAIN_TOL:
                yield Violation(
                    "containment",
                    (child, parent),
                    f"{child}: vertex ({p[0]:.3f}, {p[1]:.3f}) lies {d:.3f} m outside parent {parent}",
                )
                break


def _check_geometry(g: AreaGraph):
    groups: dict[tuple[str | None, str | None], list[str]] = {}
    for name, a in g.areas.items():
        parent = a.parent if a.parent in g.areas else None
        groups.setdefault((parent, a.level), []).append(name)
    shapes = {}
    for (parent, level), names in sorted(groups.items(), key=lambda kv: (str(kv[0][0]), str(kv[0][1]))):
        names.sort()
        for name in names:
            if name not in shapes:
                shapes[name] = shapely.make_valid(Polygon(g.area_polygons[name]))
        boxes = [g.area_bboxes[n] for n in names]
        for i in range(len(names)):
            bi = boxes[i]
            for j in range(i + 1, len(names)):
                bj = boxes[j]
                if bi[0] >= bj[2] or bj[0] >= bi[2] or bi[1] >= bj[3] or bj[1] >= bi[3]:
                    continue
                overlap = shapes[names[i]].intersection(shapes[names[j]]).area
                if overlap > OVERLAP_TOL:
                    yield Violation(
                        "geometric_consistency",
                        (names[i], names[j]),
                        f"siblings {names[i]} and {names[j]} (level {level}) overlap by {overlap:.4f} m^2",
                    )


def _check_passages(g: AreaGraph):
    for name in sorted(g.passages):
        p = g.passages[name]
        missing = [a for a in (p.from_area, p.to_area) if a not in g.areas]
        if missing:
            yield Violation(
                "passage_adjacency",
                (name, *missing),
                f"{name}: references missing area(s) {', '.join(missing)}",
            )


# -- hierarchy / spatial queries -------------------------------------------

def lowest_common_ancestor(graph: AreaGraph, a: str, b: str) -> str:
    chain_a = graph.ancestors(a)
    in_a = set(chain_a)
    for name in graph.ancestors(b):
        if name in in_a:
            return name
    raise NoCommonAncestor(f"{a} and {b} lie in disjoint hierarchy trees")


def height_compatible(area: Area, height: float | None, tol: float) -> bool:
    return height is None or area.height is None or abs(area.height - height) <= tol


def locate_leaf_area(
    graph: AreaGraph,
    p,
    level: str | None,
    height: float | None = None,
    height_tol: float = 1.5,
    boundary_tol: float = 1e-6,
) -> str:
    """Unique non-structure area on `level` containing p; boundary ties go to the smallest name."""
    x, y = float(p[0]), float(p[1])
    inside, on_edge = [], []
    for name in graph.leaf_areas():
        a = graph.areas[name]
        if a.level != level or not height_compatible(a, height, height_tol):
            continue
        x0, y0, x1, y1 = graph.area_bboxes[name]
        if x < x0 - boundary_tol or x > x1 + boundary_tol or y < y0 - boundary_tol or y > y1 + boundary_tol:
            continue
        poly = graph.area_polygons[name]
        d = geo.distance_to_boundary(np.array([x, y]), poly)
        if d <= boundary_tol:
            on_edge.append(name)
        elif geo.point_in_polygon(x, y, poly):
            inside.append(name)
    if len(inside) > 1:
        raise AmbiguousContainment(f"({x:.3f}, {y:.3f}) lies inside {inside}")
    if inside:
        return inside[0]
    if on_edge:
        return min(on_edge)
    raise NotInAnyArea(f"({x:.3f}, {y:.3f}) on level {level!r}")
