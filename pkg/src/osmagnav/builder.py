"""Programmatic construction of osmAG maps from local metric coordinates."""

from __future__ import annotations

from .model import (
    Area,
    AreaGraph,
    GeoNode,
    Passage,
    RootAnchor,
    from_local,
    parse_osmag,
    write_osmag,
)

DEFAULT_ANCHOR = (31.17947, 121.59018)


class MapBuilder:
    """Collects areas and passages in meters, then emits canonical OSM XML.

    Coincident points within the same scope (normally the floor level) share
    one OSM node, so adjacent polygons reference identical geometry.
    """

    def __init__(self, anchor: tuple[float, float] = DEFAULT_ANCHOR):
        self.root = RootAnchor(GeoNode(1, anchor[0], anchor[1], {"name": "root"}))
        self._nodes: dict[int, GeoNode] = {1: self.root.node}
        self._node_index: dict[tuple, int] = {}
        self._areas: dict[str, Area] = {}
        self._passages: dict[str, Passage] = {}
        self._next_way = 1

    def _node(self, x: float, y: float, scope) -> int:
        key = (scope, round(x, 6), round(y, 6))
        nid = self._node_index.get(key)
        if nid is None:
            nid = len(self._nodes) + 1
            lat, lon = from_local(self.root, x, y)
            self._nodes[nid] = GeoNode(nid, lat, lon)
            self._node_index[key] = nid
        return nid

    def area(self, name, area_type, pts, parent=None, level=None, height=None, scope=None, tags=None):
        scope = level if scope is None else scope
        refs = [self._node(x, y, scope) for x, y in pts]
        refs.append(refs[0])
        self._areas[name] = Area(
            name, area_type, tuple(refs), parent, level, height, dict(tags or {}), self._next_way
        )
        self._next_way += 1
        return self

    def passage(self, name, pts, from_area, to_area, level=None, height=None, scope=None, tags=None):
        scope = level if scope is None else scope
        refs = tuple(self._node(x, y, scope) for x, y in pts)
        self._passages[name] = Passage(
            name, refs, from_area, to_area, level, height, dict(tags or {}), self._next_way
        )
        self._next_way += 1
        return self

    def xml(self) -> str:
        # Bypass parse-time checks so deliberately broken fixtures can be written.
        g = AreaGraph.__new__(AreaGraph)
        g.nodes, g.areas, g.passages = self._nodes, self._areas, self._passages
        g.root, g.extra_ways = self.root, []
        return write_osmag(g)

    def build(self, lenient: bool = False) -> AreaGraph:
        return parse_osmag(self.xml(), lenient=lenient)


def rect(x0: float, y0: float, x1: float, y1: float) -> list[tuple[float, float]]:
    return [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
