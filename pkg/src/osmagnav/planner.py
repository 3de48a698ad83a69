"""Flat passage-level A* and attach/lift/common-parent hierarchical planning.

Both planners search the same floor-filtered weighted graph, so with exact
caches their route costs agree. The hierarchical planner touches far fewer
vertices: it grounds each endpoint in its leaf, climbs the hierarchy using
the cached lift tables, and runs one A* on the small graph assembled at the
lowest common ancestor.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AttachFailed,
    InvalidExpansion,
    InvalidFrontier,
    NoCommonAncestor,
    NoRoute,
)
from .geometry import Pose2D
from .model import AreaGraph, lowest_common_ancestor
from .passage_graph import (
    HierCache,
    PassageGraph,
    VirtualPassage,
    direct_link,
    dijkstra,
    inject_virtual_passage,
    passage_allowed,
)

START, GOAL = "__start__", "__goal__"
STAGES = ("attach", "lift", "assemble", "astar", "expand")


@dataclass(frozen=True)
class FloorConstraint:
    level: str | None = None  # None: unconstrained

    @property
    def mode(self) -> str:
        return "unconstrained" if self.level is None else f"same_floor({self.level})"


@dataclass
class PlannerConfig:
    floor_mode: str = "auto"  # auto | unconstrained
    euclidean_fallback: bool = True
    allow_fallback: bool = True
    max_lift_iterations: int | None = None  # None: hierarchy depth


@dataclass
class FrontierEntry:
    cost: float
    hops: tuple


@dataclass
class Frontier:
    area: str
    entries: dict[str, FrontierEntry]

    def costs(self) -> dict[str, float]:
        return {k: e.cost for k, e in self.entries.items()}


@dataclass(frozen=True)
class Step:
    """One base-level edge traversal of an expanded route."""

    kind: str
    area: str
    u: str
    v: str
    weight: float
    trace: tuple


@dataclass
class PlanResult:
    planner: str
    passages: list[str]
    dense_path: np.ndarray
    cost: float
    steps: list[Step]
    closed_states: int
    closed_by_stage: dict[str, int]
    stage_times_us: dict[str, float]
    used_fallback: bool = False
    floor_transitions: list[tuple[str, str | None, str | None]] = field(default_factory=list)
    floor_constraint: FloorConstraint = FloorConstraint()
    compact_hops: int = 0
    lca: str | None = None
    lift_areas: list[str] = field(default_factory=list)
    start: Pose2D | None = None
    goal: Pose2D | None = None

    @property
    def hops(self) -> int:
        return len(self.passages)

    def path_length(self) -> float:
        d = np.diff(self.dense_path, axis=0)
        return float(np.sum(np.hypot(d[:, 0], d[:, 1]))) if len(d) else 0.0

    def to_record(self) -> dict:
        return {
            "planner": self.planner,
            "cost": self.cost,
            "hops": self.hops,
            "passages": list(self.passages),
            "closed_states": self.closed_states,
            "stage_times_us": dict(self.stage_times_us),
            "used_fallback": self.used_fallback,
            "floor_constraint": self.floor_constraint.mode,
            "floor_transitions": [list(t) for t in self.floor_transitions],
        }


def _level(pose) -> str | None:
    return getattr(pose, "level", None)


def floor_constraint(graph: AreaGraph, leaf_s: str, leaf_g: str, config: PlannerConfig) -> FloorConstraint:
    if config.floor_mode == "unconstrained":
        return FloorConstraint()
    ls, lg = graph.areas[leaf_s].level, graph.areas[leaf_g].level
    return FloorConstraint(ls) if ls and ls == lg else FloorConstraint()


def _virtual_edges(h: VirtualPassage, pg: PassageGraph, phi: str | None):
    return [e for e in h.edges if passage_allowed(pg.vertices[e.v].level, phi)]


def _astar(adj_fn, start: str, goal: str, h_fn):
    """A* returning (cost, hops, closed count). Ties on f go to larger g, then insertion order."""
    best = {start: 0.0}
    back: dict[str, tuple[str, tuple] | None] = {start: None}
    closed: set[str] = set()
    heap = [(h_fn(start), 0.0, 0, start)]
    counter = 1
    while heap:
        _, neg_g, _, v = heapq.heappop(heap)
        if v in closed:
            continue
        closed.add(v)
        g = -neg_g
        if v == goal:
            hops = []
            cur = v
            while back[cur] is not None:
                prev, hop = back[cur]
                hops.append(hop)
                cur = prev
            return g, hops[::-1], len(closed)
        for nb, w, hop in adj_fn(v):
            if nb in closed:
                continue
            ng = g + w
            if ng < best.get(nb, math.inf):
                best[nb] = ng
                back[nb] = (v, hop)
                heapq.heappush(heap, (ng + h_fn(nb), -ng, counter, nb))
                counter += 1
    raise NoRoute(f"no route from {start} to {goal}")


class _Expander:
    """Unfolds compact hops (virtual/base/clique/lift/direct) into base steps."""

    def __init__(self, pg: PassageGraph, cache: HierCache | None, phi: str | None, virtual: dict):
        self.pg, self.cache, self.phi, self.virtual = pg, cache, phi, virtual

    def expand(self, hop) -> list[Step]:
        kind, area, u, v = hop[:4]
        if kind == "rev":
            inner = self.expand(hop[1])
            return [Step(s.kind, s.area, s.v, s.u, s.weight, tuple(reversed(s.trace))) for s in reversed(inner)]
        if kind in ("virtual", "direct"):
            e = self.virtual.get((u, v)) or self.virtual.get((v, u))
            if e is None:
                raise InvalidExpansion(f"missing virtual edge {u}-{v}")
            return [Step(e.kind, area, u, v, e.weight, tuple(e.trace_from(u)))]
        if kind == "base":
            try:
                e = self.pg.edge(u, v)
            except KeyError:
                raise InvalidExpansion(f"missing base edge {u}-{v}") from None
            return [Step(e.kind, e.through_area, u, v, e.weight, tuple(e.trace_from(u)))]
        if self.cache is None:
            raise InvalidExpansion("summary hop without a cache")
        summ = self.cache.summary(area, self.phi)
        try:
            se = summ.clique[(u, v)] if kind == "clique" else summ.lift[u][v]
        except KeyError:
            raise InvalidExpansion(f"missing {kind} entry {area}:{u}->{v}") from None
        out = []
        for h in se.hops:
            out.extend(self.expand(h))
        return out


def _reverse(hop):
    return ("rev", hop, None, None)


def _finish(
    planner: str,
    graph: AreaGraph,
    hops: list,
    cost: float,
    expander: _Expander,
    phi: FloorConstraint,
    closed: dict[str, int],
    times: dict[str, float],
) -> PlanResult:
    t0 = time.perf_counter_ns()
    steps: list[Step] = []
    for hop in hops:
        steps.extend(expander.expand(hop))
    total = sum(s.weight for s in steps)
    if abs(total - cost) > 1e-6:
        raise InvalidExpansion(f"expanded weight {total} != compact cost {cost}")
    passages: list[str] = []
    pts: list[tuple] = []
    for s in steps:
        if s.v not in (START, GOAL) and (not passages or passages[-1] != s.v):
            passages.append(s.v)
        tr = list(s.trace)
        if pts and tr and np.allclose(pts[-1], tr[0], atol=1e-12):
            tr = tr[1:]
        pts.extend(tr)
    transitions = []
    for a, b in zip(steps, steps[1:]):
        la, lb = graph.areas[a.area].level, graph.areas[b.area].level
        if la != lb:
            transitions.append((a.v, la, lb))
    times["expand"] = times.get("expand", 0.0) + (time.perf_counter_ns() - t0) / 1e3
    return PlanResult(
        planner=planner,
        passages=passages,
        dense_path=np.asarray(pts, dtype=float).reshape(-1, 2),
        cost=cost,
        steps=steps,
        closed_states=sum(closed.values()),
        closed_by_stage=dict(closed),
        stage_times_us=dict(times),
        floor_transitions=transitions,
        floor_constraint=phi,
        compact_hops=len(hops),
    )


def _inject(graph, pg, cache, start, goal, config):
    hs, leaf_s = inject_virtual_passage(
        graph, pg, cache, start, _level(start), START, config.euclidean_fallback
    )
    hg, leaf_g = inject_virtual_passage(
        graph, pg, cache, goal, _level(goal), GOAL, config.euclidean_fallback
    )
    direct = direct_link(graph, pg, hs, hg)
    return hs, hg, direct


def _virtual_index(hs, hg, direct) -> dict:
    out = {(e.u, e.v): e for e in hs.edges + hg.edges}
    if direct is not None:
        out[(direct.u, direct.v)] = direct
    return out


def _heuristic(pg: PassageGraph, goal_xy, extra_edges):
    scale = pg.heuristic_scale
    for e in extra_edges:
        a, b = e.trace[0], e.trace[-1]
        d = math.hypot(a[0] - b[0], a[1] - b[1])
        if d > 1e-12:
            scale = min(scale, e.weight / d)
    gx, gy = goal_xy
    verts = pg.vertices

    def h(name):
        v = verts.get(name)
        if v is None:
            return 0.0
        return scale * math.hypot(v.position[0] - gx, v.position[1] - gy)

    return h


def plan_flat(
    graph: AreaGraph,
    pg: PassageGraph,
    cache: HierCache | None,
    start: Pose2D,
    goal: Pose2D,
    config: PlannerConfig | None = None,
) -> PlanResult:
    """Global passage-level A* over the whole base graph."""
    config = config or PlannerConfig()
    times = {k: 0.0 for k in STAGES}
    t0 = time.perf_counter_ns()
    hs, hg, direct = _inject(graph, pg, cache, start, goal, config)
    try:
        phi = floor_constraint(graph, hs.leaf, hg.leaf, config)
        vs = _virtual_edges(hs, pg, phi.level)
        to_goal = {e.v: e for e in _virtual_edges(hg, pg, phi.level)}
        times["attach"] = (time.perf_counter_ns() - t0) / 1e3
        verts = pg.vertices

        def adj(v):
            if v == START:
                for e in vs:
                    yield e.v, e.weight, ("virtual", e.through_area, START, e.v)
                if direct is not None:
                    yield GOAL, direct.weight, ("direct", direct.through_area, START, GOAL)
                return
            if v == GOAL:
                return
            for e in pg.adjacency[v]:
                nb = e.other(v)
                if passage_allowed(verts[nb].level, phi.level):
                    yield nb, e.weight, ("base", e.through_area, v, nb)
            e = to_goal.get(v)
            if e is not None:
                yield GOAL, e.weight, ("virtual", e.through_area, v, GOAL)

        t1 = time.perf_counter_ns()
        extra = vs + list(to_goal.values()) + ([direct] if direct else [])
        cost, hops, closed = _astar(adj, START, GOAL, _heuristic(pg, hg.position, extra))
        times["astar"] = (time.perf_counter_ns() - t1) / 1e3
        expander = _Expander(pg, cache, phi.level, _virtual_index(hs, hg, direct))
        res = _finish("flat", graph, hops, cost, expander, phi, {"astar": closed}, times)
        res.start, res.goal = start, goal
        return res
    finally:
        hs.release()
        hg.release()


# -- hierarchical stages ---------------------------------------------------

def attach(handle: VirtualPassage, pg: PassageGraph, cache: HierCache, phi: FloorConstraint, counter=None) -> Frontier:
    """Multi-source Dijkstra from the virtual endpoint over its leaf's compact graph."""
    seeds: dict[str, float] = {}
    first_hop: dict[str, tuple] = {}
    for e in _virtual_edges(handle, pg, phi.level):
        if e.weight < seeds.get(e.v, math.inf):
            seeds[e.v] = e.weight
            first_hop[e.v] = ("virtual", handle.leaf, handle.name, e.v)
    if not seeds:
        raise InvalidFrontier(f"{handle.name}: no admissible passage in {handle.leaf}")
    adj: dict[str, list] = {}
    for a, b, w, hop in cache._base_edges(handle.leaf, phi.level):
        adj.setdefault(a, []).append((b, w, hop))
    dist, back = dijkstra(adj, seeds, None, counter)
    entries = {}
    for p, d in dist.items():
        hops = []
        cur = p
        while back.get(cur) is not None:
            prev, hop = back[cur]
            hops.append(hop)
            cur = prev
        hops.append(first_hop[cur])
        entries[p] = FrontierEntry(d, tuple(reversed(hops)))
    return Frontier(handle.leaf, entries)


def lift(frontier: Frontier, graph: AreaGraph, cache: HierCache, phi: FloorConstraint, counter=None) -> tuple[Frontier, str]:
    """Propagate a frontier from an area to its parent's boundary via the cached lift table."""
    parent = graph.hierarchy.get(frontier.area)
    if parent is None or parent not in graph.areas:
        raise InvalidFrontier(f"{frontier.area} has no parent to lift into")
    table = cache.summary(parent, phi.level).lift
    out: dict[str, FrontierEntry] = {}
    for q in sorted(frontier.entries):
        src = frontier.entries[q]
        for b, se in table.get(q, {}).items():
            c = src.cost + se.weight
            if b not in out or c < out[b].cost:
                out[b] = FrontierEntry(c, src.hops + (("lift", parent, q, b),))
    if counter is not None:
        counter[0] += len(out)
    if not out:
        raise InvalidFrontier(f"lift from {frontier.area} into {parent} reached no boundary passage")
    return Frontier(parent, out), parent


def _context_edges(graph: AreaGraph, cache: HierCache, lca: str, phi: str | None):
    """Summaries of everything outside the LCA's subtree, so routes may leave and re-enter it."""
    out = []
    chain = graph.ancestors(lca)
    for child, anc in zip(chain, chain[1:]):
        for a, b, w, hop in cache.overlay_edges(anc, phi):
            if hop[1] != child:
                out.append((a, b, w, hop))
    top = chain[-1]
    for root in graph.top_level:
        if root == top:
            continue
        if cache.uses_summary(root):
            for (a, b), se in cache.summary(root, phi).clique.items():
                out.append((a, b, se.weight, ("clique", root, a, b)))
        else:
            out += cache._base_edges(root, phi)
    return out


def plan_hierarchical(
    graph: AreaGraph,
    pg: PassageGraph,
    cache: HierCache,
    start: Pose2D,
    goal: Pose2D,
    config: PlannerConfig | None = None,
) -> PlanResult:
    """Attach, lift to the common parent, search the assembled compact graph, expand.

    Any invalid stage falls back to plan_flat.
    """
    config = config or PlannerConfig()
    times = {k: 0.0 for k in STAGES}
    closed = {k: 0 for k in ("attach", "lift", "astar")}
    t0 = time.perf_counter_ns()
    try:
        hs, hg, direct = _inject(graph, pg, cache, start, goal, config)
    except AttachFailed:
        if not config.allow_fallback:
            raise
        return _fallback(graph, pg, cache, start, goal, config)
    try:
        phi = floor_constraint(graph, hs.leaf, hg.leaf, config)
        try:
            lca = lowest_common_ancestor(graph, hs.leaf, hg.leaf)
        except NoCommonAncestor:
            lca = None
        cs, cg = [0], [0]
        fs = attach(hs, pg, cache, phi, cs)
        fg = attach(hg, pg, cache, phi, cg)
        closed["attach"] = cs[0] + cg[0]
        t1 = time.perf_counter_ns()
        times["attach"] = (t1 - t0) / 1e3
        if lca is None:
            raise InvalidFrontier("endpoints lie in disjoint hierarchy trees")
        cap = config.max_lift_iterations or graph.depth(hs.leaf) + graph.depth(hg.leaf) + 1
        lifted, ls_counter = [], [0]
        it = 0
        while fs.area != lca and graph.hierarchy.get(fs.area) != lca:
            fs, p = lift(fs, graph, cache, phi, ls_counter)
            lifted.append(p)
            it += 1
            if it > cap:
                raise InvalidFrontier("lift iterations exceeded hierarchy depth")
        while fg.area != lca and graph.hierarchy.get(fg.area) != lca:
            fg, p = lift(fg, graph, cache, phi, ls_counter)
            lifted.append(p)
            it += 1
            if it > cap:
                raise InvalidFrontier("lift iterations exceeded hierarchy depth")
        closed["lift"] = ls_counter[0]
        t2 = time.perf_counter_ns()
        times["lift"] = (t2 - t1) / 1e3

        adj: dict[str, list] = {}
        for a, b, w, hop in cache.overlay_edges(lca, phi.level) + _context_edges(graph, cache, lca, phi.level):
            adj.setdefault(a, []).append((b, w, hop))
        adj[START] = [(p, e.cost, ("frontier_s", p)) for p, e in sorted(fs.entries.items())]
        for p, e in sorted(fg.entries.items()):
            adj.setdefault(p, []).append((GOAL, e.cost, ("frontier_g", p)))
        if direct is not None:
            adj[START].append((GOAL, direct.weight, ("direct", direct.through_area, START, GOAL)))
        t3 = time.perf_counter_ns()
        times["assemble"] = (t3 - t2) / 1e3

        extra = _virtual_edges(hs, pg, phi.level) + _virtual_edges(hg, pg, phi.level) + ([direct] if direct else [])
        cost, hops, n_closed = _astar(lambda v: adj.get(v, ()), START, GOAL, _heuristic(pg, hg.position, extra))
        closed["astar"] = n_closed
        times["astar"] = (time.perf_counter_ns() - t3) / 1e3

        # Splice the frontier back-traces in place of the seed edges.
        flat_hops = []
        for hop in hops:
            if hop[0] == "frontier_s":
                flat_hops.extend(fs.entries[hop[1]].hops)
            elif hop[0] == "frontier_g":
                flat_hops.extend(_reverse(h) for h in reversed(fg.entries[hop[1]].hops))
            else:
                flat_hops.append(hop)
        expander = _Expander(pg, cache, phi.level, _virtual_index(hs, hg, direct))
        res = _finish("hierarchical", graph, flat_hops, cost, expander, phi, closed, times)
        res.compact_hops = len(hops)
        res.lca = lca
        res.lift_areas = lifted
        res.start, res.goal = start, goal
        return res
    except (InvalidFrontier, InvalidExpansion, NoRoute):
        if not config.allow_fallback:
            raise
        return _fallback(graph, pg, cache, start, goal, config)
    finally:
        hs.release()
        hg.release()


def _fallback(graph, pg, cache, start, goal, config) -> PlanResult:
    res = plan_flat(graph, pg, cache, start, goal, config)
    res.planner = "hierarchical"
    res.used_fallback = True
    return res


def expand_compact_trace(hops, pg: PassageGraph, cache: HierCache, phi: FloorConstraint, virtual=None) -> tuple[list[str], np.ndarray]:
    """Replace compact hops by their constituent base edges; returns (passages, dense path)."""
    expander = _Expander(pg, cache, phi.level, virtual or {})
    steps = [s for h in hops for s in expander.expand(h)]
    passages, pts = [], []
    for s in steps:
        if not passages or passages[-1] != s.u:
            passages.append(s.u)
        passages.append(s.v)
        tr = list(s.trace)
        if pts and np.allclose(pts[-1], tr[0], atol=1e-12):
            tr = tr[1:]
        pts.extend(tr)
    passages = [p for p in passages if p not in (START, GOAL)]
    return passages, np.asarray(pts, dtype=float).reshape(-1, 2)
