"""Deterministic synthetic multi-floor campus maps.

Each floor is a corridor spine cut into sectors. A sector is a structure area
holding one corridor segment with rooms on both sides; consecutive corridor
segments meet through full-width openings. With two wings the spine folds
into a U: the south wing runs east, a link corridor turns north, and the
north wing runs back west above it. Elevator shafts replace a room slot on
every floor and are stacked with inter-floor passages, one per adjacent floor
pair.

Hierarchy: building -> floor -> sector -> room / corridor / elevator.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass

import numpy as np

from .builder import MapBuilder, rect
from .errors import SpecInfeasible


@dataclass
class CampusSpec:
    floors: int = 3
    sectors_per_floor: int = 9
    rooms_per_side: int = 4  # per sector
    sector_length: float = 24.0
    corridor_width: float = 3.0
    room_depth: float = 6.0
    door_width: float = 1.0
    elevators: int = 1
    interroom_door_prob: float = 0.3
    width_jitter: float = 0.3  # relative spread of room widths
    wings: int = 2  # 1: straight spine, 2: U-shaped spine

    @classmethod
    def small(cls, floors: int = 1, rooms: int = 4) -> "CampusSpec":
        """One sector per floor with `rooms` rooms split over both sides."""
        per_side = max(1, (rooms + 1) // 2)
        return cls(
            floors=floors,
            sectors_per_floor=1,
            rooms_per_side=per_side,
            sector_length=6.0 * per_side,
            elevators=1 if floors > 1 else 0,
            wings=1,
        )

    def check(self) -> None:
        if self.floors < 1 or self.sectors_per_floor < 1 or self.rooms_per_side < 1:
            raise SpecInfeasible("need at least one floor, sector and room per side")
        if self.elevators < 0 or self.elevators > self.sectors_per_floor:
            raise SpecInfeasible("elevators must fit one per sector")
        if self.elevators and self.rooms_per_side < 2:
            raise SpecInfeasible("an elevator sector needs at least two room slots per side")
        min_width = self.sector_length / self.rooms_per_side * (1 - self.width_jitter)
        if min_width < self.door_width + 0.5:
            raise SpecInfeasible(f"room width {min_width:.2f} m cannot hold a {self.door_width} m door")
        if self.corridor_width < self.door_width or self.room_depth < self.door_width + 0.5:
            raise SpecInfeasible("corridor or room too narrow for doors")
        if self.wings not in (1, 2) or (self.wings == 2 and self.sectors_per_floor < 2):
            raise SpecInfeasible("wings must be 1, or 2 with at least two sectors")
        if not 0 <= self.width_jitter < 1 or not 0 <= self.interroom_door_prob <= 1:
            raise SpecInfeasible("jitter and probabilities must lie in [0, 1)")


def _widths(rng: np.random.Generator, n: int, total: float, jitter: float) -> list[float]:
    w = rng.uniform(1 - jitter, 1 + jitter, n)
    w = np.round(w / w.sum() * total, 3)
    w[-1] = round(total - float(w[:-1].sum()), 3)
    return [float(v) for v in w]


def generate_synthetic_campus(seed: int = 0, spec: CampusSpec | None = None) -> tuple[str, dict]:
    spec = spec or CampusSpec()
    spec.check()
    rng = np.random.default_rng(seed)
    b = MapBuilder()
    cw, d, dw = spec.corridor_width, spec.room_depth, spec.door_width
    n_sec, L = spec.sectors_per_floor, spec.sector_length
    m = (n_sec + 1) // 2 if spec.wings == 2 else n_sec
    dy = cw + 2 * d  # north wing offset; its south rooms sit back to back with the south wing's north rooms
    # (x0, y0) of each sector's corridor; the north wing runs back west from the link.
    place = [(s * L, 0.0) if s < m else ((2 * m - 1 - s) * L, dy) for s in range(n_sec)]
    x_max = m * L + (cw if spec.wings == 2 else 0.0)
    y_lo, y_hi = -d, (dy if spec.wings == 2 else 0.0) + cw + d

    # Same layout on every floor so elevator shafts stack.
    south = [_widths(rng, spec.rooms_per_side, L, spec.width_jitter) for _ in range(n_sec)]
    north = [_widths(rng, spec.rooms_per_side, L, spec.width_jitter) for _ in range(n_sec)]
    if spec.elevators:
        elev_sectors = sorted({int(round(i)) for i in np.linspace(0, n_sec - 1, spec.elevators + 2)[1:-1]})
        if len(elev_sectors) < spec.elevators:
            elev_sectors = list(range(spec.elevators))
    else:
        elev_sectors = []
    interroom = {
        (s, side, i): bool(rng.random() < spec.interroom_door_prob)
        for s in range(n_sec)
        for side in ("S", "N")
        for i in range(spec.rooms_per_side - 1)
    }

    counts = Counter()
    analytic_area: dict[str, float] = {}
    kinds: dict[str, str] = {}

    def add_area(name, kind, pts, parent, level, w, h):
        b.area(name, kind, pts, parent=parent, level=level)
        counts[kind] += 1
        kinds[name] = kind
        analytic_area[name] = round(w * h, 6)

    add_area("B", "structure", rect(0, y_lo, x_max, y_hi), None, None, x_max, y_hi - y_lo)
    for f in range(1, spec.floors + 1):
        lv = str(f)
        fl = f"F{f}"
        add_area(fl, "structure", rect(0, y_lo, x_max, y_hi), "B", lv, x_max, y_hi - y_lo)
        if spec.wings == 2:
            link = f"{fl}_LK"
            add_area(link, "structure", rect(m * L, y_lo, x_max, y_hi), fl, lv, cw, y_hi - y_lo)
            add_area(f"{link}_C", "corridor", rect(m * L, 0, x_max, dy + cw), link, lv, cw, dy + cw)
            b.passage(f"{fl}_JA", [(m * L, 0.0), (m * L, cw)], f"{fl}_S{m - 1}_C", f"{link}_C", level=lv)
            b.passage(f"{fl}_JB", [(m * L, dy), (m * L, dy + cw)], f"{link}_C", f"{fl}_S{m}_C", level=lv)
            counts["opening"] += 2
        for s in range(n_sec):
            x0, yc = place[s]
            sec = f"{fl}_S{s}"
            add_area(sec, "structure", rect(x0, yc - d, x0 + L, yc + cw + d), fl, lv, L, cw + 2 * d)
            corr = f"{sec}_C"
            add_area(corr, "corridor", rect(x0, yc, x0 + L, yc + cw), sec, lv, L, cw)
            if s > 0 and s != m:
                xj = max(x0, place[s - 1][0])
                b.passage(f"{fl}_J{s}", [(xj, yc), (xj, yc + cw)], f"{fl}_S{s - 1}_C", corr, level=lv)
                counts["opening"] += 1
            for side, widths in (("S", south[s]), ("N", north[s])):
                x = x0
                for i, w in enumerate(widths):
                    x1 = x0 + L if i == len(widths) - 1 else round(x + w, 6)
                    is_elev = side == "N" and s in elev_sectors and i == 0
                    name = f"{sec}_E" if is_elev else f"{sec}_{side}{i}"
                    ya, yb = (yc - d, yc) if side == "S" else (yc + cw, yc + cw + d)
                    add_area(name, "elevator" if is_elev else "room", rect(x, ya, x1, yb), sec, lv, x1 - x, d)
                    wall = yc if side == "S" else yc + cw
                    xm = 0.5 * (x + x1)
                    b.passage(
                        f"{name}_D", [(xm - dw / 2, wall), (xm + dw / 2, wall)], name, corr, level=lv
                    )
                    counts["door"] += 1
                    if i < len(widths) - 1 and not is_elev and interroom[(s, side, i)]:
                        nxt = f"{sec}_{side}{i + 1}"
                        ym = 0.5 * (ya + yb)
                        b.passage(f"{name}_X", [(x1, ym - dw / 2), (x1, ym + dw / 2)], name, nxt, level=lv)
                        counts["interroom"] += 1
                    x = x1
    # Stack elevator shafts with one inter-floor passage per adjacent floor pair.
    for s in elev_sectors:
        x0, yc = place[s]
        cx = x0 + 0.5 * north[s][0]
        cy = yc + cw + 0.5 * d
        for f in range(1, spec.floors):
            lv = f"{f};{f + 1}"
            b.passage(
                f"V{s}_{f}_{f + 1}",
                [(cx - 0.5, cy), (cx + 0.5, cy)],
                f"F{f}_S{s}_E",
                f"F{f + 1}_S{s}_E",
                level=lv,
                scope=lv,
            )
            counts["interfloor"] += 1

    xml = b.xml()
    leaves = sum(v for k, v in counts.items() if k in ("room", "corridor", "elevator", "stairs"))
    manifest = {
        "seed": seed,
        "spec": asdict(spec),
        "areas": sum(counts[k] for k in ("room", "corridor", "structure", "elevator", "stairs")),
        "passages": sum(counts[k] for k in ("door", "opening", "interroom", "interfloor")),
        "leaf_areas": leaves,
        "counts": dict(sorted(counts.items())),
        "floors": spec.floors,
        "elevator_sectors": elev_sectors,
        "analytic_area_m2": analytic_area,
        "leaf_floor_area_m2": round(
            sum(v for k, v in analytic_area.items() if kinds[k] != "structure"), 6
        ),
    }
    return xml, manifest
