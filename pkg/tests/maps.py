"""Small hand-built maps shared by the test modules."""

from __future__ import annotations

from osmagnav.builder import MapBuilder, rect


def single_room(size: float = 10.0, level: str = "1"):
    b = MapBuilder()
    b.area("R1", "room", rect(0, 0, size, size), level=level)
    return b


def room_two_doors(level: str = "1"):
    """10 m square room with doors on the west and east walls into two side rooms."""
    b = MapBuilder()
    b.area("F", "structure", rect(-5, 0, 15, 10), level=level)
    b.area("R", "room", rect(0, 0, 10, 10), parent="F", level=level)
    b.area("W", "room", rect(-5, 0, 0, 10), parent="F", level=level)
    b.area("E", "room", rect(10, 0, 15, 10), parent="F", level=level)
    b.passage("DW", [(0, 4.5), (0, 5.5)], "W", "R", level=level)
    b.passage("DE", [(10, 4.5), (10, 5.5)], "R", "E", level=level)
    return b


def room_chain(n: int = 3, level: str = "1", width: float = 10.0):
    """n rooms in a row inside structure F, consecutive rooms joined by one door."""
    b = MapBuilder()
    b.area("F", "structure", rect(0, 0, n * width, 10), level=level)
    for i in range(n):
        b.area(f"R{i}", "room", rect(i * width, 0, (i + 1) * width, 10), parent="F", level=level)
    for i in range(n - 1):
        x = (i + 1) * width
        b.passage(f"D{i}", [(x, 4.5), (x, 5.5)], f"R{i}", f"R{i + 1}", level=level)
    return b


def lift_chain():
    """Outer rooms A, B around structure F holding R1-R3 in a chain; F has two boundary doors."""
    b = MapBuilder()
    b.area("B", "structure", rect(-5, 0, 35, 10), level="1")
    b.area("A", "room", rect(-5, 0, 0, 10), parent="B", level="1")
    b.area("Z", "room", rect(30, 0, 35, 10), parent="B", level="1")
    b.area("F", "structure", rect(0, 0, 30, 10), parent="B", level="1")
    for i in range(3):
        b.area(f"R{i + 1}", "room", rect(10 * i, 0, 10 * i + 10, 10), parent="F", level="1")
    b.passage("PA", [(0, 4.5), (0, 5.5)], "A", "R1", level="1")
    b.passage("P12", [(10, 2), (10, 3)], "R1", "R2", level="1")
    b.passage("P23", [(20, 7), (20, 8)], "R2", "R3", level="1")
    b.passage("PZ", [(30, 4.5), (30, 5.5)], "R3", "Z", level="1")
    return b


def u_corridor():
    """U-shaped corridor whose inner notch forces a detour between the two bottom doors.

    Arms are x in [0, 6] and [10, 16] below y = 4, the bridge spans y in [4, 8].
    Door centers (2, 0) and (14, 0) see the notch corners at exactly 45 degrees,
    so the geodesic 4 + 8*sqrt(2) is representable on an 8-connected grid.
    """
    b = MapBuilder()
    pts = [(0, 0), (6, 0), (6, 4), (10, 4), (10, 0), (16, 0), (16, 8), (0, 8)]
    b.area("F", "structure", rect(0, -3, 16, 8), level="1")
    b.area("U", "corridor", pts, parent="F", level="1")
    b.area("SA", "room", rect(0, -3, 6, 0), parent="F", level="1")
    b.area("SB", "room", rect(10, -3, 16, 0), parent="F", level="1")
    b.passage("DA", [(1.5, 0), (2.5, 0)], "SA", "U", level="1")
    b.passage("DB", [(13.5, 0), (14.5, 0)], "U", "SB", level="1")
    return b


def elevator_pair():
    """Two floors, each a lobby plus an elevator shaft; one inter-floor passage joins the shafts."""
    b = MapBuilder()
    b.area("B", "structure", rect(0, 0, 14, 6))
    for f in ("1", "2"):
        b.area(f"F{f}", "structure", rect(0, 0, 14, 6), parent="B", level=f)
        b.area(f"L{f}", "corridor", rect(0, 0, 10, 6), parent=f"F{f}", level=f)
        b.area(f"E{f}", "elevator", rect(10, 0, 14, 6), parent=f"F{f}", level=f)
        b.passage(f"D{f}", [(10, 2.5), (10, 3.5)], f"L{f}", f"E{f}", level=f)
    b.passage("V12", [(11.5, 3), (12.5, 3)], "E1", "E2", level="1;2", scope="1;2")
    return b


def l_room():
    pts = [(0, 0), (8, 0), (8, 3), (3, 3), (3, 6), (0, 6)]
    b = MapBuilder()
    b.area("L", "room", pts, level="1")
    return b, 8 * 3 + 3 * 3


def corridor(length: float = 40.0, width: float = 3.0):
    b = MapBuilder()
    b.area("C", "corridor", rect(0, 0, length, width), level="1")
    return b
