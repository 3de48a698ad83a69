"""Structure-based planar localization against the vector map.

Walls come straight from area polygons (with door intervals cut out), so the
map needs no occupancy grid. The tracker is point-to-line ICP with a clutter
gate, asymmetric robust weights and a corridor-aware direction factor; its
output is blended with odometry by an ICP confidence score. Global
relocalization scores candidate poses by how well the scan sits on the walls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry as geo
from .errors import (
    AmbiguousContainment,
    Diverged,
    NoHypothesis,
    NotInAnyArea,
    PoseOutsideMap,
    StaleOdometry,
    TooFewCorrespondences,
)
from .geometry import Pose2D
from .model import AreaGraph, height_compatible, locate_leaf_area

STRUCTURE, CLUTTER, MAX_RANGE = 0, 1, 2
LABELS = ("structure", "clutter", "max_range")
WEIGHTING_MODES = ("off", "robust_only", "robust_times_corridor")
_COLLINEAR_TOL = 1e-6


@dataclass(frozen=True)
class MapSegments:
    a: np.ndarray  # (S, 2)
    b: np.ndarray  # (S, 2)
    normal: np.ndarray  # (S, 2) unit, pointing into the owning area
    area: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.a)

    @property
    def orientation(self) -> np.ndarray:
        d = self.b - self.a
        return np.mod(np.arctan2(d[:, 1], d[:, 0]), math.pi)


@dataclass
class ScanFrame:
    timestamp: float
    angles: np.ndarray
    ranges: np.ndarray
    labels: np.ndarray
    max_range: float
    true_pose: Pose2D | None = None

    @property
    def valid(self) -> np.ndarray:
        return self.labels != MAX_RANGE

    def points_sensor(self) -> np.ndarray:
        return np.stack([self.ranges * np.cos(self.angles), self.ranges * np.sin(self.angles)], axis=1)

    def points_world(self, pose: Pose2D) -> np.ndarray:
        ps = self.points_sensor()
        c, s = math.cos(pose.theta), math.sin(pose.theta)
        return np.stack([c * ps[:, 0] - s * ps[:, 1] + pose.x, s * ps[:, 0] + c * ps[:, 1] + pose.y], axis=1)


@dataclass
class TrackerConfig:
    tau_in: float = 0.3
    tau_out: float = 1.0
    max_step_translation: float = 0.2
    max_step_rotation: float = math.radians(5.0)
    corridor_bins: int = 18
    corridor_threshold: float = 0.8
    corridor_cap: int = 60
    max_iterations: int = 10
    epsilon: float = 1e-6
    weighting: str = "robust_times_corridor"
    damping: float = 0.1  # scaled by the total correspondence weight
    length_scale: float = 1.0  # meters per radian in the damping term
    jump_translation: float = 1.0
    jump_rotation: float = math.radians(30.0)
    min_correspondences: int = 6
    height: float | None = None
    height_tol: float = 1.5


@dataclass
class Correspondences:
    """Per-beam association and weighting results (arrays over valid beams)."""

    beam: np.ndarray
    point: np.ndarray
    direction: np.ndarray
    segment: np.ndarray
    residual: np.ndarray  # perpendicular distance, >= 0
    signed: np.ndarray  # signed distance along the segment's interior normal
    e: np.ndarray  # d_scan - d_map
    inside: np.ndarray  # side classification by the interior normal
    retained: np.ndarray
    w_rob: np.ndarray
    factor: np.ndarray
    weight: np.ndarray

    def __len__(self) -> int:
        return len(self.beam)


@dataclass
class CorridorInfo:
    direction: float
    ratio: float
    drop: np.ndarray  # True where a point is removed by downsampling


@dataclass
class IcpReport:
    iterations: int = 0
    increments: list[tuple[float, float]] = field(default_factory=list)  # (|dt|, |dtheta|)
    converged: bool = False
    correspondences: int = 0
    valid_ratio: float = 0.0
    mean_residual: float = 0.0
    weight_variance: float = 0.0
    corridor_ratio: float = 0.0


@dataclass
class IcpResult:
    pose: Pose2D
    s_icp: float
    report: IcpReport


# -- map ----------------------------------------------------------------------

def map_segments(
    graph: AreaGraph, level: str | None, height: float | None = None, height_tol: float = 1.5
) -> MapSegments:
    """Wall segments of the leaf areas on a level, with passage openings removed."""
    A, B, N, owner = [], [], [], []
    polylines = graph.passage_polylines
    for name in graph.leaf_areas(level):
        if not height_compatible(graph.areas[name], height, height_tol):
            continue
        poly = graph.area_polygons[name]
        openings = [polylines[p] for p in graph.resident_passages[name]]
        for a, b in geo.polygon_edges(poly):
            d = b - a
            L = float(np.hypot(*d))
            if L == 0:
                continue
            u = d / L
            n = np.array([-u[1], u[0]])  # CCW ring: interior on the left
            cuts = []
            for pl in openings:
                for p, q in zip(pl[:-1], pl[1:]):
                    if abs((p - a) @ n) > _COLLINEAR_TOL or abs((q - a) @ n) > _COLLINEAR_TOL:
                        continue
                    t0, t1 = sorted((float((p - a) @ u), float((q - a) @ u)))
                    if t1 > 0 and t0 < L:
                        cuts.append((max(t0, 0.0), min(t1, L)))
            for t0, t1 in _subtract([(0.0, L)], cuts):
                if t1 - t0 > 1e-9:
                    A.append(a + t0 * u)
                    B.append(a + t1 * u)
                    N.append(n)
                    owner.append(name)
    if not A:
        return MapSegments(np.zeros((0, 2)), np.zeros((0, 2)), np.zeros((0, 2)), ())
    return MapSegments(np.array(A), np.array(B), np.array(N), tuple(owner))


def _subtract(intervals, cuts):
    for c0, c1 in sorted(cuts):
        out = []
        for a0, a1 in intervals:
            if c1 <= a0 or c0 >= a1:
                out.append((a0, a1))
                continue
            if c0 > a0:
                out.append((a0, c0))
            if c1 < a1:
                out.append((c1, a1))
        intervals = out
    return intervals


# -- scan synthesis -------------------------------------------------------------

def simulate_scan(
    graph: AreaGraph,
    true_pose: Pose2D,
    beams: int = 360,
    sigma: float = 0.0,
    clutter: list[tuple[float, float, float]] | None = None,
    max_range: float = 30.0,
    rng: np.random.Generator | None = None,
    timestamp: float = 0.0,
    segments: MapSegments | None = None,
) -> ScanFrame:
    """Ray-cast beams against walls and clutter discs (cx, cy, radius); nearest hit wins."""
    try:
        locate_leaf_area(graph, true_pose, true_pose.level)
    except (NotInAnyArea, AmbiguousContainment) as exc:
        raise PoseOutsideMap(str(exc)) from None
    segs = segments if segments is not None else map_segments(graph, true_pose.level)
    angles = np.linspace(0.0, 2.0 * math.pi, beams, endpoint=False)
    world = angles + true_pose.theta
    dirs = np.stack([np.cos(world), np.sin(world)], axis=1)
    origin = np.array([true_pose.x, true_pose.y])
    ranges = np.full(beams, np.inf)
    labels = np.full(beams, MAX_RANGE, dtype=np.int8)
    if len(segs):
        d = geo.ray_segment_distances(origin, dirs, segs.a, segs.b).min(axis=1)
        hit = d < ranges
        ranges[hit], labels[hit] = d[hit], STRUCTURE
    for cx, cy, r in clutter or []:
        w = origin - np.array([cx, cy])
        bq = dirs @ w
        disc = bq * bq - (w @ w - r * r)
        with np.errstate(invalid="ignore"):
            t = -bq - np.sqrt(disc)
        ok = (disc >= 0) & (t > 1e-9) & (t < ranges)
        ranges[ok], labels[ok] = t[ok], CLUTTER
    if sigma > 0:
        rng = rng or np.random.default_rng(0)
        noisy = ranges + rng.normal(0.0, sigma, beams)
        ranges = np.where(np.isfinite(ranges), np.maximum(noisy, 1e-3), ranges)
    far = ~np.isfinite(ranges) | (ranges > max_range)
    ranges[far] = max_range
    labels[far] = MAX_RANGE
    return ScanFrame(timestamp, angles, ranges, labels, max_range, true_pose)


# -- weights ------------------------------------------------------------------------

def robust_weight(r, side, cfg: TrackerConfig | None = None):
    """Asymmetric robust weight; side is 'inside', 'outside' or anything else for rejected."""
    cfg = cfg or TrackerConfig()
    r = np.asarray(r, dtype=float)
    if side == "outside":
        w = cfg.tau_out / (9.0 * r + cfg.tau_out)
    elif side == "inside":
        w = cfg.tau_in / (1.5 * r + cfg.tau_in)
    else:
        w = np.zeros_like(r)
    return float(w) if w.ndim == 0 else w


def _robust_weights(r: np.ndarray, inside: np.ndarray, retained: np.ndarray, cfg: TrackerConfig) -> np.ndarray:
    w = np.where(inside, cfg.tau_in / (1.5 * r + cfg.tau_in), cfg.tau_out / (9.0 * r + cfg.tau_out))
    return np.where(retained, w, 0.0)


def corridor_direction_factor(n, v):
    """clamp(|n . v|, 0.3, 1) for unit normal(s) n and observation direction(s) v."""
    dot = np.abs(np.sum(np.asarray(n, dtype=float) * np.asarray(v, dtype=float), axis=-1))
    f = np.clip(dot, 0.3, 1.0)
    return float(f) if np.ndim(f) == 0 else f


def gate(e, d_perp, cfg: TrackerConfig | None = None):
    """Clutter-gate retention: (e <= 0 and d < tau_in) or (e > 0 and d < tau_out)."""
    cfg = cfg or TrackerConfig()
    e = np.asarray(e, dtype=float)
    d = np.asarray(d_perp, dtype=float)
    keep = ((e <= 0) & (d < cfg.tau_in)) | ((e > 0) & (d < cfg.tau_out))
    return bool(keep) if keep.ndim == 0 else keep


# -- association ------------------------------------------------------------------

def _point_segment_table(P: np.ndarray, segs: MapSegments):
    """(B, S) perpendicular distances and signed normal offsets."""
    ab = segs.b - segs.a
    L2 = np.einsum("ij,ij->i", ab, ab)
    ap = P[:, None, :] - segs.a[None, :, :]
    t = np.clip(np.einsum("bsk,sk->bs", ap, ab) / L2[None, :], 0.0, 1.0)
    closest = segs.a[None, :, :] + t[..., None] * ab[None, :, :]
    dist = np.hypot(*(P[:, None, :] - closest).transpose(2, 0, 1))
    signed = np.einsum("bsk,sk->bs", ap, segs.normal)
    return dist, signed


def associate(scan: ScanFrame, segs: MapSegments, pose: Pose2D, cfg: TrackerConfig) -> Correspondences:
    """Match each valid return to a wall, compute the ray-consistency term and gate it."""
    beam = np.flatnonzero(scan.valid)
    P = scan.points_world(pose)[beam]
    world = scan.angles[beam] + pose.theta
    V = np.stack([np.cos(world), np.sin(world)], axis=1)
    sensor = np.array([pose.x, pose.y])
    nb = len(beam)
    if nb == 0 or len(segs) == 0:
        z = np.zeros(nb)
        return Correspondences(beam, P, V, np.full(nb, -1), z, z, z, z.astype(bool), z.astype(bool), z, z, z)
    dist, signed = _point_segment_table(P, segs)
    facing = np.einsum("sk,sk->s", sensor - segs.a, segs.normal) > 0  # sensor on the interior side
    cand = np.where(facing[None, :] & (dist <= 2.0 * cfg.tau_out), dist, np.inf)
    seg = np.argmin(cand, axis=1)
    matched = np.isfinite(cand[np.arange(nb), seg])
    # Unmatched returns fall back to the wall the beam hits in the map.
    if not matched.all():
        hits = geo.ray_segment_distances(sensor, V[~matched], segs.a, segs.b)
        first = np.argmin(hits, axis=1)
        seg[~matched] = first
        no_hit = ~np.isfinite(hits[np.arange(len(first)), first])
    r = dist[np.arange(nb), seg]
    sd = signed[np.arange(nb), seg]
    n = segs.normal[seg]
    # Expected range along the beam to the matched wall's supporting line.
    denom = np.einsum("ij,ij->i", V, n)
    num = np.einsum("ij,ij->i", segs.a[seg] - sensor, n)
    with np.errstate(divide="ignore", invalid="ignore"):
        d_map = np.where(np.abs(denom) > 1e-12, num / denom, np.inf)
    d_map = np.where(d_map > 0, d_map, np.inf)
    d_scan = scan.ranges[beam]
    e = d_scan - d_map
    retained = gate(e, r, cfg)
    if not matched.all():
        idx = np.flatnonzero(~matched)
        retained[idx[no_hit]] = False
    inside = sd >= 0
    w_rob = _robust_weights(r, inside, retained, cfg)
    factor = corridor_direction_factor(n, V)
    if cfg.weighting == "off":
        weight = retained.astype(float)
    elif cfg.weighting == "robust_only":
        weight = w_rob
    else:
        weight = w_rob * factor
    return Correspondences(beam, P, V, seg, r, sd, e, inside, retained, w_rob, factor, weight)


def clutter_filter(scan: ScanFrame, graph: AreaGraph, pose: Pose2D, cfg: TrackerConfig | None = None,
                   segments: MapSegments | None = None) -> Correspondences:
    """Correspondences of every valid return; `retained` marks the clean set."""
    cfg = cfg or TrackerConfig()
    segs = segments if segments is not None else map_segments(graph, pose.level, cfg.height, cfg.height_tol)
    return associate(scan, segs, pose, cfg)


def corridorness(corr: Correspondences, segs: MapSegments, cfg: TrackerConfig | None = None) -> CorridorInfo:
    """Orientation histogram of matched walls; dominant-bin points beyond the cap are dropped."""
    cfg = cfg or TrackerConfig()
    use = np.flatnonzero(corr.retained)
    drop = np.zeros(len(corr), dtype=bool)
    if len(use) == 0:
        return CorridorInfo(0.0, 0.0, drop)
    theta = segs.orientation[corr.segment[use]]
    width = math.pi / cfg.corridor_bins
    bins = np.minimum((theta / width).astype(int), cfg.corridor_bins - 1)
    counts = np.bincount(bins, minlength=cfg.corridor_bins)
    top = int(np.argmax(counts))
    ratio = float(counts[top] / len(use))
    direction = (top + 0.5) * width
    if ratio > cfg.corridor_threshold:
        dominant = use[bins == top]
        if len(dominant) > cfg.corridor_cap:
            keep = np.linspace(0, len(dominant) - 1, cfg.corridor_cap).round().astype(int)
            mask = np.ones(len(dominant), dtype=bool)
            mask[keep] = False
            drop[dominant[mask]] = True
    return CorridorInfo(direction, ratio, drop)


# -- ICP ----------------------------------------------------------------------

def _normal_equations(corr: Correspondences, segs: MapSegments, pose: Pose2D, w: np.ndarray):
    n = segs.normal[corr.segment]
    r = corr.signed  # signed point-to-line residual
    rel = corr.point - np.array([pose.x, pose.y])
    dtheta = np.einsum("ij,ij->i", n, np.stack([-rel[:, 1], rel[:, 0]], axis=1))
    J = np.column_stack([n, dtheta])
    H = (J * w[:, None]).T @ J
    g = (J * w[:, None]).T @ r
    return H, g


def weighted_objective(scan: ScanFrame, corr: Correspondences, segs: MapSegments, pose: Pose2D,
                       w: np.ndarray) -> float:
    """Sum of w_i * d_perp(T p_i, L_i)^2 for fixed associations and weights."""
    P = scan.points_world(pose)[corr.beam]
    n = segs.normal[corr.segment]
    d = np.einsum("ij,ij->i", P - segs.a[corr.segment], n)
    return float(np.sum(w * d * d))


def _solve(corr: Correspondences, segs: MapSegments, pose: Pose2D, w: np.ndarray, cfg: TrackerConfig):
    H, g = _normal_equations(corr, segs, pose, w)
    lam = cfg.damping * float(np.sum(w))
    D = np.diag([1.0, 1.0, cfg.length_scale**2])
    try:
        delta = -np.linalg.solve(H + lam * D, g)
    except np.linalg.LinAlgError:
        delta = -np.linalg.lstsq(H + lam * D, g, rcond=None)[0]
    t = float(np.hypot(delta[0], delta[1]))
    if t > cfg.max_step_translation:
        delta[:2] *= cfg.max_step_translation / t
    delta[2] = float(np.clip(delta[2], -cfg.max_step_rotation, cfg.max_step_rotation))
    return delta


def _final_weights(corr: Correspondences, segs: MapSegments, cfg: TrackerConfig) -> tuple[np.ndarray, float]:
    w = corr.weight.copy()
    ratio = 0.0
    if cfg.weighting == "robust_times_corridor" and corr.retained.any():
        info = corridorness(corr, segs, cfg)
        ratio = info.ratio
        w[info.drop] = 0.0
    return w, ratio


def icp_confidence(valid_ratio: float, mean_residual: float, weight_variance: float, tau_in: float) -> float:
    """valid ratio x exp(-mean residual / tau_in) x (1 - weight variance), each in [0, 1]."""
    a = min(1.0, max(0.0, valid_ratio))
    b = min(1.0, max(0.0, math.exp(-mean_residual / tau_in)))
    c = min(1.0, max(0.0, 1.0 - weight_variance))
    return a * b * c


def icp_track(
    scan: ScanFrame,
    graph: AreaGraph | None,
    prior: Pose2D,
    cfg: TrackerConfig | None = None,
    segments: MapSegments | None = None,
) -> IcpResult:
    cfg = cfg or TrackerConfig()
    segs = segments if segments is not None else map_segments(graph, prior.level, cfg.height, cfg.height_tol)
    pose = prior
    report = IcpReport()
    for _ in range(cfg.max_iterations):
        corr = associate(scan, segs, pose, cfg)
        w, ratio = _final_weights(corr, segs, cfg)
        active = w > 0
        if int(active.sum()) < cfg.min_correspondences:
            raise TooFewCorrespondences(f"{int(active.sum())} usable correspondences")
        delta = _solve(corr, segs, pose, w, cfg)
        pose = Pose2D(
            float(pose.x + delta[0]), float(pose.y + delta[1]), geo.wrap_angle(float(pose.theta + delta[2])), pose.level
        )
        report.iterations += 1
        report.increments.append((float(np.hypot(delta[0], delta[1])), abs(float(delta[2]))))
        report.corridor_ratio = ratio
        if np.hypot(delta[0], delta[1]) < cfg.epsilon and abs(delta[2]) < cfg.epsilon:
            report.converged = True
            break
    corr = associate(scan, segs, pose, cfg)
    w, ratio = _final_weights(corr, segs, cfg)
    n_valid = max(1, int(scan.valid.sum()))
    kept = corr.retained
    report.correspondences = int(kept.sum())
    report.valid_ratio = float(kept.sum() / n_valid)
    report.mean_residual = float(corr.residual[kept].mean()) if kept.any() else math.inf
    report.weight_variance = float(np.var(corr.weight[kept])) if kept.any() else 1.0
    s = icp_confidence(report.valid_ratio, report.mean_residual, report.weight_variance, cfg.tau_in)
    jump = math.hypot(pose.x - prior.x, pose.y - prior.y)
    turn = abs(geo.wrap_angle(pose.theta - prior.theta))
    if jump > cfg.jump_translation or turn > cfg.jump_rotation:
        err = Diverged(f"jump guard: {jump:.3f} m / {math.degrees(turn):.1f} deg from prior")
        err.report = report
        err.pose = pose
        raise err
    return IcpResult(pose, s, report)


# -- odometry fusion ---------------------------------------------------------------

@dataclass(frozen=True)
class FusionInput:
    icp_pose: Pose2D
    s_icp: float
    odom_pose: Pose2D


def icp_weight(s_icp: float) -> float:
    return 0.5 + 0.45 * min(1.0, max(0.0, float(s_icp)))


def fuse_with_odometry(fin: FusionInput) -> Pose2D:
    w = icp_weight(fin.s_icp)
    a, o = fin.icp_pose, fin.odom_pose
    return Pose2D(
        w * a.x + (1.0 - w) * o.x,
        w * a.y + (1.0 - w) * o.y,
        geo.angle_lerp(o.theta, a.theta, w),
        a.level if a.level is not None else o.level,
    )


def predict_from_odometry(
    buffer: list[tuple[float, Pose2D]], t: float, max_extrapolation: float = 0.2
) -> Pose2D:
    """Interpolate the odometry buffer at time t; extrapolate with the last velocity up to a bound."""
    if not buffer:
        raise StaleOdometry("empty odometry buffer")
    times = np.array([s[0] for s in buffer])
    if t < times[0] or t > times[-1] + max_extrapolation:
        raise StaleOdometry(f"t={t:.3f} outside buffer [{times[0]:.3f}, {times[-1]:.3f}] + {max_extrapolation}")
    i = int(np.searchsorted(times, t, side="left"))
    if i < len(times) and times[i] == t:
        return buffer[i][1]
    if t > times[-1]:
        if len(buffer) < 2:
            raise StaleOdometry("cannot extrapolate from a single sample")
        (t0, p0), (t1, p1) = buffer[-2], buffer[-1]
        u = (t - t0) / (t1 - t0)
    else:
        (t0, p0), (t1, p1) = buffer[i - 1], buffer[i]
        u = (t - t0) / (t1 - t0)
    return Pose2D(
        p0.x + u * (p1.x - p0.x),
        p0.y + u * (p1.y - p0.y),
        geo.wrap_angle(p0.theta + u * geo.wrap_angle(p1.theta - p0.theta)),
        p1.level,
    )


# -- global relocalization -----------------------------------------------------------

@dataclass
class RelocConfig:
    grid: float = 1.0
    angle_step: float = math.radians(10.0)
    wall_clearance: float = 0.3
    beam_stride: int = 2
    top_k: int = 2
    nms_radius: float = 1.5
    nms_angle: float = math.radians(20.0)
    min_beams: int = 8
    balance_floor: float = 0.2
    epsilon: float = 1e-3
    side_tol: float = 1e-6


@dataclass
class Hypothesis:
    pose: Pose2D
    score: float
    coarse_score: float
    area: str
    refined: bool


def score_pose(P_sensor: np.ndarray, pose: Pose2D, segs: MapSegments, tcfg: TrackerConfig,
               rcfg: RelocConfig) -> float:
    """S_final = S_base * eta_edge for sensor-frame points placed at pose."""
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    P = np.stack([c * P_sensor[:, 0] - s * P_sensor[:, 1] + pose.x, s * P_sensor[:, 0] + c * P_sensor[:, 1] + pose.y], axis=1)
    dist, signed = _point_segment_table(P, segs)
    k = np.argmin(dist, axis=1)
    r = dist[np.arange(len(P)), k]
    sd = signed[np.arange(len(P)), k]
    rho = np.minimum(r, tcfg.tau_out)
    on = np.abs(sd) <= rcfg.side_tol
    inside = (sd > 0) & ~on
    outside = (sd < 0) & ~on
    N = len(P)
    s_in = float(rho[inside | on].sum()) / N
    s_out = float(rho[outside].sum()) / N
    s_base = 1.0 / (s_in + s_out + rcfg.epsilon)
    support_mask = r < tcfg.tau_out
    n_in = float(np.sum(inside & support_mask) + 0.5 * np.sum(on & support_mask))
    n_out = float(np.sum(outside & support_mask) + 0.5 * np.sum(on & support_mask))
    balance = 1.0 - abs(n_in - n_out) / (n_in + n_out) if n_in + n_out > 0 else 0.0
    balance = max(rcfg.balance_floor, balance)
    support = float(support_mask.mean())
    return s_base * balance * support


def global_relocalize(
    scan: ScanFrame,
    graph: AreaGraph,
    level: str | None = None,
    tcfg: TrackerConfig | None = None,
    rcfg: RelocConfig | None = None,
) -> list[Hypothesis]:
    tcfg = tcfg or TrackerConfig()
    rcfg = rcfg or RelocConfig()
    valid = np.flatnonzero(scan.valid)
    if len(valid) < rcfg.min_beams:
        raise NoHypothesis(f"only {len(valid)} usable beams")
    levels = [level] if level is not None else sorted({graph.areas[a].level for a in graph.leaf_areas()}, key=str)
    P_sensor = scan.points_sensor()[valid[:: rcfg.beam_stride]]
    angles = np.arange(0.0, 2.0 * math.pi - 1e-9, rcfg.angle_step)
    candidates: list[tuple[float, Pose2D, str]] = []
    seg_by_level = {}
    for lv in levels:
        segs = map_segments(graph, lv, tcfg.height, tcfg.height_tol)
        seg_by_level[lv] = segs
        if len(segs) == 0:
            continue
        for name in graph.leaf_areas(lv):
            poly = graph.area_polygons[name]
            x0, y0 = poly.min(axis=0)
            x1, y1 = poly.max(axis=0)
            xs = np.arange(x0 + 0.5 * rcfg.grid, x1, rcfg.grid)
            ys = np.arange(y0 + 0.5 * rcfg.grid, y1, rcfg.grid)
            for y in ys:
                for x in xs:
                    if not geo.point_in_polygon(x, y, poly):
                        continue
                    if geo.distance_to_boundary(np.array([x, y]), poly) < rcfg.wall_clearance:
                        continue
                    for th in angles:
                        pose = Pose2D(float(x), float(y), geo.wrap_angle(float(th)), lv)
                        candidates.append((score_pose(P_sensor, pose, segs, tcfg, rcfg), pose, name))
    if not candidates:
        raise NoHypothesis("no candidate poses inside any leaf area")
    candidates.sort(key=lambda c: (-c[0], c[2], c[1].x, c[1].y, c[1].theta))
    modes: list[tuple[float, Pose2D, str]] = []
    for sc, pose, name in candidates:
        if all(
            math.hypot(pose.x - m.x, pose.y - m.y) > rcfg.nms_radius
            or abs(geo.wrap_angle(pose.theta - m.theta)) > rcfg.nms_angle
            for _, m, _ in modes
        ):
            modes.append((sc, pose, name))
            if len(modes) == rcfg.top_k:
                break
    P_full = scan.points_sensor()[valid]
    refine_cfg = replace(tcfg, jump_translation=math.inf, jump_rotation=math.inf, max_iterations=30)
    out = []
    for sc, pose, name in modes:
        segs = seg_by_level[pose.level]
        refined = False
        try:
            pose2 = icp_track(scan, graph, pose, refine_cfg, segments=segs).pose
            refined = True
        except (TooFewCorrespondences, Diverged):
            pose2 = pose
        out.append(Hypothesis(pose2, score_pose(P_full, pose2, segs, tcfg, rcfg), sc, name, refined))
    out.sort(key=lambda h: -h.score)
    return out


# -- evaluation ------------------------------------------------------------------

def ate(estimates: np.ndarray, truth: np.ndarray) -> dict:
    """Absolute trajectory error over matched positions."""
    e = np.hypot(*(np.asarray(estimates)[:, :2] - np.asarray(truth)[:, :2]).T)
    return {"rmse": float(np.sqrt(np.mean(e**2))), "mean": float(e.mean()), "max": float(e.max()), "n": int(len(e))}
