"""Clips, procedural scenarios, planar geometry and non-reactive log replay.

World units are metres, seconds and radians.  Every clip is laid out so
the ego sits at the origin heading along +x at frame 0.  A clip spans
frames ``-history_len .. future_len`` at ``dt`` seconds; trajectories are
``(future_len, 3)`` arrays of ``(x, y, psi)`` poses for frames ``1..future_len``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import ConfigError, InfeasibleSpecError, InputError

DT = 0.5
HISTORY_LEN = 4
FUTURE_LEN = 8
SUBSTEPS = 10

EGO_LENGTH = 4.5
EGO_WIDTH = 1.9
VEHICLE_LENGTH = 4.5
VEHICLE_WIDTH = 1.9

LANE_SPACING = 2.0
LANE_BACK = 40.0
LANE_FWD = 160.0

CLIP_SCHEMA_VERSION = 1
KINDS = ("lead_brake", "cut_in", "static_obstacle", "curve_follow", "give_way")

# Valid knob ranges (validation) and the narrower ranges the sampler draws from.
COMMON_KNOBS = {
    "speed_limit": ((1.0, 30.0), (8.0, 16.0)),
    "ego_speed_ratio": ((0.0, 1.5), (0.6, 1.05)),
    "style": ((0.5, 1.2), (0.8, 1.0)),
    "headway": ((0.5, 3.0), (1.0, 2.0)),
    "lateral_offset": ((-1.0, 1.0), (-0.3, 0.3)),
    "half_width": ((1.5, 4.0), (2.4, 3.0)),
}
KIND_KNOBS = {
    "lead_brake": {
        "gap": ((2.0, 150.0), (8.0, 40.0)),
        "lead_speed_ratio": ((0.0, 1.5), (0.6, 1.1)),
        "decel": ((0.0, 9.0), (1.0, 7.0)),
        "brake_time": ((-2.0, 4.0), (-1.5, 3.0)),
    },
    "cut_in": {
        "gap": ((2.0, 80.0), (4.0, 25.0)),
        "agent_speed_ratio": ((0.0, 1.5), (0.4, 1.0)),
        "cut_time": ((-2.0, 4.0), (-0.5, 2.5)),
        "cut_duration": ((0.5, 5.0), (1.5, 3.0)),
        "oncoming": ((0.0, 1.0), (0.0, 1.0)),
    },
    "static_obstacle": {
        "distance": ((3.0, 2000.0), (10.0, 80.0)),
        "obstacle_lateral": ((-1.5, 1.5), (-0.5, 0.5)),
    },
    "curve_follow": {
        "curvature": ((-0.05, 0.05), (-0.01, 0.01)),
        "curve_start": ((-30.0, 40.0), (-10.0, 20.0)),
    },
    "give_way": {
        "distance": ((5.0, 100.0), (15.0, 50.0)),
        "crossing_speed": ((0.3, 8.0), (1.0, 4.0)),
        "crossing_time": ((-2.0, 6.0), (0.5, 3.5)),
        "oncoming": ((0.0, 1.0), (0.0, 1.0)),
    },
}
MAX_LATERAL_ACCEL = 2.5
CURVE_MIN = 0.002
MAX_RETRIES = 20


def wrap_angle(a):
    return (np.asarray(a) + np.pi) % (2.0 * np.pi) - np.pi


# --- lane geometry -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Lane:
    """Centerline polyline plus drivable corridor.

    The corridor spans lateral offsets ``[-half_width, half_width + adjacent_width]``
    (left positive), the optional left part being an adjacent opposite lane.
    """

    centerline: np.ndarray
    half_width: float
    adjacent_width: float = 0.0

    def __post_init__(self):
        pts = np.asarray(self.centerline, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise InputError("lane centerline needs at least 2 (x, y) points")
        if not np.all(np.isfinite(pts)):
            raise InputError("lane centerline must be finite")
        if np.any(np.hypot(*np.diff(pts, axis=0).T) <= 0):
            raise InputError("lane centerline arclength must be strictly increasing")
        if self.half_width <= 0 or self.adjacent_width < 0:
            raise InputError("lane widths must be positive")
        object.__setattr__(self, "centerline", pts)

    @cached_property
    def seg_vec(self) -> np.ndarray:
        return np.diff(self.centerline, axis=0)

    @cached_property
    def seg_len(self) -> np.ndarray:
        return np.hypot(self.seg_vec[:, 0], self.seg_vec[:, 1])

    @cached_property
    def cum(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.seg_len)])

    @property
    def length(self) -> float:
        return float(self.cum[-1])

    def frame_at(self, s):
        """Point, unit tangent and left normal at arclength(s); extrapolates past the ends."""
        s = np.asarray(s, dtype=float)
        i = np.clip(np.searchsorted(self.cum, s, side="right") - 1, 0, len(self.seg_len) - 1)
        tangent = self.seg_vec[i] / self.seg_len[i][..., None]
        point = self.centerline[i] + tangent * (s - self.cum[i])[..., None]
        normal = np.stack([-tangent[..., 1], tangent[..., 0]], axis=-1)
        return point, tangent, normal

    def to_world(self, s, l):
        point, _, normal = self.frame_at(s)
        return point + normal * np.asarray(l, dtype=float)[..., None]

    def heading_at(self, s):
        _, tangent, _ = self.frame_at(s)
        return np.arctan2(tangent[..., 1], tangent[..., 0])

    def curvature_at(self, s: float) -> float:
        """Signed curvature from the circle through the nearest vertex and its neighbours."""
        i = int(np.clip(np.argmin(np.abs(self.cum - s)), 1, len(self.centerline) - 2))
        a, b, c = self.centerline[i - 1], self.centerline[i], self.centerline[i + 1]
        cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
        denom = np.linalg.norm(b - a) * np.linalg.norm(c - b) * np.linalg.norm(c - a)
        return float(2.0 * cross / denom)

    def to_dict(self) -> dict:
        return {
            "centerline": self.centerline.tolist(),
            "half_width": float(self.half_width),
            "adjacent_width": float(self.adjacent_width),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Lane":
        return cls(np.array(d["centerline"], dtype=float), float(d["half_width"]), float(d.get("adjacent_width", 0.0)))


def project_points(lane: Lane, points) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised nearest-segment projection: arclength and signed lateral offset (left +).

    The segment is chosen with expanded (matrix-product) distances, then the
    foot point is recomputed directly on that segment.
    """
    P = np.asarray(points, dtype=float)
    shape = P.shape[:-1]
    P = P.reshape(-1, 2)
    a = lane.centerline[:-1]
    v = lane.seg_vec
    len2 = lane.seg_len ** 2
    dot = P @ v.T - (a * v).sum(1)[None]
    rel2 = (P * P).sum(1)[:, None] - 2.0 * P @ a.T + (a * a).sum(1)[None]
    t = np.clip(dot / len2[None], 0.0, 1.0)
    d2 = rel2 - 2.0 * t * dot + t * t * len2[None]
    i = np.argmin(d2, axis=1)
    ai, vi = a[i], v[i]
    rel = P - ai
    ti = np.clip((rel * vi).sum(1) / len2[i], 0.0, 1.0)
    off = rel - ti[:, None] * vi
    dist = np.hypot(off[:, 0], off[:, 1])
    s = lane.cum[i] + ti * lane.seg_len[i]
    cross = vi[:, 0] * rel[:, 1] - vi[:, 1] * rel[:, 0]
    l = np.where(cross >= 0, dist, -dist)
    l = np.where(dist == 0.0, 0.0, l)
    return s.reshape(shape), l.reshape(shape)


def project_to_centerline(lane: Lane, point) -> tuple[float, float]:
    p = np.asarray(point, dtype=float)
    if p.shape != (2,) or not np.all(np.isfinite(p)):
        raise InputError("point must be a finite (x, y) pair")
    s, l = project_points(lane, p[None])
    return float(s[0]), float(l[0])


def make_lane(curvature: float = 0.0, curve_start: float = 0.0, half_width: float = 1.75,
              adjacent_width: float = 0.0) -> tuple[Lane, float]:
    """Polyline through the origin (heading +x there), straight before
    ``curve_start`` and a constant-curvature arc after it.  Vertices lie
    exactly on the arc.  Returns the lane and the arclength of the origin.
    """
    h = LANE_SPACING
    start = round(curve_start / h) * h

    def walk(direction: int, n: int):
        x = y = theta = 0.0
        out = []
        for k in range(n):
            s0 = direction * k * h
            s_mid = s0 + direction * h / 2
            kappa = curvature if s_mid >= start else 0.0
            step = direction * h
            if abs(kappa) < 1e-12:
                x += step * np.cos(theta)
                y += step * np.sin(theta)
            else:
                th2 = theta + kappa * step
                x += (np.sin(th2) - np.sin(theta)) / kappa
                y += (np.cos(theta) - np.cos(th2)) / kappa
                theta = th2
            out.append((x, y))
        return out

    fwd = walk(+1, int(LANE_FWD / h))
    back = walk(-1, int(LANE_BACK / h))
    pts = np.array(back[::-1] + [(0.0, 0.0)] + fwd)
    return Lane(pts, half_width, adjacent_width), LANE_BACK


# --- oriented rectangles -----------------------------------------------------

def obb_overlap_arrays(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Separating-axis test for broadcastable arrays of ``(x, y, psi, length, width)``.

    Touching rectangles count as overlapping.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ca, cb = a[..., :2], b[..., :2]
    ua = np.stack([np.cos(a[..., 2]), np.sin(a[..., 2])], -1)
    va = np.stack([-ua[..., 1], ua[..., 0]], -1)
    ub = np.stack([np.cos(b[..., 2]), np.sin(b[..., 2])], -1)
    vb = np.stack([-ub[..., 1], ub[..., 0]], -1)
    d = cb - ca
    hla, hwa = a[..., 3] / 2, a[..., 4] / 2
    hlb, hwb = b[..., 3] / 2, b[..., 4] / 2
    overlap = None
    for n in (ua, va, ub, vb):
        dist = np.abs((d * n).sum(-1))
        ra = hla * np.abs((ua * n).sum(-1)) + hwa * np.abs((va * n).sum(-1))
        rb = hlb * np.abs((ub * n).sum(-1)) + hwb * np.abs((vb * n).sum(-1))
        sep_ok = dist <= ra + rb
        overlap = sep_ok if overlap is None else overlap & sep_ok
    return overlap


def obb_overlap(rect_a, rect_b) -> bool:
    return bool(obb_overlap_arrays(np.asarray(rect_a, float), np.asarray(rect_b, float)))


def rect_corners(rects: np.ndarray) -> np.ndarray:
    """Corners ``(..., 4, 2)`` of ``(x, y, psi, length, width)`` rectangles."""
    r = np.asarray(rects, dtype=float)
    c, s = np.cos(r[..., 2]), np.sin(r[..., 2])
    hl, hw = r[..., 3] / 2, r[..., 4] / 2
    signs = np.array([[1, 1], [1, -1], [-1, -1], [-1, 1]], dtype=float)
    dx = signs[:, 0] * hl[..., None]
    dy = signs[:, 1] * hw[..., None]
    x = r[..., 0, None] + dx * c[..., None] - dy * s[..., None]
    y = r[..., 1, None] + dx * s[..., None] + dy * c[..., None]
    return np.stack([x, y], -1)


# --- clip data model ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AgentTrack:
    """Logged agent: extent plus per-frame ``(x, y, psi, vx, vy)``."""

    id: str
    length: float
    width: float
    states: np.ndarray

    def rects(self) -> np.ndarray:
        n = len(self.states)
        return np.column_stack([self.states[:, :3], np.full(n, self.length), np.full(n, self.width)])


@dataclass(frozen=True, eq=False)
class Clip:
    id: str
    dt: float
    history_len: int
    future_len: int
    ego_track: np.ndarray            # (H+F+1, 4): x, y, psi, v
    agents: tuple[AgentTrack, ...]
    lane: Lane
    speed_limit: float
    expert_future: np.ndarray        # (F, 3)
    scenario_tag: str
    ego_length: float = EGO_LENGTH
    ego_width: float = EGO_WIDTH
    spec: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dt <= 0:
            raise InputError("dt must be positive")
        n = self.history_len + self.future_len + 1
        if self.ego_track.shape != (n, 4):
            raise InputError(f"ego_track must cover frames -{self.history_len}..{self.future_len}")
        if self.expert_future.shape != (self.future_len, 3):
            raise InputError("expert_future must have future_len poses")
        if self.ego_length <= 0 or self.ego_width <= 0:
            raise InputError("ego extent must be positive")
        for a in self.agents:
            if a.length <= 0 or a.width <= 0 or a.states.shape != (n, 5):
                raise InputError(f"agent {a.id}: bad extent or track length")

    @property
    def ego_pose0(self) -> np.ndarray:
        return self.ego_track[self.history_len, :3]

    @property
    def ego_speed0(self) -> float:
        return float(self.ego_track[self.history_len, 3])

    def agent_rects(self) -> np.ndarray:
        """``(A, frames, 5)`` rectangles over all logged frames."""
        if not self.agents:
            return np.zeros((0, len(self.ego_track), 5))
        return np.stack([a.rects() for a in self.agents])

    def agent_velocities(self) -> np.ndarray:
        if not self.agents:
            return np.zeros((0, len(self.ego_track), 2))
        return np.stack([a.states[:, 3:5] for a in self.agents])

    def to_dict(self) -> dict:
        return {
            "schema_version": CLIP_SCHEMA_VERSION,
            "id": self.id,
            "dt": self.dt,
            "history_len": self.history_len,
            "future_len": self.future_len,
            "ego_track": self.ego_track.tolist(),
            "ego_extent": [self.ego_length, self.ego_width],
            "agent_tracks": [
                {"id": a.id, "extent": [a.length, a.width], "states": a.states.tolist()} for a in self.agents
            ],
            "lane": self.lane.to_dict(),
            "speed_limit": self.speed_limit,
            "expert_future": self.expert_future.tolist(),
            "scenario_tag": self.scenario_tag,
            "spec": self.spec,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Clip":
        if d.get("schema_version") != CLIP_SCHEMA_VERSION:
            raise InputError(f"unsupported clip schema_version {d.get('schema_version')!r}")
        agents = tuple(
            AgentTrack(a["id"], float(a["extent"][0]), float(a["extent"][1]), np.array(a["states"], dtype=float))
            for a in d["agent_tracks"]
        )
        return cls(
            id=d["id"], dt=float(d["dt"]), history_len=int(d["history_len"]), future_len=int(d["future_len"]),
            ego_track=np.array(d["ego_track"], dtype=float), agents=agents, lane=Lane.from_dict(d["lane"]),
            speed_limit=float(d["speed_limit"]), expert_future=np.array(d["expert_future"], dtype=float),
            scenario_tag=d["scenario_tag"], ego_length=float(d["ego_extent"][0]),
            ego_width=float(d["ego_extent"][1]), spec=dict(d.get("spec", {})),
        )


CLIPS_HEADER = (
    "# r2se clips schema_version=1; units: positions m, headings rad, speeds m/s, dt s; "
    "ego_track rows are frames -history_len..future_len as [x, y, psi, v]; "
    "agent states rows [x, y, psi, vx, vy]; extents [length, width] m"
)


def save_clips(path, clips: Sequence[Clip]) -> None:
    from .io import write_jsonl

    write_jsonl(path, (c.to_dict() for c in clips), header=CLIPS_HEADER)


def load_clips(path) -> list[Clip]:
    from .io import read_jsonl

    return [Clip.from_dict(d) for d in read_jsonl(path)]


# --- frames ----------------------------------------------------------------

def to_ego_frame(pose0, poses: np.ndarray) -> np.ndarray:
    x0, y0, p0 = pose0
    c, s = np.cos(p0), np.sin(p0)
    dx, dy = poses[..., 0] - x0, poses[..., 1] - y0
    return np.stack([c * dx + s * dy, -s * dx + c * dy, wrap_angle(poses[..., 2] - p0)], -1)


def to_world_frame(pose0, poses: np.ndarray) -> np.ndarray:
    x0, y0, p0 = pose0
    c, s = np.cos(p0), np.sin(p0)
    x, y = poses[..., 0], poses[..., 1]
    return np.stack([x0 + c * x - s * y, y0 + s * x + c * y, wrap_angle(poses[..., 2] + p0)], -1)


# --- IDM car following -------------------------------------------------------

@dataclass(frozen=True)
class IdmParams:
    desired_speed: float
    headway: float = 1.5
    max_accel: float = 2.0
    comfort_decel: float = 3.0
    min_gap: float = 2.0
    max_decel: float = 8.0
    anticipation: float = 1.0
    lateral_margin: float = 0.3


@dataclass(frozen=True, eq=False)
class LaneAgents:
    """Agent states in lane coordinates sampled on a time grid.

    ``long_ext``/``lat_ext`` are the along-lane and lateral footprint extents.
    """

    times: np.ndarray
    s: np.ndarray        # (A, T)
    l: np.ndarray
    vs: np.ndarray
    long_ext: np.ndarray  # (A, T)
    lat_ext: np.ndarray

    def at(self, t: float):
        if self.s.shape[0] == 0:
            return (np.zeros(0),) * 5
        tt = min(max(t, self.times[0]), self.times[-1])
        j = min(max(int(np.searchsorted(self.times, tt, side="right")) - 1, 0), len(self.times) - 2)
        w = (tt - self.times[j]) / (self.times[j + 1] - self.times[j])
        st = self.stacked
        return tuple(st[:, :, j] * (1 - w) + st[:, :, j + 1] * w)

    @cached_property
    def stacked(self) -> np.ndarray:
        return np.stack([self.s, self.l, self.vs, self.long_ext, self.lat_ext])


def idm_rollout(s0: float, v0: float, l_ego, agents: LaneAgents, params: IdmParams,
                ego_length: float, ego_width: float, t_end: float, h: float):
    """Integrate IDM along the lane from t=0; returns times, s, v.

    An agent leads when its footprint overlaps the ego corridor laterally now
    or within ``params.anticipation`` seconds and it is ahead of the ego.
    ``l_ego`` maps time to the ego lateral offset.
    """
    n = int(round(t_end / h))
    ts = np.arange(n + 1) * h
    s = np.empty(n + 1)
    v = np.empty(n + 1)
    s[0], v[0] = s0, v0
    probe = [0.0, params.anticipation / 2, params.anticipation] if params.anticipation > 0 else [0.0]
    for k in range(n):
        t = ts[k]
        gap, v_lead = np.inf, 0.0
        if agents.s.shape[0]:
            now = agents.at(t)
            in_path = np.zeros(agents.s.shape[0], dtype=bool)
            for dtp in probe:
                _, la, _, _, lat = agents.at(t + dtp)
                in_path |= np.abs(la - l_ego(t + dtp)) < (lat + ego_width) / 2 + params.lateral_margin
            sa, _, va, lon, _ = now
            g = sa - s[k] - (lon + ego_length) / 2
            ahead = in_path & (sa > s[k])
            if ahead.any():
                idx = np.where(ahead)[0]
                j = idx[np.argmin(g[idx])]
                gap, v_lead = max(g[j], 0.01), max(va[j], 0.0)
        free = 1.0 - (v[k] / max(params.desired_speed, 0.1)) ** 4
        if np.isfinite(gap):
            s_star = params.min_gap + max(
                0.0, v[k] * params.headway + v[k] * (v[k] - v_lead) / (2 * np.sqrt(params.max_accel * params.comfort_decel))
            )
            acc = params.max_accel * (free - (s_star / gap) ** 2)
        else:
            acc = params.max_accel * free
        acc = max(acc, -params.max_decel)
        v_new = max(v[k] + acc * h, 0.0)
        s[k + 1] = s[k] + 0.5 * (v[k] + v_new) * h
        v[k + 1] = v_new
    return ts, s, v


def lane_agents_from_clip(clip: Clip) -> LaneAgents:
    """Project logged agent tracks onto the lane (frame-rate grid)."""
    times = (np.arange(len(clip.ego_track)) - clip.history_len) * clip.dt
    if not clip.agents:
        z = np.zeros((0, len(times)))
        return LaneAgents(times, z, z, z, z, z)
    S, L, VS, LON, LAT = [], [], [], [], []
    for a in clip.agents:
        s, l = project_points(clip.lane, a.states[:, :2])
        hd = clip.lane.heading_at(s)
        rel = a.states[:, 2] - hd
        tan = np.stack([np.cos(hd), np.sin(hd)], -1)
        S.append(s)
        L.append(l)
        VS.append((a.states[:, 3:5] * tan).sum(-1))
        LON.append(np.abs(np.cos(rel)) * a.length + np.abs(np.sin(rel)) * a.width)
        LAT.append(np.abs(np.sin(rel)) * a.length + np.abs(np.cos(rel)) * a.width)
    return LaneAgents(times, *map(np.array, (S, L, VS, LON, LAT)))


# --- scenario generation ------------------------------------------------------

@dataclass(frozen=True)
class ScenarioSpec:
    kind: str
    knobs: dict = field(default_factory=dict)
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in KIND_KNOBS:
            raise ConfigError(f"unknown scenario kind {self.kind!r}")
        allowed = {**COMMON_KNOBS, **KIND_KNOBS[self.kind]}
        for key, value in self.knobs.items():
            if key not in allowed:
                raise ConfigError(f"unknown knob {key!r} for kind {self.kind}")
            lo, hi = allowed[key][0]
            if not (lo <= value <= hi) or not np.isfinite(value):
                raise ConfigError(f"knob {key}={value} outside [{lo}, {hi}] for kind {self.kind}")


def _fill_knobs(spec: ScenarioSpec, rng: np.random.Generator) -> dict:
    knobs = {}
    allowed = {**COMMON_KNOBS, **KIND_KNOBS[spec.kind]}
    for key in sorted(allowed):
        lo, hi = allowed[key][1]
        drawn = float(rng.uniform(lo, hi))
        knobs[key] = float(spec.knobs[key]) if key in spec.knobs else drawn
    if spec.kind == "curve_follow" and "curvature" not in spec.knobs:
        # keep clear of near-straight curves: magnitude mapped into [CURVE_MIN, hi]
        hi = KIND_KNOBS["curve_follow"]["curvature"][1][1]
        k = knobs["curvature"]
        knobs["curvature"] = float(np.sign(k) * (CURVE_MIN + abs(k) * (hi - CURVE_MIN) / hi))
    return knobs


def _vehicle_states(lane: Lane, ts: np.ndarray, s: np.ndarray, l: np.ndarray, heading_offset=None) -> np.ndarray:
    """World ``(x, y, psi, vx, vy)`` on a fine time grid from lane coordinates."""
    xy = lane.to_world(s, l)
    vel = np.gradient(xy, ts, axis=0)
    if heading_offset is None:
        hd = lane.heading_at(s)
        ds = np.gradient(s, ts)
        dl = np.gradient(l, ts)
        psi = hd + np.arctan2(dl, np.maximum(np.abs(ds), 1.0)) * np.where(ds < 0, -1.0, 1.0)
        psi = np.where(ds < 0, psi + np.pi, psi)
    else:
        psi = lane.heading_at(s) + heading_offset
    return np.column_stack([xy, wrap_angle(psi), vel])


def _integrate_speed(ts: np.ndarray, v: np.ndarray, s_at_zero: float) -> np.ndarray:
    i0 = int(np.argmin(np.abs(ts)))
    s = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(ts))])
    return s - s[i0] + s_at_zero


def _build_scene(kind: str, knobs: dict, ts: np.ndarray, rng: np.random.Generator):
    hw = knobs["half_width"]
    v_ego = knobs["ego_speed_ratio"] * knobs["speed_limit"]
    adjacent = 2 * hw if kind in ("cut_in", "give_way") else 0.0
    curvature = knobs.get("curvature", 0.0)
    lane, s_origin = make_lane(curvature, knobs.get("curve_start", 0.0), hw, adjacent)
    speed_limit = knobs["speed_limit"]
    if abs(curvature) > 0:
        speed_limit = min(speed_limit, float(np.sqrt(MAX_LATERAL_ACCEL / abs(curvature))))
        v_ego = min(v_ego, speed_limit * 1.05)
    agents = []  # (id, length, width, s(t), l(t), heading_offset or None)
    front = (EGO_LENGTH + VEHICLE_LENGTH) / 2

    if kind == "lead_brake":
        v_lead0 = knobs["lead_speed_ratio"] * v_ego
        v = np.maximum(v_lead0 - knobs["decel"] * np.maximum(ts - knobs["brake_time"], 0.0), 0.0)
        s = _integrate_speed(ts, v, s_origin + knobs["gap"] + front)
        agents.append(("lead", VEHICLE_LENGTH, VEHICLE_WIDTH, s, np.zeros_like(ts), None))
    elif kind == "cut_in":
        v = np.full_like(ts, knobs["agent_speed_ratio"] * v_ego)
        s = _integrate_speed(ts, v, s_origin + knobs["gap"] + front)
        u = np.clip((ts - knobs["cut_time"]) / knobs["cut_duration"], 0.0, 1.0)
        l = 2 * hw * 0.5 * (1 + np.cos(np.pi * u))
        agents.append(("cutter", VEHICLE_LENGTH, VEHICLE_WIDTH, s, l, None))
    elif kind == "static_obstacle":
        s = np.full_like(ts, s_origin + knobs["distance"] + front)
        agents.append(("obstacle", VEHICLE_LENGTH, VEHICLE_WIDTH, s, np.full_like(ts, knobs["obstacle_lateral"]), 0.0))
    elif kind == "give_way":
        s = np.full_like(ts, s_origin + knobs["distance"] + EGO_LENGTH / 2)
        l = knobs["crossing_speed"] * (ts - knobs["crossing_time"])
        agents.append(("crosser", 0.8, 0.8, s, l, np.pi / 2))
    if kind in ("cut_in", "give_way") and knobs.get("oncoming", 0.0) > 0.5:
        v_on = float(rng.uniform(7.0, 12.0))
        s = _integrate_speed(ts, np.full_like(ts, -v_on), s_origin + float(rng.uniform(30.0, 110.0)))
        agents.append(("oncoming", VEHICLE_LENGTH, VEHICLE_WIDTH, s, np.full_like(ts, 2 * hw), None))
    return lane, s_origin, speed_limit, v_ego, agents


def generate_scenario(spec: ScenarioSpec) -> Clip:
    """Deterministic clip for a spec; knobs missing from the spec are drawn
    from the sampling ranges.  The expert is an IDM driver with privileged
    knowledge of the logged agents; if it cannot drive the scene without a
    collision or leaving the corridor the sampled knobs are redrawn (at most
    ``MAX_RETRIES`` times).  Fully specified infeasible scenes raise.
    """
    spec.validate()
    rng = np.random.default_rng([spec.seed, KINDS.index(spec.kind)])
    h = DT / SUBSTEPS
    n_fine = (HISTORY_LEN + FUTURE_LEN) * SUBSTEPS
    ts = np.arange(n_fine + 1) * h - HISTORY_LEN * DT
    i0 = HISTORY_LEN * SUBSTEPS
    frame_idx = np.arange(0, n_fine + 1, SUBSTEPS)
    all_fixed = set({**COMMON_KNOBS, **KIND_KNOBS[spec.kind]}) <= set(spec.knobs)

    for attempt in range(MAX_RETRIES):
        knobs = _fill_knobs(spec, rng)
        lane, s_origin, speed_limit, v_ego, raw_agents = _build_scene(spec.kind, knobs, ts, rng)

        tracks, la_s, la_l, la_v, la_lon, la_lat = [], [], [], [], [], []
        for name, length, width, s, l, hoff in raw_agents:
            states = _vehicle_states(lane, ts, s, l, hoff)
            tracks.append(AgentTrack(name, length, width, states[frame_idx]))
            rel = states[:, 2] - lane.heading_at(s)
            la_s.append(s)
            la_l.append(l)
            la_v.append(np.gradient(s, ts))
            la_lon.append(np.abs(np.cos(rel)) * length + np.abs(np.sin(rel)) * width)
            la_lat.append(np.abs(np.sin(rel)) * length + np.abs(np.cos(rel)) * width)
        z = np.zeros((0, len(ts)))
        lane_agents = LaneAgents(ts, *(np.array(x) if x else z for x in (la_s, la_l, la_v, la_lon, la_lat)))

        l0 = knobs["lateral_offset"]
        tau = 1.5

        def l_ego(t, l0=l0):
            return l0 * np.exp(-max(t, 0.0) / tau)

        params = IdmParams(desired_speed=knobs["style"] * speed_limit, headway=knobs["headway"])
        _, s_fut, v_fut = idm_rollout(s_origin, v_ego, l_ego, lane_agents, params, EGO_LENGTH, EGO_WIDTH,
                                      FUTURE_LEN * DT, h)
        s_all = np.concatenate([s_origin + v_ego * ts[:i0], s_fut])
        v_all = np.concatenate([np.full(i0, v_ego), v_fut])
        l_all = np.array([l_ego(t) for t in ts])
        dl = np.where(ts >= 0, -l_all / tau, 0.0)
        psi = lane.heading_at(s_all) + np.arctan2(dl, np.maximum(v_all, 1.0))
        xy = lane.to_world(s_all, l_all)
        ego = np.column_stack([xy, wrap_angle(psi), v_all])[frame_idx]
        ego[HISTORY_LEN, :3] = [0.0, l0, ego[HISTORY_LEN, 2]]

        clip = Clip(
            id=f"{spec.kind}-{spec.seed:06d}", dt=DT, history_len=HISTORY_LEN, future_len=FUTURE_LEN,
            ego_track=ego, agents=tuple(tracks), lane=lane, speed_limit=float(speed_limit),
            expert_future=ego[HISTORY_LEN + 1:, :3].copy(), scenario_tag=spec.kind,
            spec={"kind": spec.kind, "seed": spec.seed, "knobs": knobs, "attempt": attempt},
        )
        log = simulate(clip, clip.expert_future)
        if not log.collision and not log.off_drivable and s_all[-1] < lane.length - 5.0:
            return clip
        if all_fixed:
            break
    raise InfeasibleSpecError(f"no feasible expert for {spec.kind} seed {spec.seed} after {attempt + 1} attempts")


# --- non-reactive simulation ----------------------------------------------------

TTC_HORIZON = 1.0
TTC_STEP = 0.1


@dataclass(frozen=True, eq=False)
class SimLog:
    """Evidence record of one open-loop execution; frame arrays start at frame 0
    unless noted."""

    poses: np.ndarray            # (F+1, 3)
    speed: np.ndarray            # (F+1,)
    accel: np.ndarray            # (F,)   frames 1..F
    jerk: np.ndarray             # (F-1,) frames 2..F
    yaw_rate: np.ndarray         # (F,)   frames 1..F
    min_clearance: np.ndarray    # (F,)   frames 1..F
    ttc: np.ndarray              # (F,)   smallest projected time to overlap, inf if none within horizon
    collision: bool
    collision_frame: int | None
    off_drivable: bool
    off_drivable_frame: int | None
    progress: float
    agent_states: np.ndarray     # (A, F+1, 5) replayed tracks, frames 0..F


def _substeps(rects: np.ndarray, n: int = SUBSTEPS) -> np.ndarray:
    """Linear interpolation of ``(..., F+1, 5)`` rectangles at ``n`` substeps
    inside each frame interval; returns ``(..., F, n, 5)`` ending on each frame."""
    w = (np.arange(1, n + 1) / n)[:, None]
    a, b = rects[..., :-1, None, :], rects[..., 1:, None, :]
    out = a + (b - a) * w
    dpsi = wrap_angle(b[..., 2] - a[..., 2])
    out[..., 2] = a[..., 2] + dpsi * w[:, 0]
    return out


def _first_frame(mask: np.ndarray) -> np.ndarray:
    """Index (1-based frame) of first True along the last axis, 0 when none."""
    any_ = mask.any(-1)
    return np.where(any_, mask.argmax(-1) + 1, 0)


def simulate_batch(clip: Clip, candidates) -> list[SimLog]:
    """Replay the logged agents unchanged and execute each world-frame
    candidate open-loop from the logged frame-0 ego state."""
    C = np.asarray(candidates, dtype=float)
    if C.ndim == 2:
        C = C[None]
    F = clip.future_len
    if C.shape[1:] != (F, 3):
        raise InputError(f"candidate must have {F} poses of (x, y, psi)")
    if not np.all(np.isfinite(C)):
        raise InputError("candidate contains non-finite values")
    N = len(C)
    H, dt = clip.history_len, clip.dt
    pose0 = clip.ego_track[H, :3]
    poses = np.concatenate([np.broadcast_to(pose0, (N, 1, 3)), C], axis=1)

    step = np.diff(poses[..., :2], axis=1)
    heading = np.stack([np.cos(poses[:, 1:, 2]), np.sin(poses[:, 1:, 2])], -1)
    sign = np.where((step * heading).sum(-1) < 0, -1.0, 1.0)
    v = np.concatenate([np.full((N, 1), clip.ego_speed0), sign * np.hypot(step[..., 0], step[..., 1]) / dt], 1)
    accel = np.diff(v, axis=1) / dt
    jerk = np.diff(accel, axis=1) / dt
    yaw_rate = wrap_angle(np.diff(poses[..., 2], axis=1)) / dt
    ego_vel = step / dt

    ego_rects = np.concatenate(
        [poses[:, 1:], np.full((N, F, 1), clip.ego_length), np.full((N, F, 1), clip.ego_width)], -1)
    agent_rects = clip.agent_rects()[:, H:]            # frames 0..F
    agent_vel = clip.agent_velocities()[:, H:]
    A = len(agent_rects)

    if A:
        ar = agent_rects[:, 1:]                        # (A, F, 5)
        ego_full = np.concatenate(
            [poses, np.full((N, F + 1, 1), clip.ego_length), np.full((N, F + 1, 1), clip.ego_width)], -1)
        hit = obb_overlap_arrays(_substeps(ego_full)[:, None], _substeps(agent_rects)[None])  # (N, A, F, S)
        collide_f = hit.any((1, 3))
        d = np.hypot(ego_rects[:, None, :, 0] - ar[None, :, :, 0], ego_rects[:, None, :, 1] - ar[None, :, :, 1])
        clearance = (d - (clip.ego_length + ar[None, :, :, 3]) / 2).min(1)
        taus = np.arange(0.0, TTC_HORIZON + 1e-9, TTC_STEP)
        ttc = np.full((N, F), np.inf)
        av = agent_vel[:, 1:]
        for tau in taus[::-1]:
            e = ego_rects.copy()
            e[..., :2] += ego_vel * tau
            a = ar.copy()
            a[..., :2] += av * tau
            o = obb_overlap_arrays(e[:, None], a[None]).any(1)
            ttc = np.where(o, tau, ttc)
    else:
        collide_f = np.zeros((N, F), dtype=bool)
        clearance = np.full((N, F), np.inf)
        ttc = np.full((N, F), np.inf)

    corners = rect_corners(ego_rects)                  # (N, F, 4, 2)
    _, lat = project_points(clip.lane, corners)
    off_f = ((lat < -clip.lane.half_width) | (lat > clip.lane.half_width + clip.lane.adjacent_width)).any(-1)

    s_all, _ = project_points(clip.lane, poses[..., :2])
    progress = s_all[:, -1] - s_all[:, 0]

    col_frame = _first_frame(collide_f)
    off_frame = _first_frame(off_f)
    replay = clip.agent_rects()[:, H:, :3]
    agent_states = np.concatenate([replay, agent_vel], -1) if A else np.zeros((0, F + 1, 5))
    logs = []
    for i in range(N):
        logs.append(SimLog(
            poses=poses[i], speed=v[i], accel=accel[i], jerk=jerk[i], yaw_rate=yaw_rate[i],
            min_clearance=clearance[i], ttc=ttc[i],
            collision=bool(col_frame[i]), collision_frame=int(col_frame[i]) or None,
            off_drivable=bool(off_frame[i]), off_drivable_frame=int(off_frame[i]) or None,
            progress=float(progress[i]), agent_states=agent_states,
        ))
    return logs


def simulate(clip: Clip, candidate) -> SimLog:
    cand = np.asarray(candidate, dtype=float)
    if cand.ndim != 2:
        raise InputError("simulate takes a single (future_len, 3) trajectory")
    return simulate_batch(clip, cand[None])[0]


def sample_specs(n: int, seed: int, kinds: Sequence[str] = KINDS) -> list[ScenarioSpec]:
    """``n`` specs cycling through ``kinds`` with seeds derived from ``seed``."""
    for k in kinds:
        if k not in KIND_KNOBS:
            raise ConfigError(f"unknown scenario kind {k!r}")
    seeds = np.random.default_rng(seed).integers(0, 10**6, size=n)
    return [ScenarioSpec(kinds[i % len(kinds)], {}, int(seeds[i])) for i in range(n)]


def generate_corpus(n: int, seed: int, kinds: Sequence[str] = KINDS) -> list[Clip]:
    clips: list[Clip] = []
    used: set[str] = set()
    extra = 0
    for spec in sample_specs(n, seed, kinds):
        s = spec
        while True:
            try:
                clip = generate_scenario(s)
            except InfeasibleSpecError:
                clip = None
            if clip is not None and clip.id not in used:
                break
            extra += 1
            s = ScenarioSpec(spec.kind, {}, (spec.seed + 7919 * extra) % 10**6)
        used.add(clip.id)
        clips.append(clip)
    return clips


def knob_table() -> dict[str, Any]:
    """Documented valid and sampling ranges per kind."""
    return {k: {name: {"valid": list(r[0]), "sampled": list(r[1])} for name, r in {**COMMON_KNOBS, **v}.items()}
            for k, v in KIND_KNOBS.items()}
