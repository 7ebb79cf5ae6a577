"""Verification oracles used only by the tests.

Each oracle is written independently of the code it checks: straight-line
loops instead of vectorised helpers, point sampling instead of separating
axes, dense arclength sampling instead of segment projection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats


# --- finite differences -----------------------------------------------------------

@dataclass
class FdReport:
    max_rel_error: float
    worst: str
    passed: bool


def finite_diff_check(loss_fn, params: dict, grads: dict, step: float = 1e-5, tolerance: float = 1e-4,
                      floor: float = 1e-6, max_entries: int | None = None, seed: int = 0) -> FdReport:
    """Compare analytic ``grads`` with central differences of ``loss_fn()``.

    ``loss_fn`` reads ``params`` (perturbed in place). Relative error is
    ``|a - n| / max(|a|, |n|, floor)``; ``max_entries`` subsamples large arrays.
    """
    rng = np.random.default_rng(seed)
    worst, worst_key = 0.0, ""
    for key, g in grads.items():
        p = params[key]
        flat = p.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, max_entries, replace=False)
        for j in idx:
            old = flat[j]
            flat[j] = old + step
            up = loss_fn()
            flat[j] = old - step
            down = loss_fn()
            flat[j] = old
            num = (up - down) / (2 * step)
            ana = float(np.reshape(g, -1)[j])
            err = abs(ana - num) / max(abs(ana), abs(num), floor)
            if err > worst:
                worst, worst_key = err, f"{key}[{j}]"
    return FdReport(worst, worst_key, worst < tolerance)


# --- network re-evaluation ----------------------------------------------------------

def forward_loops(params: dict, x, adapters=None):
    """Scalar-loop forward pass of the encoder / planning / perception network."""
    def weight(name):
        W = params[f"{name}.W"]
        if adapters and name in adapters:
            pair = adapters[name]
            d_out, d_in = W.shape
            W = [[W[i][j] + sum(pair.A[i][k] * pair.B[k][j] for k in range(pair.rank)) / pair.rank
                  for j in range(d_in)] for i in range(d_out)]
        return W

    def dense(name, v, relu):
        W, b = weight(name), params[f"{name}.b"]
        out = []
        for i in range(len(b)):
            s = b[i]
            for j in range(len(v)):
                s += W[i][j] * v[j]
            out.append(max(s, 0.0) if relu else s)
        return out

    h1 = dense("encoder", list(x), True)
    h2 = dense("plan_hidden", h1, True)
    return np.array(dense("plan_head", h2, False)), np.array(dense("perception_head", h1, False))


# --- geometry ----------------------------------------------------------------------

def _corners(rect):
    x, y, psi, length, width = rect
    c, s = math.cos(psi), math.sin(psi)
    out = []
    for a, b in ((1, 1), (1, -1), (-1, -1), (-1, 1)):
        dx, dy = a * length / 2, b * width / 2
        out.append((x + dx * c - dy * s, y + dx * s + dy * c))
    return out


def _inside(rect, px, py, tol=1e-12):
    x, y, psi, length, width = rect
    c, s = math.cos(psi), math.sin(psi)
    dx, dy = px - x, py - y
    u, v = dx * c + dy * s, -dx * s + dy * c
    return abs(u) <= length / 2 + tol and abs(v) <= width / 2 + tol


def _segments_cross(p1, p2, q1, q2):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    if d1 == d2 == d3 == d4 == 0:
        # collinear: the segments must share a stretch of their common line
        return all(min(p1[k], p2[k]) <= max(q1[k], q2[k]) and min(q1[k], q2[k]) <= max(p1[k], p2[k])
                   for k in (0, 1))
    return (d1 * d2 <= 0) and (d3 * d4 <= 0)


def polygon_overlap(rect_a, rect_b) -> bool:
    """Corner containment or edge crossing: an overlap test without projections."""
    ca, cb = _corners(rect_a), _corners(rect_b)
    if any(_inside(rect_b, *p) for p in ca) or any(_inside(rect_a, *p) for p in cb):
        return True
    for i in range(4):
        for j in range(4):
            if _segments_cross(ca[i], ca[(i + 1) % 4], cb[j], cb[(j + 1) % 4]):
                return True
    return False


def raster_overlap(rect_a, rect_b, grid: float = 0.01) -> bool:
    """Point sampling on a regular grid laid in rect_a's own frame (edges included)."""
    x, y, psi, length, width = rect_a
    u = np.linspace(-length / 2, length / 2, int(round(length / grid)) + 1)
    v = np.linspace(-width / 2, width / 2, int(round(width / grid)) + 1)
    U, V = np.meshgrid(u, v)
    c, s = math.cos(psi), math.sin(psi)
    px = x + U.ravel() * c - V.ravel() * s
    py = y + U.ravel() * s + V.ravel() * c
    bx, by, bpsi, bl, bw = rect_b
    dx, dy = px - bx, py - by
    ub = dx * math.cos(bpsi) + dy * math.sin(bpsi)
    vb = -dx * math.sin(bpsi) + dy * math.cos(bpsi)
    return bool(((np.abs(ub) <= bl / 2 + 1e-12) & (np.abs(vb) <= bw / 2 + 1e-12)).any())


def dense_collision_frame(clip, candidate, substeps: int = 10):
    """First future frame whose interval contains an overlap under linear
    pose interpolation at ``substeps`` points, or None."""
    H = clip.history_len
    ego = [tuple(clip.ego_track[H, :3])] + [tuple(p) for p in np.asarray(candidate)]
    for f in range(1, clip.future_len + 1):
        for k in range(1, substeps + 1):
            w = k / substeps

            def lerp(p, q):
                dpsi = (q[2] - p[2] + math.pi) % (2 * math.pi) - math.pi
                return (p[0] + (q[0] - p[0]) * w, p[1] + (q[1] - p[1]) * w, p[2] + dpsi * w)

            e = lerp(ego[f - 1], ego[f]) + (clip.ego_length, clip.ego_width)
            for ag in clip.agents:
                a = lerp(ag.states[H + f - 1, :3], ag.states[H + f, :3]) + (ag.length, ag.width)
                if polygon_overlap(e, a):
                    return f
    return None


def brute_projection(centerline, point, n: int = 10_000):
    """Arclength and signed lateral offset by dense sampling of the polyline."""
    pts = np.asarray(centerline, dtype=float)
    seg = np.hypot(*np.diff(pts, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    best = (math.inf, 0.0, 0)
    for s in np.linspace(0.0, cum[-1], n):
        i = min(int(np.searchsorted(cum, s, side="right")) - 1, len(seg) - 1)
        q = pts[i] + (pts[i + 1] - pts[i]) * (s - cum[i]) / seg[i]
        d = math.hypot(point[0] - q[0], point[1] - q[1])
        if d < best[0]:
            best = (d, s, i)
    d, s, i = best
    t = pts[i + 1] - pts[i]
    side = t[0] * (point[1] - pts[i][1]) - t[1] * (point[0] - pts[i][0])
    return s, d if side >= 0 else -d


# --- counting and sorting -------------------------------------------------------

def top_eps_oracle(pairs, eps: float):
    """Ids of the top ``eps`` percent by (score desc, id asc) via a full sort."""
    n = math.ceil(eps * len(pairs) / 100 - 1e-9)
    ranked = sorted(pairs, key=lambda p: (-p[1], p[0]))
    return [p[0] for p in ranked[:n]]


# --- tail property suite -------------------------------------------------------------

PARENTS = {
    "uniform": lambda rng, n: rng.uniform(0.0, 1.0, n),
    "exponential": lambda rng, n: rng.exponential(1.0, n),
    "pareto": lambda rng, n: rng.pareto(4.0, n) + 1.0,
}


def tail_property_suite(parent: str, n: int, seeds, fit, quantile: float = 0.9, alpha: float = 0.05):
    """Pass rate of the KS test between exceedances over the ``quantile``
    threshold and the fitted tail, plus the fitted shapes."""
    passes, shapes = 0, []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        x = PARENTS[parent](rng, n)
        u0 = float(np.quantile(x, quantile))
        exc = x[x > u0]
        params = fit(exc, u0)
        shapes.append(params.xi)
        if stats.kstest(exc, lambda v: params.cdf(v)).pvalue > alpha:
            passes += 1
    return passes / len(seeds), np.array(shapes)


def gpd_inverse_cdf_samples(xi: float, beta: float, n: int, seed: int, u0: float = 0.0):
    q = np.random.default_rng(seed).uniform(size=n)
    if xi == 0:
        return u0 - beta * np.log1p(-q)
    return u0 + beta / xi * ((1 - q) ** (-xi) - 1)
