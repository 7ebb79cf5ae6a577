"""Closed-loop sub-metrics, the PDM score, difficulty scoring, forgetting
statistics and the PAC-Bayes generalization diagnostic."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, InputError
from .world import Clip, IdmParams, SimLog, idm_rollout, lane_agents_from_clip, project_points, wrap_angle

TTC_THRESHOLD = 1.0
MAX_ACCEL = 4.0
MAX_JERK = 8.0
MAX_YAW_RATE = 0.95
EP_GUARD = 0.1
BETA_PER = 0.1
BETA_ENT = 0.01
DELTA_H = 0.1

W_TTC, W_EP, W_COMFORT = 5.0, 5.0, 2.0


@dataclass(frozen=True)
class SubScores:
    nc: float
    dac: float
    ttc: float
    comfort: float
    ep: float

    def __post_init__(self):
        for name in ("nc", "dac", "ttc", "comfort", "ep"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise InputError(f"sub-score {name}={v} outside [0, 1]")

    @property
    def pdms(self) -> float:
        return pdm_score(self)

    def as_dict(self) -> dict:
        return {**asdict(self), "pdms": self.pdms}


def pdm_score(s: SubScores) -> float:
    """Safety multipliers times the weighted mean of TTC, progress and comfort."""
    return s.nc * s.dac * (W_TTC * s.ttc + W_EP * s.ep + W_COMFORT * s.comfort) / (W_TTC + W_EP + W_COMFORT)


def plan_feedback(scores: SubScores) -> float:
    """Planning feedback used for difficulty scoring; by construction the PDM score."""
    return pdm_score(scores)


def sub_scores(log: SimLog, clip: Clip, reference_progress: float) -> SubScores:
    if reference_progress < 0:
        raise InputError("reference_progress must be non-negative")
    comfort_bad = (
        np.any(np.abs(log.accel) > MAX_ACCEL)
        or np.any(np.abs(log.jerk) > MAX_JERK)
        or np.any(np.abs(log.yaw_rate) > MAX_YAW_RATE)
    )
    ep = float(np.clip(log.progress / max(reference_progress, EP_GUARD), 0.0, 1.0))
    return SubScores(
        nc=0.0 if log.collision else 1.0,
        dac=0.0 if log.off_drivable else 1.0,
        ttc=0.0 if np.any(log.ttc < TTC_THRESHOLD) else 1.0,
        comfort=0.0 if comfort_bad else 1.0,
        ep=ep,
    )


def privileged_reference(clip: Clip) -> tuple[np.ndarray, float]:
    """IDM car-follower with ground-truth agent tracks, driven along the
    centerline at ``dt/10``; returns its world-frame trajectory and progress."""
    s0, l0 = project_points(clip.lane, clip.ego_pose0[None, :2])
    s0, l0 = float(s0[0]), float(l0[0])
    params = IdmParams(desired_speed=clip.speed_limit, headway=1.5, max_accel=2.0, comfort_decel=3.0, min_gap=2.0)
    h = clip.dt / 10

    def l_ego(t):
        return l0 * math.exp(-max(t, 0.0) / 1.5)

    ts, s, v = idm_rollout(s0, clip.ego_speed0, l_ego, lane_agents_from_clip(clip), params,
                           clip.ego_length, clip.ego_width, clip.future_len * clip.dt, h)
    idx = np.arange(10, len(ts), 10)
    sf = s[idx]
    lf = np.array([l_ego(t) for t in ts[idx]])
    xy = clip.lane.to_world(sf, lf)
    psi = wrap_angle(clip.lane.heading_at(sf))
    return np.column_stack([xy, psi]), float(s[-1] - s[0])


def entropy_feedback(probs) -> float:
    """Shannon entropy in nats, ``0 log 0 = 0``."""
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
        raise InputError("probabilities must be non-negative and sum to 1")
    nz = p[p > 0]
    return float(max(-(nz * np.log(nz)).sum(), 0.0))


def perception_feedback(loss: float, max_loss_over_dataset: float) -> float:
    if max_loss_over_dataset <= 0:
        raise ConfigError("max perception loss must be positive")
    if loss < 0:
        raise InputError("perception loss must be non-negative")
    return float(np.clip(loss / max_loss_over_dataset, 0.0, 1.0))


@dataclass(frozen=True)
class DifficultyScore:
    clip_id: str
    f_plan: float
    f_per: float
    f_ent: float
    f_x: float


def case_difficulty(f_plan: float, f_per: float, f_ent: float, beta_per: float = BETA_PER,
                    beta_ent: float = BETA_ENT, clip_id: str = "") -> DifficultyScore:
    if not (0.0 <= f_plan <= 1.0 and 0.0 <= f_per <= 1.0 and f_ent >= 0.0):
        raise InputError("difficulty components out of range")
    f_x = (1.0 - f_plan) + beta_per * f_per + beta_ent * f_ent
    return DifficultyScore(clip_id, float(f_plan), float(f_per), float(f_ent), float(f_x))


def forget_stats(prev: Mapping[str, float], cur: Mapping[str, float], hard_ids: Iterable[str] = (),
                 delta_h: float = DELTA_H, hard_cut: float | None = None) -> dict:
    """Forget rate over all clips, hard-case forget/improve rates, and the
    share of hard cases still below ``hard_cut`` PDMS (``None`` when no cut)."""
    if set(prev) != set(cur):
        raise InputError("previous and current reports cover different clips")
    if delta_h <= 0:
        raise InputError("delta_h must be positive")
    hard = sorted(set(hard_ids))
    missing = [h for h in hard if h not in cur]
    if missing:
        raise InputError(f"hard ids missing from reports: {missing[:3]}")
    keys = sorted(prev)
    fr = float(np.mean([cur[k] < prev[k] for k in keys])) if keys else 0.0
    if hard:
        hfr = float(np.mean([cur[k] <= prev[k] - delta_h for k in hard]))
        hir = float(np.mean([cur[k] >= prev[k] + delta_h for k in hard]))
        remaining = None if hard_cut is None else float(np.mean([cur[k] < hard_cut for k in hard]))
    else:
        hfr = hir = 0.0
        remaining = None if hard_cut is None else 0.0
    return {"fr": fr, "hfr": hfr, "hir": hir, "remaining_hard": remaining}


def pac_bayes_bound(empirical_risks, kl: float, n: int, delta: float) -> float:
    """Mean member risk plus the McAllester-style complexity term."""
    r = np.asarray(empirical_risks, dtype=float)
    if not (0.0 < delta < 1.0):
        raise InputError("delta must lie in (0, 1)")
    if n < 1 or kl < 0 or r.size == 0 or np.any((r < 0) | (r > 1)):
        raise InputError("need n >= 1, kl >= 0 and risks in [0, 1]")
    return float(r.mean() + math.sqrt((kl + math.log(2.0 * math.sqrt(n) / delta)) / (2.0 * n)))


# --- evaluation reports ---------------------------------------------------------

EVAL_COLUMNS = ("clip_id", "nc", "dac", "ttc", "comfort", "ep", "pdms", "f_ent", "f_per", "f_x", "policy_used")


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    return format(float(v), ".12g")


def eval_csv_text(rows: Sequence[Mapping]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EVAL_COLUMNS)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in EVAL_COLUMNS])
    return buf.getvalue()


def read_eval_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and tuple(rows[0].keys()) != EVAL_COLUMNS:
        raise InputError(f"{path}: unexpected columns {list(rows[0].keys())}")
    out = []
    for r in rows:
        out.append({k: (v if k in ("clip_id", "policy_used") else float(v)) for k, v in r.items()})
    return out


def summarize(rows: Sequence[Mapping]) -> dict:
    if not rows:
        raise InputError("empty evaluation")
    out = {f"mean_{c}": float(np.mean([r[c] for r in rows])) for c in ("nc", "dac", "ttc", "comfort", "ep", "pdms")}
    out["expand_rate"] = float(np.mean([r["policy_used"] == "specialist" for r in rows]))
    out["n"] = len(rows)
    return out
