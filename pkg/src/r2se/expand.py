"""Self-aware expansion: a Generalized Pareto tail model of hard-case
ensemble uncertainty, and the test-time gate between generalist and
specialist."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np
from scipy import optimize, stats

from . import tensor_nn as nn
from .adapters import AdapterEnsemble, ensemble_forward
from .errors import DomainError, FitError, InputError, IntegrityError
from .metrics import entropy_feedback, forget_stats, perception_feedback, privileged_reference, sub_scores, summarize
from .policy import Generalist, candidates_world
from .world import Clip, simulate

XI_EPS = 1e-8
MIN_FIT_SAMPLES = 30
U0_MARGIN = 1e-9


@dataclass(frozen=True)
class GpdParams:
    xi: float
    beta: float
    u0: float
    n_fit: int = 0
    nll: float = float("nan")

    def __post_init__(self):
        if not self.beta > 0:
            raise DomainError("GPD scale must be positive")

    def cdf(self, u) -> np.ndarray | float:
        return gpd_cdf(self, u)

    def document(self) -> dict:
        return {"xi": self.xi, "beta": self.beta, "u0": self.u0, "n_fit": self.n_fit, "nll": self.nll}


def _z(params: GpdParams, t):
    return 1.0 + params.xi * (np.asarray(t, dtype=float) - params.u0) / params.beta


def gpd_pdf(params: GpdParams, t):
    t = np.asarray(t, dtype=float)
    y = t - params.u0
    z = _z(params, t)
    if np.any(y < 0) or np.any(z <= 0):
        raise DomainError("t lies outside the GPD support")
    if abs(params.xi) < XI_EPS:
        out = np.exp(-y / params.beta) / params.beta
    else:
        out = z ** (-1.0 / params.xi - 1.0) / params.beta
    return float(out) if out.ndim == 0 else out


def gpd_cdf(params: GpdParams, u):
    """Tail CDF; values below ``u0`` map to 0 and beyond a bounded support to 1."""
    u = np.asarray(u, dtype=float)
    y = np.maximum(u - params.u0, 0.0)
    if abs(params.xi) < XI_EPS:
        out = -np.expm1(-y / params.beta)
    else:
        z = 1.0 + params.xi * y / params.beta
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(z > 0, 1.0 - np.maximum(z, 1e-300) ** (-1.0 / params.xi), 1.0)
    return float(out) if out.ndim == 0 else out


def gpd_ppf(params: GpdParams, q):
    """Inverse CDF for ``q`` in ``[0, 1)``."""
    q = np.asarray(q, dtype=float)
    if abs(params.xi) < XI_EPS:
        y = -params.beta * np.log1p(-q)
    else:
        y = params.beta / params.xi * ((1.0 - q) ** (-params.xi) - 1.0)
    out = params.u0 + y
    return float(out) if out.ndim == 0 else out


def gpd_nll(xi: float, beta: float, y: np.ndarray) -> float:
    """Negative log-likelihood of excesses ``y >= 0``; inf outside the support."""
    if beta <= 0 or xi < -1.0:
        return math.inf
    n = len(y)
    if abs(xi) < XI_EPS:
        return n * math.log(beta) + float(y.sum()) / beta
    z = 1.0 + xi * y / beta
    if np.any(z <= 0):
        return math.inf
    return n * math.log(beta) + (1.0 + 1.0 / xi) * float(np.log(z).sum())


def _pwm_start(y: np.ndarray) -> tuple[float, float]:
    """Probability-weighted-moment estimates of (xi, beta)."""
    ys = np.sort(y)
    n = len(ys)
    a0 = ys.mean()
    a1 = float((ys * (n - np.arange(1, n + 1)) / (n - 1)).sum() / n)
    denom = a0 - 2.0 * a1
    if denom <= 0:
        return 0.0, float(a0)
    k = a0 / denom - 2.0
    beta = 2.0 * a0 * a1 / denom
    return float(np.clip(-k, -0.9, 2.0)), float(max(beta, 1e-12))


def fit_gpd(samples: Sequence[float], u0: float | None = None, margin: float = U0_MARGIN) -> GpdParams:
    """Maximum-likelihood GPD fit to the samples above ``u0``.

    ``u0`` defaults to the sample minimum less ``margin``.  The shape is
    restricted to ``xi >= -1`` where the likelihood is bounded.
    """
    x = np.asarray(samples, dtype=float)
    if not np.all(np.isfinite(x)):
        raise FitError("non-finite uncertainty samples")
    if u0 is None:
        if len(x) == 0:
            raise FitError("no samples")
        u0 = float(x.min()) - margin
    y = x[x > u0] - u0
    if len(y) < MIN_FIT_SAMPLES:
        raise FitError(f"need at least {MIN_FIT_SAMPLES} samples above the threshold, got {len(y)}")
    if np.ptp(y) <= 0:
        raise FitError("degenerate samples: all values equal")

    scale = float(y.mean())
    ys = y / scale
    xi0, b0 = _pwm_start(ys)

    def objective(v):
        return gpd_nll(v[0], math.exp(v[1]), ys)

    best = None
    for start in ((xi0, math.log(b0)), (0.1, 0.0), (-0.5, math.log(ys.max()))):
        if not np.isfinite(objective(start)):
            continue
        res = optimize.minimize(objective, np.array(start), method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000, "maxfev": 40000})
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not np.isfinite(best.fun):
        raise FitError("likelihood search found no feasible point")
    xi, beta = float(best.x[0]), float(math.exp(best.x[1])) * scale
    return GpdParams(xi, beta, float(u0), int(len(y)), gpd_nll(xi, beta, y))


# --- alternative tail models behind the same gate ------------------------------

class TailModel(Protocol):
    def cdf(self, u): ...


@dataclass(frozen=True)
class LognormalTail:
    mu: float
    s: float
    u0: float

    @classmethod
    def fit(cls, samples: Sequence[float], margin: float = U0_MARGIN) -> "LognormalTail":
        x = np.asarray(samples, dtype=float)
        u0 = float(x.min()) - margin
        logy = np.log(x - u0)
        return cls(float(logy.mean()), float(max(logy.std(), 1e-12)), u0)

    def cdf(self, u):
        y = np.maximum(np.asarray(u, dtype=float) - self.u0, 1e-300)
        out = stats.norm.cdf((np.log(y) - self.mu) / self.s)
        return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class PercentileRule:
    """Empirical CDF of the fit samples."""

    sorted_samples: tuple[float, ...]

    @classmethod
    def fit(cls, samples: Sequence[float]) -> "PercentileRule":
        return cls(tuple(sorted(float(v) for v in samples)))

    def cdf(self, u):
        out = np.searchsorted(np.array(self.sorted_samples), np.asarray(u, dtype=float), side="right") / len(
            self.sorted_samples)
        return float(out) if np.ndim(out) == 0 else out


# --- gate -----------------------------------------------------------------------------

@dataclass(frozen=True)
class GateDecision:
    u: float
    p: float
    chosen: str
    sigma: float


def gate(u_test: float, tail: TailModel, sigma: float = 0.75, direction: str = "literal") -> GateDecision:
    """Specialist when the tail CDF of the uncertainty exceeds ``sigma``.

    ``direction="inverted"`` routes low-percentile cases to the specialist instead.
    """
    p = float(tail.cdf(u_test))
    if direction == "literal":
        spec = p > sigma
    elif direction == "inverted":
        spec = p <= sigma
    else:
        raise InputError(f"unknown gate direction {direction!r}")
    return GateDecision(float(u_test), p, "specialist" if spec else "generalist", sigma)


def test_time_policy(generalist: Generalist, ensemble: AdapterEnsemble, tail: TailModel, sigma: float,
                     x: np.ndarray, direction: str = "literal", generalist_id: str | None = None):
    """Chosen action distribution and the gate decision for one net input."""
    if generalist_id is not None and ensemble.base_id != generalist_id:
        raise IntegrityError(f"ensemble base {ensemble.base_id} does not match generalist {generalist_id}")
    mean, u = ensemble_forward(generalist.weights, ensemble, x)
    decision = gate(float(u), tail, sigma, direction)
    if decision.chosen == "specialist":
        return mean, decision
    return nn.softmax(nn.forward(generalist.weights, x)[0]), decision


def evaluate_choices(clips: Sequence[Clip], vocab: np.ndarray, probs: np.ndarray, used: Sequence[str],
                     per_loss: np.ndarray, beta_per: float = 0.1, beta_ent: float = 0.01) -> list[dict]:
    """Per-clip report rows for given action distributions (argmax executed)."""
    max_loss = float(np.max(per_loss)) if len(per_loss) else 0.0
    rows = []
    for i, clip in enumerate(clips):
        _, ref = privileged_reference(clip)
        j = int(np.argmax(probs[i]))
        s = sub_scores(simulate(clip, candidates_world(clip, vocab)[j]), clip, ref)
        f_ent = entropy_feedback(probs[i] / probs[i].sum())
        f_per = perception_feedback(per_loss[i], max_loss) if max_loss > 0 else 0.0
        rows.append({"clip_id": clip.id, "nc": s.nc, "dac": s.dac, "ttc": s.ttc, "comfort": s.comfort, "ep": s.ep,
                     "pdms": s.pdms, "f_ent": f_ent, "f_per": f_per,
                     "f_x": (1 - s.pdms) + beta_per * f_per + beta_ent * f_ent, "policy_used": used[i]})
    return rows


def gated_choices(generalist: Generalist, ensemble: AdapterEnsemble | None, tail: TailModel | None, sigma: float,
                  X: np.ndarray, direction: str = "literal"):
    """Vectorised gate over a batch: chosen probabilities, policy labels, uncertainties."""
    gen = nn.softmax(nn.forward(generalist.weights, X)[0])
    if ensemble is None or tail is None:
        return gen, ["generalist"] * len(X), np.zeros(len(X))
    mean, u = ensemble_forward(generalist.weights, ensemble, X)
    used = [gate(float(ui), tail, sigma, direction).chosen for ui in u]
    spec = np.array([c == "specialist" for c in used])
    return np.where(spec[:, None], mean, gen), used, u


def evaluate_gated(clips: Sequence[Clip], generalist: Generalist, ensemble: AdapterEnsemble | None,
                   tail: TailModel | None, sigma: float, X: np.ndarray, truths: np.ndarray,
                   direction: str = "literal", previous: Sequence[dict] | None = None,
                   hard_ids: Sequence[str] = (), hard_cut: float | None = None):
    """Per-clip rows and a summary; ``previous`` rows enable forget statistics."""
    probs, used, _ = gated_choices(generalist, ensemble, tail, sigma, X, direction)
    _, perception = nn.forward(generalist.weights, X)
    per_loss = ((perception - truths) ** 2).mean(1)
    rows = evaluate_choices(clips, generalist.vocab, probs, used, per_loss)
    summary = summarize(rows)
    if previous is not None:
        prev = {r["clip_id"]: float(r["pdms"]) for r in previous}
        cur = {r["clip_id"]: float(r["pdms"]) for r in rows}
        summary["forget"] = forget_stats(prev, cur, [h for h in hard_ids if h in cur], hard_cut=hard_cut)
    return rows, summary
