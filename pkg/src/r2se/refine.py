"""Reinforced refinement of the specialist ensemble.

Every vocabulary candidate of a clip is simulated once, giving a terminal
reward (its planning feedback) and a cost (summed sub-metric violations).
The refinement loss per clip is

    sum_m IS_m * (-reward_m * log p(m) + lam * cost_m * p(m))

with ``IS_m = clamp(p_spec(m) / p_gen(m))`` treated as a constant weight,
plus ``alpha_pretrain`` times the imitation loss on the same clip.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import tensor_nn as nn
from .adapters import AdapterEnsemble, ensemble_step, member_params
from .errors import InputError, NumericError, TrainingError
from .metrics import plan_feedback, privileged_reference, sub_scores
from .policy import candidates_world, pretrain_loss_heads
from .world import Clip, simulate_batch

log = logging.getLogger(__name__)

SUB_METRICS = ("nc", "dac", "ttc", "ep", "comfort")


@dataclass
class ProcessSignals:
    clip_id: str
    rewards: np.ndarray      # (M,)
    costs: np.ndarray        # (M,)
    breakdown: np.ndarray    # (M, 5) sub-scores in SUB_METRICS order


def process_signals(clip: Clip, vocab: np.ndarray, gamma: float = 0.99) -> ProcessSignals:
    """Exhaustive batched simulation of all vocabulary candidates.

    Rewards are terminal, so the discount enters as ``gamma ** 0``.
    """
    _, ref = privileged_reference(clip)
    logs = simulate_batch(clip, candidates_world(clip, vocab))
    subs = [sub_scores(lg, clip, ref) for lg in logs]
    breakdown = np.array([[getattr(s, k) for k in SUB_METRICS] for s in subs])
    rewards = gamma ** 0 * np.array([plan_feedback(s) for s in subs])
    costs = (1.0 - breakdown).sum(1)
    return ProcessSignals(clip.id, rewards, costs, breakdown)


def importance_weight(spec_prob, gen_prob, clamp: tuple[float, float] = (1e-3, 1e3)):
    g = np.asarray(gen_prob, dtype=float)
    if np.any(g <= 0):
        raise NumericError("generalist probability must be positive")
    w = np.clip(np.asarray(spec_prob, dtype=float) / g, clamp[0], clamp[1])
    return float(w) if w.ndim == 0 else w


@dataclass
class RefineConfig:
    lam: float = 1.0
    alpha_pretrain: float = 1.0
    budget: float = 0.5
    is_clamp: tuple[float, float] = (1e-3, 1e3)
    epochs: int = 8
    lr: float = 1e-4
    optimizer: str = "sgd"
    gamma: float = 0.99
    baseline: bool = False
    reward_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.is_clamp
        if self.lam < 0 or not (0 < lo <= 1 <= hi):
            raise InputError("need lam >= 0 and clamp bounds 0 < lo <= 1 <= hi")


def grpo_loss_heads(logits, gen_probs, signals: ProcessSignals, lam: float = 1.0,
                    is_clamp: tuple[float, float] = (1e-3, 1e3), baseline: bool = False,
                    reward_scale: float = 1.0, is_weights=None):
    """Loss and gradient at the logits for one clip.

    ``is_weights`` overrides the importance weights (they are constants of
    the objective; fixing them lets a finite-difference check see the same
    function the analytic gradient describes).
    """
    z = np.asarray(logits, dtype=float)
    logp = nn.log_softmax(z)
    p = np.exp(logp)
    w = importance_weight(p, gen_probs, is_clamp) if is_weights is None else np.asarray(is_weights, dtype=float)
    r = reward_scale * signals.rewards
    if baseline:
        r = r - r.mean()
    a = -w * r                     # coefficients of log p
    b = w * lam * signals.costs    # coefficients of p
    loss = float((a * logp).sum() + (b * p).sum())
    grad = a - p * a.sum() + p * b - p * (b * p).sum()
    return loss, grad


def _member_loss(base, member, X, gen_probs, targets, truths, signals, cfg: RefineConfig, perception_out=True):
    logits, perception, cache = nn.forward_cached(base, X, adapters=member)
    n = len(X)
    total = 0.0
    dlogits = np.zeros_like(logits)
    for i in range(n):
        l, g = grpo_loss_heads(logits[i], gen_probs[i], signals[i], cfg.lam, cfg.is_clamp, cfg.baseline,
                               cfg.reward_scale)
        total += l / n
        dlogits[i] = g / n
    dperc = None
    if cfg.alpha_pretrain > 0:
        l, dl, dp = pretrain_loss_heads(logits, perception, targets, truths, 1.0)
        total += cfg.alpha_pretrain * l
        dlogits += cfg.alpha_pretrain * dl
        dperc = cfg.alpha_pretrain * dp if perception_out else None
    return total, logits, perception, cache, dlogits, dperc


@dataclass
class RlData:
    """Prepared per-clip arrays for refinement, keyed by clip id."""

    X: Mapping[str, np.ndarray]
    targets: Mapping[str, np.ndarray]
    truths: Mapping[str, np.ndarray]
    gen_probs: Mapping[str, np.ndarray]
    signals: Mapping[str, ProcessSignals]


def prepare_rl_data(base: nn.NetworkWeights, vocab: np.ndarray, clips: Mapping[str, Clip], X: Mapping[str, np.ndarray],
                    targets: Mapping[str, np.ndarray], truths: Mapping[str, np.ndarray], gamma: float = 0.99) -> RlData:
    ids = sorted(clips)
    gen = {i: nn.softmax(nn.forward(base, X[i])[0]) for i in ids}
    signals = {i: process_signals(clips[i], vocab, gamma) for i in ids}
    return RlData(X, targets, truths, gen, signals)


@dataclass
class RefineLog:
    epochs: list[dict] = field(default_factory=list)


def _group_arrays(data: RlData, group: Sequence[str]):
    return (np.stack([data.X[i] for i in group]), np.stack([data.gen_probs[i] for i in group]),
            np.stack([data.targets[i] for i in group]), np.stack([data.truths[i] for i in group]),
            [data.signals[i] for i in group])


def _epoch_record(epoch, probs_by_group, data: RlData, groups, member_losses, budget):
    rewards, costs = [], []
    for P, group in zip(probs_by_group, groups):
        for p, cid in zip(P, group):
            rewards.append(float(p @ data.signals[cid].rewards))
            costs.append(float(p @ data.signals[cid].costs))
    mean_cost = float(np.mean(costs))
    return {"epoch": epoch, "mean_reward": float(np.mean(rewards)), "mean_cost": mean_cost,
            "budget_delta": budget - mean_cost, "budget_met": mean_cost <= budget,
            "member_loss": [float(x) for x in member_losses]}


def refine_specialists(base: nn.NetworkWeights, ensemble: AdapterEnsemble, groups: Sequence[Sequence[str]],
                       data: RlData, cfg: RefineConfig) -> tuple[AdapterEnsemble, RefineLog]:
    """Independent per-member updates over the RL set groups; the base is never written."""
    ens = ensemble.copy()
    K = ens.K
    rngs = [np.random.default_rng([cfg.seed, k]) for k in range(K)]
    opts = [nn.Adam(cfg.lr / K) for _ in range(K)] if cfg.optimizer == "adam" else None
    history = RefineLog()
    for epoch in range(cfg.epochs):
        sums = np.zeros(K)
        orders = [rng.permutation(len(groups)) for rng in rngs]
        for step in range(len(groups)):
            grads = []
            for k, member in enumerate(ens.members):
                group = groups[orders[k][step]]
                X, gen, tgt, tru, sig = _group_arrays(data, group)
                loss, _, _, cache, dl, _ = _member_loss(base, member, X, gen, tgt, tru, sig, cfg, perception_out=False)
                if not np.isfinite(loss):
                    raise TrainingError(f"refinement loss is NaN for member {k} on clip group {group[0]}")
                sums[k] += loss
                grads.append(nn.backward(base, cache, dl, None, adapters=member))
            if opts is None:
                ens = ensemble_step(ens, grads, cfg.lr)
            else:
                for member, opt, g in zip(ens.members, opts, grads):
                    opt.step(member_params(member), g)
        probs = []
        for group in groups:
            X = np.stack([data.X[i] for i in group])
            probs.append(np.mean([nn.softmax(nn.forward(base, X, adapters=m)[0]) for m in ens.members], axis=0))
        rec = _epoch_record(epoch, probs, data, groups, sums / max(len(groups), 1), cfg.budget)
        history.epochs.append(rec)
        log.info("refine epoch %d reward %.4f cost %.4f", epoch, rec["mean_reward"], rec["mean_cost"])
    return ens, history


def refine_full(base: nn.NetworkWeights, groups: Sequence[Sequence[str]], data: RlData,
                cfg: RefineConfig) -> tuple[nn.NetworkWeights, RefineLog]:
    """Ablation: the same objective applied directly to the planning-head
    weights of a single copy of the generalist, without adapters."""
    weights = base.copy()
    rng = np.random.default_rng(cfg.seed)
    opt = nn.Adam(cfg.lr) if cfg.optimizer == "adam" else None
    history = RefineLog()
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(groups))
        total = 0.0
        for gi in order:
            X, gen, tgt, tru, sig = _group_arrays(data, groups[gi])
            loss, _, _, cache, dl, _ = _member_loss(weights, None, X, gen, tgt, tru, sig, cfg, perception_out=False)
            if not np.isfinite(loss):
                raise TrainingError(f"full fine-tune loss is NaN on clip group {groups[gi][0]}")
            total += loss
            full = nn.backward(weights, cache, dl, None)
            grads = {k: v for k, v in full.items() if k.split(".")[0] in nn.PLANNING_LAYERS}
            if opt is None:
                weights = nn.NetworkWeights(nn.sgd_step(weights.params, grads, cfg.lr))
            else:
                opt.step(weights.params, grads)
        probs = [nn.softmax(nn.forward(weights, np.stack([data.X[i] for i in g]))[0]) for g in groups]
        history.epochs.append(_epoch_record(epoch, probs, data, groups, [total / max(len(groups), 1)], cfg.budget))
    return weights, history
