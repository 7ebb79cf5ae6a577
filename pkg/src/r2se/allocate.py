"""Hard-case discovery: score clips with the generalist, keep the hardest
percentile, and assemble the retrieval-based RL set."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import tensor_nn as nn
from .errors import ConfigError, InputError
from .metrics import (BETA_ENT, BETA_PER, DifficultyScore, case_difficulty, entropy_feedback, perception_feedback,
                      plan_feedback, privileged_reference, sub_scores)
from .policy import candidates_world
from .world import Clip, simulate


@dataclass
class ClipEval:
    """Generalist argmax outcome on one clip, kept alongside its difficulty."""

    score: DifficultyScore
    pdms: float
    choice: int


def score_dataset(weights: nn.NetworkWeights, vocab: np.ndarray, clips: Sequence[Clip], X: np.ndarray,
                  truths: np.ndarray, beta_per: float = BETA_PER, beta_ent: float = BETA_ENT) -> list[ClipEval]:
    """Argmax simulation, output entropy and normalised perception loss for every clip.

    The perception loss is normalised by its maximum over ``clips``, so the
    scan runs in two passes.
    """
    if len(clips) == 0:
        raise InputError("cannot score an empty dataset")
    logits, perception = nn.forward(weights, X)
    probs = nn.softmax(logits)
    per_loss = ((perception - truths) ** 2).mean(1)
    max_loss = float(per_loss.max())
    out = []
    for i, clip in enumerate(clips):
        j = int(np.argmax(logits[i]))
        _, ref = privileged_reference(clip)
        s = sub_scores(simulate(clip, candidates_world(clip, vocab)[j]), clip, ref)
        f_per = perception_feedback(per_loss[i], max_loss) if max_loss > 0 else 0.0
        d = case_difficulty(plan_feedback(s), f_per, entropy_feedback(probs[i]), beta_per, beta_ent, clip.id)
        out.append(ClipEval(d, s.pdms, j))
    return out


@dataclass
class HardSet:
    ids: list[str]
    scores: list[DifficultyScore]
    threshold: float
    eps: float
    generalist_id: str = ""

    def document(self) -> dict:
        return {
            "kind": "hard_set",
            "ids": self.ids,
            "scores": [vars(s) for s in self.scores],
            "threshold": self.threshold,
            "eps": self.eps,
            "generalist_id": self.generalist_id,
        }

    @classmethod
    def from_document(cls, doc: Mapping) -> "HardSet":
        return cls(list(doc["ids"]), [DifficultyScore(**s) for s in doc["scores"]], float(doc["threshold"]),
                   float(doc["eps"]), doc.get("generalist_id", ""))


def select_hard(scores: Sequence[DifficultyScore], eps: float, generalist_id: str = "") -> HardSet:
    """Top ``eps`` percent by descending difficulty, ties at the cut by ascending id."""
    if not (0.0 < eps < 100.0):
        raise ConfigError("eps must lie in (0, 100)")
    if not scores:
        raise InputError("no scores to select from")
    n = math.ceil(eps / 100.0 * len(scores) - 1e-9)
    ranked = sorted(scores, key=lambda s: (-s.f_x, s.clip_id))[:n]
    return HardSet([s.clip_id for s in ranked], ranked, ranked[-1].f_x, eps, generalist_id)


@dataclass
class RlSet:
    """Per hard case, the hard clip id followed by its anchor sample ids."""

    groups: list[list[str]]
    L: int
    seed: int
    meta: dict = field(default_factory=dict)

    def document(self) -> dict:
        return {"kind": "rl_set", "groups": self.groups, "L": self.L, "seed": self.seed, "meta": self.meta}


def build_rl_set(hard: HardSet, train_ids: Sequence[str], L: int = 3, seed: int = 0) -> RlSet:
    if L < 0:
        raise ConfigError("L must be non-negative")
    if L >= len(train_ids):
        raise ConfigError(f"L={L} anchors need a training set larger than {len(train_ids)} clips")
    pool = list(train_ids)
    groups = []
    for i, hid in enumerate(hard.ids):
        rng = np.random.default_rng([seed, i])
        candidates = [t for t in pool if t != hid]
        picks = rng.choice(len(candidates), size=L, replace=False) if L else []
        groups.append([hid] + [candidates[int(p)] for p in picks])
    return RlSet(groups, L, seed)
