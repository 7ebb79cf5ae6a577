"""Low-rank specialist adapters and K-member adapter ensembles.

An adapted layer computes with ``W + (1/r) A B``; the base weights stay
frozen.  Members share rank and adapted-layer list and differ only by the
seeded initialisation of ``A`` (``B`` starts at zero, so every member
reproduces the generalist exactly before training).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import tensor_nn as nn
from .errors import ConfigError, IntegrityError, ShapeError
from .io import content_id

ADAPTER_VERSION = 1
INIT_STD = 0.02


@dataclass
class LoraPair:
    A: np.ndarray  # (d_out, r)
    B: np.ndarray  # (r, d_in)
    rank: int

    def delta(self) -> np.ndarray:
        return self.A @ self.B / self.rank

    def copy(self) -> "LoraPair":
        return LoraPair(self.A.copy(), self.B.copy(), self.rank)


Member = dict  # layer name -> LoraPair


@dataclass
class AdapterEnsemble:
    members: list[Member]
    rank: int
    layers: tuple[str, ...] = nn.PLANNING_LAYERS
    base_id: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return len(self.members)

    def copy(self) -> "AdapterEnsemble":
        return AdapterEnsemble([{k: p.copy() for k, p in m.items()} for m in self.members],
                               self.rank, self.layers, self.base_id, dict(self.meta))

    def trainable_count(self) -> int:
        return sum(p.A.size + p.B.size for m in self.members for p in m.values())

    def document(self) -> dict:
        return {
            "kind": "adapter_ensemble",
            "format_version": ADAPTER_VERSION,
            "base_id": self.base_id,
            "rank": self.rank,
            "layers": list(self.layers),
            "members": [
                {layer: {"A": p.A.tolist(), "B": p.B.tolist()} for layer, p in sorted(m.items())}
                for m in self.members
            ],
            "meta": self.meta,
        }

    @property
    def id(self) -> str:
        return content_id(self.document())

    @classmethod
    def from_document(cls, doc: Mapping, expected_base_id: str | None = None) -> "AdapterEnsemble":
        if doc.get("format_version") != ADAPTER_VERSION or doc.get("kind") != "adapter_ensemble":
            raise ConfigError("unsupported adapter checkpoint")
        if expected_base_id is not None and doc["base_id"] != expected_base_id:
            raise IntegrityError(
                f"adapters were trained against base {doc['base_id']}, loaded base is {expected_base_id}")
        r = int(doc["rank"])
        members = [
            {layer: LoraPair(np.array(v["A"], dtype=float), np.array(v["B"], dtype=float), r) for layer, v in m.items()}
            for m in doc["members"]
        ]
        return cls(members, r, tuple(doc["layers"]), doc["base_id"], dict(doc.get("meta", {})))


def init_ensemble(base: nn.NetworkWeights, K: int = 6, r: int = 16, seed: int = 0,
                  layers: Sequence[str] = nn.PLANNING_LAYERS, base_id: str = "") -> AdapterEnsemble:
    if K < 1 or r < 1:
        raise ConfigError("need K >= 1 and r >= 1")
    members = []
    for k in range(K):
        rng = np.random.default_rng([seed, k])
        member = {}
        for layer in layers:
            d_out, d_in = base.weight(layer).shape
            if r > min(d_in, d_out):
                raise ConfigError(f"rank {r} exceeds min(d_in, d_out) = {min(d_in, d_out)} for layer {layer}")
            member[layer] = LoraPair(rng.normal(0.0, INIT_STD, size=(d_out, r)), np.zeros((r, d_in)), r)
        members.append(member)
    return AdapterEnsemble(members, r, tuple(layers), base_id)


def adapted_forward(base: nn.NetworkWeights, member: Member, features):
    """Logits and perception of the base network with one member's adapters."""
    return nn.forward(base, features, adapters=member)


def ensemble_probs(base: nn.NetworkWeights, ensemble: AdapterEnsemble, features) -> np.ndarray:
    """Per-member probabilities, shape ``(K, ..., M)``."""
    return np.stack([nn.softmax(adapted_forward(base, m, features)[0]) for m in ensemble.members])


def ensemble_forward(base: nn.NetworkWeights, ensemble: AdapterEnsemble, features):
    """Mean member probabilities and the uncertainty: the mean over vocabulary
    entries of the across-member variance of each entry's probability."""
    P = ensemble_probs(base, ensemble, features)
    mean = P.mean(0)
    var = ((P - mean) ** 2).mean(0)
    return mean, var.mean(-1)


def member_params(member: Member) -> dict[str, np.ndarray]:
    out = {}
    for layer, pair in member.items():
        out[f"{layer}.A"] = pair.A
        out[f"{layer}.B"] = pair.B
    return out


def ensemble_step(ensemble: AdapterEnsemble, grads: Sequence[Mapping[str, np.ndarray]], lr: float) -> AdapterEnsemble:
    """Independent member updates, each scaled by ``lr / K``."""
    if len(grads) != ensemble.K:
        raise ShapeError(f"expected gradients for {ensemble.K} members, got {len(grads)}")
    out = ensemble.copy()
    for member, g in zip(out.members, grads):
        new = nn.sgd_step(member_params(member), g, lr / ensemble.K)
        for layer, pair in member.items():
            pair.A = new[f"{layer}.A"]
            pair.B = new[f"{layer}.B"]
    return out


def base_layer_count(base: nn.NetworkWeights, layers: Sequence[str] = nn.PLANNING_LAYERS) -> int:
    return sum(base.weight(layer).size for layer in layers)


def adapter_count(base: nn.NetworkWeights, K: int, r: int, layers: Sequence[str] = nn.PLANNING_LAYERS) -> int:
    """``sum over layers of K r (d_in + d_out)``."""
    return sum(K * r * sum(base.weight(layer).shape) for layer in layers)
