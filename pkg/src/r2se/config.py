"""Run configuration: sectioned defaults, range validation and strict key checking."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError
from .world import KINDS


@dataclass
class WorldSection:
    n_train: int = 2000
    n_test: int = 400
    kinds: list = field(default_factory=lambda: list(KINDS))
    noise: dict = field(default_factory=lambda: {"ego": 0.1, "map": 0.0, "agents": 0.5})


@dataclass
class PolicySection:
    M: int = 64
    tau: float = 0.5
    hidden: int = 256
    epochs: int = 8
    batch_size: int = 32
    lr: float = 1e-4
    optimizer: str = "sgd"
    dropout: float = 0.1
    alpha: float = 1.0


@dataclass
class AllocateSection:
    eps: float = 1.0
    beta_per: float = 0.1
    beta_ent: float = 0.01
    L: int = 3


@dataclass
class AdapterSection:
    K: int = 6
    rank: int = 16


@dataclass
class RefineSection:
    lam: float = 1.0
    alpha_pretrain: float = 1.0
    budget: float = 0.5
    is_clamp: list = field(default_factory=lambda: [1e-3, 1e3])
    epochs: int = 8
    lr: float = 1e-4
    optimizer: str = "sgd"
    gamma: float = 0.99
    baseline: bool = False
    full_lr: float = 1e-4


@dataclass
class ExpandSection:
    sigma: float = 0.75
    gate_direction: str = "literal"
    tail: str = "gpd"
    u0: Any = None


@dataclass
class EvalSection:
    delta_h: float = 0.1


SECTIONS = {
    "world": WorldSection,
    "policy": PolicySection,
    "allocate": AllocateSection,
    "adapters": AdapterSection,
    "refine": RefineSection,
    "expand": ExpandSection,
    "eval": EvalSection,
}

# (lo, hi) inclusive bounds; None leaves a side open.
RANGES = {
    "world.n_train": (10, None), "world.n_test": (1, None),
    "policy.M": (2, None), "policy.tau": (1e-9, None), "policy.hidden": (1, None), "policy.epochs": (0, None),
    "policy.batch_size": (1, None), "policy.lr": (0.0, None), "policy.dropout": (0.0, 0.95), "policy.alpha": (0.0, None),
    "allocate.eps": (1e-9, 100 - 1e-9), "allocate.beta_per": (0.0, None), "allocate.beta_ent": (0.0, None),
    "allocate.L": (0, None),
    "adapters.K": (1, None), "adapters.rank": (1, None),
    "refine.lam": (0.0, None), "refine.alpha_pretrain": (0.0, None), "refine.epochs": (0, None),
    "refine.lr": (0.0, None), "refine.gamma": (0.0, 1.0), "refine.full_lr": (0.0, None),
    "expand.sigma": (0.0, 1.0), "eval.delta_h": (1e-12, None),
}
CHOICES = {
    "policy.optimizer": ("sgd", "adam"), "refine.optimizer": ("sgd", "adam"),
    "expand.gate_direction": ("literal", "inverted"), "expand.tail": ("gpd", "lognormal", "percentile"),
}


@dataclass
class RunConfig:
    seed: int = 0
    world: WorldSection = field(default_factory=WorldSection)
    policy: PolicySection = field(default_factory=PolicySection)
    allocate: AllocateSection = field(default_factory=AllocateSection)
    adapters: AdapterSection = field(default_factory=AdapterSection)
    refine: RefineSection = field(default_factory=RefineSection)
    expand: ExpandSection = field(default_factory=ExpandSection)
    eval: EvalSection = field(default_factory=EvalSection)

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunConfig":
        cfg = cls()
        for key, value in d.items():
            if key == "seed":
                if not isinstance(value, int) or value < 0:
                    raise ConfigError("seed must be a non-negative integer")
                cfg.seed = value
                continue
            if key not in SECTIONS:
                raise ConfigError(f"unknown config key {key!r}")
            if not isinstance(value, Mapping):
                raise ConfigError(f"config section {key!r} must be an object")
            section = getattr(cfg, key)
            names = {f.name for f in dataclasses.fields(section)}
            for sub, v in value.items():
                if sub not in names:
                    raise ConfigError(f"unknown config key {key}.{sub!r}")
                setattr(section, sub, v)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self) -> None:
        for dotted, (lo, hi) in RANGES.items():
            sec, name = dotted.split(".")
            v = getattr(getattr(self, sec), name)
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{dotted} must be a number")
            if (lo is not None and v < lo) or (hi is not None and v > hi):
                raise ConfigError(f"{dotted}={v} outside [{lo}, {hi}]")
        for dotted, options in CHOICES.items():
            sec, name = dotted.split(".")
            v = getattr(getattr(self, sec), name)
            if v not in options:
                raise ConfigError(f"{dotted}={v!r} not one of {options}")
        for kind in self.world.kinds:
            if kind not in KINDS:
                raise ConfigError(f"world.kinds: unknown scenario kind {kind!r}")
        if not self.world.kinds:
            raise ConfigError("world.kinds must not be empty")
        for group in self.world.noise:
            if group not in ("ego", "map", "agents"):
                raise ConfigError(f"world.noise: unknown group {group!r}")
        lo, hi = self.refine.is_clamp
        if not (0 < lo <= 1 <= hi):
            raise ConfigError("refine.is_clamp must satisfy 0 < lo <= 1 <= hi")
        if self.allocate.L >= self.world.n_train:
            raise ConfigError("allocate.L must be smaller than world.n_train")
        if self.expand.u0 is not None and not isinstance(self.expand.u0, (int, float)):
            raise ConfigError("expand.u0 must be null or a number")
