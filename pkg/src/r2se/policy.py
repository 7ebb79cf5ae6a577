"""The generalist planner: clip features, the trajectory vocabulary, soft
expert targets, the pretraining objective and its training loop."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import tensor_nn as nn
from .errors import InputError, NumericError, ShapeError, TrainingError
from .io import content_id
from .world import Clip, project_points, to_ego_frame, to_world_frame, wrap_angle

log = logging.getLogger(__name__)

N_AGENT_SLOTS = 4
LOOKAHEADS = (5.0, 10.0, 20.0, 30.0)

FEATURE_NAMES = (
    ("speed", "accel", "heading_offset", "lateral_offset", "speed_limit")
    + tuple(f"curvature_{int(d)}m" for d in LOOKAHEADS)
    + tuple(f"agent{i}_{f}" for i in range(N_AGENT_SLOTS) for f in ("present", "dx", "dy", "dvx", "dvy"))
)
N_FEATURES = len(FEATURE_NAMES)

# Group membership for observation noise (presence flags stay clean).
_GROUPS = np.array(
    ["ego"] * 5 + ["map"] * len(LOOKAHEADS)
    + [g for _ in range(N_AGENT_SLOTS) for g in ("none", "agents", "agents", "agents", "agents")]
)
DEFAULT_NOISE = {"ego": 0.1, "map": 0.0, "agents": 0.5}

# Fixed per-feature scaling applied before the network.
FEATURE_SCALE = np.array(
    [10.0, 3.0, 0.2, 1.0, 10.0] + [0.02] * len(LOOKAHEADS) + [1.0, 20.0, 5.0, 10.0, 5.0] * N_AGENT_SLOTS
)
PERCEPTION_SCALE = 10.0
N_PERCEPTION = 2 * N_AGENT_SLOTS


def _agent_slots(clip: Clip) -> np.ndarray:
    """``(slots, 5)`` rows of (present, dx, dy, dvx, dvy) in the ego frame at frame 0."""
    out = np.zeros((N_AGENT_SLOTS, 5))
    if not clip.agents:
        return out
    H = clip.history_len
    x0, y0, p0 = clip.ego_pose0
    c, s = np.cos(p0), np.sin(p0)
    ego_v = clip.ego_speed0 * np.array([c, s])
    rows = []
    for a in clip.agents:
        st = a.states[H]
        dx, dy = st[0] - x0, st[1] - y0
        dvx, dvy = st[3] - ego_v[0], st[4] - ego_v[1]
        rows.append((np.hypot(dx, dy), c * dx + s * dy, -s * dx + c * dy, c * dvx + s * dvy, -s * dvx + c * dvy))
    rows.sort(key=lambda r: r[0])
    for i, r in enumerate(rows[:N_AGENT_SLOTS]):
        out[i] = (1.0,) + r[1:]
    return out


def clean_features(clip: Clip) -> np.ndarray:
    """Noise-free feature vector in physical units (m, s, rad)."""
    H = clip.history_len
    v0 = clip.ego_speed0
    accel = (v0 - clip.ego_track[H - 1, 3]) / clip.dt if H >= 1 else 0.0
    s0, l0 = project_points(clip.lane, clip.ego_pose0[None, :2])
    heading = float(wrap_angle(clip.ego_pose0[2] - clip.lane.heading_at(s0[0])))
    curv = [clip.lane.curvature_at(float(s0[0]) + d) for d in LOOKAHEADS]
    return np.concatenate([[v0, accel, heading, float(l0[0]), clip.speed_limit], curv, _agent_slots(clip).ravel()])


def encode(clip: Clip, noise_seed: int, noise: Mapping[str, float] | None = None) -> np.ndarray:
    """Feature vector with additive Gaussian observation noise per field group.

    ``noise`` maps group name (``ego``, ``map``, ``agents``) to a standard
    deviation in the field's physical unit.  Absent agent slots stay zero.
    """
    f = clean_features(clip)
    sig = DEFAULT_NOISE if noise is None else {**{k: 0.0 for k in DEFAULT_NOISE}, **noise}
    sigma = np.array([sig.get(g, 0.0) for g in _GROUPS])
    present = np.repeat(f[5 + len(LOOKAHEADS)::5], 5)
    sigma[5 + len(LOOKAHEADS):] *= present
    if np.any(sigma > 0):
        f = f + np.random.default_rng(noise_seed).normal(size=f.shape) * sigma
    return f


def net_input(features: np.ndarray) -> np.ndarray:
    return np.asarray(features, dtype=float) / FEATURE_SCALE


def perception_truth(clip: Clip) -> np.ndarray:
    """True relative positions of the nearest agents, scaled for the perception head."""
    return _agent_slots(clip)[:, 1:3].ravel() / PERCEPTION_SCALE


# --- vocabulary -------------------------------------------------------------

def ego_frame_expert(clip: Clip) -> np.ndarray:
    return to_ego_frame(clip.ego_pose0, clip.expert_future)


def build_vocabulary(training_clips: Sequence[Clip], M: int, seed: int) -> np.ndarray:
    """k-means over ego-frame expert futures (positions); each entry's
    headings are the circular mean of its members' headings."""
    if len(training_clips) < M:
        raise InputError(f"need at least M={M} clips for the vocabulary")
    trajs = np.stack([ego_frame_expert(c) for c in training_clips])
    pos = trajs[..., :2].reshape(len(trajs), -1)
    centers = nn.kmeans(pos, M, seed)
    d = ((pos[:, None, :] - centers[None]) ** 2).sum(-1)
    labels = np.argmin(d, axis=1)
    F = trajs.shape[1]
    vocab = np.zeros((M, F, 3))
    vocab[..., :2] = centers.reshape(M, F, 2)
    for k in range(M):
        psi = trajs[labels == k, :, 2]
        vocab[k, :, 2] = np.arctan2(np.sin(psi).mean(0), np.cos(psi).mean(0))
    return vocab


def candidates_world(clip: Clip, vocab: np.ndarray) -> np.ndarray:
    return to_world_frame(clip.ego_pose0, vocab)


def expert_target(vocab: np.ndarray, expert: np.ndarray, tau: float = 0.5) -> np.ndarray:
    """Soft target ``softmax(-ADE/tau)``; ADE over planar positions, both in the ego frame."""
    if tau <= 0:
        raise InputError("tau must be positive")
    ade = np.linalg.norm(vocab[..., :2] - np.asarray(expert)[None, :, :2], axis=-1).mean(-1)
    return nn.softmax(-ade / tau)


# --- pretraining objective ---------------------------------------------------------

def pretrain_loss_heads(logits, perception, target, truth, alpha: float = 1.0):
    """Batch-mean loss ``MSE + alpha * KL(target || softmax(logits))`` and its
    gradients at the two heads."""
    logits = np.atleast_2d(logits)
    perception = np.atleast_2d(perception)
    target = np.atleast_2d(target)
    truth = np.atleast_2d(truth)
    if logits.shape != target.shape or perception.shape != truth.shape:
        raise ShapeError("pretrain loss: output and target shapes differ")
    n = logits.shape[0]
    logq = nn.log_softmax(logits)
    safe = np.where(target > 0, target, 1.0)
    kl = (target * (np.log(safe) - logq)).sum(1)
    err = perception - truth
    mse = (err ** 2).mean(1)
    loss = float((mse + alpha * kl).mean())
    dlogits = alpha * (np.exp(logq) - target) / n
    dperc = 2.0 * err / (err.shape[1] * n)
    return loss, dlogits, dperc


def pretrain_loss(weights: nn.NetworkWeights, X, target, truth, alpha: float = 1.0, masks=(None, None)):
    """Loss and full-network gradients for a batch of net inputs."""
    logits, perception, cache = nn.forward_cached(weights, X, dropout_masks=masks)
    loss, dl, dp = pretrain_loss_heads(logits, perception, target, truth, alpha)
    return loss, nn.backward(weights, cache, dl, dp)


def kl_divergence(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    nz = p > 0
    return float((p[nz] * (np.log(p[nz]) - np.log(q[nz]))).sum())


@dataclass
class PretrainConfig:
    epochs: int = 8
    batch_size: int = 32
    lr: float = 1e-4
    optimizer: str = "sgd"
    dropout: float = 0.1
    alpha: float = 1.0
    hidden: int = 256
    seed: int = 0


@dataclass
class Dataset:
    """Prepared training arrays: net inputs, soft targets, perception truth."""

    ids: list[str]
    X: np.ndarray
    targets: np.ndarray
    truths: np.ndarray

    def __len__(self):
        return len(self.ids)


def prepare_dataset(clips: Sequence[Clip], vocab: np.ndarray, noise_seed: int, tau: float = 0.5,
                    noise: Mapping[str, float] | None = None) -> Dataset:
    seeds = np.random.default_rng(noise_seed).integers(0, 2**31, size=len(clips))
    X = np.stack([net_input(encode(c, int(s), noise)) for c, s in zip(clips, seeds)]) if clips else np.zeros((0, N_FEATURES))
    T = np.stack([expert_target(vocab, ego_frame_expert(c), tau) for c in clips]) if clips else np.zeros((0, len(vocab)))
    P = np.stack([perception_truth(c) for c in clips]) if clips else np.zeros((0, N_PERCEPTION))
    return Dataset([c.id for c in clips], X, T, P)


@dataclass
class TrainHistory:
    epoch_loss: list[float] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def pretrain(data: Dataset, config: PretrainConfig, init: nn.NetworkWeights | None = None):
    """Minibatch training of the full network; returns ``(weights, history)``."""
    if len(data) == 0:
        raise InputError("empty pretraining dataset")
    rng = np.random.default_rng(config.seed)
    weights = init.copy() if init is not None else nn.init_network(
        data.X.shape[1], config.hidden, data.targets.shape[1], data.truths.shape[1], int(rng.integers(2**31)))
    opt = nn.Adam(config.lr) if config.optimizer == "adam" else None
    hist = TrainHistory()
    batch = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(data))
        losses = []
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            masks = nn.dropout_masks(rng, len(idx), weights.hidden, config.dropout)
            try:
                loss, grads = pretrain_loss(weights, data.X[idx], data.targets[idx], data.truths[idx], config.alpha,
                                            masks)
            except NumericError:
                loss = float("nan")
            if not np.isfinite(loss):
                raise TrainingError(f"pretraining diverged at batch {batch} (epoch {epoch})")
            if opt is not None:
                opt.step(weights.params, grads)
            else:
                weights = nn.NetworkWeights(nn.sgd_step(weights.params, grads, config.lr))
            losses.append(loss * len(idx))
            batch += 1
        hist.epoch_loss.append(float(np.sum(losses) / len(data)))
        log.info("pretrain epoch %d loss %.5f", epoch, hist.epoch_loss[-1])
    w = hist.epoch_loss
    if len(w) >= 4:
        smooth = np.convolve(w, np.ones(2) / 2, mode="valid")
        if np.any(np.diff(smooth) > 0):
            hist.warnings.append("smoothed training loss increased between epochs")
    return weights, hist


# --- checkpoint ---------------------------------------------------------------

@dataclass
class Generalist:
    weights: nn.NetworkWeights
    vocab: np.ndarray
    tau: float = 0.5

    def document(self) -> dict:
        return {
            "kind": "generalist",
            "network": nn.weights_to_document(self.weights),
            "vocabulary": self.vocab.tolist(),
            "feature_names": list(FEATURE_NAMES),
            "feature_scale": FEATURE_SCALE.tolist(),
            "tau": self.tau,
        }

    @property
    def id(self) -> str:
        return content_id(self.document())

    @classmethod
    def from_document(cls, doc: Mapping) -> "Generalist":
        if doc.get("kind") != "generalist":
            raise InputError("not a generalist checkpoint")
        if list(doc["feature_names"]) != list(FEATURE_NAMES):
            raise InputError("checkpoint feature layout does not match this build")
        return cls(nn.weights_from_document(doc["network"]), np.array(doc["vocabulary"], dtype=float), float(doc["tau"]))
