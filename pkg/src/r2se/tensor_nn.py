"""Dense numeric core: the planner network, its reverse-mode gradients,
optimizer steps and k-means for vocabulary construction.

Parameters and gradients are plain ``dict[str, np.ndarray]`` keyed by
``"<layer>.W"`` / ``"<layer>.b"``.  The network is fixed:

    x -> encoder (ReLU) -> plan_hidden (ReLU) -> plan_head -> M logits
                 \\-> perception_head -> perception outputs

``plan_hidden`` and ``plan_head`` form the planning head, the only layers
that low-rank adapters touch; the encoder output is shared with perception.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ConfigError, NumericError, ShapeError

LAYERS = ("encoder", "plan_hidden", "plan_head", "perception_head")
PLANNING_LAYERS = ("plan_hidden", "plan_head")

GradientSet = dict  # str -> np.ndarray, shape-congruent with what it differentiates


@dataclass
class NetworkWeights:
    params: dict[str, np.ndarray]

    def weight(self, layer: str) -> np.ndarray:
        return self.params[f"{layer}.W"]

    def bias(self, layer: str) -> np.ndarray:
        return self.params[f"{layer}.b"]

    @property
    def n_in(self) -> int:
        return self.weight("encoder").shape[1]

    @property
    def hidden(self) -> int:
        return self.weight("encoder").shape[0]

    @property
    def n_out(self) -> int:
        return self.weight("plan_head").shape[0]

    @property
    def n_perception(self) -> int:
        return self.weight("perception_head").shape[0]

    def copy(self) -> "NetworkWeights":
        return NetworkWeights({k: v.copy() for k, v in self.params.items()})

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: tuple(v.shape) for k, v in self.params.items()}


def init_network(n_in: int, hidden: int, n_out: int, n_perception: int, seed: int) -> NetworkWeights:
    """He-initialised weights, zero biases."""
    rng = np.random.default_rng(seed)
    dims = {
        "encoder": (hidden, n_in),
        "plan_hidden": (hidden, hidden),
        "plan_head": (n_out, hidden),
        "perception_head": (n_perception, hidden),
    }
    params = {}
    for name in LAYERS:
        d_out, d_in = dims[name]
        params[f"{name}.W"] = rng.normal(0.0, np.sqrt(2.0 / d_in), size=(d_out, d_in))
        params[f"{name}.b"] = np.zeros(d_out)
    return NetworkWeights(params)


def check_shapes(weights: NetworkWeights) -> None:
    h = weights.hidden
    expect = {
        "plan_hidden.W": (h, h),
        "plan_head.W": (weights.n_out, h),
        "perception_head.W": (weights.n_perception, h),
    }
    for key, shape in expect.items():
        if weights.params[key].shape != shape:
            raise ShapeError(f"layer {key.split('.')[0]}: weight shape {weights.params[key].shape}, expected {shape}")
    for name in LAYERS:
        if weights.bias(name).shape != (weights.weight(name).shape[0],):
            raise ShapeError(f"layer {name}: bias does not match weight rows")


# --- softmax helpers ------------------------------------------------------

def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


# --- forward / backward -----------------------------------------------------

@dataclass
class ForwardCache:
    x: np.ndarray
    z1: np.ndarray
    h1: np.ndarray
    z2: np.ndarray
    h2: np.ndarray
    masks: tuple[np.ndarray | None, np.ndarray | None] = (None, None)
    effective: dict[str, np.ndarray] = field(default_factory=dict)


def effective_weight(weights: NetworkWeights, layer: str, adapters: Mapping | None) -> np.ndarray:
    """Base weight plus the low-rank delta ``(1/r) A B`` when an adapter is present."""
    W = weights.weight(layer)
    if adapters is None or layer not in adapters:
        return W
    pair = adapters[layer]
    if pair.A.shape[0] != W.shape[0] or pair.B.shape[1] != W.shape[1]:
        raise ShapeError(f"layer {layer}: adapter {pair.A.shape}x{pair.B.shape} does not compose with {W.shape}")
    return W + (pair.A @ pair.B) / pair.rank


def _as_batch(features: np.ndarray, n_in: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(features, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != n_in:
        raise ShapeError(f"layer encoder: expected {n_in} input features, got shape {np.shape(features)}")
    return x, single


def forward_cached(
    weights: NetworkWeights,
    features: np.ndarray,
    adapters: Mapping | None = None,
    dropout_masks: tuple[np.ndarray | None, np.ndarray | None] = (None, None),
) -> tuple[np.ndarray, np.ndarray, ForwardCache]:
    x, _ = _as_batch(features, weights.n_in)
    W2 = effective_weight(weights, "plan_hidden", adapters)
    W3 = effective_weight(weights, "plan_head", adapters)
    z1 = x @ weights.weight("encoder").T + weights.bias("encoder")
    h1 = np.maximum(z1, 0.0)
    if dropout_masks[0] is not None:
        h1 = h1 * dropout_masks[0]
    z2 = h1 @ W2.T + weights.bias("plan_hidden")
    h2 = np.maximum(z2, 0.0)
    if dropout_masks[1] is not None:
        h2 = h2 * dropout_masks[1]
    logits = h2 @ W3.T + weights.bias("plan_head")
    perception = h1 @ weights.weight("perception_head").T + weights.bias("perception_head")
    cache = ForwardCache(x, z1, h1, z2, h2, dropout_masks, {"plan_hidden": W2, "plan_head": W3})
    return logits, perception, cache


def forward(weights: NetworkWeights, features: np.ndarray, adapters: Mapping | None = None):
    """Logits over the M vocabulary entries and the perception outputs.

    Accepts one feature vector or a ``(batch, n_in)`` array; output rank
    follows the input.
    """
    logits, perception, _ = forward_cached(weights, features, adapters)
    if np.ndim(features) == 1:
        return logits[0], perception[0]
    return logits, perception


def _check_upstream(grad: np.ndarray, name: str) -> None:
    bad = ~np.isfinite(grad)
    if bad.any():
        idx = np.argwhere(bad)[0]
        raise NumericError(f"non-finite upstream gradient in {name} at output index {int(idx[-1])}")


def backward(
    weights: NetworkWeights,
    cache: ForwardCache,
    dlogits: np.ndarray,
    dperception: np.ndarray | None = None,
    adapters: Mapping | None = None,
) -> GradientSet:
    """Reverse-mode gradients of a loss summed over the batch.

    ``dlogits``/``dperception`` are the loss gradients at the two heads.
    With ``adapters`` given the base weights are treated as constants and
    only ``<layer>.A`` / ``<layer>.B`` gradients are returned.
    """
    n = cache.x.shape[0]
    dlogits = np.asarray(dlogits, dtype=float).reshape(n, -1)
    if dlogits.shape[1] != weights.n_out:
        raise ShapeError(f"layer plan_head: upstream gradient width {dlogits.shape[1]} != {weights.n_out}")
    _check_upstream(dlogits, "logits")
    if dperception is None:
        dperception = np.zeros((n, weights.n_perception))
    else:
        dperception = np.asarray(dperception, dtype=float).reshape(n, -1)
        if dperception.shape[1] != weights.n_perception:
            raise ShapeError("layer perception_head: upstream gradient width mismatch")
        _check_upstream(dperception, "perception")

    W2 = cache.effective["plan_hidden"]
    W3 = cache.effective["plan_head"]
    m1, m2 = cache.masks

    dW3 = dlogits.T @ cache.h2
    dh2 = dlogits @ W3
    if m2 is not None:
        dh2 = dh2 * m2
    dz2 = dh2 * (cache.z2 > 0)
    dW2 = dz2.T @ cache.h1

    if adapters is not None:
        grads: GradientSet = {}
        for layer, dW in (("plan_hidden", dW2), ("plan_head", dW3)):
            if layer in adapters:
                pair = adapters[layer]
                grads[f"{layer}.A"] = dW @ pair.B.T / pair.rank
                grads[f"{layer}.B"] = pair.A.T @ dW / pair.rank
        return grads

    dh1 = dz2 @ W2 + dperception @ weights.weight("perception_head")
    if m1 is not None:
        dh1 = dh1 * m1
    dz1 = dh1 * (cache.z1 > 0)
    return {
        "encoder.W": dz1.T @ cache.x,
        "encoder.b": dz1.sum(axis=0),
        "plan_hidden.W": dW2,
        "plan_hidden.b": dz2.sum(axis=0),
        "plan_head.W": dW3,
        "plan_head.b": dlogits.sum(axis=0),
        "perception_head.W": dperception.T @ cache.h1,
        "perception_head.b": dperception.sum(axis=0),
    }


def dropout_masks(rng: np.random.Generator, batch: int, hidden: int, rate: float):
    """Inverted-dropout masks for the two hidden activations."""
    if rate <= 0.0:
        return (None, None)
    keep = 1.0 - rate
    return tuple((rng.random((batch, hidden)) < keep) / keep for _ in range(2))


# --- optimizers ------------------------------------------------------------

def _congruent(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
    for key, g in grads.items():
        if key not in params:
            raise ShapeError(f"gradient for unknown parameter {key}")
        if np.shape(params[key]) != np.shape(g):
            raise ShapeError(f"parameter {key}: shape {np.shape(params[key])} vs gradient {np.shape(g)}")


def sgd_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], learning_rate: float) -> dict:
    """Plain gradient descent; returns new arrays, parameters without a gradient are copied."""
    _congruent(params, grads)
    return {k: (v - learning_rate * grads[k]) if k in grads else v.copy() for k, v in params.items()}


class Adam:
    """Adam with per-parameter state, updating a parameter dict in place."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        _congruent(params, grads)
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for key, g in grads.items():
            m = self.m.get(key)
            if m is None:
                m = self.m[key] = np.zeros_like(g)
                self.v[key] = np.zeros_like(g)
            v = self.v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[key] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# --- k-means ---------------------------------------------------------------

def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d = (points * points).sum(1)[:, None] - 2.0 * points @ centers.T + (centers * centers).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _hartigan_pass(points, labels, centers, counts) -> bool:
    """One sweep of single-point moves that strictly lower the total cost."""
    moved = False
    for i in range(len(points)):
        a = labels[i]
        if counts[a] <= 1:
            continue
        x = points[i]
        d = ((centers - x) ** 2).sum(1)
        gain_remove = counts[a] / (counts[a] - 1.0) * d[a]
        cost_add = counts / (counts + 1.0) * d
        cost_add[a] = np.inf
        b = int(np.argmin(cost_add))
        if cost_add[b] < gain_remove * (1.0 - 1e-12) - 1e-12:
            centers[a] = (centers[a] * counts[a] - x) / (counts[a] - 1)
            centers[b] = (centers[b] * counts[b] + x) / (counts[b] + 1)
            counts[a] -= 1
            counts[b] += 1
            labels[i] = b
            moved = True
    return moved


def kmeans(points: np.ndarray, M: int, seed: int, max_iter: int = 300) -> np.ndarray:
    """k-means++ seeding, Lloyd iterations, then Hartigan single-point moves.

    The result is a local optimum in the strong sense: no single point can be
    moved to another cluster (with centers recomputed) to lower the total
    squared distance.  Ties in assignment go to the lowest center index.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim != 2:
        X = X.reshape(len(X), -1)
    if M < 1:
        raise ConfigError("kmeans needs M >= 1")
    if len(np.unique(X, axis=0)) < M:
        raise ConfigError(f"kmeans needs at least M={M} distinct points, got {len(np.unique(X, axis=0))}")
    rng = np.random.default_rng(seed)
    n = len(X)

    centers = np.empty((M, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest = _sq_dists(X, centers[:1])[:, 0]
    for k in range(1, M):
        total = closest.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[k] = X[idx]
        closest = np.minimum(closest, _sq_dists(X, centers[k:k + 1])[:, 0])

    labels = np.full(n, -1)
    for _ in range(max_iter):
        new = np.argmin(_sq_dists(X, centers), axis=1)
        if np.array_equal(new, labels):
            break
        labels = new
        for k in range(M):
            members = X[labels == k]
            if len(members):
                centers[k] = members.mean(0)
            else:
                far = int(np.argmax(_sq_dists(X, centers).min(1)))
                centers[k] = X[far]
                labels[far] = k

    counts = np.bincount(labels, minlength=M).astype(float)
    for k in range(M):
        centers[k] = X[labels == k].mean(0)
    for _ in range(100):
        if not _hartigan_pass(X, labels, centers, counts):
            break
    for k in range(M):
        centers[k] = X[labels == k].mean(0)
    return centers


def kmeans_cost(points: np.ndarray, centers: np.ndarray) -> float:
    X = np.asarray(points, dtype=float).reshape(len(points), -1)
    return float(_sq_dists(X, centers).min(1).sum())


# --- checkpoints -------------------------------------------------------------

CHECKPOINT_VERSION = 1


def weights_to_document(weights: NetworkWeights) -> dict:
    return {
        "format_version": CHECKPOINT_VERSION,
        "shapes": {k: list(v.shape) for k, v in weights.params.items()},
        "params": {k: [float(x) for x in v.ravel()] for k, v in weights.params.items()},
    }


def weights_from_document(doc: Mapping) -> NetworkWeights:
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint format_version {doc.get('format_version')!r}")
    params = {}
    for key, shape in doc["shapes"].items():
        flat = np.array([float(x) for x in doc["params"][key]])
        if flat.size != int(np.prod(shape)):
            raise ShapeError(f"parameter {key}: {flat.size} values for shape {shape}")
        params[key] = flat.reshape(shape)
    weights = NetworkWeights(params)
    check_shapes(weights)
    return weights
