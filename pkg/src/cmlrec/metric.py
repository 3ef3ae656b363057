"""Siamese feed-forward mapping from embedding space to target space.

One parameter set serves both branches of every pair; the pair is pushed
through the network as a stacked batch and the gradients from both halves
accumulate into the same weights.
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import DataError, DegenerateDataset, DimensionMismatch, MissingEmbedding

logger = logging.getLogger(__name__)

MAGIC = b"CMLN"
FORMAT_VERSION = 1


@dataclass
class MetricNet:
    weights: List[np.ndarray]  # (fan_in, fan_out) each
    biases: List[np.ndarray]
    max_norm: Optional[float] = None

    @property
    def layer_dims(self) -> List[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self) -> "MetricNet":
        return MetricNet([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.max_norm)

    def save(self, path):
        dims = self.layer_dims
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<II", FORMAT_VERSION, len(dims)))
            fh.write(struct.pack(f"<{len(dims)}I", *dims))
            fh.write(struct.pack("<d", self.max_norm or 0.0))
            for w, b in zip(self.weights, self.biases):
                fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
                fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "MetricNet":
        with open(path, "rb") as fh:
            if fh.read(4) != MAGIC:
                raise DataError(f"{path}: not a metric network file")
            version, n = struct.unpack("<II", fh.read(8))
            if version != FORMAT_VERSION:
                raise DataError(f"{path}: unsupported network format version {version}")
            dims = struct.unpack(f"<{n}I", fh.read(4 * n))
            (max_norm,) = struct.unpack("<d", fh.read(8))
            weights, biases = [], []
            for fan_in, fan_out in zip(dims[:-1], dims[1:]):
                w = np.frombuffer(fh.read(8 * fan_in * fan_out), dtype="<f8").reshape(fan_in, fan_out)
                b = np.frombuffer(fh.read(8 * fan_out), dtype="<f8")
                weights.append(w.astype(np.float64))
                biases.append(b.astype(np.float64))
        return cls(weights, biases, max_norm or None)


@dataclass
class TrainConfig:
    margin: float = 1.0
    batch_size: int = 64
    epochs: int = 10
    learning_rate: float = 0.05
    seed: int = 0
    init_scale: Optional[float] = None
    hidden_dims: Sequence[int] = (64,)
    output_dim: int = 32
    max_norm: Optional[float] = None

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")


def init_net(layer_dims: Sequence[int], rng, init_scale=None, max_norm=None) -> MetricNet:
    """Uniform init in [-s, s]; s defaults to sqrt(6 / (fan_in + fan_out)) per layer."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        s = init_scale if init_scale is not None else np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-s, s, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MetricNet(weights, biases, max_norm)


def _forward(net: MetricNet, x: np.ndarray):
    """Returns the output plus the per-layer inputs and pre-activations needed by backprop."""
    inputs, pre = [], []
    a = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(a)
        h = a @ w + b
        pre.append(h)
        a = np.maximum(h, 0.0) if i < last else h
    raw = a
    if net.max_norm:
        norms = np.linalg.norm(raw, axis=1, keepdims=True)
        a = raw * np.minimum(1.0, net.max_norm / np.maximum(norms, 1e-300))
    return a, (inputs, pre, raw)


def _backward(net: MetricNet, cache, dz: np.ndarray):
    inputs, pre, raw = cache
    if net.max_norm:
        norms = np.linalg.norm(raw, axis=1, keepdims=True)
        clipped = (norms > net.max_norm).ravel()
        if clipped.any():
            dz = dz.copy()
            r, n = raw[clipped], norms[clipped]
            g = dz[clipped]
            unit = r / n
            dz[clipped] = net.max_norm / n * (g - unit * np.sum(unit * g, axis=1, keepdims=True))
    grads_w = [None] * len(net.weights)
    grads_b = [None] * len(net.weights)
    dh = dz
    for i in range(len(net.weights) - 1, -1, -1):
        grads_w[i] = inputs[i].T @ dh
        grads_b[i] = dh.sum(axis=0)
        if i:
            dh = (dh @ net.weights[i].T) * (pre[i - 1] > 0)
    return grads_w, grads_b


def forward(net: MetricNet, e) -> np.ndarray:
    """Map one embedding (1-D) or a batch (2-D, one per row) into target space."""
    e = np.asarray(e, dtype=np.float64)
    single = e.ndim == 1
    x = e[None, :] if single else e
    if x.ndim != 2 or x.shape[1] != net.layer_dims[0]:
        raise DimensionMismatch(f"expected input width {net.layer_dims[0]}, got shape {e.shape}")
    z, _ = _forward(net, x)
    return z[0] if single else z


def distance(net: MetricNet, e_a, e_b) -> float:
    return float(np.linalg.norm(forward(net, e_a) - forward(net, e_b)))


def contrastive_loss(z1, z2, label, margin=1.0) -> float:
    """``y * d**2 + (1 - y) * max(0, margin - d)**2`` with ``d = ||z1 - z2||``."""
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    if z1.shape != z2.shape:
        raise DimensionMismatch(f"vector shapes differ: {z1.shape} vs {z2.shape}")
    d = float(np.linalg.norm(z1 - z2))
    if label:
        return d * d
    return max(0.0, margin - d) ** 2


def batch_loss_and_grad(net: MetricNet, e_a, e_b, y, margin) -> Tuple[float, List[np.ndarray], List[np.ndarray]]:
    """Mean contrastive loss over a batch and its gradient w.r.t. every parameter."""
    n = len(y)
    z, cache = _forward(net, np.vstack([e_a, e_b]))
    diff = z[:n] - z[n:]
    d = np.linalg.norm(diff, axis=1)
    y = np.asarray(y, dtype=np.float64)
    hinge = np.maximum(0.0, margin - d)
    loss = float(np.mean(y * d * d + (1.0 - y) * hinge * hinge))

    # d(loss_i)/d(diff_i): 2*diff for positives, -2*(m - d)*diff/d for negatives inside the margin
    safe_d = np.where(d > 0, d, 1.0)
    coef = np.where(y > 0, 2.0, np.where(d > 0, -2.0 * hinge / safe_d, 0.0)) / n
    g = coef[:, None] * diff
    gw, gb = _backward(net, cache, np.vstack([g, -g]))
    return loss, gw, gb


def _validate_pairs(y):
    y = np.asarray(y)
    if not (y == 1).any() or not (y == 0).any():
        raise DegenerateDataset("pair set needs both positive and negative rows")


def fit_indexed(E, idx_a, idx_b, y, config: TrainConfig, net: Optional[MetricNet] = None):
    """Mini-batch SGD on pairs given as row indices into the embedding matrix ``E``.

    Returns the trained network and the per-epoch mean training loss.
    """
    E = np.asarray(E, dtype=np.float64)
    idx_a = np.asarray(idx_a)
    idx_b = np.asarray(idx_b)
    y = np.asarray(y, dtype=np.float64)
    _validate_pairs(y)
    rng = np.random.default_rng(config.seed)
    if net is None:
        dims = [E.shape[1], *config.hidden_dims, config.output_dim]
        net = init_net(dims, rng, config.init_scale, config.max_norm)
    elif net.layer_dims[0] != E.shape[1]:
        raise DimensionMismatch("network input width does not match embeddings")
    history = []
    lr = config.learning_rate
    for epoch in range(config.epochs):
        order = rng.permutation(len(y))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            loss, gw, gb = batch_loss_and_grad(net, E[idx_a[batch]], E[idx_b[batch]], y[batch], config.margin)
            total += loss * len(batch)
            for w, g in zip(net.weights, gw):
                w -= lr * g
            for b, g in zip(net.biases, gb):
                b -= lr * g
        history.append(total / len(y))
        logger.info("metric epoch %d: mean contrastive loss %.5f", epoch + 1, history[-1])
    return net, history


def train_metric(pairs, embeddings: Mapping[str, np.ndarray], config: Optional[TrainConfig] = None):
    """Train the mapping on a :class:`~cmlrec.pairs.PairSet`.

    ``embeddings`` maps movie id to its embedded vector. Returns
    ``(net, per_epoch_loss)``.
    """
    config = config or TrainConfig()
    if not len(pairs):
        raise DegenerateDataset("empty pair set")
    used = np.unique(np.concatenate([pairs.movie_a, pairs.movie_b]))
    missing = sorted(pairs.movie_ids[i] for i in used if pairs.movie_ids[i] not in embeddings)
    if missing:
        raise MissingEmbedding(f"no embedding for movies {missing[:5]}")
    remap = np.full(len(pairs.movie_ids), -1)
    remap[used] = np.arange(len(used))
    E = np.vstack([np.asarray(embeddings[pairs.movie_ids[i]], dtype=np.float64) for i in used])
    return fit_indexed(E, remap[pairs.movie_a], remap[pairs.movie_b], pairs.label, config)


class SiameseMetric(TransformerMixin, BaseEstimator):
    """Learns the embedding -> target-space mapping with a contrastive loss.

    ``fit`` takes one row per pair with the two embeddings appended side by
    side (``X.shape == (n_pairs, 2 * d_e)``) and a 0/1 co-purchase label.
    ``transform`` maps embeddings (``(n, d_e)``) to target vectors.
    """

    def __init__(
        self,
        hidden_dims=(64,),
        output_dim=32,
        margin=1.0,
        batch_size=64,
        epochs=10,
        learning_rate=0.05,
        init_scale=None,
        max_norm=None,
        seed=0,
    ):
        self.hidden_dims = hidden_dims
        self.output_dim = output_dim
        self.margin = margin
        self.batch_size = batch_size
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.init_scale = init_scale
        self.max_norm = max_norm
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(
            margin=self.margin,
            batch_size=self.batch_size,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            seed=self.seed,
            init_scale=self.init_scale,
            hidden_dims=tuple(self.hidden_dims),
            output_dim=self.output_dim,
            max_norm=self.max_norm,
        )

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        if X.shape[1] % 2:
            raise DimensionMismatch("pair rows must hold two embeddings of equal width")
        d = X.shape[1] // 2
        n = len(X)
        E = np.vstack([X[:, :d], X[:, d:]])
        idx = np.arange(n)
        return self.fit_indexed(E, idx, idx + n, y)

    def fit_indexed(self, E, idx_a, idx_b, y):
        """Like ``fit`` but pairs reference rows of a shared embedding matrix."""
        self.net_, self.loss_history_ = fit_indexed(E, idx_a, idx_b, y, self._config())
        self.n_features_in_ = self.net_.layer_dims[0]
        return self

    def transform(self, X):
        check_is_fitted(self, "net_")
        X = check_array(X, dtype=np.float64)
        return forward(self.net_, X)

    def pair_distance(self, E_a, E_b) -> np.ndarray:
        check_is_fitted(self, "net_")
        return np.linalg.norm(self.transform(E_a) - self.transform(E_b), axis=1)
