"""Skip-gram token embeddings and per-movie averaging."""
from __future__ import annotations

import logging
import struct
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import DataError, EmptyCorpus, NoKnownTokens

logger = logging.getLogger(__name__)

MAGIC = b"CMLE"
FORMAT_VERSION = 1


@dataclass
class EmbeddingTable:
    dim: int
    tokens: List[str]
    counts: List[int]
    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.shape != (len(self.tokens), self.dim):
            raise DataError(
                f"vector block has shape {self.vectors.shape}, expected ({len(self.tokens)}, {self.dim})"
            )
        self._index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self._index

    def __getitem__(self, token) -> np.ndarray:
        return self.vectors[self._index[token]]

    def index(self, token) -> int:
        return self._index[token]

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<III", FORMAT_VERSION, self.dim, len(self.tokens)))
            for token, count, vec in zip(self.tokens, self.counts, self.vectors):
                raw = token.encode("utf-8")
                fh.write(struct.pack("<IQ", len(raw), count))
                fh.write(raw)
                fh.write(np.ascontiguousarray(vec, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "EmbeddingTable":
        with open(path, "rb") as fh:
            if fh.read(4) != MAGIC:
                raise DataError(f"{path}: not an embedding table")
            version, dim, n = struct.unpack("<III", fh.read(12))
            if version != FORMAT_VERSION:
                raise DataError(f"{path}: unsupported embedding format version {version}")
            tokens, counts = [], []
            vectors = np.empty((n, dim), dtype=np.float64)
            for i in range(n):
                size, count = struct.unpack("<IQ", fh.read(12))
                tokens.append(fh.read(size).decode("utf-8"))
                counts.append(count)
                vectors[i] = np.frombuffer(fh.read(8 * dim), dtype="<f8")
        return cls(dim=dim, tokens=tokens, counts=counts, vectors=vectors)

    def save_text(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for token, vec in zip(self.tokens, self.vectors):
                fh.write(token + " " + " ".join(repr(float(x)) for x in vec) + "\n")


@dataclass
class MovieEmbedding:
    movie_id: str
    e: np.ndarray


def build_vocab(sequences: Iterable[Sequence[str]], min_count: int):
    counts = Counter(t for seq in sequences for t in seq)
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return kept, [counts[t] for t in kept]


def _epoch_pairs(ids, sentence, window, rng):
    """All (center, context) index pairs for one pass, with word2vec's reduced window."""
    reach = rng.integers(1, window + 1, size=len(ids))
    centers, contexts = [], []
    for off in range(1, window + 1):
        if off >= len(ids):
            break
        same = sentence[:-off] == sentence[off:]
        fwd = same & (reach[:-off] >= off)
        centers.append(ids[:-off][fwd])
        contexts.append(ids[off:][fwd])
        bwd = same & (reach[off:] >= off)
        centers.append(ids[off:][bwd])
        contexts.append(ids[:-off][bwd])
    if not centers:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(centers), np.concatenate(contexts)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class SkipGramEmbedding(TransformerMixin, BaseEstimator):
    """Skip-gram with negative sampling over token sequences.

    ``fit`` learns one vector per vocabulary token; ``transform`` maps each
    token sequence to the unweighted mean of its in-vocabulary token vectors.

    Parameters
    ----------
    dim : int
        Embedding width.
    window : int
        Maximum context distance; the effective window is drawn uniformly in
        ``[1, window]`` per center token.
    negatives : int
        Negative samples per positive pair, drawn from unigram counts ** 0.75.
    epochs : int
    learning_rate : float
        Initial step, decayed linearly to ``min_learning_rate``.
    min_count : int
        Tokens seen fewer times are dropped from the vocabulary.
    batch_size : int
        Number of (center, context) pairs per vectorized update.
    seed : int
    """

    def __init__(
        self,
        dim=64,
        window=5,
        negatives=5,
        epochs=5,
        learning_rate=0.025,
        min_learning_rate=1e-4,
        min_count=2,
        batch_size=128,
        seed=0,
    ):
        self.dim = dim
        self.window = window
        self.negatives = negatives
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.min_learning_rate = min_learning_rate
        self.min_count = min_count
        self.batch_size = batch_size
        self.seed = seed

    def fit(self, X, y=None):
        if self.dim < 2:
            raise ValueError("dim must be at least 2")
        sequences = [list(s) for s in X]
        tokens, counts = build_vocab(sequences, self.min_count)
        if not tokens:
            raise EmptyCorpus("no token survives min_count filtering")
        index = {t: i for i, t in enumerate(tokens)}

        ids, sentence = [], []
        for sid, seq in enumerate(sequences):
            kept = [index[t] for t in seq if t in index]
            ids.extend(kept)
            sentence.extend([sid] * len(kept))
        ids = np.asarray(ids, dtype=np.int64)
        sentence = np.asarray(sentence, dtype=np.int64)

        rng = np.random.default_rng(self.seed)
        n, d = len(tokens), self.dim
        w_in = (rng.random((n, d)) - 0.5) / d
        w_out = np.zeros((n, d))

        noise = np.asarray(counts, dtype=np.float64) ** 0.75
        noise_cdf = np.cumsum(noise / noise.sum())
        noise_cdf[-1] = 1.0

        # The decay schedule needs the pass sizes up front; they are drawn here
        # and consumed in order below.
        passes = [_epoch_pairs(ids, sentence, self.window, rng) for _ in range(self.epochs)]
        total = sum(max(1, -(-len(c) // self.batch_size)) for c, _ in passes)
        step = 0
        self.loss_history_ = []
        for centers, contexts in passes:
            order = rng.permutation(len(centers))
            centers, contexts = centers[order], contexts[order]
            epoch_loss, seen = 0.0, 0
            for start in range(0, len(centers), self.batch_size):
                lr = self.learning_rate - (self.learning_rate - self.min_learning_rate) * step / total
                step += 1
                c = centers[start:start + self.batch_size]
                o = contexts[start:start + self.batch_size]
                neg = np.searchsorted(noise_cdf, rng.random((len(c), self.negatives)), side="right")
                neg = np.minimum(neg, n - 1)

                u = w_in[c]
                v = w_out[o]
                nv = w_out[neg]
                pos_score = _sigmoid(np.einsum("ij,ij->i", u, v))
                neg_score = _sigmoid(np.einsum("ikj,ij->ik", nv, u))
                epoch_loss -= np.log(pos_score + 1e-12).sum() + np.log(1.0 - neg_score + 1e-12).sum()
                seen += len(c)

                g_pos = (1.0 - pos_score) * lr
                g_neg = -neg_score * lr
                du = g_pos[:, None] * v + np.einsum("ik,ikj->ij", g_neg, nv)
                np.add.at(w_out, o, g_pos[:, None] * u)
                np.add.at(w_out, neg.ravel(), (g_neg[:, :, None] * u[:, None, :]).reshape(-1, d))
                np.add.at(w_in, c, du)
            self.loss_history_.append(epoch_loss / max(seen, 1))
            logger.debug("skip-gram epoch loss %.5f", self.loss_history_[-1])

        self.table_ = EmbeddingTable(dim=d, tokens=tokens, counts=counts, vectors=w_in)
        return self

    def transform(self, X):
        check_is_fitted(self, "table_")
        return np.vstack([embed_movie(seq, self.table_).e for seq in X])


def train_embedding(sequences, config: Optional[Dict] = None) -> EmbeddingTable:
    """Functional wrapper: ``config`` keys mirror :class:`SkipGramEmbedding` params."""
    model = SkipGramEmbedding(**(config or {}))
    return model.fit(sequences).table_


def embed_movie(sequence: Sequence[str], table: EmbeddingTable, movie_id: str = "") -> MovieEmbedding:
    """Mean of the vectors of in-vocabulary tokens; unknown tokens are skipped."""
    rows = [table.index(t) for t in sequence if t in table]
    if not rows:
        raise NoKnownTokens(f"movie {movie_id!r}: no token is in the embedding vocabulary")
    return MovieEmbedding(movie_id=movie_id, e=table.vectors[rows].mean(axis=0))


def cosine(a, b) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))
