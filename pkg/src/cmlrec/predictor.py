"""Purchase-probability model over (distance, frequency, recency).

logit P(buy) = alpha + beta * phi + gamma_F * F_scaled + gamma_R * R_scaled

``phi`` is the target-space distance between the customer vector and the
movie; F and R are min-max scaled with bounds taken from the training rows.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import SingleClass, UnknownMovie
from .profiles import CustomerProfile, HistoryMatrix, to_days
from .text import RawMovie

logger = logging.getLogger(__name__)

# keeps predicted probabilities strictly inside (0, 1)
LOGIT_CLIP = 30.0


@dataclass(frozen=True)
class FeatureRow:
    customer_id: str
    movie_id: str
    phi: float
    F: int
    R: float
    label: int


@dataclass
class FeatureTable:
    """Columnar feature rows; ``customer``/``movie`` index the id lists."""

    customer_ids: List[str]
    movie_ids: List[str]
    customer: np.ndarray
    movie: np.ndarray
    phi: np.ndarray
    F: np.ndarray
    R: np.ndarray
    label: np.ndarray
    skipped: int = 0

    def __len__(self):
        return len(self.label)

    def __iter__(self):
        for c, m, phi, F, R, y in zip(self.customer, self.movie, self.phi, self.F, self.R, self.label):
            yield FeatureRow(self.customer_ids[c], self.movie_ids[m], float(phi), int(F), float(R), int(y))

    @property
    def X(self) -> np.ndarray:
        return np.column_stack([self.phi, self.F, self.R]).astype(np.float64)

    def subset(self, mask) -> "FeatureTable":
        return FeatureTable(self.customer_ids, self.movie_ids, self.customer[mask], self.movie[mask],
                            self.phi[mask], self.F[mask], self.R[mask], self.label[mask], self.skipped)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["customer_id", "movie_id", "phi", "F", "R", "label"])
            for r in self:
                writer.writerow([r.customer_id, r.movie_id, repr(r.phi), r.F, repr(r.R), r.label])

    @classmethod
    def from_csv(cls, path) -> "FeatureTable":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        customer_ids = sorted({r["customer_id"] for r in rows})
        movie_ids = sorted({r["movie_id"] for r in rows})
        ci = {c: i for i, c in enumerate(customer_ids)}
        mi = {m: i for i, m in enumerate(movie_ids)}
        return cls(
            customer_ids,
            movie_ids,
            np.array([ci[r["customer_id"]] for r in rows], dtype=np.int64),
            np.array([mi[r["movie_id"]] for r in rows], dtype=np.int64),
            np.array([float(r["phi"]) for r in rows]),
            np.array([int(r["F"]) for r in rows], dtype=np.int64),
            np.array([float(r["R"]) for r in rows]),
            np.array([int(r["label"]) for r in rows], dtype=np.int8),
        )


def build_feature_rows(
    profiles: Mapping[str, CustomerProfile],
    catalog: Mapping[str, RawMovie],
    movie_zs: Mapping[str, np.ndarray],
    delta: float = 0.005,
    lookback_days: float = 365.0,
    targets: Optional[Sequence[str]] = None,
) -> FeatureTable:
    """One row per (customer, target movie) where the customer bought at least
    one mapped movie strictly before the target's release.

    Customer vectors, F and R are all referenced to the target's release date.
    Combinations without eligible history are skipped and counted in
    ``FeatureTable.skipped``.
    """
    known = sorted(m for m in catalog if m in movie_zs)
    targets = sorted(targets) if targets is not None else known
    unknown = [m for m in targets if m not in movie_zs or m not in catalog]
    if unknown:
        raise UnknownMovie(f"targets without catalog entry or target vector: {unknown[:5]}")
    hm = HistoryMatrix(profiles, known)
    Z = np.vstack([np.asarray(movie_zs[m], dtype=np.float64) for m in known])
    col = {m: j for j, m in enumerate(known)}

    parts = {k: [] for k in ("customer", "movie", "phi", "F", "R", "label")}
    skipped = 0
    for t_idx, movie_id in enumerate(targets):
        ref = to_days(catalog[movie_id].release_date)
        vecs, eligible = hm.customer_vectors(Z, ref, delta)
        F, R = hm.freq_recency(ref, lookback_days)
        rows = np.flatnonzero(eligible)
        skipped += int((~eligible).sum())
        z_movie = np.asarray(movie_zs[movie_id], dtype=np.float64)
        phi = np.linalg.norm(vecs[rows] - z_movie, axis=1)
        bought = ~np.isnan(hm.times[rows, col[movie_id]])
        parts["customer"].append(rows)
        parts["movie"].append(np.full(len(rows), t_idx))
        parts["phi"].append(phi)
        parts["F"].append(F[rows])
        parts["R"].append(R[rows])
        parts["label"].append(bought.astype(np.int8))

    def cat(key, dtype):
        return np.concatenate(parts[key]).astype(dtype) if parts[key] else np.empty(0, dtype=dtype)

    return FeatureTable(
        hm.customer_ids, list(targets),
        cat("customer", np.int64), cat("movie", np.int64), cat("phi", np.float64),
        cat("F", np.int64), cat("R", np.float64), cat("label", np.int8), skipped,
    )


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def design_matrix(phi, F_scaled, R_scaled) -> np.ndarray:
    return np.column_stack([np.ones(len(phi)), phi, F_scaled, R_scaled])


def weighted_loss_and_grad(w, D, y, pos_weight=1.0, l2=0.0, free=None):
    """Class-weighted mean cross-entropy plus ``l2/2 * ||w[1:]||^2``.

    ``free`` masks which coefficients may move; frozen ones get zero gradient
    (the intercept is never penalized).
    """
    y = np.asarray(y, dtype=np.float64)
    s = np.where(y > 0, pos_weight, 1.0)
    x = D @ w
    ce = y * np.logaddexp(0.0, -x) + (1.0 - y) * np.logaddexp(0.0, x)
    penal = w.copy()
    penal[0] = 0.0
    loss = float((s * ce).sum() / s.sum() + 0.5 * l2 * penal @ penal)
    grad = D.T @ (s * (_sigmoid(x) - y)) / s.sum() + l2 * penal
    if free is not None:
        grad = np.where(free, grad, 0.0)
    return loss, grad


def _minmax(values):
    lo, hi = float(np.min(values)), float(np.max(values))
    return lo, hi


def _scale(values, lo, hi):
    if hi <= lo:
        return np.zeros(len(values))
    return np.clip((np.asarray(values, dtype=np.float64) - lo) / (hi - lo), 0.0, 1.0)


class PurchaseLogit(ClassifierMixin, BaseEstimator):
    """Class-weighted logistic regression on ``[phi, F, R]`` columns.

    Parameters
    ----------
    pos_weight : float or "balanced"
        Weight on positive rows; "balanced" uses #negatives / #positives.
    l2 : float
        Ridge penalty on the non-intercept coefficients.
    learning_rate : float
        Step size for preconditioned descent; 1.0 is always stable.
    epochs : int
        Passes over the data (full-batch steps when ``batch_size`` is None).
    batch_size : int or None
        Mini-batch size; None means full-batch gradient descent.
    tol : float
        Stop when the gradient's max-norm falls below this.
    use_distance : bool
        False freezes the distance coefficient at 0, giving the
        frequency/recency-only baseline.
    seed : int
        Shuffling seed for mini-batches.
    """

    def __init__(self, pos_weight="balanced", l2=1e-4, learning_rate=1.0, epochs=500,
                 batch_size=None, tol=1e-9, use_distance=True, seed=0):
        self.pos_weight = pos_weight
        self.l2 = l2
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.tol = tol
        self.use_distance = use_distance
        self.seed = seed

    def _design(self, X):
        return design_matrix(
            X[:, 0],
            _scale(X[:, 1], self.F_min_, self.F_max_),
            _scale(X[:, 2], self.R_min_, self.R_max_),
        )

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.shape[1] != 3:
            raise ValueError("expected columns [phi, F, R]")
        n_pos = int((y == 1).sum())
        n_neg = len(y) - n_pos
        if n_pos == 0 or n_neg == 0:
            raise SingleClass("training rows must contain both classes")
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = 3
        self.pos_weight_ = n_neg / n_pos if self.pos_weight == "balanced" else float(self.pos_weight)
        self.F_min_, self.F_max_ = _minmax(X[:, 1])
        self.R_min_, self.R_max_ = _minmax(X[:, 2])
        self.phi_mean_ = float(X[:, 0].mean())

        D = self._design(X)
        free = np.array([True, bool(self.use_distance), True, True])
        precond = self._preconditioner(D, y, free)
        w = np.zeros(4)
        rng = np.random.default_rng(self.seed)
        self.n_iter_ = 0
        for _ in range(self.epochs):
            if self.batch_size is not None:
                order = rng.permutation(len(y))
                for start in range(0, len(y), self.batch_size):
                    b = order[start:start + self.batch_size]
                    _, g = weighted_loss_and_grad(w, D[b], y[b], self.pos_weight_, self.l2, free)
                    w -= self.learning_rate * (precond @ g)
            _, g = weighted_loss_and_grad(w, D, y, self.pos_weight_, self.l2, free)
            self.n_iter_ += 1
            if np.max(np.abs(g)) < self.tol:
                break
            if self.batch_size is None:
                w -= self.learning_rate * (precond @ g)
        self.loss_ = weighted_loss_and_grad(w, D, y, self.pos_weight_, self.l2)[0]
        self._set_coef(w)
        return self

    def _preconditioner(self, D, y, free):
        """Inverse of the curvature bound ``D' S D / (4 sum S) + l2`` on the free coefficients.

        Logistic curvature never exceeds this matrix, so a unit step cannot
        overshoot; the minimizer is the same as for plain gradient descent.
        """
        s = np.where(y > 0, self.pos_weight_, 1.0)
        M = (D * s[:, None]).T @ D / (4.0 * s.sum())
        M[1:, 1:] += self.l2 * np.eye(3)
        idx = np.flatnonzero(free)
        P = np.zeros((4, 4))
        P[np.ix_(idx, idx)] = np.linalg.pinv(M[np.ix_(idx, idx)])
        return P

    def _set_coef(self, w):
        self.alpha_, self.beta_, self.gamma_F_, self.gamma_R_ = (float(v) for v in w)
        self.intercept_ = np.array([self.alpha_])
        self.coef_ = np.array([[self.beta_, self.gamma_F_, self.gamma_R_]])

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64, ensure_all_finite="allow-nan")
        X = X.copy()
        cold = np.isnan(X[:, 0])
        X[cold, 0] = self.phi_mean_
        w = np.array([self.alpha_, self.beta_, self.gamma_F_, self.gamma_R_])
        return self._design(X) @ w

    def predict_proba(self, X):
        p = _sigmoid(np.clip(self.decision_function(X), -LOGIT_CLIP, LOGIT_CLIP))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)

    def to_dict(self) -> Dict:
        check_is_fitted(self, "coef_")
        return {
            "format": "cmlrec-logistic",
            "version": 1,
            "alpha": self.alpha_,
            "beta": self.beta_,
            "gamma_F": self.gamma_F_,
            "gamma_R": self.gamma_R_,
            "pos_weight": self.pos_weight_,
            "scaling": {"F_min": self.F_min_, "F_max": self.F_max_, "R_min": self.R_min_, "R_max": self.R_max_},
            "phi_mean": self.phi_mean_,
            "config": self.get_params(),
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "PurchaseLogit":
        model = cls(**obj.get("config", {}))
        model.classes_ = np.array([0, 1])
        model.n_features_in_ = 3
        model.pos_weight_ = obj["pos_weight"]
        sc = obj["scaling"]
        model.F_min_, model.F_max_, model.R_min_, model.R_max_ = sc["F_min"], sc["F_max"], sc["R_min"], sc["R_max"]
        model.phi_mean_ = obj["phi_mean"]
        model._set_coef([obj["alpha"], obj["beta"], obj["gamma_F"], obj["gamma_R"]])
        return model

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "PurchaseLogit":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def train_logistic(rows: FeatureTable, config: Optional[Mapping] = None) -> PurchaseLogit:
    return PurchaseLogit(**(config or {})).fit(rows.X, rows.label)


def predict(model: PurchaseLogit, phi: float, F: float, R: float) -> float:
    """Purchase probability for one customer/movie combination (raw F and R)."""
    return float(model.predict_proba(np.array([[phi, F, R]], dtype=np.float64))[0, 1])


def sweep_pos_weight(train: FeatureTable, holdout: FeatureTable, weights: Sequence[float],
                     config: Optional[Mapping] = None, threshold: float = 0.5):
    """Grid over class weights, scored on a holdout by AUC, precision and recall."""
    from .evaluation import auc, precision_recall_at_threshold

    out = []
    for pw in weights:
        model = train_logistic(train, {**(config or {}), "pos_weight": pw})
        scores = model.predict_proba(holdout.X)[:, 1]
        pr = precision_recall_at_threshold(list(zip(scores, holdout.label)), threshold)
        out.append({"pos_weight": pw, "auc": auc(list(zip(scores, holdout.label))),
                    "precision": pr.precision, "recall": pr.recall})
    return out
