"""Ranking metrics, comparable-movie lists and the 2-D target-space projection."""
from __future__ import annotations

import math
from datetime import date
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import rankdata

from .errors import EmptySegment, SingleClass
from .profiles import CustomerProfile, as_datetime


def _unpack(scored, labels=None):
    if labels is None:
        scored = list(scored)
        scores = np.array([s for s, _ in scored], dtype=np.float64)
        labels = np.array([y for _, y in scored], dtype=np.int64)
    else:
        scores = np.asarray(scored, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
    return scores, labels


def auc(scored, labels=None) -> float:
    """Probability that a random positive outscores a random negative (ties count 1/2).

    Accepts either a sequence of ``(score, label)`` pairs or parallel
    ``scores, labels`` arrays. Computed from average ranks (Mann-Whitney U).
    """
    scores, labels = _unpack(scored, labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC needs at least one positive and one negative")
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


class PrecisionRecall(NamedTuple):
    precision: float
    recall: float
    no_predicted_positives: bool


def precision_recall_at_threshold(scored, threshold: float, labels=None) -> PrecisionRecall:
    """Rows with ``score >= threshold`` are predicted positive.

    With nothing predicted positive, precision is reported as 1.0 and the
    flag is set. Recall is NaN when the set has no positives.
    """
    scores, labels = _unpack(scored, labels)
    predicted = scores >= threshold
    tp = int((predicted & (labels == 1)).sum())
    n_pred = int(predicted.sum())
    n_pos = int((labels == 1).sum())
    precision = tp / n_pred if n_pred else 1.0
    recall = tp / n_pos if n_pos else math.nan
    return PrecisionRecall(precision, recall, n_pred == 0)


def ranking_loss(per_customer: Mapping[str, Sequence[Tuple[float, int]]]) -> float:
    """Mean over customers of the fraction of mis-ordered positive/negative
    pairs (1 - AUC); customers lacking either class are ignored."""
    losses = []
    for scored in per_customer.values():
        scores, labels = _unpack(scored)
        if labels.min(initial=1) == 0 and labels.max(initial=0) == 1:
            losses.append(1.0 - auc(scores, labels))
    if not losses:
        raise SingleClass("no customer has both positive and negative rows")
    return float(np.mean(losses))


CompsList = List[Tuple[str, int]]


def bubble_up(customers: Iterable[str], profiles: Mapping[str, CustomerProfile], release_date,
              exclude: str, k: int) -> CompsList:
    """Top-k movies by how many of ``customers`` bought them before ``release_date``.

    Ties go to the smaller movie id.
    """
    ref = as_datetime(release_date)
    counts: Dict[str, int] = {}
    for cust in customers:
        profile = profiles.get(cust)
        if profile is None:
            continue
        for movie_id in {m for m, ts in profile.history if ts < ref}:
            if movie_id != exclude:
                counts[movie_id] = counts.get(movie_id, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:k]


def comparable_movies(predictions: Mapping[str, float], profiles: Mapping[str, CustomerProfile],
                      target_id: str, release_date, segment_fraction: float = 0.05, k: int = 10) -> CompsList:
    """Comps for a target from the customers most likely to buy it.

    The segment is the top ``ceil(segment_fraction * N)`` customers by
    predicted probability (ties by customer id).
    """
    if not 0 < segment_fraction <= 1:
        raise ValueError("segment_fraction must be in (0, 1]")
    size = math.ceil(segment_fraction * len(predictions))
    if size == 0:
        raise EmptySegment("no predictions to select a segment from")
    segment = sorted(predictions, key=lambda c: (-predictions[c], c))[:size]
    return bubble_up(segment, profiles, release_date, target_id, k)


def actual_comparable_movies(profiles: Mapping[str, CustomerProfile], target_id: str, release_date,
                             k: int = 10) -> CompsList:
    """Comps from the customers who really bought the target."""
    buyers = [c for c, p in profiles.items() if any(m == target_id for m, _ in p.history)]
    if not buyers:
        raise EmptySegment(f"nobody bought {target_id!r}")
    return bubble_up(buyers, profiles, release_date, target_id, k)


def _ids(comps) -> List[str]:
    return [c[0] if isinstance(c, tuple) else c for c in comps]


def comps_overlap(predicted, actual, k: int = 10) -> int:
    """Size of the intersection of the two top-k id sets."""
    return len(set(_ids(predicted)[:k]) & set(_ids(actual)[:k]))


def project_2d(movie_zs: Mapping[str, np.ndarray]) -> List[Tuple[str, float, float]]:
    """Project centered target vectors onto their top two principal directions.

    Each direction's sign is fixed so that its largest-magnitude loading is
    positive.
    """
    ids = list(movie_zs)
    if not ids:
        return []
    Z = np.vstack([np.asarray(movie_zs[m], dtype=np.float64) for m in ids])
    Z = Z - Z.mean(axis=0)
    coords = np.zeros((len(ids), 2))
    if np.any(Z):
        _, s, vt = np.linalg.svd(Z, full_matrices=False)
        for j in range(min(2, len(s))):
            if s[j] <= 0:
                continue
            v = vt[j]
            if v[np.argmax(np.abs(v))] < 0:
                v = -v
            coords[:, j] = Z @ v
    return [(m, float(x), float(y)) for m, (x, y) in zip(ids, coords)]


def cluster_purity(points, truth, n_clusters: int, seed: int = 0) -> float:
    """k-means on ``points`` then the fraction of points in their cluster's majority class."""
    from sklearn.cluster import KMeans

    points = np.asarray(points, dtype=np.float64)
    truth = np.asarray(truth)
    assign = KMeans(n_clusters=n_clusters, n_init=10, random_state=seed).fit_predict(points)
    hits = 0
    for c in np.unique(assign):
        _, counts = np.unique(truth[assign == c], return_counts=True)
        hits += counts.max()
    return hits / len(points)


def write_projection_csv(path, projection, groups: Optional[Mapping[str, object]] = None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("movie_id,x,y" + (",group" if groups else "") + "\n")
        for m, x, y in projection:
            fh.write(f"{m},{x!r},{y!r}" + (f",{groups.get(m, '')}" if groups else "") + "\n")


_PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]


def write_projection_svg(path, projection, groups: Optional[Mapping[str, object]] = None,
                         size: int = 480, pad: int = 20):
    if projection:
        xs = np.array([p[1] for p in projection])
        ys = np.array([p[2] for p in projection])
    else:
        xs = ys = np.zeros(1)
    span = max(xs.max() - xs.min(), ys.max() - ys.min(), 1e-12)
    scale = (size - 2 * pad) / span
    keys = sorted({str(groups.get(m, "")) for m, _, _ in projection}) if groups else []
    color = {g: _PALETTE[i % len(_PALETTE)] for i, g in enumerate(keys)}
    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">',
             f'<rect width="{size}" height="{size}" fill="white"/>']
    for m, x, y in projection:
        cx = pad + (x - xs.min()) * scale
        cy = size - pad - (y - ys.min()) * scale
        fill = color.get(str(groups.get(m, "")), "#333") if groups else "#333"
        lines.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="3" fill="{fill}"><title>{m}</title></circle>')
    lines.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
