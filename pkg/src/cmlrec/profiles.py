"""Time-discounted customer vectors and frequency/recency features.

A customer's target-space position is the exponentially discounted mean of
the target vectors of movies bought strictly before a reference date (the
release date of the movie being scored). Ages are measured in days.
"""
from __future__ import annotations

from dataclasses import dataclass
from datetime import date, datetime, time
from typing import Dict, Iterable, List, Mapping, NamedTuple, Sequence, Tuple

import numpy as np

from .data import Transaction, histories
from .errors import EmptyEligibleHistory

EPOCH = datetime(1970, 1, 1)
SECONDS_PER_DAY = 86400.0


def as_datetime(value) -> datetime:
    if isinstance(value, datetime):
        return value
    if isinstance(value, date):
        return datetime.combine(value, time())
    raise TypeError(f"expected date or datetime, got {type(value).__name__}")


def to_days(value) -> float:
    """Days since 1970-01-01 as a float."""
    return (as_datetime(value) - EPOCH).total_seconds() / SECONDS_PER_DAY


@dataclass
class CustomerProfile:
    customer_id: str
    history: List[Tuple[str, datetime]]

    def __post_init__(self):
        self.history = sorted(self.history, key=lambda h: (h[1], h[0]))

    def before(self, reference) -> List[Tuple[str, datetime]]:
        ref = as_datetime(reference)
        return [h for h in self.history if h[1] < ref]


@dataclass
class CustomerVector:
    customer_id: str
    z: np.ndarray
    reference_date: date


class FreqRecency(NamedTuple):
    F: int
    R: float


def build_profiles(transactions: Iterable[Transaction]) -> Dict[str, CustomerProfile]:
    return {
        cust: CustomerProfile(cust, list(bought.items()))
        for cust, bought in sorted(histories(transactions).items())
    }


def discount_weights(ages, delta):
    """exp(-delta * age), shifted by the youngest age so the largest weight is 1."""
    ages = np.asarray(ages, dtype=np.float64)
    return np.exp(-delta * (ages - ages.min()))


def customer_vector(profile: CustomerProfile, movie_zs: Mapping[str, np.ndarray], delta: float,
                    reference_date) -> CustomerVector:
    ref = as_datetime(reference_date)
    eligible = [(m, ts) for m, ts in profile.before(ref) if m in movie_zs]
    if not eligible:
        raise EmptyEligibleHistory(f"customer {profile.customer_id!r} has no purchase before {ref.date()}")
    ages = [(ref - ts).total_seconds() / SECONDS_PER_DAY for _, ts in eligible]
    w = discount_weights(ages, delta)
    Z = np.vstack([np.asarray(movie_zs[m], dtype=np.float64) for m, _ in eligible])
    z = (w[:, None] * Z).sum(axis=0) / w.sum()
    ref_date = reference_date.date() if isinstance(reference_date, datetime) else reference_date
    return CustomerVector(profile.customer_id, z, ref_date)


def freq_recency(profile: CustomerProfile, reference_date, lookback_days: float = 365.0) -> FreqRecency:
    """Purchases in ``[ref - lookback, ref)`` and days since the latest of them.

    Without such a purchase recency is capped at ``lookback_days``.
    """
    ref = as_datetime(reference_date)
    ages = [(ref - ts).total_seconds() / SECONDS_PER_DAY for _, ts in profile.history if ts < ref]
    in_window = [a for a in ages if a <= lookback_days]
    if not in_window:
        return FreqRecency(0, float(lookback_days))
    return FreqRecency(len(in_window), float(min(in_window)))


class HistoryMatrix:
    """Dense customers x movies matrix of first-purchase times (days, NaN if never bought).

    Used for scoring every customer against a reference date in one shot.
    """

    def __init__(self, profiles: Mapping[str, CustomerProfile], movie_ids: Sequence[str]):
        self.customer_ids = sorted(profiles)
        self.movie_ids = list(movie_ids)
        col = {m: j for j, m in enumerate(self.movie_ids)}
        self.times = np.full((len(self.customer_ids), len(self.movie_ids)), np.nan)
        # purchases of movies outside ``movie_ids`` still count toward frequency/recency
        self.extra: List[np.ndarray] = []
        for i, cust in enumerate(self.customer_ids):
            extra = []
            for m, ts in profiles[cust].history:
                j = col.get(m)
                if j is None:
                    extra.append(to_days(ts))
                else:
                    self.times[i, j] = to_days(ts)
            self.extra.append(np.asarray(extra))

    def customer_vectors(self, Z: np.ndarray, reference_days: float, delta: float):
        """Returns ``(vectors, eligible)``; rows with ``eligible == False`` are NaN."""
        ages = reference_days - self.times
        mask = ages > 0
        eligible = mask.any(axis=1)
        safe = np.where(mask, ages, np.inf)
        youngest = safe.min(axis=1, keepdims=True, initial=np.inf)
        youngest = np.where(np.isfinite(youngest), youngest, 0.0)
        w = np.where(mask, np.exp(-delta * (np.where(mask, ages, 0.0) - youngest)), 0.0)
        total = w.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            vecs = (w @ Z) / total
        vecs[~eligible] = np.nan
        return vecs, eligible

    def freq_recency(self, reference_days: float, lookback_days: float):
        ages = reference_days - self.times
        in_window = (ages > 0) & (ages <= lookback_days)
        F = in_window.sum(axis=1).astype(np.int64)
        R = np.where(in_window, ages, np.inf).min(axis=1, initial=np.inf)
        for i, extra in enumerate(self.extra):
            if len(extra):
                a = reference_days - extra
                hit = a[(a > 0) & (a <= lookback_days)]
                F[i] += len(hit)
                if len(hit):
                    R[i] = min(R[i], hit.min())
        R = np.where(np.isfinite(R), R, float(lookback_days))
        return F, R
