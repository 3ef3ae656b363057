"""Siamese training pairs from purchase histories.

Each customer's purchased movies are crossed with the whole catalog; a row
``(a, b)`` survives only when ``a`` was released strictly before ``b``, and is
labeled 1 when the customer also bought ``b``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterator, List, Mapping, Sequence

import numpy as np

from .data import Transaction, histories
from .errors import NoPositives, UnknownMovie
from .text import RawMovie


@dataclass(frozen=True)
class PairInstance:
    customer_id: str
    movie_a: str
    movie_b: str
    label: int


@dataclass
class PairSet:
    """Columnar pair rows. ``movie_a``/``movie_b``/``customer`` index into
    ``movie_ids``/``customer_ids``."""

    movie_ids: List[str]
    customer_ids: List[str]
    customer: np.ndarray
    movie_a: np.ndarray
    movie_b: np.ndarray
    label: np.ndarray

    def __len__(self):
        return len(self.label)

    def __iter__(self) -> Iterator[PairInstance]:
        for c, a, b, y in zip(self.customer, self.movie_a, self.movie_b, self.label):
            yield PairInstance(self.customer_ids[c], self.movie_ids[a], self.movie_ids[b], int(y))

    def rows(self) -> List[PairInstance]:
        return list(self)

    @property
    def n_positive(self) -> int:
        return int(self.label.sum())

    def take(self, idx) -> "PairSet":
        return PairSet(
            self.movie_ids,
            self.customer_ids,
            self.customer[idx],
            self.movie_a[idx],
            self.movie_b[idx],
            self.label[idx],
        )

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["customer_id", "movie_a", "movie_b", "label"])
            for row in self:
                writer.writerow([row.customer_id, row.movie_a, row.movie_b, row.label])

    @classmethod
    def from_csv(cls, path) -> "PairSet":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [PairInstance(r["customer_id"], r["movie_a"], r["movie_b"], int(r["label"]))
                    for r in csv.DictReader(fh)]
        return cls.from_rows(rows)

    @classmethod
    def from_rows(cls, rows: Sequence[PairInstance]) -> "PairSet":
        movie_ids = sorted({r.movie_a for r in rows} | {r.movie_b for r in rows})
        customer_ids = sorted({r.customer_id for r in rows})
        mi = {m: i for i, m in enumerate(movie_ids)}
        ci = {c: i for i, c in enumerate(customer_ids)}
        return cls(
            movie_ids,
            customer_ids,
            np.array([ci[r.customer_id] for r in rows], dtype=np.int64),
            np.array([mi[r.movie_a] for r in rows], dtype=np.int64),
            np.array([mi[r.movie_b] for r in rows], dtype=np.int64),
            np.array([r.label for r in rows], dtype=np.int8),
        )


def build_pair_dataset(transactions: Sequence[Transaction], catalog: Mapping[str, RawMovie]) -> PairSet:
    movie_ids = sorted(catalog)
    index = {m: i for i, m in enumerate(movie_ids)}
    release = np.array([catalog[m].release_date.toordinal() for m in movie_ids], dtype=np.int64)

    for t in transactions:
        if t.movie_id not in index:
            raise UnknownMovie(f"transaction references unknown movie {t.movie_id!r}")

    hist = histories(transactions)
    customer_ids = sorted(hist)
    parts_c, parts_a, parts_b, parts_y = [], [], [], []
    all_movies = np.arange(len(movie_ids))
    for ci, cust in enumerate(customer_ids):
        bought = np.array(sorted(index[m] for m in hist[cust]), dtype=np.int64)
        owned = np.zeros(len(movie_ids), dtype=bool)
        owned[bought] = True
        for a in bought:
            later = all_movies[release > release[a]]
            if not len(later):
                continue
            parts_a.append(np.full(len(later), a))
            parts_b.append(later)
            parts_y.append(owned[later].astype(np.int8))
            parts_c.append(np.full(len(later), ci))
    if parts_a:
        cat = np.concatenate
        return PairSet(movie_ids, customer_ids, cat(parts_c), cat(parts_a), cat(parts_b), cat(parts_y))
    empty = np.empty(0, dtype=np.int64)
    return PairSet(movie_ids, customer_ids, empty, empty, empty, np.empty(0, dtype=np.int8))


def balance_sample(rows: PairSet, negative_ratio: float = 4.0, seed=0) -> PairSet:
    """Keep every positive and a uniform draw of ``negative_ratio`` negatives per positive."""
    pos = np.flatnonzero(rows.label == 1)
    if not len(pos):
        raise NoPositives("pair set has no positive rows")
    neg = np.flatnonzero(rows.label == 0)
    want = min(len(neg), int(round(negative_ratio * len(pos))))
    rng = np.random.default_rng(seed)
    picked = np.sort(rng.choice(neg, size=want, replace=False)) if want < len(neg) else neg
    return rows.take(np.sort(np.concatenate([pos, picked])))
