"""Catalog and transaction records plus their on-disk formats.

The catalog is JSON Lines, one movie per line::

    {"id": "m001", "title": "...", "release_date": "2017-05-01",
     "plot": "...", "metadata": ["Jennifer Lawrence", "drama"]}

Transactions are CSV with header ``customer_id,movie_id,timestamp`` and
ISO-8601 timestamps (naive, interpreted as UTC).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from datetime import date, datetime
from typing import Dict, Iterable, List, Mapping

from .errors import DataError, UnknownMovie
from .text import RawMovie


@dataclass(frozen=True)
class Transaction:
    customer_id: str
    movie_id: str
    timestamp: datetime


def parse_date(value) -> date:
    if isinstance(value, datetime):
        return value.date()
    if isinstance(value, date):
        return value
    try:
        return date.fromisoformat(str(value))
    except ValueError as exc:
        raise DataError(f"bad date {value!r}") from exc


def parse_timestamp(value) -> datetime:
    if isinstance(value, datetime):
        return value
    try:
        return datetime.fromisoformat(str(value))
    except ValueError as exc:
        raise DataError(f"bad timestamp {value!r}") from exc


def movie_from_dict(obj: Mapping) -> RawMovie:
    try:
        return RawMovie(
            id=str(obj["id"]),
            title=str(obj.get("title", "")),
            release_date=parse_date(obj["release_date"]),
            plot=str(obj.get("plot", "")),
            metadata=tuple(str(m) for m in obj.get("metadata", [])),
        )
    except KeyError as exc:
        raise DataError(f"catalog record missing key {exc}") from exc


def movie_to_dict(movie: RawMovie) -> dict:
    return {
        "id": movie.id,
        "title": movie.title,
        "release_date": movie.release_date.isoformat(),
        "plot": movie.plot,
        "metadata": list(movie.metadata),
    }


def make_catalog(movies: Iterable[RawMovie]) -> Dict[str, RawMovie]:
    catalog: Dict[str, RawMovie] = {}
    for movie in movies:
        if movie.id in catalog:
            raise DataError(f"duplicate movie id {movie.id!r}")
        catalog[movie.id] = movie
    return catalog


def read_catalog(path) -> Dict[str, RawMovie]:
    movies = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            movies.append(movie_from_dict(obj))
    return make_catalog(movies)


def write_catalog(path, movies: Iterable[RawMovie]):
    with open(path, "w", encoding="utf-8") as fh:
        for movie in movies:
            fh.write(json.dumps(movie_to_dict(movie), sort_keys=True) + "\n")


def read_transactions(path) -> List[Transaction]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"customer_id", "movie_id", "timestamp"} - set(reader.fieldnames or [])
        if missing:
            raise DataError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            out.append(Transaction(row["customer_id"], row["movie_id"], parse_timestamp(row["timestamp"])))
    return out


def write_transactions(path, transactions: Iterable[Transaction]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["customer_id", "movie_id", "timestamp"])
        for t in transactions:
            writer.writerow([t.customer_id, t.movie_id, t.timestamp.isoformat(timespec="seconds")])


def validate_transactions(transactions: Iterable[Transaction], catalog: Mapping[str, RawMovie]):
    """Every transaction must name a catalog movie and not precede its release."""
    for t in transactions:
        movie = catalog.get(t.movie_id)
        if movie is None:
            raise UnknownMovie(f"transaction references unknown movie {t.movie_id!r}")
        if t.timestamp.date() < movie.release_date:
            raise DataError(
                f"customer {t.customer_id!r} bought {t.movie_id!r} on {t.timestamp} before its release"
            )


def histories(transactions: Iterable[Transaction]) -> Dict[str, Dict[str, datetime]]:
    """customer -> {movie -> earliest purchase time}; repeat purchases collapse."""
    out: Dict[str, Dict[str, datetime]] = {}
    for t in transactions:
        seen = out.setdefault(t.customer_id, {})
        prev = seen.get(t.movie_id)
        if prev is None or t.timestamp < prev:
            seen[t.movie_id] = t.timestamp
    return out


def split_by_release(catalog: Mapping[str, RawMovie], holdout_fraction: float = 0.15):
    """Movies released in the final ``holdout_fraction`` of the catalog's
    release-date span form the held-out set.

    Returns ``(train_ids, holdout_ids, cutoff_date)``.
    """
    if not 0 <= holdout_fraction < 1:
        raise ValueError("holdout_fraction must be in [0, 1)")
    first = min(m.release_date for m in catalog.values()).toordinal()
    last = max(m.release_date for m in catalog.values()).toordinal()
    cutoff = date.fromordinal(first + int(round((1 - holdout_fraction) * (last - first))))
    if holdout_fraction == 0:
        cutoff = date.fromordinal(last + 1)
    train = sorted(m for m, movie in catalog.items() if movie.release_date < cutoff)
    holdout = sorted(m for m, movie in catalog.items() if movie.release_date >= cutoff)
    return train, holdout, cutoff
