"""Seeded synthetic catalogs and purchase logs with planted genre structure.

Each movie belongs to one genre; its plot mixes words from the genre's
vocabulary with words from a common pool, and its cast is mostly drawn from
the genre's pool of actors. Each customer has a Dirichlet affinity over
genres and an activity level; movies carry an appeal factor. A customer
buys a movie with probability

    base_rate * n_genres * affinity[genre] * activity * appeal   (clipped to 1)

shortly after its release.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from datetime import date, datetime, timedelta
from typing import Dict, List, Tuple

import numpy as np

from .data import Transaction, write_catalog, write_transactions
from .errors import InvalidConfig
from .text import RawMovie

_SYLLABLES = [a + b for a in "bdfgklmnprstvz" for b in "aeiou"]


@dataclass
class SynthConfig:
    n_movies: int = 200
    n_customers: int = 2000
    n_genres: int = 5
    vocab_per_genre: int = 40
    common_vocab: int = 60
    shared_fraction: float = 0.2
    plot_length: int = 60
    cast_per_movie: int = 4
    cast_per_genre: int = 12
    cast_crossover: float = 0.25
    affinity_concentration: float = 0.3
    base_rate: float = 0.05
    appeal_spread: float = 0.8
    activity_shape: float = 2.0
    purchase_delay_days: float = 10.0
    start: str = "2014-01-01"
    end: str = "2018-12-31"
    seed: int = 0

    def validate(self):
        for name in ("n_movies", "n_customers", "n_genres", "vocab_per_genre", "common_vocab",
                     "plot_length", "cast_per_movie", "cast_per_genre"):
            if getattr(self, name) <= 0:
                raise InvalidConfig(f"{name} must be positive")
        if not 0 <= self.base_rate < 1:
            raise InvalidConfig("base_rate must be in [0, 1)")
        if self.affinity_concentration <= 0:
            raise InvalidConfig("affinity_concentration must be positive")
        for name in ("shared_fraction", "cast_crossover"):
            if not 0 <= getattr(self, name) <= 1:
                raise InvalidConfig(f"{name} must be in [0, 1]")
        if self.appeal_spread < 0 or self.activity_shape <= 0 or self.purchase_delay_days < 0:
            raise InvalidConfig("appeal_spread, activity_shape and purchase_delay_days out of range")
        try:
            start, end = date.fromisoformat(self.start), date.fromisoformat(self.end)
        except ValueError as exc:
            raise InvalidConfig(str(exc)) from exc
        if end <= start:
            raise InvalidConfig("timeline end must follow start")


@dataclass
class SynthData:
    catalog: List[RawMovie]
    transactions: List[Transaction]
    movie_genre: Dict[str, int]
    customer_affinity: Dict[str, List[float]] = field(repr=False)

    def write(self, directory):
        os.makedirs(directory, exist_ok=True)
        write_catalog(os.path.join(directory, "catalog.jsonl"), self.catalog)
        write_transactions(os.path.join(directory, "transactions.csv"), self.transactions)
        with open(os.path.join(directory, "ground_truth.json"), "w", encoding="utf-8") as fh:
            json.dump({"movie_genre": self.movie_genre, "customer_affinity": self.customer_affinity},
                      fh, indent=1, sort_keys=True)
            fh.write("\n")


def _words(rng, n, n_syllables, taken):
    out = []
    while len(out) < n:
        w = "".join(rng.choice(_SYLLABLES, size=n_syllables))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def _dirichlet(rng, alpha, k, n):
    g = rng.gamma(alpha, size=(n, k))
    total = g.sum(axis=1, keepdims=True)
    dead = total[:, 0] == 0
    if dead.any():
        g[dead] = np.eye(k)[rng.integers(0, k, size=int(dead.sum()))]
        total = g.sum(axis=1, keepdims=True)
    return g / total


def generate(config: SynthConfig = None) -> SynthData:
    cfg = config or SynthConfig()
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    G = cfg.n_genres

    taken: set = set()
    common = _words(rng, cfg.common_vocab, 3, taken)
    genre_words = [_words(rng, cfg.vocab_per_genre, 3, taken) for _ in range(G)]
    cast_pool = [
        [f"{a.capitalize()} {b.capitalize()}" for a, b in zip(_words(rng, cfg.cast_per_genre, 2, taken),
                                                           _words(rng, cfg.cast_per_genre, 3, taken))]
        for _ in range(G)
    ]

    start, end = date.fromisoformat(cfg.start), date.fromisoformat(cfg.end)
    span = (end - start).days
    offsets = np.sort(rng.integers(0, span + 1, size=cfg.n_movies))
    genres = rng.integers(0, G, size=cfg.n_movies)
    appeal = rng.lognormal(-0.5 * cfg.appeal_spread ** 2, cfg.appeal_spread, size=cfg.n_movies)

    width = len(str(cfg.n_movies))
    catalog, movie_genre = [], {}
    for i in range(cfg.n_movies):
        g = int(genres[i])
        from_common = rng.random(cfg.plot_length) < cfg.shared_fraction
        plot = [common[rng.integers(len(common))] if c else genre_words[g][rng.integers(cfg.vocab_per_genre)]
                for c in from_common]
        cast = []
        while len(cast) < cfg.cast_per_movie:
            pool_g = int(rng.integers(G)) if rng.random() < cfg.cast_crossover else g
            name = cast_pool[pool_g][rng.integers(cfg.cast_per_genre)]
            if name not in cast:
                cast.append(name)
        movie_id = f"m{i:0{width}d}"
        movie_genre[movie_id] = g
        catalog.append(RawMovie(
            id=movie_id,
            title=f"{plot[0].capitalize()} {plot[1].capitalize()}",
            release_date=start + timedelta(days=int(offsets[i])),
            plot=" ".join(plot).capitalize() + ".",
            metadata=tuple(cast),
        ))

    affinity = _dirichlet(rng, cfg.affinity_concentration, G, cfg.n_customers)
    activity = rng.gamma(cfg.activity_shape, 1.0 / cfg.activity_shape, size=cfg.n_customers)
    p = cfg.base_rate * G * affinity[:, genres] * activity[:, None] * appeal[None, :]
    bought = rng.random(p.shape) < np.clip(p, 0.0, 1.0)
    delays = rng.exponential(cfg.purchase_delay_days, size=p.shape) if cfg.purchase_delay_days else np.zeros(p.shape)
    seconds = rng.integers(0, 86400, size=p.shape)

    cwidth = len(str(cfg.n_customers))
    customer_ids = [f"c{j:0{cwidth}d}" for j in range(cfg.n_customers)]
    transactions = []
    for j, i in zip(*np.nonzero(bought)):
        release = datetime.combine(catalog[i].release_date, datetime.min.time())
        ts = release + timedelta(days=int(min(delays[j, i], 60.0)), seconds=int(seconds[j, i]))
        transactions.append(Transaction(customer_ids[j], catalog[i].id, ts))
    transactions.sort(key=lambda t: (t.timestamp, t.customer_id, t.movie_id))

    return SynthData(
        catalog=catalog,
        transactions=transactions,
        movie_genre=movie_genre,
        customer_affinity={c: [float(v) for v in affinity[j]] for j, c in enumerate(customer_ids)},
    )


def config_from_dict(obj) -> SynthConfig:
    unknown = set(obj) - set(asdict(SynthConfig()))
    if unknown:
        raise InvalidConfig(f"unknown synth keys {sorted(unknown)}")
    return SynthConfig(**obj)
