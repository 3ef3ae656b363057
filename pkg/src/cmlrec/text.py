"""Plot tokenization and metadata compactification."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import date
from typing import List, Optional, Sequence

from .errors import DataError

TokenSequence = List[str]

_TOKEN_RE = re.compile(r"[^\W_]+")


@dataclass(frozen=True)
class RawMovie:
    id: str
    title: str
    release_date: date
    plot: str = ""
    metadata: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not self.id:
            raise DataError("movie id must be non-empty")
        if not isinstance(self.release_date, date):
            raise DataError(f"movie {self.id!r}: release_date must be a date")
        object.__setattr__(self, "metadata", tuple(self.metadata))
        if any(not item for item in self.metadata):
            raise DataError(f"movie {self.id!r}: empty metadata item")


def tokenize(text: str) -> TokenSequence:
    """Lowercase ``text`` and split it on every non-alphanumeric character.

    >>> tokenize("Sci-Fi, 2017!")
    ['sci', 'fi', '2017']
    """
    return _TOKEN_RE.findall(text.lower())


def normalize_metadata(item: str) -> str:
    """Collapse a metadata item into one token, e.g. "Jennifer Lawrence" ->
    "jennifer_lawrence"."""
    return "_".join(_TOKEN_RE.findall(item.lower()))


def compactify(plot: Sequence[str], metadata: Sequence[str]) -> TokenSequence:
    """Interleave metadata tokens with plot tokens.

    Position ``2i`` holds ``metadata[i % len(metadata)]`` and position
    ``2i + 1`` holds ``plot[i]``. Without metadata the plot is returned as is.
    """
    if not metadata:
        return list(plot)
    m = len(metadata)
    out: TokenSequence = []
    for i, token in enumerate(plot):
        out.append(metadata[i % m])
        out.append(token)
    return out


def training_sequence(movie: RawMovie, max_plot_tokens: Optional[int] = None) -> TokenSequence:
    """Plot tokens followed by their compactified form.

    ``max_plot_tokens`` truncates the tokenized plot to its first N tokens
    before compactification.
    """
    plot = tokenize(movie.plot)
    if max_plot_tokens is not None:
        plot = plot[:max_plot_tokens]
    metadata = [t for t in (normalize_metadata(m) for m in movie.metadata) if t]
    return plot + compactify(plot, metadata)
