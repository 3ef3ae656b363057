from datetime import date

import pytest
from hypothesis import given, settings, strategies as st

from cmlrec.errors import DataError
from cmlrec.text import RawMovie, compactify, normalize_metadata, tokenize, training_sequence

words = st.lists(st.text(alphabet="abcxyz019", min_size=1, max_size=5), max_size=12)


@pytest.mark.parametrize("text, expected", [
    ("The alien ship lands.", ["the", "alien", "ship", "lands"]),
    ("", []),
    ("Sci-Fi, 2017!", ["sci", "fi", "2017"]),
    ("snake_case  and\ttabs", ["snake", "case", "and", "tabs"]),
    ("Ünïcode Café", ["ünïcode", "café"]),
])
def test_tokenize_examples(text, expected):
    assert tokenize(text) == expected


@pytest.mark.parametrize("plot, meta, expected", [
    (["a", "b", "c"], ["X", "Y"], ["X", "a", "Y", "b", "X", "c"]),
    (["a"], [], ["a"]),
    (["a", "b"], ["X"], ["X", "a", "X", "b"]),
])
def test_compactify_examples(plot, meta, expected):
    assert compactify(plot, meta) == expected


def _movie(plot, metadata):
    return RawMovie("m1", "t", date(2020, 1, 1), plot, tuple(metadata))


@pytest.mark.parametrize("plot, meta, expected", [
    ("a b", ["X"], ["a", "b", "x", "a", "x", "b"]),
    ("", ["X"], []),
    ("a", ["X", "Y"], ["a", "x", "a"]),
])
def test_training_sequence_examples(plot, meta, expected):
    assert training_sequence(_movie(plot, meta)) == expected


def test_metadata_items_become_single_tokens():
    assert normalize_metadata("Jennifer Lawrence") == "jennifer_lawrence"
    seq = training_sequence(_movie("girl on fire", ["Jennifer Lawrence"]))
    assert seq.count("jennifer_lawrence") == 3


def test_truncation_keeps_first_tokens():
    seq = training_sequence(_movie("one two three four", ["M"]), max_plot_tokens=2)
    assert seq == ["one", "two", "m", "one", "m", "two"]


def test_raw_movie_validation():
    with pytest.raises(DataError):
        RawMovie("", "t", date(2020, 1, 1))
    with pytest.raises(DataError):
        RawMovie("m", "t", date(2020, 1, 1), "", ("ok", ""))
    with pytest.raises(DataError):
        RawMovie("m", "t", "2020-01-01")


@settings(max_examples=300)
@given(st.text(max_size=60))
def test_tokenize_idempotent(text):
    toks = tokenize(text)
    assert tokenize(" ".join(toks)) == toks
    assert all(toks)


@settings(max_examples=300)
@given(words, words)
def test_compactify_length(plot, meta):
    out = compactify(plot, meta)
    assert len(out) == (2 * len(plot) if meta else len(plot))
    assert out[1::2] == plot if meta else out == plot


@settings(max_examples=300)
@given(st.lists(st.sampled_from(["alpha", "beta", "gamma", "x1"]), max_size=10),
       st.lists(st.sampled_from(["Tom Hanks", "drama", "Sci Fi"]), max_size=3))
def test_training_sequence_contains_plot(plot_words, meta):
    seq = training_sequence(_movie(" ".join(plot_words), meta))
    assert set(plot_words) <= set(seq)
    assert seq[:len(plot_words)] == plot_words
