import numpy as np
import pytest

from cmlrec.data import make_catalog
from cmlrec.errors import NoPositives, UnknownMovie
from cmlrec.pairs import PairInstance, PairSet, balance_sample, build_pair_dataset

from conftest import movie, tx


def _rows(ps):
    return sorted((r.customer_id, r.movie_a, r.movie_b, r.label) for r in ps)


def test_single_customer_example():
    catalog = make_catalog([movie("A", 0), movie("B", 10), movie("C", 20)])
    ps = build_pair_dataset([tx("c1", "A", 1), tx("c1", "B", 11)], catalog)
    assert _rows(ps) == [("c1", "A", "B", 1), ("c1", "A", "C", 0), ("c1", "B", "C", 0)]


def test_empty_history_gives_no_rows():
    catalog = make_catalog([movie("A", 0), movie("B", 10)])
    assert len(build_pair_dataset([], catalog)) == 0


def test_rows_kept_per_customer():
    catalog = make_catalog([movie("A", 0), movie("B", 10)])
    ps = build_pair_dataset([tx("c1", "A", 1), tx("c2", "A", 2)], catalog)
    assert _rows(ps) == [("c1", "A", "B", 0), ("c2", "A", "B", 0)]


def test_same_day_release_and_duplicates():
    catalog = make_catalog([movie("A", 0), movie("B", 0), movie("C", 5)])
    ps = build_pair_dataset([tx("c", "A", 1), tx("c", "A", 3), tx("c", "B", 2)], catalog)
    assert _rows(ps) == [("c", "A", "C", 0), ("c", "B", "C", 0)]


def test_unknown_movie():
    catalog = make_catalog([movie("A", 0)])
    with pytest.raises(UnknownMovie):
        build_pair_dataset([tx("c", "Z", 1)], catalog)


def _synthetic_rows(n_pos, n_neg):
    rows = [PairInstance("c", "A", "B", 1)] * n_pos + [PairInstance("c", "A", "C", 0)] * n_neg
    return PairSet.from_rows(rows)


def test_balance_sample_examples():
    ps = _synthetic_rows(10, 1000)
    out = balance_sample(ps, 3, seed=1)
    assert out.n_positive == 10 and len(out) == 40
    assert len(balance_sample(ps, 1000, seed=1)) == 1010
    again = balance_sample(ps, 3, seed=1)
    assert np.array_equal(out.label, again.label)
    with pytest.raises(NoPositives):
        balance_sample(_synthetic_rows(0, 5))


def test_balance_sample_draws_depend_on_seed():
    rows = [PairInstance("c", "A", f"N{i:03d}", 0) for i in range(200)] + [PairInstance("c", "A", "P", 1)]
    ps = PairSet.from_rows(rows)
    a = {r.movie_b for r in balance_sample(ps, 5, seed=1)}
    b = {r.movie_b for r in balance_sample(ps, 5, seed=2)}
    assert len(a) == len(b) == 6 and a != b


def test_csv_round_trip(tmp_path):
    catalog = make_catalog([movie("A", 0), movie("B", 10), movie("C", 20)])
    ps = build_pair_dataset([tx("c1", "A", 1), tx("c1", "B", 11), tx("c2", "B", 12)], catalog)
    ps.to_csv(tmp_path / "p.csv")
    assert _rows(PairSet.from_csv(tmp_path / "p.csv")) == _rows(ps)
