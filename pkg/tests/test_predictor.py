import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cmlrec.data import make_catalog
from cmlrec.errors import SingleClass, UnknownMovie
from cmlrec.predictor import (
    FeatureTable, PurchaseLogit, build_feature_rows, predict, sweep_pos_weight, train_logistic,
    weighted_loss_and_grad,
)
from cmlrec.profiles import build_profiles

from conftest import movie, tx

LOGIT_GRAD_RTOL = 1e-6


def _fixed_model(alpha=0.0, beta=0.0, gF=0.0, gR=0.0):
    return PurchaseLogit.from_dict({
        "alpha": alpha, "beta": beta, "gamma_F": gF, "gamma_R": gR, "pos_weight": 1.0,
        "scaling": {"F_min": 0.0, "F_max": 10.0, "R_min": 0.0, "R_max": 365.0}, "phi_mean": 1.0,
    })


def test_predict_examples():
    assert predict(_fixed_model(), 3.0, 2, 40) == 0.5
    assert predict(_fixed_model(beta=-1.0), math.log(3), 0, 0) == pytest.approx(0.25)
    m = _fixed_model(alpha=0.2, beta=-0.7, gF=1.0, gR=-1.0)
    probs = [predict(m, phi, 3, 30) for phi in np.linspace(0, 5, 20)]
    assert all(a > b for a, b in zip(probs, probs[1:]))


@settings(max_examples=300)
@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6), st.floats(-1e6, 1e6))
def test_probability_stays_open_interval(phi, F, R):
    p = predict(_fixed_model(alpha=3.0, beta=-50.0, gF=40.0, gR=-40.0), phi, F, R)
    assert 0.0 < p < 1.0


def _logit_fixture(seed=4):
    rng = np.random.default_rng(seed)
    D = np.column_stack([np.ones(10), rng.uniform(0, 3, 10), rng.uniform(0, 1, 10), rng.uniform(0, 1, 10)])
    y = np.array([1, 0, 0, 1, 0, 0, 0, 1, 0, 0], dtype=float)
    w = rng.normal(size=4)
    return w, D, y


def logistic_gradient_error(seed=4, pos_weight=2.5, l2=0.01):
    w, D, y = _logit_fixture(seed)
    _, g = weighted_loss_and_grad(w, D, y, pos_weight, l2)
    h = 1e-5
    num = np.zeros(4)
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        num[j] = (weighted_loss_and_grad(w + e, D, y, pos_weight, l2)[0]
                  - weighted_loss_and_grad(w - e, D, y, pos_weight, l2)[0]) / (2 * h)
    return float(np.max(np.abs(g - num) / np.maximum(np.abs(g), np.abs(num))))


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed):
    assert logistic_gradient_error(seed) < LOGIT_GRAD_RTOL


def test_unit_weight_is_plain_cross_entropy():
    w, D, y = _logit_fixture()
    p = 1 / (1 + np.exp(-(D @ w)))
    plain = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
    assert weighted_loss_and_grad(w, D, y, 1.0, 0.0)[0] == pytest.approx(plain, rel=1e-12)


def test_recovers_generating_coefficients():
    rng = np.random.default_rng(0)
    n = 50_000
    phi = rng.uniform(0, 2, n)
    F = rng.integers(0, 11, n).astype(float)
    R = rng.uniform(0, 365, n)
    F[:2], R[:2] = [0, 10], [0, 365]  # pin the scaling bounds
    true = np.array([0.5, -1.5, 1.2, -0.8])
    logit = true[0] + true[1] * phi + true[2] * F / 10 + true[3] * R / 365
    y = (rng.random(n) < 1 / (1 + np.exp(-logit))).astype(int)
    model = PurchaseLogit(pos_weight=1.0, l2=0.0).fit(np.column_stack([phi, F, R]), y)
    got = np.array([model.alpha_, model.beta_, model.gamma_F_, model.gamma_R_])
    assert np.all(np.abs(got - true) <= 0.1 * np.abs(true))


def test_separable_rows_stay_finite():
    X = np.array([[0.1, 1, 5], [0.2, 2, 6], [3.0, 1, 5], [3.1, 2, 6]], dtype=float)
    y = np.array([1, 1, 0, 0])
    model = PurchaseLogit(l2=1e-2, epochs=2000).fit(X, y)
    assert np.isfinite(model.coef_).all() and model.beta_ < 0


def test_single_class_rejected():
    with pytest.raises(SingleClass):
        PurchaseLogit().fit(np.ones((3, 3)), [0, 0, 0])


def test_balanced_weight_and_baseline_ignores_distance():
    rng = np.random.default_rng(1)
    X = np.column_stack([rng.uniform(0, 2, 400), rng.integers(0, 5, 400), rng.uniform(0, 100, 400)])
    y = (X[:, 0] < 0.5).astype(int)
    model = PurchaseLogit().fit(X, y)
    assert model.pos_weight_ == pytest.approx((y == 0).sum() / (y == 1).sum())
    base = PurchaseLogit(use_distance=False).fit(X, y)
    assert base.beta_ == 0.0
    X2 = X.copy()
    X2[:, 0] = rng.uniform(0, 50, 400)
    assert np.array_equal(base.predict_proba(X), base.predict_proba(X2))
    same = np.tile([1.0, 2.0, 30.0], (5, 1))
    same[:, 0] = [0, 1, 2, 3, 4]
    assert len(set(base.predict_proba(same)[:, 1])) == 1


def test_cold_rows_use_mean_distance(tmp_path):
    X = np.array([[0.5, 1, 10], [2.0, 0, 300], [0.4, 3, 5], [1.8, 1, 200]], dtype=float)
    model = PurchaseLogit().fit(X, [1, 0, 1, 0])
    cold = model.predict_proba([[np.nan, 1, 10]])[0, 1]
    assert cold == model.predict_proba([[model.phi_mean_, 1, 10]])[0, 1]
    model.save(tmp_path / "m.json")
    back = PurchaseLogit.load(tmp_path / "m.json")
    assert np.array_equal(back.predict_proba(X), model.predict_proba(X))
    assert back.get_params() == model.get_params()


def _feature_world():
    catalog = make_catalog([movie("A", 0), movie("B", 10), movie("C", 20)])
    transactions = [tx("c1", "A", 1), tx("c1", "C", 21), tx("c2", "B", 12), tx("c3", "C", 25)]
    zs = {"A": np.array([0.0, 0.0]), "B": np.array([1.0, 0.0]), "C": np.array([0.0, 2.0])}
    return catalog, transactions, zs


def test_feature_rows_against_transactions():
    catalog, transactions, zs = _feature_world()
    table = build_feature_rows(build_profiles(transactions), catalog, zs, 0.0, 365)
    got = sorted((r.customer_id, r.movie_id, r.label) for r in table)
    # c1 is eligible for B and C (bought A on day 1); c2 only for C; c3 never.
    # c2 bought B at noon on day 12, C releases at midnight on day 20: R = 7.5
    assert got == [("c1", "B", 0), ("c1", "C", 1), ("c2", "C", 0)]
    assert table.skipped == 9 - 3
    row = [r for r in table if (r.customer_id, r.movie_id) == ("c2", "C")][0]
    assert row.phi == pytest.approx(math.sqrt(5)) and row.F == 1 and row.R == pytest.approx(7.5)


def test_feature_rows_count_and_cold_customer():
    catalog, _, zs = _feature_world()
    assert len(build_feature_rows(build_profiles([tx("c", "A", 2)]), catalog, zs)) == 2
    assert len(build_feature_rows(build_profiles([tx("c", "C", 40)]), catalog, zs)) == 0
    with pytest.raises(UnknownMovie):
        build_feature_rows(build_profiles([tx("c", "A", 2)]), catalog, zs, targets=["Z"])


def test_feature_table_round_trip(tmp_path):
    catalog, transactions, zs = _feature_world()
    table = build_feature_rows(build_profiles(transactions), catalog, zs)
    table.to_csv(tmp_path / "f.csv")
    back = FeatureTable.from_csv(tmp_path / "f.csv")
    assert list(back) == list(table)


def test_sweep_reports_each_weight():
    rng = np.random.default_rng(2)
    n = 600
    phi = rng.uniform(0, 2, n)
    y = (rng.random(n) < 1 / (1 + np.exp(3 * phi - 2))).astype(np.int8)
    table = FeatureTable(["c"], ["m"], np.zeros(n, np.int64), np.zeros(n, np.int64), phi,
                         rng.integers(0, 4, n), rng.uniform(1, 50, n), y, 0)
    train, hold = table.subset(np.arange(n) < 400), table.subset(np.arange(n) >= 400)
    out = sweep_pos_weight(train, hold, [1.0, 3.0])
    assert [r["pos_weight"] for r in out] == [1.0, 3.0]
    assert out[1]["recall"] >= out[0]["recall"]
    assert train_logistic(train, {"pos_weight": 3.0}).pos_weight_ == 3.0
