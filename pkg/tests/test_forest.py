import numpy as np
import pytest

import oracles
from t2g.forest import ForestModel, ForestParams, Tree, best_split, feature_importance, fit_tree, rf_fit, rf_predict


def test_constant_target_single_leaf():
    X = np.arange(10.0)[:, None]
    t = fit_tree(X, np.full(10, 4.0), np.arange(10), ForestParams(max_depth=5))
    assert t.n_nodes == 1 and t.value[0] == 4.0


def test_simple_split():
    X = np.array([[0.0], [1], [2], [3]])
    t = fit_tree(X, np.array([0.0, 0, 10, 10]), np.arange(4), ForestParams(max_depth=3))
    assert t.feature[0] == 0 and t.threshold[0] == 1.5
    assert sorted(t.predict(X).tolist()) == [0, 0, 10, 10]


def test_best_split_matches_exhaustive():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n, p = rng.integers(2, 30), rng.integers(1, 5)
        X = rng.integers(0, 6, size=(n, p)).astype(float)
        y = rng.normal(size=n)
        got = best_split(X, y)
        ref = oracles.exhaustive_split(X.tolist(), y.tolist())
        if ref is None:
            assert got is None
        else:
            assert got[0] == ref[1] and got[1] == ref[2]
            assert np.isclose(got[2], ref[0])


def test_tie_break_lowest_feature():
    X = np.array([[0.0, 0], [1, 1]])
    f, thr, _ = best_split(X, np.array([0.0, 1]))
    assert (f, thr) == (0, 0.5)


def test_forest_determinism_and_oob():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(80, 4))
    y = 3 * X[:, 0] + rng.normal(0, 0.1, 80)
    p = ForestParams(n_estimators=15, max_depth=4, seed=9)
    a, b = rf_fit(X, y, p), rf_fit(X, y, p)
    assert np.array_equal(a.predict(X), b.predict(X))
    assert a.oob_mae == b.oob_mae and a.oob_available
    assert np.array_equal(a.feature_importances(), b.feature_importances())
    assert a.predict(X).min() >= y.min() and a.predict(X).max() <= y.max()


def test_identity_bootstrap_flags_no_oob():
    X = np.arange(6.0)[:, None]
    m = rf_fit(X, X[:, 0], ForestParams(n_estimators=1, bootstrap=False))
    assert not m.oob_available and np.isnan(m.oob_mae)


def test_constant_y_forest():
    X = np.random.default_rng(0).normal(size=(30, 3))
    m = rf_fit(X, np.full(30, 2.5), ForestParams(n_estimators=5))
    assert np.all(m.predict(X) == 2.5) and m.oob_mae == 0
    assert np.all(feature_importance(m) == 0)


def test_predict_mean_of_trees_and_order():
    leaf = lambda v: Tree(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]),
                          np.array([v]), np.array([1]), np.array([0.0]), 1)
    m = ForestModel([leaf(10.0), leaf(20.0)], ForestParams(n_estimators=2), 1, 1)
    assert rf_predict(m, [0.0]) == 15.0
    m.trees.reverse()
    assert rf_predict(m, [0.0]) == 15.0
    with pytest.raises(ValueError):
        rf_predict(m, [0.0, 1.0])


def test_importance_concentrates_on_signal():
    rng = np.random.default_rng(4)
    X = rng.uniform(size=(300, 5))
    m = rf_fit(X, 10 * X[:, 0], ForestParams(n_estimators=20, max_depth=6, seed=1))
    imp = feature_importance(m)
    assert imp[0] > 0.8 and np.isclose(imp.sum(), 1.0) and np.all(imp >= 0)


def test_deeper_never_worse_on_train():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(120, 3))
    y = np.sin(X[:, 0]) + X[:, 1] ** 2
    maes = [np.mean(np.abs(rf_fit(X, y, ForestParams(n_estimators=10, max_depth=d, seed=2)).predict(X) - y))
            for d in (1, 2, 4, 8)]
    assert all(a >= b - 1e-12 for a, b in zip(maes, maes[1:]))


def test_min_weight_fraction_leaf():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(100, 2))
    y = rng.normal(size=100)
    p = ForestParams(n_estimators=3, max_depth=8, min_weight_fraction_leaf=0.1, seed=0)
    m = rf_fit(X, y, p)
    for t in m.trees:
        assert t.count[t.feature == -1].min() >= p.min_leaf(100)


def test_json_roundtrip(tmp_path):
    rng = np.random.default_rng(7)
    X = rng.normal(size=(50, 3))
    y = X[:, 1] * 2
    m = rf_fit(X, y, ForestParams(n_estimators=4, max_depth=3), ["a", "b", "c"])
    m.save(tmp_path / "f.json")
    back = ForestModel.load(tmp_path / "f.json")
    assert np.array_equal(back.predict(X), m.predict(X))
    assert np.array_equal(back.feature_importances(), m.feature_importances())
    assert back.oob_mae == m.oob_mae
