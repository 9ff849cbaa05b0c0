import json

import numpy as np
import pytest

from t2g.forest import ForestParams
from t2g.selection import (LSTM_SPACE, RF_SPACE, ParamSpec, SearchSpace, kfold_cv, kfold_indices, ols_ranker,
                           random_search, read_trial_log, rf_ranker, rfe, write_trial_log)


def test_rfe_identity_and_range():
    X = np.random.default_rng(0).normal(size=(20, 4))
    assert rfe(X, X[:, 0], 4, "ols") == [0, 1, 2, 3]
    with pytest.raises(ValueError):
        rfe(X, X[:, 0], 0, "ols")
    with pytest.raises(ValueError):
        rfe(X, X[:, 0], 5, "ols")


def test_rfe_tie_drops_highest_index():
    flat = lambda X, y, seed=0: np.ones(X.shape[1])
    assert rfe(np.zeros((5, 4)), np.zeros(5), 2, flat) == [0, 1]


def test_rfe_keeps_signal_or_duplicate():
    rng = np.random.default_rng(1)
    x1 = rng.normal(size=200)
    X = np.column_stack([x1, rng.normal(size=(200, 3)), x1, rng.normal(size=(200, 2))])
    y = 10 * x1
    for ranker in ("ols", rf_ranker(ForestParams(n_estimators=10, max_depth=4))):
        keep = rfe(X, y, 1, ranker)
        assert keep in ([0], [4])


def test_rfe_output_sorted_subset():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(60, 9))
    keep = rfe(X, X @ rng.normal(size=9), 4, "ols", step=2)
    assert len(keep) == 4 and keep == sorted(keep) and set(keep) <= set(range(9))


def test_ols_ranker_scale_invariant():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(100, 3))
    y = X @ [1.0, 2.0, 3.0]
    assert np.allclose(ols_ranker(X, y), ols_ranker(X * [100, 0.01, 5], y))


def test_kfold_contiguous():
    folds = kfold_indices(4, 2)
    assert [v.tolist() for _, v in folds] == [[0, 1], [2, 3]]
    for tr, va in kfold_indices(11, 3):
        assert not set(tr) & set(va) and len(tr) + len(va) == 11
    with pytest.raises(ValueError):
        kfold_indices(3, 4)
    with pytest.raises(ValueError):
        kfold_indices(10, 1)


def test_kfold_oracle_and_mean_predictor():
    X = np.zeros((6, 1))
    y = np.array([1.0, 2, 3, 4, 5, 9])
    res = kfold_cv(np.arange(6.0)[:, None], y, 3, lambda Xt, yt, Xv: y[Xv[:, 0].astype(int)])
    assert res["mae"] == 0 and res["mse"] == 0
    res = kfold_cv(X, y, 3, lambda Xt, yt, Xv: np.full(len(Xv), yt.mean()))
    # folds {1,2},{3,4},{5,9}: train means 5.25, 4.25, 2.5
    expected = np.mean([(abs(1 - 5.25) + abs(2 - 5.25)) / 2, (abs(3 - 4.25) + abs(4 - 4.25)) / 2,
                        (abs(5 - 2.5) + abs(9 - 2.5)) / 2])
    assert np.isclose(res["mae"], expected)
    assert len(res["fold_mae"]) == 3


def test_spaces():
    assert RF_SPACE.specs["n_estimators"] == ParamSpec(50, 200, True)
    assert LSTM_SPACE.specs["units"] == ParamSpec(8, 256, True)
    rng = np.random.default_rng(0)
    draws = [RF_SPACE.sample(rng) for _ in range(300)]
    assert {d["min_samples_split"] for d in draws} == {2, 3, 4, 5, 6}
    assert all(0 <= d["min_weight_fraction_leaf"] <= 0.5 for d in draws)
    with pytest.raises(ValueError):
        ParamSpec(3, 1)


def test_random_search_basics():
    space = SearchSpace({"a": ParamSpec(0, 20, True)})
    fe = lambda p: [abs(p["a"] - 7)] * 3
    best, trials = random_search(space, 1, 3, 0, fe)
    assert best.trial == 0
    b1, t1 = random_search(space, 50, 3, 5, fe)
    b2, t2 = random_search(space, 50, 3, 5, fe)
    assert [t.params for t in t1] == [t.params for t in t2]
    assert (b1.trial, b1.params) == (b2.trial, b2.params)
    closest = min(abs(t.params["a"] - 7) for t in t1)
    assert abs(b1.params["a"] - 7) == closest
    first = min(t.trial for t in t1 if abs(t.params["a"] - 7) == closest)
    assert b1.trial == first
    assert all(b1.mean_mae <= t.mean_mae for t in t1)
    with pytest.raises(ValueError):
        random_search(space, 0, 3, 0, fe)


def test_trial_log_and_space_json(tmp_path):
    space = SearchSpace({"a": ParamSpec(0, 1)})
    _, trials = random_search(space, 3, 2, 0, lambda p: {"fold_mae": [p["a"], 1.0], "fold_mse": [1.0, 1.0]})
    write_trial_log(tmp_path / "t.csv", trials)
    rows = read_trial_log(tmp_path / "t.csv")
    assert list(rows[0])[:5] == ["trial", "params_json", "fold_losses", "mean_mae", "mean_mse"]
    assert rows[1]["params"] == trials[1].params
    RF_SPACE.save(tmp_path / "s.json")
    assert SearchSpace.load(tmp_path / "s.json").to_dict() == RF_SPACE.to_dict()
    assert json.loads((tmp_path / "s.json").read_text())["max_depth"] == {"low": 3, "high": 12, "integer": True}
