import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from t2g.baselines import LinearModel, linear_predict, naive_predict, ols_fit
from t2g.evaluation import compute_metrics


def test_naive_identity_and_shift():
    assert naive_predict(np.array([38.0, 5.0]), 0) == 38.0
    red = np.array([30, 40, 35, 50, 45.0])
    X = red[:-1, None]
    y = red[1:]
    assert np.array_equal(naive_predict(X, 0), red[:-1])
    r = compute_metrics(naive_predict(np.full((6, 1), 20.0), 0), np.full(6, 20.0))
    assert r.mae_s == 0 and r.eh_pct == 100
    assert compute_metrics(naive_predict(X, 0), y).mae_s == np.mean(np.abs(red[1:] - red[:-1]))


def test_ols_exact_line():
    m = ols_fit([[1], [2], [3]], [2, 4, 6])
    assert abs(m.intercept) < 1e-8 and abs(m.coefficients[0] - 2) < 1e-8


def test_ols_constant_target_collinear():
    X = np.column_stack([np.arange(5.0), 2 * np.arange(5.0)])
    m = ols_fit(X, np.full(5, 7.0))
    assert m.ridge
    assert abs(m.intercept - 7) < 1e-8 and np.all(np.abs(m.coefficients) < 1e-8)
    z = ols_fit(np.zeros((4, 2)), np.zeros(4))
    assert z.intercept == 0 and np.all(z.coefficients == 0)


def test_ols_rejects_nonfinite():
    with pytest.raises(ValueError):
        ols_fit([[1.0], [np.nan]], [1, 2])


def test_ols_noisy_recovery():
    rng = np.random.default_rng(2024)
    X = rng.normal(size=(5000, 10))
    beta = rng.uniform(-3, 3, size=10)
    y = 1.5 + X @ beta + rng.normal(0, 0.1, size=5000)
    m = ols_fit(X, y)
    assert np.max(np.abs(m.coefficients - beta)) < 0.05


def test_duplicate_column_keeps_predictions():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(200, 3))
    y = X @ [1.0, -2.0, 0.5] + rng.normal(0, 0.3, 200)
    a = ols_fit(X, y)
    b = ols_fit(np.column_stack([X, X[:, 0]]), y)
    assert b.ridge
    assert np.max(np.abs(a.predict(X) - b.predict(np.column_stack([X, X[:, 0]])))) < 1e-6


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 40), st.integers(1, 6), st.integers(0, 10**6))
def test_ols_properties(n, p, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p)) * rng.uniform(0.1, 10, size=p)
    y = rng.normal(size=n) * 5
    m = ols_fit(X, y)
    resid = y - m.predict(X)
    assert np.sum(resid ** 2) <= np.sum((y - y.mean()) ** 2) + 1e-9 * max(1.0, np.sum(y ** 2))
    if n >= p + 1 and not m.ridge:
        for j in range(p):
            x = X[:, j]
            assert abs(x @ resid) <= 1e-6 * np.linalg.norm(x) * np.linalg.norm(y) + 1e-12


def test_linear_predict():
    m = LinearModel(1.0, np.array([2.0]))
    assert linear_predict(m, [3.0]) == 7.0
    assert linear_predict(m, [0.0]) == 1.0
    with pytest.raises(ValueError):
        linear_predict(m, [1.0, 2.0])
    m2 = LinearModel(0.5, np.array([1.0, -2.0, 3.0]))
    x1, x2 = np.array([1.0, 2, 3]), np.array([-4.0, 0, 9])
    a = 0.3
    assert np.isclose(linear_predict(m2, a * x1 + (1 - a) * x2),
                      a * linear_predict(m2, x1) + (1 - a) * linear_predict(m2, x2))


def test_linear_json_roundtrip():
    m = ols_fit([[1, 0], [2, 1], [3, 5], [4, 2]], [1, 2, 4, 3], ["a", "b"])
    back = LinearModel.from_dict(m.to_dict())
    assert back.intercept == m.intercept and np.array_equal(back.coefficients, m.coefficients)
    assert back.feature_names == ("a", "b")
