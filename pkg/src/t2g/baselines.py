"""Naive shift-by-one predictor and ordinary least squares."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

RIDGE_LAMBDA = 1e-8


def naive_predict(row, red_index: int):
    """Next red time = current red time of the target signal.

    ``row`` may be a single feature row or a 2-D matrix of rows.
    """
    arr = np.asarray(row, dtype=float)
    return arr[..., red_index] if arr.ndim > 1 else float(arr[red_index])


@dataclass(frozen=True)
class LinearModel:
    intercept: float
    coefficients: np.ndarray
    residual_std: float = 0.0
    ridge: bool = False
    feature_names: tuple[str, ...] | None = None

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.coefficients):
            raise ValueError(f"expected {len(self.coefficients)} features, got {X.shape[1]}")
        return self.intercept + X @ self.coefficients

    def to_dict(self) -> dict:
        return {
            "kind": "lr",
            "intercept": float(self.intercept),
            "coefficients": [float(c) for c in self.coefficients],
            "residual_std": float(self.residual_std),
            "ridge": self.ridge,
            "feature_names": list(self.feature_names) if self.feature_names else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LinearModel":
        names = data.get("feature_names")
        return cls(float(data["intercept"]), np.array(data["coefficients"], dtype=float),
                   float(data.get("residual_std", 0.0)), bool(data.get("ridge", False)),
                   tuple(names) if names else None)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")


def ols_fit(X, y, feature_names=None) -> LinearModel:
    """Least squares with intercept via the normal equations on centred data.

    When the centred Gram matrix is numerically rank deficient, a ridge
    term ``RIDGE_LAMBDA * mean(diag)`` is added; it picks the minimum-norm
    solution for collinear columns (duplicates share their coefficient) and
    leaves fitted values unchanged to working precision.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise ValueError("X must be 2-D with one row per target")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("X and y must be finite")
    n, p = X.shape
    if n < 1:
        raise ValueError("need at least one row")
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    yc = y - y_mean
    gram = Xc.T @ Xc
    rhs = Xc.T @ yc
    ridge = False
    if p == 0:
        beta = np.zeros(0)
    else:
        eig = np.linalg.eigvalsh(gram)
        scale = max(float(np.trace(gram)) / p, 1.0)
        if eig[0] <= 1e-10 * max(eig[-1], 1.0) or n < p + 1:
            ridge = True
            gram = gram + RIDGE_LAMBDA * scale * np.eye(p)
        beta = np.linalg.solve(gram, rhs)
    intercept = float(y_mean - x_mean @ beta)
    resid = y - (intercept + X @ beta)
    dof = max(n - p - 1, 1)
    sigma = float(np.sqrt(resid @ resid / dof))
    return LinearModel(intercept, beta, sigma, ridge,
                       tuple(feature_names) if feature_names is not None else None)


def linear_predict(model: LinearModel, row):
    arr = np.asarray(row, dtype=float)
    if arr.shape[-1] != len(model.coefficients):
        raise ValueError(f"expected {len(model.coefficients)} features, got {arr.shape[-1]}")
    pred = model.predict(arr)
    return float(pred[0]) if arr.ndim == 1 else pred
