"""Recursive feature elimination, chronological k-fold CV and seeded random search."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .baselines import ols_fit
from .forest import ForestParams, rf_fit


@dataclass(frozen=True)
class ParamSpec:
    low: float
    high: float
    integer: bool = False

    def __post_init__(self):
        if self.low > self.high:
            raise ValueError(f"low {self.low} > high {self.high}")

    def sample(self, rng: np.random.Generator):
        if self.integer:
            return int(rng.integers(int(self.low), int(self.high), endpoint=True))
        return float(rng.uniform(self.low, self.high))

    def to_dict(self) -> dict:
        return {"low": self.low, "high": self.high, "integer": self.integer}


@dataclass(frozen=True)
class SearchSpace:
    specs: Mapping[str, ParamSpec]

    def sample(self, rng: np.random.Generator) -> dict:
        return {name: spec.sample(rng) for name, spec in self.specs.items()}

    def to_dict(self) -> dict:
        return {name: spec.to_dict() for name, spec in self.specs.items()}

    @classmethod
    def from_dict(cls, data: Mapping) -> "SearchSpace":
        return cls({k: ParamSpec(float(v["low"]), float(v["high"]), bool(v.get("integer", False)))
                    for k, v in data.items()})

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "SearchSpace":
        return cls.from_dict(json.loads(Path(path).read_text()))


RF_SPACE = SearchSpace({
    "n_estimators": ParamSpec(50, 200, True),
    "max_depth": ParamSpec(3, 12, True),
    "min_samples_split": ParamSpec(2, 6, True),
    "min_weight_fraction_leaf": ParamSpec(0.0, 0.5),
})
LSTM_SPACE = SearchSpace({
    "units": ParamSpec(8, 256, True),
    "layers": ParamSpec(1, 2, True),
    "dropout": ParamSpec(0.0, 0.5),
    "dense_units": ParamSpec(1, 50, True),
})


# ---------------------------------------------------------------- RFE

def ols_ranker(X, y, seed=None) -> np.ndarray:
    """|coefficient| of an OLS fit on standardized columns."""
    X = np.asarray(X, dtype=float)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    return np.abs(ols_fit((X - X.mean(axis=0)) / std, y).coefficients)


def rf_ranker(params: ForestParams = ForestParams(n_estimators=30, max_depth=8)):
    def rank(X, y, seed=0):
        return rf_fit(X, y, ForestParams(**{**params.__dict__, "seed": seed})).feature_importances()
    return rank


RANKERS = {"ols": ols_ranker, "rf": rf_ranker()}


def rfe(X, y, n_keep: int, ranker: Callable | str = "rf", step: int = 1, seed: int = 0) -> list[int]:
    """Drop the ``step`` lowest-weight columns per round until ``n_keep`` remain.

    Equal weights drop the higher column index first. Returns the kept
    original column indices in ascending order.
    """
    X = np.asarray(X, dtype=float)
    p = X.shape[1]
    if not 1 <= n_keep <= p:
        raise ValueError(f"n_keep must be in [1, {p}], got {n_keep}")
    if step < 1:
        raise ValueError("step must be >= 1")
    rank = RANKERS[ranker] if isinstance(ranker, str) else ranker
    keep = list(range(p))
    while len(keep) > n_keep:
        w = np.asarray(rank(X[:, keep], y, seed), dtype=float)
        # ascending weight, then descending column index
        order = sorted(range(len(keep)), key=lambda j: (w[j], -keep[j]))
        drop = {keep[j] for j in order[:min(step, len(keep) - n_keep)]}
        keep = [c for c in keep if c not in drop]
    return keep


# ---------------------------------------------------------------- CV

def kfold_indices(n: int, k: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Contiguous unshuffled folds; the first ``n % k`` folds get one extra row."""
    if k < 2 or n < k:
        raise ValueError(f"need 2 <= k <= rows, got k={k}, rows={n}")
    sizes = np.full(k, n // k)
    sizes[: n % k] += 1
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    all_idx = np.arange(n)
    return [(np.concatenate([all_idx[:a], all_idx[b:]]), all_idx[a:b])
            for a, b in zip(bounds[:-1], bounds[1:])]


def kfold_cv(X, y, k: int, fit_predict: Callable) -> dict:
    """``fit_predict(X_train, y_train, X_val)`` returns predictions for X_val.

    Returns mean MAE and MSE over folds plus the per-fold values.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    maes, mses = [], []
    for tr, va in kfold_indices(len(y), k):
        pred = np.asarray(fit_predict(X[tr], y[tr], X[va]), dtype=float)
        r = pred - y[va]
        maes.append(float(np.mean(np.abs(r))))
        mses.append(float(np.mean(r * r)))
    return {"mae": float(np.mean(maes)), "mse": float(np.mean(mses)),
            "fold_mae": maes, "fold_mse": mses}


def cv_fit_eval(X, y, k: int, make_fit_predict: Callable) -> Callable:
    """Adapter: ``make_fit_predict(params)`` gives a fit_predict for kfold_cv."""
    def fit_eval(params):
        return kfold_cv(X, y, k, make_fit_predict(params))
    return fit_eval


def rf_fit_predict(base: ForestParams = ForestParams()):
    def make(params):
        fp = ForestParams(**{**base.__dict__, **params})
        return lambda Xt, yt, Xv: rf_fit(Xt, yt, fp).predict(Xv)
    return make


# ---------------------------------------------------------------- search

@dataclass(frozen=True)
class TrialResult:
    trial: int
    params: dict
    fold_losses: list[float]
    mean_mae: float
    mean_mse: float
    wall_s: float = 0.0
    fold_mse: list[float] = field(default_factory=list)


def random_search(space: SearchSpace, n_trials: int, k: int, seed: int, fit_eval: Callable):
    """Sample ``n_trials`` configurations independently and rank by mean CV MAE.

    ``fit_eval(params)`` returns either a kfold_cv result dict or a plain
    list of per-fold MAE values. Ties keep the earlier trial.
    Returns ``(best, trials)``.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    samples = [space.sample(rng) for _ in range(n_trials)]
    trials = []
    for t, params in enumerate(samples):
        t0 = time.perf_counter()
        res = fit_eval(params)
        wall = time.perf_counter() - t0
        if isinstance(res, Mapping):
            folds = list(res["fold_mae"])
            fmse = list(res.get("fold_mse", []))
        else:
            folds = [float(v) for v in res]
            fmse = []
        if len(folds) != k:
            raise ValueError(f"trial {t}: expected {k} fold losses, got {len(folds)}")
        trials.append(TrialResult(t, params, folds, float(np.mean(folds)),
                                  float(np.mean(fmse)) if fmse else float("nan"), wall, fmse))
    best = min(trials, key=lambda r: (r.mean_mae, r.trial))
    return best, trials


TRIAL_FIELDS = ("trial", "params_json", "fold_losses", "mean_mae", "mean_mse")


def write_trial_log(path, trials: Sequence[TrialResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIAL_FIELDS)
        for r in trials:
            w.writerow([r.trial, json.dumps(r.params, sort_keys=True),
                        ";".join(f"{v:.6f}" for v in r.fold_losses),
                        f"{r.mean_mae:.6f}", f"{r.mean_mse:.6f}"])


def read_trial_log(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["params"] = json.loads(r["params_json"])
    return rows
