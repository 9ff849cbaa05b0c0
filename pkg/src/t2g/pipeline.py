"""Glue between the modules: model bundles on disk and the per-signal model ladder."""

from __future__ import annotations

import json
import math
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import LinearModel, naive_predict, ols_fit
from .evaluation import MetricsReport, compute_metrics, report_row, split_chronological
from .features import FeatureMatrix, TooFewCycles, build_dataset
from .forest import ForestModel, ForestParams, rf_fit
from .lstm import LstmModel, LstmParams, lstm_fit, make_sequences
from .selection import rf_ranker, rfe
from .simulator import load_scenario, simulate
from .telegrams import rasterize

MODEL_KINDS = ("naive", "lr", "rf", "lstm")
RFE_RANKER_PARAMS = ForestParams(n_estimators=30, max_depth=8)


def train_model(kind: str, matrix: FeatureMatrix, feature_names: Sequence[str] | None = None,
                params: dict | None = None, seed: int | None = None, train_frac: float = 0.7) -> dict:
    """Fit ``kind`` on the chronological train split; returns a JSON-ready bundle."""
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    if kind in ("rf", "lstm") and seed is None:
        raise ValueError(f"model {kind} needs a seed")
    params = dict(params or {})
    names = list(feature_names) if feature_names is not None else matrix.names
    train, _ = split_chronological(matrix, train_frac)
    sub = train.select(names)
    bundle = {
        "kind": kind,
        "target_signal": matrix.schema.target_signal,
        "schema_digest": matrix.schema.digest(),
        "feature_names": sub.names,
        "train_frac": train_frac,
        "n_train": len(train),
        "seed": seed,
        "params": params,
    }
    if kind == "naive":
        bundle["model"] = {"red_column": matrix.schema.red_column}
    elif kind == "lr":
        bundle["model"] = ols_fit(sub.X, sub.y, sub.names).to_dict()
    elif kind == "rf":
        fp = ForestParams(**{**params, "seed": seed})
        bundle["model"] = rf_fit(sub.X, sub.y, fp, sub.names).to_dict()
    else:
        lp = LstmParams(**{**params, "seed": seed})
        ds = make_sequences(sub, lp.lag)
        bundle["params"] = asdict(lp)
        bundle["model"] = lstm_fit(ds, lp, sub.names).to_dict()
    return bundle


def save_bundle(bundle: dict, path) -> None:
    Path(path).write_text(json.dumps(bundle, sort_keys=True) + "\n")


def load_bundle(path) -> dict:
    bundle = json.loads(Path(path).read_text())
    if bundle.get("kind") not in MODEL_KINDS:
        raise ValueError(f"{path}: not a model bundle")
    return bundle


def check_compatible(bundle: dict, matrix: FeatureMatrix) -> None:
    if bundle["target_signal"] != matrix.schema.target_signal:
        raise ValueError(f"model targets {bundle['target_signal']}, matrix targets "
                         f"{matrix.schema.target_signal}")
    if bundle["schema_digest"] != matrix.schema.digest():
        raise ValueError("feature schema does not match the one the model was trained on")


def predict_test(bundle: dict, matrix: FeatureMatrix):
    """Predictions on the test split of ``matrix``; returns (test_matrix, predictions)."""
    check_compatible(bundle, matrix)
    n_train = len(split_chronological(matrix, bundle["train_frac"])[0])
    test = matrix.rows(slice(n_train, len(matrix)))
    kind = bundle["kind"]
    if kind == "naive":
        return test, naive_predict(test.X, matrix.schema.index(bundle["model"]["red_column"]))
    sub = matrix.select(bundle["feature_names"])
    if kind == "lr":
        return test, LinearModel.from_dict(bundle["model"]).predict(sub.X[n_train:])
    if kind == "rf":
        return test, ForestModel.from_dict(bundle["model"]).predict(sub.X[n_train:])
    lag = bundle["params"]["lag"]
    if n_train < lag - 1:
        raise ValueError(f"train split too short for lag {lag}")
    ds = make_sequences(sub, lag)
    windows = ds.windows[n_train - (lag - 1):]
    return test, LstmModel.from_dict(bundle["model"]).predict(windows)


def evaluate_bundle(bundle: dict, matrix: FeatureMatrix):
    """Model report with deltas against naive on the same test rows."""
    test, pred = predict_test(bundle, matrix)
    base = compute_metrics(naive_predict(test.X, matrix.schema.index(matrix.schema.red_column)), test.y)
    return compute_metrics(pred, test.y, base), base, test, pred


def importance_table(bundle: dict) -> list[tuple[str, float]]:
    """(feature, importance) sorted by decreasing importance, then name."""
    if bundle["kind"] != "rf":
        raise ValueError("importances need a random forest model")
    imp = ForestModel.from_dict(bundle["model"]).feature_importances()
    return sorted(zip(bundle["feature_names"], map(float, imp)), key=lambda t: (-t[1], t[0]))


def select_features(matrix: FeatureMatrix, n_keep: int, ranker="rf", step: int = 1,
                    seed: int = 0, train_frac: float = 0.7) -> list[str]:
    """RFE on the train split only; returns kept column names in schema order."""
    train, _ = split_chronological(matrix, train_frac)
    keep = rfe(train.X, train.y, n_keep, ranker, step, seed)
    return [matrix.names[i] for i in keep]


def simulate_matrices(scenario="zurich_like", horizon_s: int = 86400, seed: int = 42,
                      signals: Sequence[str] | None = None) -> dict[str, FeatureMatrix]:
    """Simulate, rasterize and featurize every (or the listed) signal."""
    config = load_scenario(scenario) if isinstance(scenario, str) else scenario
    run = simulate(config, horizon_s, seed)
    series = rasterize(run.telegrams, config.catalog, run.window)
    out = {}
    for sig in signals or config.catalog.signals:
        try:
            out[sig] = build_dataset(sig, series, config.catalog)
        except TooFewCycles:
            continue
    return out


def run_ladder(matrices: dict[str, FeatureMatrix], seed: int = 42, n_keep_frac: float = 0.5,
               rfe_step: int = 9, rf_params: dict | None = None,
               models: Sequence[str] = ("naive", "lr", "rf")) -> list[dict]:
    """Naive, OLS and RF (and optionally LSTM) for each signal after RFE.

    RFE keeps ``ceil(n_keep_frac * columns)`` features, ranked by a small
    forest, removing ``rfe_step`` columns per round.
    """
    rf_params = dict(rf_params or {"n_estimators": 100, "max_depth": 10})
    rows = []
    for sig, matrix in matrices.items():
        n_keep = max(1, math.ceil(n_keep_frac * len(matrix.names)))
        names = select_features(matrix, n_keep, rf_ranker(RFE_RANKER_PARAMS), rfe_step, seed)
        for kind in models:
            bundle = train_model(kind, matrix, None if kind == "naive" else names,
                                 rf_params if kind == "rf" else None,
                                 seed if kind in ("rf", "lstm") else None)
            report, _, _, _ = evaluate_bundle(bundle, matrix)
            rows.append(report_row(sig, kind, report))
    return rows


def metrics_from_row(row: dict) -> MetricsReport:
    fields = MetricsReport.__dataclass_fields__
    return MetricsReport(**{k: (None if row[k] in ("", None) else
                                (int(row[k]) if k == "n_test" else float(row[k])))
                            for k in fields})
