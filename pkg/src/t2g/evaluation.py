"""Chronological splits, T2G metrics and baseline-relative reports."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .features import FeatureMatrix

NEAR_MISS_S = 2
REPORT_FIELDS = (
    "signal", "model", "n_test", "mae_s", "rmse_s", "eh_pct", "nm_pct",
    "d_mae_pct", "d_rmse_pct", "d_eh", "d_nm",
)


def round_half_away(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def split_chronological(matrix: FeatureMatrix, train_frac: float = 0.7):
    """First ``ceil(train_frac * n)`` rows train, the rest test; no shuffling."""
    if not 0.0 < train_frac < 1.0:
        raise ValueError("train_frac must be in (0, 1)")
    n = len(matrix)
    if n < 2:
        raise ValueError("need at least 2 rows to split")
    n_train = min(max(math.ceil(train_frac * n - 1e-9), 1), n - 1)
    return matrix.rows(slice(0, n_train)), matrix.rows(slice(n_train, n))


@dataclass(frozen=True)
class MetricsReport:
    n_test: int
    mae_s: float
    rmse_s: float
    eh_pct: float
    nm_pct: float
    d_mae_pct: float | None = None
    d_rmse_pct: float | None = None
    d_eh: float | None = None
    d_nm: float | None = None

    def with_baseline(self, base: "MetricsReport") -> "MetricsReport":
        return replace(
            self,
            d_mae_pct=_rel(self.mae_s, base.mae_s),
            d_rmse_pct=_rel(self.rmse_s, base.rmse_s),
            d_eh=self.eh_pct - base.eh_pct,
            d_nm=self.nm_pct - base.nm_pct,
        )


def _rel(value: float, base: float) -> float:
    if base == 0:
        return 0.0 if value == 0 else math.inf
    return (value - base) / base * 100.0


def compute_metrics(predictions, truths, baseline_report: MetricsReport | None = None) -> MetricsReport:
    """MAE, RMSE, exact-hit % and near-miss % after rounding predictions to integers.

    With a baseline, MAE/RMSE deltas are relative percentages and EH/NM
    deltas are percentage points.
    """
    p = np.asarray(predictions, dtype=float).ravel()
    t = np.asarray(truths, dtype=float).ravel()
    if len(p) != len(t):
        raise ValueError(f"length mismatch: {len(p)} predictions, {len(t)} truths")
    if len(p) == 0:
        raise ValueError("empty input")
    err = np.abs(round_half_away(p) - t)
    report = MetricsReport(
        n_test=len(p),
        mae_s=float(err.mean()),
        rmse_s=float(np.sqrt(np.mean(err ** 2))),
        eh_pct=100.0 * int(np.count_nonzero(err == 0)) / len(p),
        nm_pct=100.0 * int(np.count_nonzero(err <= NEAR_MISS_S)) / len(p),
    )
    return report.with_baseline(baseline_report) if baseline_report is not None else report


def evaluate_model(
    model_predict: Callable[[np.ndarray], np.ndarray],
    test_matrix: FeatureMatrix,
    baseline_predict: Callable[[np.ndarray], np.ndarray],
    baseline_matrix: FeatureMatrix | None = None,
):
    """Score a model and a baseline on the same test rows.

    ``baseline_matrix`` lets the baseline read a wider column set than the
    model (e.g. after feature selection); rows must correspond one to one.
    Returns ``(model_report_with_deltas, baseline_report, model_predictions)``.
    """
    base_m = test_matrix if baseline_matrix is None else baseline_matrix
    if len(base_m) != len(test_matrix) or not np.array_equal(base_m.cycle_index, test_matrix.cycle_index):
        raise ValueError("baseline and model test rows differ")
    if base_m.schema.target_signal != test_matrix.schema.target_signal:
        raise ValueError("schema mismatch: different target signals")
    preds = np.asarray(model_predict(test_matrix.X), dtype=float)
    base_preds = np.asarray(baseline_predict(base_m.X), dtype=float)
    base = compute_metrics(base_preds, test_matrix.y)
    return compute_metrics(preds, test_matrix.y, base), base, preds


def report_row(signal: str, model: str, report: MetricsReport) -> dict:
    row = {"signal": signal, "model": model}
    row.update(asdict(report))
    return row


def write_report_csv(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _cell(r.get(k)) for k in REPORT_FIELDS})


def read_report_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return v


def write_series_csv(path, cycle_index, truths, predictions) -> None:
    """Plot-ready (cycle, truth, prediction) rows; predictions rounded as scored."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "truth", "prediction", "prediction_rounded"])
        for n, t, p in zip(cycle_index, truths, predictions):
            w.writerow([int(n), int(t), f"{float(p):.6f}", int(round_half_away(p))])
