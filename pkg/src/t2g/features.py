"""Per-cycle feature engineering and per-signal dataset assembly.

All operations take dense 0/1 series and a :class:`~t2g.telegrams.Cycle`
(1-based inclusive ``start_k``/``end_k``). Detector features are evaluated
over the target signal's cycle window and conditioned on its red/green state.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .telegrams import Cycle, DeviceCatalog, StateSeries, segment_cycles

FEATURE_KINDS = (
    "red_s", "green_s", "q_R", "q_G", "occupancy", "last_gap", "QI", "CI",
    "day", "hour", "minute", "second",
)
DEFAULT_P_THRESHOLD_S = 5
_CLOCK_NAMES = {"day": "D", "hour": "H", "minute": "M", "second": "Sec"}


def _values(series) -> np.ndarray:
    if isinstance(series, StateSeries):
        return series.values
    return np.asarray(series)


def _window(values: np.ndarray, cycle: Cycle) -> np.ndarray:
    if cycle.start_k < 1 or cycle.end_k > len(values) or cycle.end_k < cycle.start_k:
        raise IndexError(
            f"cycle [{cycle.start_k}, {cycle.end_k}] outside series of length {len(values)}"
        )
    return values[cycle.start_k - 1:cycle.end_k].astype(np.int64)


def phase_durations(series_i, cycle: Cycle) -> tuple[int, int]:
    """Red and green seconds of the signal within the cycle window."""
    s = _window(_values(series_i), cycle)
    green = int(s.sum())
    return len(s) - green, green


def phase_flows(series_d, series_i, cycle: Cycle) -> tuple[int, int]:
    """Vehicles counted as detector falling edges during red and during green.

    An edge belongs to the second where the detector reads 0 after a 1; only
    edges with both seconds inside the window count.
    """
    d = _window(_values(series_d), cycle)
    s = _window(_values(series_i), cycle)
    falls = np.zeros(len(d), dtype=bool)
    falls[1:] = (d[:-1] == 1) & (d[1:] == 0)
    return int(np.sum(falls & (s == 0))), int(np.sum(falls & (s == 1)))


def occupancy(series_d, cycle: Cycle) -> float:
    d = _window(_values(series_d), cycle)
    return float(d.sum()) / len(d)


def last_detection_gap(series_d, cycle: Cycle) -> int:
    """Seconds from the last occupied second to the end of the cycle.

    ``cycle_length`` when the detector is never occupied in the window.
    """
    d = _window(_values(series_d), cycle)
    on = np.flatnonzero(d)
    if len(on) == 0:
        return len(d)
    return len(d) - int(on[-1] + 1)


def _runs(d: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of ones as half-open ``(start, stop)`` positions."""
    padded = np.concatenate(([0], d, [0]))
    edges = np.flatnonzero(np.diff(padded))
    return list(zip(edges[::2].tolist(), edges[1::2].tolist()))


def queue_congestion(series_d, series_i, cycle: Cycle, p_threshold_s: int = DEFAULT_P_THRESHOLD_S) -> tuple[int, int]:
    """Queue (red) and congestion (green) indicators from long detector runs.

    A run longer than ``p_threshold_s`` seconds sets QI if it overlaps red
    seconds and CI if it overlaps green seconds; a straddling run sets both.
    """
    if p_threshold_s < 1:
        raise ValueError("p_threshold_s must be >= 1")
    d = _window(_values(series_d), cycle)
    s = _window(_values(series_i), cycle)
    qi = ci = 0
    for a, b in _runs(d):
        if b - a > p_threshold_s:
            seg = s[a:b]
            qi |= int(np.any(seg == 0))
            ci |= int(np.any(seg == 1))
    return qi, ci


def clock_features(timestamp: int, utc_offset_s: int = 0) -> tuple[int, int, int, int]:
    """(day-of-week with Monday=0, hour, minute, second) on a fixed-offset clock."""
    tz = _dt.timezone(_dt.timedelta(seconds=utc_offset_s))
    t = _dt.datetime.fromtimestamp(int(timestamp), tz)
    return t.weekday(), t.hour, t.minute, t.second


@dataclass(frozen=True)
class Column:
    name: str
    source: str | None
    kind: str


@dataclass(frozen=True)
class FeatureSchema:
    target_signal: str
    columns: tuple[Column, ...]
    p_threshold_s: int = DEFAULT_P_THRESHOLD_S
    utc_offset_s: int = 0
    target_name: str = "Y"

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError("column names must be unique")
        if self.target_name in names:
            raise ValueError("target column name collides with a feature column")
        for c in self.columns:
            if c.kind not in FEATURE_KINDS:
                raise ValueError(f"unknown feature kind {c.kind!r}")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def index(self, name: str) -> int:
        return self.names.index(name)

    @property
    def red_column(self) -> str:
        """Name of the target signal's own red-time column."""
        return f"r_{self.target_signal}"

    def subset(self, names: Sequence[str]) -> "FeatureSchema":
        keep = [c for c in self.columns if c.name in set(names)]
        return FeatureSchema(self.target_signal, tuple(keep), self.p_threshold_s,
                             self.utc_offset_s, self.target_name)

    def to_dict(self) -> dict:
        return {
            "target_signal": self.target_signal,
            "target_name": self.target_name,
            "p_threshold_s": self.p_threshold_s,
            "utc_offset_s": self.utc_offset_s,
            "columns": [{"name": c.name, "source": c.source, "kind": c.kind} for c in self.columns],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "FeatureSchema":
        return cls(
            target_signal=data["target_signal"],
            columns=tuple(Column(c["name"], c.get("source"), c["kind"]) for c in data["columns"]),
            p_threshold_s=int(data.get("p_threshold_s", DEFAULT_P_THRESHOLD_S)),
            utc_offset_s=int(data.get("utc_offset_s", 0)),
            target_name=data.get("target_name", "Y"),
        )

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def make_schema(target_signal: str, catalog: DeviceCatalog, p_threshold_s: int = DEFAULT_P_THRESHOLD_S,
                utc_offset_s: int = 0) -> FeatureSchema:
    cols: list[Column] = []
    for sig in catalog.signals:
        cols.append(Column(f"r_{sig}", sig, "red_s"))
        cols.append(Column(f"g_{sig}", sig, "green_s"))
    for det in catalog.detectors:
        cols.append(Column(f"qR_{det}", det, "q_R"))
        cols.append(Column(f"qG_{det}", det, "q_G"))
    for det in catalog.detectors:
        cols.append(Column(f"o_{det}", det, "occupancy"))
    for det in catalog.detectors:
        cols.append(Column(f"l_{det}", det, "last_gap"))
    for det in catalog.detectors:
        cols.append(Column(f"QI_{det}", det, "QI"))
        cols.append(Column(f"CI_{det}", det, "CI"))
    for kind, name in _CLOCK_NAMES.items():
        cols.append(Column(name, None, kind))
    return FeatureSchema(target_signal, tuple(cols), p_threshold_s, utc_offset_s)


@dataclass
class FeatureMatrix:
    schema: FeatureSchema
    X: np.ndarray
    y: np.ndarray
    cycle_index: np.ndarray
    cycle_start: np.ndarray  # epoch seconds of each row's cycle start
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float).reshape(len(self.y), -1) if len(self.y) else \
            np.zeros((0, len(self.schema.columns)))
        self.y = np.asarray(self.y, dtype=float)
        self.cycle_index = np.asarray(self.cycle_index, dtype=np.int64)
        self.cycle_start = np.asarray(self.cycle_start, dtype=np.int64)
        n = len(self.y)
        if self.X.shape != (n, len(self.schema.columns)):
            raise ValueError(f"X has shape {self.X.shape}, expected ({n}, {len(self.schema.columns)})")
        if len(self.cycle_index) != n or len(self.cycle_start) != n:
            raise ValueError("cycle metadata length mismatch")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def names(self) -> list[str]:
        return self.schema.names

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.schema.index(name)]

    def rows(self, idx) -> "FeatureMatrix":
        return FeatureMatrix(self.schema, self.X[idx], self.y[idx], self.cycle_index[idx],
                             self.cycle_start[idx], dict(self.meta))

    def select(self, names: Sequence[str]) -> "FeatureMatrix":
        """Keep only ``names`` (in schema order)."""
        wanted = set(names)
        missing = wanted - set(self.names)
        if missing:
            raise KeyError(f"unknown columns {sorted(missing)}")
        idx = [i for i, n in enumerate(self.names) if n in wanted]
        return FeatureMatrix(self.schema.subset(names), self.X[:, idx], self.y,
                             self.cycle_index, self.cycle_start, dict(self.meta))

    def to_csv(self, path) -> None:
        """Write rows as CSV plus a ``<stem>.schema.json`` sidecar."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "t_start"] + self.names + [self.schema.target_name])
            for n, t, row, y in zip(self.cycle_index, self.cycle_start, self.X, self.y):
                w.writerow([int(n), int(t)] + [_fmt(v) for v in row] + [_fmt(y)])
        sidecar = {"schema": self.schema.to_dict(), "meta": self.meta}
        schema_path(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_csv(cls, path) -> "FeatureMatrix":
        path = Path(path)
        sidecar = json.loads(schema_path(path).read_text())
        schema = FeatureSchema.from_dict(sidecar["schema"])
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            header = next(r)
            expected = ["n", "t_start"] + schema.names + [schema.target_name]
            if header != expected:
                raise ValueError(f"{path}: header does not match schema sidecar")
            data = [list(map(float, row)) for row in r if row]
        arr = np.array(data, dtype=float).reshape(len(data), len(expected))
        return cls(schema, arr[:, 2:-1], arr[:, -1], arr[:, 0].astype(np.int64),
                   arr[:, 1].astype(np.int64), sidecar.get("meta", {}))


def schema_path(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".schema.json")


def _fmt(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


class TooFewCycles(ValueError):
    pass


def build_dataset(
    target_i: str,
    all_series: Mapping[str, StateSeries],
    catalog: DeviceCatalog,
    p_threshold_s: int = DEFAULT_P_THRESHOLD_S,
    utc_offset_s: int = 0,
) -> FeatureMatrix:
    """One row per complete cycle of ``target_i`` (except the last); Y = next red time."""
    if target_i not in catalog.signals:
        raise KeyError(f"{target_i!r} is not a signal in the catalog")
    target = all_series[target_i]
    cycles = segment_cycles(target, target_i)
    if len(cycles) < 2:
        raise TooFewCycles(f"signal {target_i} has {len(cycles)} complete cycles, need >= 2")
    schema = make_schema(target_i, catalog, p_threshold_s, utc_offset_s)
    s_i = target.values
    rows = []
    for c in cycles[:-1]:
        row: list[float] = []
        for sig in catalog.signals:
            row.extend(phase_durations(all_series[sig], c))
        for det in catalog.detectors:
            row.extend(phase_flows(all_series[det], s_i, c))
        for det in catalog.detectors:
            row.append(occupancy(all_series[det], c))
        for det in catalog.detectors:
            row.append(last_detection_gap(all_series[det], c))
        for det in catalog.detectors:
            row.extend(queue_congestion(all_series[det], s_i, c, p_threshold_s))
        row.extend(clock_features(target.t0 + c.start_k - 1, utc_offset_s))
        rows.append(row)
    y = [c.red_s for c in cycles[1:]]
    return FeatureMatrix(
        schema,
        np.array(rows, dtype=float),
        np.array(y, dtype=float),
        np.array([c.index for c in cycles[:-1]]),
        np.array([target.t0 + c.start_k - 1 for c in cycles[:-1]]),
        {"target_signal": target_i},
    )
