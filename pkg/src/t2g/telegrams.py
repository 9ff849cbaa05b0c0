"""Telegram parsing, cleaning, rasterization and cycle segmentation.

A telegram is a single device state change ``timestamp,device_id,state``.
Signals are encoded 0 = red (yellow and red-yellow included), 1 = green;
detectors 0 = free, 1 = occupied. Series are sampled at 1 Hz and indexed
from k = 1 at the window start.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


class TelegramParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class TelegramOrderError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Telegram:
    timestamp: int
    device_id: str
    state: int

    def __post_init__(self):
        if self.state not in (0, 1):
            raise ValueError(f"state must be 0 or 1, got {self.state!r}")
        if self.timestamp < 0:
            raise ValueError("timestamp must be non-negative")


@dataclass(frozen=True)
class DeviceCatalog:
    signals: tuple[str, ...]
    detectors: tuple[str, ...]
    detector_to_signal: Mapping[str, frozenset[str]] = field(default_factory=dict)
    transit_devices: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "signals", tuple(self.signals))
        object.__setattr__(self, "detectors", tuple(self.detectors))
        object.__setattr__(
            self,
            "detector_to_signal",
            {d: frozenset(s) for d, s in self.detector_to_signal.items()},
        )
        object.__setattr__(self, "transit_devices", frozenset(self.transit_devices))
        problems = self.violations()
        if problems:
            raise ValueError("invalid catalog: " + "; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        sig, det = set(self.signals), set(self.detectors)
        if len(sig) != len(self.signals):
            out.append("duplicate signal ids")
        if len(det) != len(self.detectors):
            out.append("duplicate detector ids")
        if sig & det:
            out.append(f"ids used as both signal and detector: {sorted(sig & det)}")
        for d, targets in self.detector_to_signal.items():
            if d not in det:
                out.append(f"mapping key {d!r} is not a known detector")
            unknown = set(targets) - sig
            if unknown:
                out.append(f"detector {d!r} maps to unknown signals {sorted(unknown)}")
        if not self.transit_devices <= det:
            out.append("transit devices must be detectors")
        return out

    @property
    def devices(self) -> tuple[str, ...]:
        return self.signals + self.detectors

    def transit_signals(self) -> set[str]:
        """Signals actuated only by transit detectors."""
        out: set[str] = set()
        for d in self.transit_devices:
            out |= set(self.detector_to_signal.get(d, ()))
        for d, sigs in self.detector_to_signal.items():
            if d not in self.transit_devices:
                out -= set(sigs)
        return out

    def to_dict(self) -> dict:
        return {
            "signals": list(self.signals),
            "detectors": list(self.detectors),
            "detector_to_signal": {
                d: sorted(s) for d, s in sorted(self.detector_to_signal.items())
            },
            "transit_devices": sorted(self.transit_devices),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "DeviceCatalog":
        return cls(
            signals=tuple(data["signals"]),
            detectors=tuple(data["detectors"]),
            detector_to_signal={
                d: frozenset(s) for d, s in data.get("detector_to_signal", {}).items()
            },
            transit_devices=frozenset(data.get("transit_devices", ())),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "DeviceCatalog":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Window:
    """Inclusive observation window ``[start, end]`` in epoch seconds."""

    start: int
    end: int

    def __post_init__(self):
        if self.end < self.start:
            raise ValueError("window end precedes start")

    def __len__(self) -> int:
        return self.end - self.start + 1

    def k_of(self, timestamp: int) -> int:
        return timestamp - self.start + 1

    def timestamp_of(self, k: int) -> int:
        return self.start + k - 1


@dataclass(frozen=True)
class StateSeries:
    device_id: str
    t0: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.int8)
        if v.ndim != 1 or np.any((v != 0) & (v != 1)):
            raise ValueError("state series must be a 1-D array of 0/1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class Cycle:
    """One red-onset to red-onset interval; ``start_k``/``end_k`` are 1-based, inclusive."""

    signal_id: str
    index: int
    start_k: int
    end_k: int
    red_s: int
    green_s: int

    @property
    def length(self) -> int:
        return self.end_k - self.start_k + 1


def _is_int(text: str) -> bool:
    text = text.strip()
    if text[:1] in "+-":
        text = text[1:]
    return text.isdigit()


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def parse_log(lines: Iterable[str]) -> list[Telegram]:
    """Parse ``timestamp,device_id,state`` lines into telegrams.

    A first line whose first field is not numeric is treated as a header.
    Blank lines are skipped. Timestamps must be non-decreasing.
    """
    out: list[Telegram] = []
    last_ts = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if lineno == 1 and not _is_number(parts[0]):
            continue
        if len(parts) != 3:
            raise TelegramParseError(lineno, f"expected 3 fields, got {len(parts)}")
        ts_text, device, state_text = parts
        if not _is_int(ts_text):
            raise TelegramParseError(lineno, f"non-integer timestamp {ts_text!r}")
        ts = int(ts_text)
        if ts < 0:
            raise TelegramParseError(lineno, "negative timestamp")
        if not device:
            raise TelegramParseError(lineno, "empty device id")
        if state_text not in ("0", "1"):
            raise TelegramParseError(lineno, f"state must be 0 or 1, got {state_text!r}")
        if last_ts is not None and ts < last_ts:
            raise TelegramOrderError(
                f"line {lineno}: timestamp {ts} precedes previous {last_ts}"
            )
        last_ts = ts
        out.append(Telegram(ts, device, int(state_text)))
    return out


def read_log(path) -> list[Telegram]:
    with open(path, encoding="utf-8") as fh:
        return parse_log(fh)


def format_log(telegrams: Iterable[Telegram], header: bool = True) -> str:
    rows = ["timestamp,device_id,state"] if header else []
    rows.extend(f"{t.timestamp},{t.device_id},{t.state}" for t in telegrams)
    return "\n".join(rows) + "\n"


def write_log(path, telegrams: Iterable[Telegram]) -> None:
    Path(path).write_text(format_log(telegrams), encoding="utf-8")


def clean(telegrams: Sequence[Telegram], catalog: DeviceCatalog) -> list[Telegram]:
    """Drop unknown devices and telegrams that repeat the device's retained state.

    Repeated states cover the once-a-minute clock telegrams as well as any
    duplicated change events.
    """
    known = set(catalog.devices)
    retained: dict[str, int] = {}
    out = []
    for t in telegrams:
        if t.device_id not in known:
            continue
        if retained.get(t.device_id) == t.state:
            continue
        retained[t.device_id] = t.state
        out.append(t)
    return out


def rasterize(
    telegrams: Sequence[Telegram],
    catalog: DeviceCatalog,
    window: Window,
    devices: Iterable[str] | None = None,
) -> dict[str, StateSeries]:
    """Rebuild the dense 1 Hz state of every catalog device over ``window``.

    The value at second k is the most recent state set at or before k; a
    device is 0 before its first telegram. Several telegrams of one device
    in the same second resolve to the last one.
    """
    if telegrams:
        lo = min(t.timestamp for t in telegrams)
        hi = max(t.timestamp for t in telegrams)
        if lo < window.start or hi > window.end:
            raise ValueError(
                f"window [{window.start}, {window.end}] does not cover telegrams "
                f"spanning [{lo}, {hi}]"
            )
    ids = list(catalog.devices if devices is None else devices)
    changes: dict[str, list[tuple[int, int]]] = {d: [] for d in ids}
    for t in telegrams:
        if t.device_id in changes:
            changes[t.device_id].append((t.timestamp - window.start, t.state))
    n = len(window)
    out = {}
    for dev in ids:
        values = np.zeros(n, dtype=np.int8)
        evs = changes[dev]
        for pos, (offset, state) in enumerate(evs):
            stop = evs[pos + 1][0] if pos + 1 < len(evs) else n
            values[offset:stop] = state
        out[dev] = StateSeries(dev, window.start, values)
    return out


def emit_changes(series: StateSeries) -> list[Telegram]:
    """Inverse of :func:`rasterize` for one device (implicit initial state 0)."""
    v = series.values.astype(np.int8)
    prev = np.concatenate(([0], v[:-1]))
    idx = np.flatnonzero(v != prev)
    return [Telegram(int(series.t0 + i), series.device_id, int(v[i])) for i in idx]


def segment_cycles(series: StateSeries | np.ndarray, signal_id: str | None = None) -> list[Cycle]:
    """Split a signal series into complete red-onset to red-onset cycles.

    Cycles start at 1 -> 0 transitions, so leading data before the first
    observed green-to-red switch and the trailing unfinished cycle are dropped.
    """
    if isinstance(series, StateSeries):
        values, sid = series.values, signal_id or series.device_id
    else:
        values, sid = np.asarray(series, dtype=np.int8), signal_id or ""
    v = values.astype(np.int8)
    onsets = np.flatnonzero((v[1:] == 0) & (v[:-1] == 1)) + 1  # 0-based positions
    cycles = []
    for n, (a, b) in enumerate(zip(onsets[:-1], onsets[1:])):
        green = int(v[a:b].sum())
        length = int(b - a)
        cycles.append(Cycle(sid, n, int(a) + 1, int(b), length - green, green))
    return cycles
