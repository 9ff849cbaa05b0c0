"""Deterministic fully-actuated intersection controller that emits telegrams.

The controller serves a ring of vehicle phases. Each phase holds its signals
green for ``min_green`` seconds and then extends while a mapped detector was
occupied within the last ``extension_gap`` seconds, up to ``max_green``.
Transit detectors do not extend greens; they request a priority phase which
is inserted at the next switch point (a running phase is never cut below
its minimum green). An optional approach time delays the request, modelling
an upstream transit detector; ``detector_travel_s`` does the same for
vehicle detectors, which then act as advance detectors for gap-out.

Vehicle arrivals are Poisson per second; occupation times are
``1 + Poisson(mean - 1)`` seconds. Transit arrivals have exponential
headways. All randomness comes from ``numpy.random.PCG64`` seeded through
``SeedSequence(seed)``, so runs are reproducible across platforms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np

from .telegrams import Cycle, DeviceCatalog, Telegram, Window

DEFAULT_START = 1546300800  # 2019-01-01 00:00:00 UTC


@dataclass(frozen=True)
class Phase:
    name: str
    signals: tuple[str, ...]
    min_green: int
    max_green: int
    extension_gap: int = 3
    transit: bool = False


@dataclass
class SimConfig:
    catalog: DeviceCatalog
    phases: list[Phase]
    base_red: dict[str, int] = field(default_factory=dict)
    arrival_rate: dict[str, float] = field(default_factory=dict)  # veh/h
    detector_occupation_s: float = 1.0
    transit_headway_s: float = 0.0  # 0 disables transit
    priority_rule: dict[str, str] = field(default_factory=dict)  # detector -> phase
    max_red_cap: int = 180
    transit_approach_s: int = 0
    transit_occupation_s: float | None = None
    detector_travel_s: int = 0
    start_timestamp: int = DEFAULT_START
    name: str = "custom"

    @property
    def vehicle_phases(self) -> list[Phase]:
        return [p for p in self.phases if not p.transit]

    def phase(self, name: str) -> Phase:
        for p in self.phases:
            if p.name == name:
                return p
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "catalog": self.catalog.to_dict(),
            "phases": [
                {
                    "name": p.name,
                    "signals": list(p.signals),
                    "min_green": p.min_green,
                    "max_green": p.max_green,
                    "extension_gap": p.extension_gap,
                    "transit": p.transit,
                }
                for p in self.phases
            ],
            "base_red": dict(self.base_red),
            "arrival_rate": dict(self.arrival_rate),
            "detector_occupation_s": self.detector_occupation_s,
            "transit_headway_s": self.transit_headway_s,
            "transit_occupation_s": self.transit_occupation_s,
            "transit_approach_s": self.transit_approach_s,
            "detector_travel_s": self.detector_travel_s,
            "priority_rule": dict(self.priority_rule),
            "max_red_cap": self.max_red_cap,
            "start_timestamp": self.start_timestamp,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "SimConfig":
        phases = [
            Phase(
                name=p["name"],
                signals=tuple(p["signals"]),
                min_green=int(p["min_green"]),
                max_green=int(p["max_green"]),
                extension_gap=int(p.get("extension_gap", 3)),
                transit=bool(p.get("transit", False)),
            )
            for p in data["phases"]
        ]
        return cls(
            catalog=DeviceCatalog.from_dict(data["catalog"]),
            phases=phases,
            base_red={k: int(v) for k, v in data.get("base_red", {}).items()},
            arrival_rate={k: float(v) for k, v in data.get("arrival_rate", {}).items()},
            detector_occupation_s=float(data.get("detector_occupation_s", 1.0)),
            transit_headway_s=float(data.get("transit_headway_s", 0.0)),
            priority_rule=dict(data.get("priority_rule", {})),
            max_red_cap=int(data.get("max_red_cap", 180)),
            transit_approach_s=int(data.get("transit_approach_s", 0)),
            transit_occupation_s=data.get("transit_occupation_s"),
            detector_travel_s=int(data.get("detector_travel_s", 0)),
            start_timestamp=int(data.get("start_timestamp", DEFAULT_START)),
            name=data.get("name", "custom"),
        )

    @classmethod
    def load(cls, path) -> "SimConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


class InvalidConfig(ValueError):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


SCENARIOS = ("cross_basic", "zurich_like")


def load_scenario(name: str) -> SimConfig:
    """Load one of the shipped scenarios by name, or a JSON file by path."""
    if name in SCENARIOS:
        text = resources.files("t2g").joinpath(f"scenarios/{name}.json").read_text()
        return SimConfig.from_dict(json.loads(text))
    return SimConfig.load(name)


def validate_config(config: SimConfig) -> list[str]:
    """Return every violated invariant; an empty list means the config is valid."""
    out = list(config.catalog.violations())
    signals = set(config.catalog.signals)
    detectors = set(config.catalog.detectors)
    names = [p.name for p in config.phases]
    if len(set(names)) != len(names):
        out.append("duplicate phase names")
    if not config.vehicle_phases:
        out.append("at least one non-transit phase is required")
    for p in config.phases:
        if not p.signals:
            out.append(f"phase {p.name}: no signals")
        unknown = set(p.signals) - signals
        if unknown:
            out.append(f"phase {p.name}: unknown signals {sorted(unknown)}")
        if p.min_green < 1:
            out.append(f"phase {p.name}: min_green must be >= 1")
        if p.min_green > p.max_green:
            out.append(f"phase {p.name}: min_green={p.min_green} > max_green={p.max_green}")
        if p.extension_gap < 1:
            out.append(f"phase {p.name}: extension_gap must be >= 1")
    served = set().union(*(p.signals for p in config.phases)) if config.phases else set()
    if signals - served:
        out.append(f"signals never served by a phase: {sorted(signals - served)}")
    for d, rate in config.arrival_rate.items():
        if d not in detectors:
            out.append(f"arrival rate for unknown detector {d!r}")
        if not rate >= 0:
            out.append(f"arrival rate for {d!r} must be >= 0, got {rate}")
    for s, r in config.base_red.items():
        if s not in signals:
            out.append(f"base_red for unknown signal {s!r}")
        if r < 0:
            out.append(f"base_red for {s!r} must be >= 0")
    if not config.detector_occupation_s >= 1:
        out.append("detector_occupation_s must be >= 1")
    if config.transit_occupation_s is not None and not config.transit_occupation_s >= 1:
        out.append("transit_occupation_s must be >= 1")
    if not config.transit_headway_s >= 0:
        out.append("transit_headway_s must be >= 0")
    if config.transit_approach_s < 0:
        out.append("transit_approach_s must be >= 0")
    if config.detector_travel_s < 0:
        out.append("detector_travel_s must be >= 0")
    for d, pname in config.priority_rule.items():
        if d not in config.catalog.transit_devices:
            out.append(f"priority rule for non-transit detector {d!r}")
        if pname not in names:
            out.append(f"priority rule targets unknown phase {pname!r}")
        elif not config.phase(pname).transit:
            out.append(f"priority phase {pname!r} must be flagged transit")
    ring = config.vehicle_phases
    for i, p in enumerate(ring):
        others = sum(q.max_green for j, q in enumerate(ring) if j != i)
        if config.max_red_cap < others:
            out.append(
                f"max_red_cap={config.max_red_cap} < {others}, the sum of max_green "
                f"of phases other than {p.name}"
            )
    return out


@dataclass
class SimRun:
    seed: int
    horizon_s: int
    start_timestamp: int
    telegrams: list[Telegram]
    ground_truth_cycles: dict[str, list[Cycle]]
    phase_log: list[tuple[str, int, int]]  # (phase, first green second, last green second)

    @property
    def window(self) -> Window:
        return Window(self.start_timestamp, self.start_timestamp + self.horizon_s - 1)


def _occupation(rng, onsets: np.ndarray, mean_hold: float, horizon: int) -> np.ndarray:
    occ = np.zeros(horizon, dtype=np.int8)
    holds = 1 + rng.poisson(max(mean_hold - 1.0, 0.0), size=len(onsets))
    # difference array: +1 at onset, -1 after the hold ends
    diff = np.zeros(horizon + 1, dtype=np.int64)
    np.add.at(diff, onsets, 1)
    np.add.at(diff, np.minimum(onsets + holds, horizon), -1)
    occ[np.cumsum(diff[:-1]) > 0] = 1
    return occ


def _detector_traces(config: SimConfig, horizon: int, seed: int) -> dict[str, np.ndarray]:
    dets = config.catalog.detectors
    streams = np.random.SeedSequence(seed).spawn(len(dets))
    out = {}
    for det, ss in zip(dets, streams):
        rng = np.random.Generator(np.random.PCG64(ss))
        if det in config.catalog.transit_devices:
            if config.transit_headway_s > 0:
                n_max = int(horizon / config.transit_headway_s * 2 + 20)
                gaps = rng.exponential(config.transit_headway_s, size=n_max)
                times = np.floor(np.cumsum(gaps)).astype(np.int64)
                onsets = times[times < horizon]
            else:
                onsets = np.zeros(0, dtype=np.int64)
            hold = config.transit_occupation_s or config.detector_occupation_s
        else:
            lam = config.arrival_rate.get(det, 0.0) / 3600.0
            counts = rng.poisson(lam, size=horizon) if lam > 0 else np.zeros(horizon, int)
            onsets = np.repeat(np.arange(horizon), counts)
            hold = config.detector_occupation_s
        out[det] = _occupation(rng, onsets, hold, horizon)
    return out


def _last_on(occ: np.ndarray) -> np.ndarray:
    """For each second, the latest second <= it with occupancy (or -10**9)."""
    idx = np.where(occ > 0, np.arange(len(occ)), -(10**9))
    return np.maximum.accumulate(idx)


def simulate(config: SimConfig, horizon_s: int, seed: int) -> SimRun:
    problems = validate_config(config)
    if problems:
        raise InvalidConfig(problems)
    if horizon_s < 1:
        raise ValueError("horizon_s must be >= 1")
    H = int(horizon_s)
    cat = config.catalog
    det_occ = _detector_traces(config, H, seed)

    ring = config.vehicle_phases
    ring_last_on = []
    for p in ring:
        mapped = [
            d for d in cat.detectors
            if d not in cat.transit_devices and set(cat.detector_to_signal.get(d, ())) & set(p.signals)
        ]
        if mapped:
            combined = np.max(np.stack([det_occ[d] for d in mapped]), axis=0)
            if config.detector_travel_s:
                # vehicles reach the stop line detector_travel_s after detection
                combined = np.concatenate(
                    (np.zeros(config.detector_travel_s, dtype=np.int8), combined)
                )[:H]
            ring_last_on.append(_last_on(combined))
        else:
            ring_last_on.append(None)

    # priority requests per transit phase, as sorted activation seconds
    requests: dict[str, list[int]] = {p.name: [] for p in config.phases if p.transit}
    for det, pname in config.priority_rule.items():
        occ = det_occ[det]
        # the request is raised when the transit vehicle clears the detector
        clears = np.flatnonzero(np.diff(np.concatenate((occ, [0]))) == -1)
        requests[pname].extend(int(t) + config.transit_approach_s for t in clears)
    for pname in requests:
        requests[pname].sort()
    served_upto = {pname: 0 for pname in requests}  # index of first unserved request
    transit_order = [p for p in config.phases if p.transit]

    vehicle_signals = [s for s in cat.signals if s not in set().union(*(p.signals for p in transit_order))] \
        if transit_order else list(cat.signals)
    ring_index_of_signal: dict[str, int] = {}
    for i, p in enumerate(ring):
        for s in p.signals:
            ring_index_of_signal.setdefault(s, i)

    signal_idx = {s: i for i, s in enumerate(cat.signals)}
    green = np.zeros((len(cat.signals), H), dtype=np.int8)
    red_since = {s: 0 for s in cat.signals}
    phase_log = []

    def pending(pname: str, t: int) -> int | None:
        reqs, i = requests[pname], served_upto[pname]
        return reqs[i] if i < len(reqs) and reqs[i] <= t else None

    def cap_allows(phase: Phase, next_ring: int, t_start: int) -> bool:
        for s in vehicle_signals:
            if s in phase.signals or s not in ring_index_of_signal:
                continue
            pos = ring_index_of_signal[s]
            ahead = 0
            j = next_ring
            while j != pos:
                ahead += ring[j].max_green
                j = (j + 1) % len(ring)
            red_so_far = t_start - red_since[s]
            if red_so_far + phase.max_green + ahead > config.max_red_cap:
                return False
        return True

    def choose_next(t_next: int, next_ring: int) -> Phase:
        best = None
        for p in transit_order:
            r = pending(p.name, t_next - 1)
            if r is not None and (best is None or r < best[0]):
                if cap_allows(p, next_ring, t_next):
                    best = (r, p)
        return best[1] if best else ring[next_ring]

    def hold_for(phase: Phase, t_next: int) -> int:
        need = 0
        for s in phase.signals:
            need = max(need, config.base_red.get(s, 0) - (t_next - red_since[s]))
        return max(need, 0)

    t = 0
    ring_pos = 0  # last served vehicle phase
    phase = ring[0]
    while t < H:
        t0 = t
        # green run of the phase, deciding termination at the end of each second
        last_on = ring_last_on[ring_pos] if not phase.transit else None
        while True:
            elapsed = t - t0 + 1
            if t >= H - 1:
                end = True
            elif elapsed >= phase.max_green:
                end = True
            elif elapsed < phase.min_green:
                end = False
            elif phase.transit:
                end = True
            else:
                next_ring = (ring_pos + 1) % len(ring)
                preempt = any(
                    pending(p.name, t) is not None and cap_allows(p, next_ring, t + 1)
                    for p in transit_order
                )
                gap_open = last_on is not None and (t - last_on[t]) < phase.extension_gap
                end = preempt or not gap_open
            if end:
                break
            t += 1
        t1 = min(t, H - 1)
        for s in phase.signals:
            green[signal_idx[s], t0:t1 + 1] = 1
        phase_log.append((phase.name, t0, t1))
        if phase.transit:
            reqs = requests[phase.name]
            i = served_upto[phase.name]
            while i < len(reqs) and reqs[i] <= t1:
                i += 1
            served_upto[phase.name] = i
        next_ring = (ring_pos + 1) % len(ring)
        t_next = t1 + 1
        for s in phase.signals:
            red_since[s] = t_next
        if t_next >= H:
            break
        nxt = choose_next(t_next, next_ring)
        if not nxt.transit:
            ring_pos = next_ring
        t_next += hold_for(nxt, t_next)
        phase = nxt
        t = t_next

    telegrams = _emit(config, green, det_occ)
    cycles = {s: _cycles_from_greens(s, green[signal_idx[s]]) for s in cat.signals}
    return SimRun(seed, H, config.start_timestamp, telegrams, cycles, phase_log)


def _emit(config: SimConfig, green: np.ndarray, det_occ: dict[str, np.ndarray]) -> list[Telegram]:
    cat = config.catalog
    traces = [(s, green[i]) for i, s in enumerate(cat.signals)]
    traces += [(d, det_occ[d]) for d in cat.detectors]
    events = []
    for order, (dev, v) in enumerate(traces):
        prev = np.concatenate(([0], v[:-1]))
        for k in np.flatnonzero(v != prev):
            events.append((int(k), order, dev, int(v[k])))
    events.sort()
    t0 = config.start_timestamp
    return [Telegram(t0 + k, dev, st) for k, _, dev, st in events]


def _cycles_from_greens(signal_id: str, g: np.ndarray) -> list[Cycle]:
    """Cycles from the controller's green intervals (independent of segment_cycles)."""
    H = len(g)
    intervals = []
    t = 0
    while t < H:
        if g[t]:
            a = t
            while t < H and g[t]:
                t += 1
            intervals.append((a, t - 1))
        else:
            t += 1
    out = []
    for j in range(len(intervals) - 1):
        onset = intervals[j][1] + 1
        gs, ge = intervals[j + 1]
        next_onset = ge + 1
        if next_onset > H - 1:
            break
        out.append(
            Cycle(signal_id, len(out), onset + 1, next_onset, gs - onset, ge - gs + 1)
        )
    return out


def write_cycles_csv(path, cycles: Mapping[str, list[Cycle]]) -> None:
    rows = ["signal_id,n,start_k,red_s,green_s"]
    for sid, cs in cycles.items():
        rows.extend(f"{sid},{c.index},{c.start_k},{c.red_s},{c.green_s}" for c in cs)
    Path(path).write_text("\n".join(rows) + "\n")
