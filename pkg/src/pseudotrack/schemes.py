"""Pseudonym-changing schemes.

Each scheme turns a vehicle trace into a time-indexed pseudonym stream
plus optional radio-silence intervals. Fresh pseudonyms come from a
global pool that never reuses a value, and the Wi-Fi identity of the
vehicle is deliberately untouched by every scheme: pseudonym churn hides
the DSRC identity only.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .mobility import VehicleTrace
from .types import ConfigError, Pseudonym

SCHEME_KINDS = (
    "Periodical",
    "Disposable",
    "Distance",
    "Random",
    "Car2Car",
    "SilentPeriod",
    "CooperativeExchange",
)

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    """Bijective 64-bit mixer; distinct inputs give distinct outputs."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


class PseudonymPool:
    """Issues opaque 64-bit pseudonyms, unique for the whole run."""

    def __init__(self, seed: int):
        self._base = _splitmix64(seed & _MASK64)
        self._count = 0

    def issue(self, issued_at: float) -> Pseudonym:
        value = _splitmix64((self._base + self._count) & _MASK64)
        self._count += 1
        return Pseudonym(value=value, issued_at=issued_at)


@dataclass(frozen=True)
class SchemeConfig:
    """Scheme kind plus the parameters relevant to it."""

    kind: str = "Periodical"
    period: float = 60.0
    max_messages: int = 60
    distance_threshold: float = 500.0
    change_probability: float = 0.05
    neighbor_radius: float = 30.0
    neighbor_min: int = 2
    silence_min: float = 1.0
    silence_max: float = 5.0
    exchange_min_group: int = 3

    def validate(self) -> None:
        if self.kind not in SCHEME_KINDS:
            raise ConfigError(f"unknown scheme kind {self.kind!r}; valid: {', '.join(SCHEME_KINDS)}")
        if self.period <= 0 or self.max_messages <= 0 or self.distance_threshold <= 0:
            raise ConfigError("scheme thresholds must be positive")
        if not 0.0 <= self.change_probability <= 1.0:
            raise ConfigError(f"change_probability must be in [0, 1], got {self.change_probability}")
        if self.neighbor_radius <= 0 or self.neighbor_min <= 0 or self.exchange_min_group <= 0:
            raise ConfigError("neighbor parameters must be positive")
        if self.silence_min <= 0 or self.silence_min > self.silence_max:
            raise ConfigError(f"bad silence range ({self.silence_min}, {self.silence_max})")

    def params(self) -> dict:
        """Parameters actually used by this kind (recorded in reports)."""
        common: dict = {}
        if self.kind in ("Periodical", "SilentPeriod", "CooperativeExchange"):
            common["period"] = self.period
        if self.kind == "Disposable":
            common["max_messages"] = self.max_messages
        if self.kind == "Distance":
            common["distance_threshold"] = self.distance_threshold
        if self.kind == "Random":
            common["change_probability"] = self.change_probability
        if self.kind in ("Car2Car", "CooperativeExchange"):
            common["neighbor_radius"] = self.neighbor_radius
        if self.kind == "Car2Car":
            common["neighbor_min"] = self.neighbor_min
        if self.kind in ("SilentPeriod", "CooperativeExchange"):
            common["silence_range"] = (self.silence_min, self.silence_max)
        if self.kind == "CooperativeExchange":
            common["exchange_min_group"] = self.exchange_min_group
        return common


@dataclass
class IdentifierStream:
    """Time-indexed pseudonym assignment for one vehicle.

    ``starts``/``pseudonyms`` are parallel, ascending; segment i is active
    on [starts[i], starts[i+1]). Silence intervals are merged, ascending,
    half-open.
    """

    vehicle: int
    starts: list[float]
    pseudonyms: list[Pseudonym]
    silences: list[tuple[float, float]]

    def pseudonym_at(self, t: float) -> Pseudonym:
        i = bisect_right(self.starts, t) - 1
        return self.pseudonyms[max(i, 0)]

    def is_silent(self, t: float) -> bool:
        for a, b in self.silences:
            if a <= t < b:
                return True
        return False

    def silent_mask(self, times: np.ndarray) -> np.ndarray:
        mask = np.zeros(len(times), dtype=bool)
        for a, b in self.silences:
            mask |= (times >= a) & (times < b)
        return mask

    def pseudonyms_at(self, times: np.ndarray) -> list[Pseudonym]:
        idx = np.maximum(np.searchsorted(self.starts, times, side="right") - 1, 0)
        return [self.pseudonyms[i] for i in idx]

    def change_times(self) -> list[float]:
        return self.starts[1:]


def bsm_instants(trace: VehicleTrace, bsm_period: float) -> np.ndarray:
    """Scheduled safety-message emission times: entry + k * period, k >= 0,
    strictly before the vehicle's exit."""
    span = trace.exit_time - trace.entry_time
    n = max(int((span - 1e-9) / bsm_period) + 1, 0)
    return trace.entry_time + np.arange(n) * bsm_period


def _merge_intervals(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    if not intervals:
        return []
    intervals = sorted(intervals)
    merged = [intervals[0]]
    for a, b in intervals[1:]:
        la, lb = merged[-1]
        if a <= lb:
            merged[-1] = (la, max(lb, b))
        else:
            merged.append((a, b))
    return merged


def apply_scheme_all(
    traces: list[VehicleTrace],
    config: SchemeConfig,
    seed: int,
    bsm_period: float = 1.0,
) -> dict[int, IdentifierStream]:
    """Compute identifier streams for every vehicle in one pass.

    Cooperative kinds need a global view (neighbor queries, simultaneous
    group changes), so streams for all vehicles are produced together.
    Deterministic for a given (traces, config, seed).
    """
    config.validate()
    ordered = sorted(traces, key=lambda tr: tr.vehicle)
    pool = PseudonymPool(seed)

    if config.kind == "CooperativeExchange":
        events = _cooperative_exchange_events(ordered, config, seed, bsm_period)
    else:
        events = {}
        for tr in ordered:
            rng = np.random.default_rng([seed, tr.vehicle])
            events[tr.vehicle] = _plan_vehicle(tr, ordered, config, rng, bsm_period)

    streams: dict[int, IdentifierStream] = {}
    for tr in ordered:
        change_times, silences = events[tr.vehicle]
        starts = [tr.entry_time] + list(change_times)
        pseudonyms = [pool.issue(t) for t in starts]
        streams[tr.vehicle] = IdentifierStream(
            vehicle=tr.vehicle,
            starts=starts,
            pseudonyms=pseudonyms,
            silences=_merge_intervals(silences),
        )
    return streams


def apply_scheme(
    trace: VehicleTrace,
    all_traces: list[VehicleTrace],
    config: SchemeConfig,
    seed: int,
    bsm_period: float = 1.0,
) -> IdentifierStream:
    """Identifier stream for one vehicle (computed consistently with the rest)."""
    if not any(tr.vehicle == trace.vehicle for tr in all_traces):
        all_traces = list(all_traces) + [trace]
    return apply_scheme_all(all_traces, config, seed, bsm_period)[trace.vehicle]


def _plan_vehicle(trace, all_traces, config, rng, bsm_period):
    """Change times and silences for the per-vehicle (non-cooperative) kinds."""
    kind = config.kind
    exit_t = trace.exit_time
    changes: list[float] = []
    silences: list[tuple[float, float]] = []

    if kind == "Periodical":
        t = trace.entry_time + config.period
        while t < exit_t - 1e-9:
            changes.append(t)
            t += config.period

    elif kind == "Disposable":
        instants = bsm_instants(trace, bsm_period)
        for j in range(config.max_messages, len(instants), config.max_messages):
            changes.append(float(instants[j]))

    elif kind == "Distance":
        cum = trace.cumulative_distance()
        threshold = config.distance_threshold
        next_mark = threshold
        for i in range(len(cum)):
            crossed = False
            while cum[i] >= next_mark:
                crossed = True
                next_mark += threshold
            if crossed:
                changes.append(float(trace.t[i]))

    elif kind == "Random":
        instants = bsm_instants(trace, bsm_period)
        if len(instants) > 1:
            draws = rng.random(len(instants) - 1)
            changes = [float(t) for t, u in zip(instants[1:], draws) if u < config.change_probability]

    elif kind == "Car2Car":
        instants = bsm_instants(trace, bsm_period)
        counts = _neighbor_counts(trace, all_traces, instants, config.neighbor_radius)
        armed = True
        for t, count in zip(instants, counts):
            if count >= config.neighbor_min:
                if armed:
                    changes.append(float(t))
                    armed = False
            else:
                armed = True

    elif kind == "SilentPeriod":
        t = trace.entry_time + config.period
        while t < exit_t - 1e-9:
            quiet = rng.uniform(config.silence_min, config.silence_max)
            silences.append((t, min(t + quiet, exit_t)))
            if t + quiet < exit_t - 1e-9:
                changes.append(t + quiet)
            t += config.period

    else:  # pragma: no cover - validate() rejects unknown kinds
        raise ConfigError(f"unknown scheme kind {kind!r}")

    return changes, silences


def _neighbor_counts(trace, all_traces, instants, radius) -> np.ndarray:
    """Number of other active vehicles within ``radius`` at each instant."""
    counts = np.zeros(len(instants), dtype=int)
    if len(instants) == 0:
        return counts
    own_x, own_y, *_ = trace.states_at(instants)
    for other in all_traces:
        if other.vehicle == trace.vehicle:
            continue
        active = (instants >= other.entry_time - 1e-9) & (instants < other.exit_time - 1e-9)
        if not np.any(active):
            continue
        ox, oy, *_ = other.states_at(instants)
        near = active & (np.hypot(ox - own_x, oy - own_y) <= radius)
        counts += near.astype(int)
    return counts


def _cooperative_exchange_events(ordered, config, seed, bsm_period):
    """Global scan for simultaneous group changes with silent-period fallback.

    On a common time grid, any clique of at least ``exchange_min_group``
    armed vehicles that are mutually within ``neighbor_radius`` changes
    pseudonyms at the same instant. Vehicles re-arm once they are out of
    any potential group. A vehicle that goes ``period`` seconds without a
    cooperative change falls back to a silence-masked change on its own.
    """
    events: dict[int, tuple[list[float], list[tuple[float, float]]]] = {
        tr.vehicle: ([], []) for tr in ordered
    }
    if not ordered:
        return events
    rngs = {tr.vehicle: np.random.default_rng([seed, tr.vehicle]) for tr in ordered}
    t_end = max(tr.exit_time for tr in ordered)
    n_steps = int(t_end / bsm_period) + 1
    grid = np.arange(n_steps) * bsm_period

    # Positions of every vehicle on the common grid (NaN while inactive).
    pos = {}
    for tr in ordered:
        active = (grid >= tr.entry_time - 1e-9) & (grid < tr.exit_time - 1e-9)
        x, y, *_ = tr.states_at(grid)
        x = np.where(active, x, np.nan)
        y = np.where(active, y, np.nan)
        pos[tr.vehicle] = (x, y)

    armed = {tr.vehicle: True for tr in ordered}
    last_change = {tr.vehicle: tr.entry_time for tr in ordered}

    for g, t in enumerate(grid):
        active_ids = [tr.vehicle for tr in ordered if not math.isnan(pos[tr.vehicle][0][g])]
        if not active_ids:
            continue
        xs = np.array([pos[v][0][g] for v in active_ids])
        ys = np.array([pos[v][1][g] for v in active_ids])
        dist = np.hypot(xs[:, None] - xs[None, :], ys[:, None] - ys[None, :])
        adjacent = (dist <= config.neighbor_radius) & ~np.eye(len(active_ids), dtype=bool)

        # Re-arm vehicles that cannot currently belong to a full group.
        degree = adjacent.sum(axis=1)
        for i, v in enumerate(active_ids):
            if not armed[v] and degree[i] < config.exchange_min_group - 1:
                armed[v] = True

        # Greedy clique growth in vehicle-id order among armed vehicles.
        triggered: set[int] = set()
        armed_idx = [i for i, v in enumerate(active_ids) if armed[v]]
        for i in armed_idx:
            v = active_ids[i]
            if v in triggered:
                continue
            clique = [i]
            for j in armed_idx:
                if j <= i or active_ids[j] in triggered:
                    continue
                if all(adjacent[j, k] for k in clique):
                    clique.append(j)
            if len(clique) >= config.exchange_min_group:
                for k in clique:
                    member = active_ids[k]
                    events[member][0].append(float(t))
                    last_change[member] = float(t)
                    armed[member] = False
                    triggered.add(member)

        # Silent-period fallback for vehicles the crowd never helped.
        for v in active_ids:
            if v in triggered:
                continue
            if t - last_change[v] >= config.period - 1e-9:
                tr = next(tr for tr in ordered if tr.vehicle == v)
                quiet = rngs[v].uniform(config.silence_min, config.silence_max)
                end = min(t + quiet, tr.exit_time)
                events[v][1].append((float(t), float(end)))
                if t + quiet < tr.exit_time - 1e-9:
                    events[v][0].append(float(t + quiet))
                last_change[v] = float(t + quiet)
    return events
