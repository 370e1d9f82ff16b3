"""Radio-signal association of pseudonym chains with Wi-Fi identities.

For each chain, candidate Wi-Fi identities are the ones heard by the same
antenna in the chain's time window. Three selection metrics are
supported:

* ``count`` - compares message counts, scaled by the cadence ratio;
* ``statistical`` - weighted difference of seven RSSI statistics;
* ``pearson`` - correlation of the interpolated RSSI time series.

Trips are then reconstructed by following each Wi-Fi identity across
zones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linker import PseudonymChain
from .types import ProbeRecord, RadioObservation, WifiId


class RssiSeries:
    """Time-ordered (timestamp, rssi) samples; timestamps strictly increase."""

    __slots__ = ("t", "v")

    def __init__(self, timestamps, values):
        t = np.asarray(timestamps, dtype=float)
        v = np.asarray(values, dtype=float)
        if len(t) != len(v):
            raise ValueError("timestamps and values must have equal length")
        if len(t) == 0:
            raise ValueError("series must contain at least one sample")
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        self.t = t
        self.v = v

    def __len__(self) -> int:
        return len(self.t)

    def rebased(self) -> "RssiSeries":
        """Same series with its own first timestamp subtracted."""
        return RssiSeries(self.t - self.t[0], self.v)

    def shifted(self, offset_db: float) -> "RssiSeries":
        return RssiSeries(self.t, self.v + offset_db)


@dataclass(frozen=True)
class SeriesStats:
    """The seven indexes the statistical metric compares."""

    mean: float
    std: float
    median: float
    max: float
    min: float
    ts_of_max: float
    ts_of_min: float

    def as_tuple(self) -> tuple[float, ...]:
        return (self.mean, self.std, self.median, self.max, self.min, self.ts_of_max, self.ts_of_min)


@dataclass(frozen=True)
class MetricWeights:
    """Index weights of the statistical metric; they sum to exactly 1."""

    w_mean: float = 0.1
    w_std: float = 0.3
    w_median: float = 0.1
    w_max: float = 0.05
    w_min: float = 0.05
    w_ts_max: float = 0.2
    w_ts_min: float = 0.2

    def as_tuple(self) -> tuple[float, ...]:
        return (self.w_mean, self.w_std, self.w_median, self.w_max, self.w_min, self.w_ts_max, self.w_ts_min)

    def validate(self) -> None:
        total = math.fsum(self.as_tuple())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"metric weights must sum to 1.0, got {total}")


DEFAULT_WEIGHTS = MetricWeights()

METRIC_NAMES = ("count", "statistical", "pearson")


@dataclass(frozen=True)
class MatchConfig:
    """Association knobs (the ``radar`` section of the run configuration)."""

    metric: str = "pearson"
    # Padding of the candidate window around the chain span. Probes are
    # dense enough that the true identity never needs padding, and any
    # padding skews the true candidate's normalized time axis.
    slack: float = 0.0
    weights: MetricWeights = field(default_factory=MetricWeights)
    n_points: int | None = None
    statistical_normalize: bool = True


@dataclass
class ChainAssociation:
    chain: PseudonymChain
    wifi_id: WifiId | None
    score: float


@dataclass
class TripReconstruction:
    """Attacker's view of one vehicle's trip: zone visits of a Wi-Fi identity."""

    wifi_id: WifiId
    visits: list[tuple[int, PseudonymChain, float]]


def chain_rssi_series(chain: PseudonymChain) -> RssiSeries:
    return RssiSeries([o.timestamp for o in chain.observations], [o.rssi for o in chain.observations])


class ZoneProbeIndex:
    """Per-identity probe series for one zone, sliceable by time window."""

    def __init__(self, probe_observations: list[RadioObservation]):
        grouped: dict[WifiId, list[tuple[float, float]]] = {}
        for obs in probe_observations:
            payload = obs.payload
            if not isinstance(payload, ProbeRecord):
                raise ValueError("ZoneProbeIndex expects probe observations only")
            grouped.setdefault(payload.wifi_id, []).append((payload.timestamp, obs.rssi))
        self._series: dict[WifiId, tuple[np.ndarray, np.ndarray]] = {}
        for wifi, points in grouped.items():
            points.sort()
            t = np.array([p[0] for p in points])
            v = np.array([p[1] for p in points])
            self._series[wifi] = (t, v)

    def ids_in_window(self, start: float, end: float) -> set[WifiId]:
        out = set()
        for wifi, (t, _) in self._series.items():
            lo = np.searchsorted(t, start, side="left")
            hi = np.searchsorted(t, end, side="right")
            if hi > lo:
                out.add(wifi)
        return out

    def series_in_window(self, start: float, end: float) -> dict[WifiId, RssiSeries]:
        out = {}
        for wifi, (t, v) in self._series.items():
            lo = np.searchsorted(t, start, side="left")
            hi = np.searchsorted(t, end, side="right")
            if hi > lo:
                out[wifi] = RssiSeries(t[lo:hi], v[lo:hi])
        return out

    def full_series(self, wifi: WifiId) -> RssiSeries:
        t, v = self._series[wifi]
        return RssiSeries(t, v)


def _as_index(zone_probe_log) -> ZoneProbeIndex:
    if isinstance(zone_probe_log, ZoneProbeIndex):
        return zone_probe_log
    return ZoneProbeIndex(zone_probe_log)


def candidate_ids(chain: PseudonymChain, zone_probe_log, slack: float = 1.0) -> set[WifiId]:
    """Identities with at least one probe inside the chain's padded window."""
    index = _as_index(zone_probe_log)
    return index.ids_in_window(chain.first_seen - slack, chain.last_seen + slack)


def candidate_series(chain: PseudonymChain, zone_probe_log, slack: float = 1.0) -> dict[WifiId, RssiSeries]:
    """Window-restricted probe series for every candidate identity."""
    index = _as_index(zone_probe_log)
    return index.series_in_window(chain.first_seen - slack, chain.last_seen + slack)


def candidate_totals(chain: PseudonymChain, zone_probe_log, slack: float = 1.0) -> dict[WifiId, RssiSeries]:
    """Whole-capture probe series of each candidate identity.

    The candidate set is still gated by the chain's time window, but each
    series is everything the antenna ever collected for that identity;
    the count metric compares totals, not window slices.
    """
    index = _as_index(zone_probe_log)
    ids = index.ids_in_window(chain.first_seen - slack, chain.last_seen + slack)
    return {wifi: index.full_series(wifi) for wifi in ids}


def series_stats(series: RssiSeries) -> SeriesStats:
    """Exact sample statistics; std is the population standard deviation and
    ties for the extremes resolve to the earliest timestamp."""
    if len(series) == 0:
        raise ValueError("series_stats requires a non-empty series")
    v = series.v
    t = series.t
    i_max = int(np.argmax(v))
    i_min = int(np.argmin(v))
    return SeriesStats(
        mean=float(np.mean(v)),
        std=float(np.std(v)),
        median=float(np.median(v)),
        max=float(v[i_max]),
        min=float(v[i_min]),
        ts_of_max=float(t[i_max]),
        ts_of_min=float(t[i_min]),
    )


def find_match_count(
    chain: PseudonymChain,
    candidates: dict[WifiId, RssiSeries],
    expected_ratio: float = 10.0,
) -> ChainAssociation:
    """Pick the identity whose probe count best matches the scaled BSM count."""
    if not candidates:
        return ChainAssociation(chain=chain, wifi_id=None, score=math.nan)
    bsm_count = len(chain.observations)
    best = None
    for wifi in sorted(candidates):
        diff = abs(len(candidates[wifi]) - bsm_count * expected_ratio)
        if best is None or diff < best[0]:
            best = (diff, wifi)
    return ChainAssociation(chain=chain, wifi_id=best[1], score=float(best[0]))


def find_match_statistical(
    chain: PseudonymChain,
    candidates: dict[WifiId, RssiSeries],
    weights: MetricWeights = DEFAULT_WEIGHTS,
    tx_offset_db: float = 3.0,
    normalize: bool = True,
) -> ChainAssociation:
    """Weighted difference of seven RSSI statistics; smallest wins.

    Each series is re-based to its own first timestamp, and candidate
    values are lifted by ``tx_offset_db`` (DSRC minus Wi-Fi transmit power)
    so both radios sit at the same level. Per index, the absolute
    difference against the chain's statistics is min-max normalized across
    candidates (a constant index contributes zero), then combined by the
    weights. Ties resolve by smaller raw mean difference, then smaller MAC.
    """
    weights.validate()
    if not candidates:
        return ChainAssociation(chain=chain, wifi_id=None, score=math.nan)

    chain_stats = series_stats(chain_rssi_series(chain).rebased())
    order = sorted(candidates)
    diffs = np.array(
        [
            [
                abs(a - b)
                for a, b in zip(
                    chain_stats.as_tuple(),
                    series_stats(candidates[wifi].rebased().shifted(tx_offset_db)).as_tuple(),
                )
            ]
            for wifi in order
        ]
    )
    if normalize:
        lo = diffs.min(axis=0)
        hi = diffs.max(axis=0)
        span = hi - lo
        with np.errstate(invalid="ignore", divide="ignore"):
            scaled = np.where(span > 0, (diffs - lo) / np.where(span > 0, span, 1.0), 0.0)
    else:
        scaled = diffs
    scores = scaled @ np.array(weights.as_tuple())

    best = None
    for i, wifi in enumerate(order):
        key = (scores[i], diffs[i][0], wifi)
        if best is None or key < best:
            best = key
    return ChainAssociation(chain=chain, wifi_id=best[2], score=float(best[0]))


def interpolate_to(series: RssiSeries, n: int) -> np.ndarray:
    """Linear interpolation at n evenly spaced points over the series span,
    both endpoints included."""
    if len(series) < 2:
        raise ValueError("interpolation requires at least 2 samples")
    if n < 2:
        raise ValueError("interpolation target must be at least 2 points")
    grid = np.linspace(series.t[0], series.t[-1], n)
    return np.interp(grid, series.t, series.v)


def pearson(x, y) -> float:
    """Sample Pearson correlation in [-1, 1]; zero if either side is constant.

    Deviations are scaled by their largest magnitude before the dot
    products so the computation cannot underflow for tiny variances.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise ValueError("pearson requires at least 2 samples")
    dx = x - x.mean()
    dy = y - y.mean()
    mx = float(np.max(np.abs(dx)))
    my = float(np.max(np.abs(dy)))
    if mx == 0.0 or my == 0.0:
        return 0.0
    dx = dx / mx
    dy = dy / my
    ssx = float(np.dot(dx, dx))
    ssy = float(np.dot(dy, dy))
    denominator = math.sqrt(ssx * ssy)
    if denominator == 0.0:
        return 0.0
    r = float(np.dot(dx, dy)) / denominator
    return max(-1.0, min(1.0, r))


def find_match_pearson(
    chain: PseudonymChain,
    candidates: dict[WifiId, RssiSeries],
    n_points: int | None = None,
) -> ChainAssociation:
    """Pick the identity whose interpolated RSSI correlates best with the chain's.

    Candidates with fewer than 2 probes are skipped; when no target length
    is given, series are aligned to the longest one involved.
    """
    usable = {w: s for w, s in candidates.items() if len(s) >= 2}
    chain_series = chain_rssi_series(chain)
    if not usable or len(chain_series) < 2:
        return ChainAssociation(chain=chain, wifi_id=None, score=math.nan)
    n = n_points or max(len(chain_series), max(len(s) for s in usable.values()))
    reference = interpolate_to(chain_series, n)
    best = None
    for wifi in sorted(usable):
        r = pearson(interpolate_to(usable[wifi], n), reference)
        key = (-r, wifi)
        if best is None or key < best:
            best = key
    return ChainAssociation(chain=chain, wifi_id=best[1], score=float(-best[0]))


def find_match(
    chain: PseudonymChain,
    candidates: dict[WifiId, RssiSeries],
    metric: str,
    config: MatchConfig = MatchConfig(),
    expected_ratio: float = 10.0,
    tx_offset_db: float = 3.0,
) -> ChainAssociation:
    if metric == "count":
        return find_match_count(chain, candidates, expected_ratio)
    if metric == "statistical":
        return find_match_statistical(
            chain, candidates, config.weights, tx_offset_db, config.statistical_normalize
        )
    if metric == "pearson":
        return find_match_pearson(chain, candidates, config.n_points)
    raise ValueError(f"unknown metric {metric!r}; valid: {', '.join(METRIC_NAMES)}")


def reconstruct_trips(associations: list[ChainAssociation]) -> list[TripReconstruction]:
    """Group associations by Wi-Fi identity; visits ordered by first sighting."""
    by_wifi: dict[WifiId, list[ChainAssociation]] = {}
    for assoc in associations:
        if assoc.wifi_id is None:
            continue
        by_wifi.setdefault(assoc.wifi_id, []).append(assoc)
    trips = []
    for wifi in sorted(by_wifi):
        visits = [
            (a.chain.zone, a.chain, a.chain.first_seen)
            for a in sorted(by_wifi[wifi], key=lambda a: (a.chain.first_seen, a.chain.zone))
        ]
        trips.append(TripReconstruction(wifi_id=wifi, visits=visits))
    return trips
