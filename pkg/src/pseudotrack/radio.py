"""Radio emission schedules and RSSI propagation.

Turns ground-truth traces plus scheme decisions into attacker-visible
observations. Received power follows a log-distance path-loss model with
log-normal shadowing, plus per-wall and per-meter penetration losses for
building obstacles. Reception is gated by the antenna radius (the
attacker's deliberate coverage limit) and by a sensitivity floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mobility import Rect, RoadMap, VehicleTrace
from .schemes import IdentifierStream
from .types import (
    BsmRecord,
    ConfigError,
    GroundTruth,
    ProbeRecord,
    RadioObservation,
    WifiId,
)

# Distances below this are clamped before the path-loss log.
MIN_DISTANCE = 0.1


@dataclass(frozen=True)
class RadioConfig:
    dsrc_tx_dbm: float = 23.0
    wifi_tx_dbm: float = 20.0
    bsm_period: float = 1.0
    probe_period: float = 0.1
    path_loss_exponent: float = 2.75
    ref_loss_db: float = 47.0
    shadowing_sigma_db: float = 3.0
    # Correlation time of the shadowing process per (vehicle, antenna)
    # link. Shadowing is environmental, so the two radios of one vehicle
    # see the same realization; 0 falls back to i.i.d. per-message draws.
    shadowing_corr_time: float = 2.0
    obstacle_wall_db: float = 9.0
    obstacle_meter_db: float = 0.4
    sensitivity_dbm: float = -92.0

    def validate(self) -> None:
        if self.bsm_period <= 0 or self.probe_period <= 0:
            raise ConfigError("emission periods must be positive")
        if self.shadowing_sigma_db < 0 or self.shadowing_corr_time < 0:
            raise ConfigError("shadowing parameters must be non-negative")
        if self.sensitivity_dbm >= min(self.dsrc_tx_dbm, self.wifi_tx_dbm):
            raise ConfigError("sensitivity floor must be below both transmit powers")

    @property
    def expected_count_ratio(self) -> float:
        """Probes per safety message when both radios are heard."""
        return self.bsm_period / self.probe_period


@dataclass(frozen=True)
class AntennaZone:
    """Circular coverage area of one monitoring antenna."""

    antenna_id: int
    x: float
    y: float
    radius: float = 50.0


def validate_zones(zones: list[AntennaZone]) -> None:
    """Zones must be pairwise non-overlapping (threat-model requirement)."""
    seen = set()
    for z in zones:
        if z.antenna_id in seen:
            raise ConfigError(f"duplicate antenna_id {z.antenna_id}")
        seen.add(z.antenna_id)
        if z.radius <= 0:
            raise ConfigError(f"antenna {z.antenna_id}: radius must be positive")
    for i, a in enumerate(zones):
        for b in zones[i + 1 :]:
            if math.hypot(a.x - b.x, a.y - b.y) <= a.radius + b.radius:
                raise ConfigError(f"zones {a.antenna_id} and {b.antenna_id} overlap")


def mean_rssi(tx_dbm: float, distance: float, config: RadioConfig) -> float:
    """Log-distance mean received power at ``distance`` meters."""
    d = max(distance, MIN_DISTANCE)
    return tx_dbm - config.ref_loss_db - 10.0 * config.path_loss_exponent * math.log10(d)


def segment_rect_overlap(p0, p1, rect: Rect) -> tuple[int, float]:
    """Boundary crossings and in-rectangle length of the segment p0 -> p1.

    An endpoint inside the rectangle contributes no crossing for its side
    of the segment; a pass-through contributes two.
    """
    x0, y0 = p0
    x1, y1 = p1
    dx = x1 - x0
    dy = y1 - y0
    if dx == 0.0 and dy == 0.0:
        return 0, 0.0

    t_enter = -math.inf
    t_exit = math.inf
    for start, delta, lo, hi in ((x0, dx, rect.x_min, rect.x_max), (y0, dy, rect.y_min, rect.y_max)):
        if delta == 0.0:
            if start < lo or start > hi:
                return 0, 0.0
            continue
        ta = (lo - start) / delta
        tb = (hi - start) / delta
        if ta > tb:
            ta, tb = tb, ta
        t_enter = max(t_enter, ta)
        t_exit = min(t_exit, tb)

    lo_t = max(t_enter, 0.0)
    hi_t = min(t_exit, 1.0)
    if hi_t - lo_t <= 1e-12:
        return 0, 0.0
    crossings = int(t_enter > 1e-12) + int(t_exit < 1.0 - 1e-12)
    length = (hi_t - lo_t) * math.hypot(dx, dy)
    return crossings, length


def obstacle_loss(road_map: RoadMap, tx_pos, rx_pos, config: RadioConfig) -> float:
    """Penetration loss along the line tx -> rx through map obstacles."""
    walls = 0
    inside = 0.0
    for rect in road_map.obstacles:
        c, length = segment_rect_overlap(tx_pos, rx_pos, rect)
        walls += c
        inside += length
    return walls * config.obstacle_wall_db + inside * config.obstacle_meter_db


def _obstacle_loss_bulk(road_map, xs, ys, rx, config) -> np.ndarray:
    """Vectorized obstacle_loss for many transmitter points to one receiver."""
    n = len(xs)
    walls = np.zeros(n)
    inside = np.zeros(n)
    rx_x, rx_y = rx
    dx = rx_x - xs
    dy = rx_y - ys
    seg_len = np.hypot(dx, dy)
    for rect in road_map.obstacles:
        t_enter = np.full(n, -np.inf)
        t_exit = np.full(n, np.inf)
        valid = np.ones(n, dtype=bool)
        for start, delta, lo, hi in (
            (xs, dx, rect.x_min, rect.x_max),
            (ys, dy, rect.y_min, rect.y_max),
        ):
            with np.errstate(divide="ignore", invalid="ignore"):
                ta = (lo - start) / delta
                tb = (hi - start) / delta
            swap = ta > tb
            ta2 = np.where(swap, tb, ta)
            tb2 = np.where(swap, ta, tb)
            parallel = delta == 0.0
            outside = parallel & ((start < lo) | (start > hi))
            valid &= ~outside
            use = ~parallel
            t_enter = np.where(use, np.maximum(t_enter, ta2), t_enter)
            t_exit = np.where(use, np.minimum(t_exit, tb2), t_exit)
        lo_t = np.maximum(t_enter, 0.0)
        hi_t = np.minimum(t_exit, 1.0)
        hit = valid & (hi_t - lo_t > 1e-12)
        walls += hit * ((t_enter > 1e-12).astype(int) + (t_exit < 1.0 - 1e-12).astype(int))
        inside += np.where(hit, (hi_t - lo_t) * seg_len, 0.0)
    return walls * config.obstacle_wall_db + inside * config.obstacle_meter_db


def assign_wifi_ids(vehicle_ids: list[int], seed: int) -> dict[int, WifiId]:
    """Stable per-vehicle hotspot identities (locally administered MACs)."""
    rng = np.random.default_rng([seed, 0xA9])
    out: dict[int, WifiId] = {}
    used_macs: set[str] = set()
    used_ssids: set[str] = set()
    for vid in sorted(vehicle_ids):
        while True:
            octets = rng.integers(0, 256, size=5)
            mac = "02:" + ":".join(f"{int(o):02x}" for o in octets)
            if mac not in used_macs:
                used_macs.add(mac)
                break
        while True:
            ssid = f"ap-{int(rng.integers(0, 1 << 20)):05x}"
            if ssid not in used_ssids:
                used_ssids.add(ssid)
                break
        out[vid] = WifiId(mac=mac, ssid=ssid)
    return out


def capture(
    traces: list[VehicleTrace],
    streams: dict[int, IdentifierStream],
    zones: list[AntennaZone],
    road_map: RoadMap,
    config: RadioConfig,
    seed: int,
) -> tuple[list[RadioObservation], GroundTruth]:
    """Produce every observation the antennas collect, plus ground truth.

    Safety messages are emitted at multiples of ``bsm_period`` since entry
    and suppressed during scheme silence; probes run at ``probe_period``
    and are never suppressed. An emission is observed by a zone when the
    emitter is within its radius; received power is
    ``mean_rssi - obstacle_loss + N(0, shadowing_sigma)`` and observations
    below the sensitivity floor are dropped. Deterministic given the seed.
    """
    config.validate()
    validate_zones(zones)
    ordered = sorted(traces, key=lambda tr: tr.vehicle)
    for tr in ordered:
        if tr.vehicle not in streams:
            raise ConfigError(f"no identifier stream for vehicle {tr.vehicle}")

    wifi_ids = assign_wifi_ids([tr.vehicle for tr in ordered], seed)
    truth = GroundTruth()
    for tr in ordered:
        truth.wifi_owner[wifi_ids[tr.vehicle].mac] = tr.vehicle
        for pseudonym in streams[tr.vehicle].pseudonyms:
            truth.pseudonym_owner[pseudonym.value] = tr.vehicle

    observations: list[RadioObservation] = []
    for tr in ordered:
        stream = streams[tr.vehicle]
        wifi = wifi_ids[tr.vehicle]

        grids = {}
        for kind, period in (("bsm", config.bsm_period), ("probe", config.probe_period)):
            span = tr.exit_time - tr.entry_time
            n = max(int((span - 1e-9) / period) + 1, 0)
            times = tr.entry_time + np.arange(n) * period
            grids[kind] = (times, tr.states_at(times))
        bsm_times = grids["bsm"][0]
        emit_bsm = ~stream.silent_mask(bsm_times)
        pseudonyms = stream.pseudonyms_at(bsm_times)

        for zone_idx, zone in enumerate(zones):
            # Shadowing is drawn per link over every in-range instant of
            # both radios (independent of scheme silence), so probe values
            # never depend on the pseudonym scheme.
            in_range = {}
            for kind in ("bsm", "probe"):
                times, (xs, ys, *_rest) = grids[kind]
                dist = np.hypot(xs - zone.x, ys - zone.y)
                in_range[kind] = np.flatnonzero(dist <= zone.radius)
            n_bsm = len(in_range["bsm"])
            n_all = n_bsm + len(in_range["probe"])
            if n_all == 0:
                continue
            merged_times = np.concatenate(
                [grids["bsm"][0][in_range["bsm"]], grids["probe"][0][in_range["probe"]]]
            )
            noise_rng = np.random.default_rng([seed, 3, tr.vehicle, zone_idx])
            shadow = _link_shadowing(merged_times, config, noise_rng)

            for kind, tx, noise in (
                ("bsm", config.dsrc_tx_dbm, shadow[:n_bsm]),
                ("probe", config.wifi_tx_dbm, shadow[n_bsm:]),
            ):
                idx = in_range[kind]
                if len(idx) == 0:
                    continue
                times, (xs, ys, speeds, headings, accels) = grids[kind]
                d = np.maximum(np.hypot(xs[idx] - zone.x, ys[idx] - zone.y), MIN_DISTANCE)
                base = tx - config.ref_loss_db - 10.0 * config.path_loss_exponent * np.log10(d)
                if road_map.obstacles:
                    base = base - _obstacle_loss_bulk(
                        road_map, xs[idx], ys[idx], (zone.x, zone.y), config
                    )
                rssi = base + noise
                for j, k in enumerate(idx):
                    if rssi[j] < config.sensitivity_dbm:
                        continue
                    if kind == "bsm":
                        if not emit_bsm[k]:
                            continue
                        payload: BsmRecord | ProbeRecord = BsmRecord(
                            pseudonym=pseudonyms[k],
                            timestamp=float(times[k]),
                            x=float(xs[k]),
                            y=float(ys[k]),
                            speed=float(speeds[k]),
                            heading=float(headings[k]),
                            accel=float(accels[k]),
                        )
                    else:
                        payload = ProbeRecord(wifi_id=wifi, timestamp=float(times[k]))
                    observations.append(
                        RadioObservation(antenna_id=zone.antenna_id, payload=payload, rssi=float(rssi[j]))
                    )

    observations.sort(key=_observation_order)
    return observations, truth


def _link_shadowing(times: np.ndarray, config: RadioConfig, rng) -> np.ndarray:
    """Shadowing samples for one (vehicle, antenna) link at ``times``.

    Gauss-Markov process with marginal sigma ``shadowing_sigma_db`` and
    correlation time ``shadowing_corr_time``; both radios of the vehicle
    sample the same realization. A zero correlation time degenerates to
    i.i.d. per-message draws.
    """
    order = np.argsort(times, kind="stable")
    draws = rng.normal(0.0, config.shadowing_sigma_db, size=len(times))
    if config.shadowing_corr_time <= 0 or config.shadowing_sigma_db == 0 or len(times) == 0:
        return draws
    sorted_times = times[order]
    rho = np.exp(-np.diff(sorted_times) / config.shadowing_corr_time)
    values = np.empty(len(times))
    values[0] = draws[0]
    for i in range(1, len(times)):
        r = rho[i - 1]
        values[i] = r * values[i - 1] + math.sqrt(1.0 - r * r) * draws[i]
    out = np.empty(len(times))
    out[order] = values
    return out


def _observation_order(obs: RadioObservation):
    payload = obs.payload
    if isinstance(payload, BsmRecord):
        ident = (0, f"{payload.pseudonym.value:016x}")
    else:
        ident = (1, payload.wifi_id.mac)
    return (payload.timestamp, obs.antenna_id) + ident
