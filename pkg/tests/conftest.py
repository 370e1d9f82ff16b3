"""Shared builders for scripted scenarios."""

from __future__ import annotations

import math

import numpy as np
import pytest

from pseudotrack.types import BsmRecord, ProbeRecord, Pseudonym, RadioObservation, WifiId
from pseudotrack.mobility import VehicleTrace


def mk_pseudonym(value: int, issued_at: float = 0.0) -> Pseudonym:
    return Pseudonym(value=value, issued_at=issued_at)


def mk_wifi(n: int) -> WifiId:
    return WifiId(mac=f"02:00:00:00:00:{n:02x}", ssid=f"ap-{n:04x}")


def mk_bsm_obs(
    pseudonym: Pseudonym,
    t: float,
    x: float,
    y: float,
    speed: float = 10.0,
    heading: float = 0.0,
    accel: float = 0.0,
    rssi: float = -60.0,
    zone: int = 0,
) -> RadioObservation:
    return RadioObservation(
        antenna_id=zone,
        payload=BsmRecord(
            pseudonym=pseudonym, timestamp=t, x=x, y=y, speed=speed, heading=heading, accel=accel
        ),
        rssi=rssi,
    )


def mk_probe_obs(wifi: WifiId, t: float, rssi: float = -63.0, zone: int = 0) -> RadioObservation:
    return RadioObservation(antenna_id=zone, payload=ProbeRecord(wifi_id=wifi, timestamp=t), rssi=rssi)


def straight_trace(
    vehicle: int,
    start: tuple[float, float] = (0.0, 0.0),
    heading: float = 0.0,
    speed: float = 10.0,
    duration: float = 10.0,
    dt: float = 0.1,
    entry: float = 0.0,
) -> VehicleTrace:
    """Constant-speed straight-line trace on a uniform grid."""
    n = int(round(duration / dt))
    t = entry + np.arange(n) * dt
    step = speed * dt
    x = start[0] + np.arange(n) * (step * math.cos(heading))
    y = start[1] + np.arange(n) * (step * math.sin(heading))
    return VehicleTrace(
        vehicle=vehicle,
        t=t,
        x=x,
        y=y,
        speed=np.full(n, float(speed)),
        heading=np.full(n, float(heading)),
        accel=np.zeros(n),
        entry_time=float(t[0]),
        exit_time=float(t[0]) + duration,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
