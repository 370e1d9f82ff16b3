"""Shared value types for simulated radio captures and ground truth.

All types here are immutable value objects; they can be shared freely
between threads and used as dict keys.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class ConfigError(ValueError):
    """A configuration value violates a documented constraint."""


# Ground-truth vehicle identity. It never appears in attacker-visible
# records; the attacker only ever sees pseudonyms and Wi-Fi identifiers.
VehicleId = int


@dataclass(frozen=True, order=True)
class Pseudonym:
    """Short-lived broadcast identifier carried in safety messages.

    ``value`` is an opaque 64-bit number, unique across a whole run (no
    reuse across vehicles or after a change). ``issued_at`` is the
    simulation time at which the pseudonym became active.
    """

    value: int
    issued_at: float


@dataclass(frozen=True, order=True)
class WifiId:
    """Stable Wi-Fi identity of a vehicle hotspot: MAC address plus SSID.

    Constant for the vehicle's whole run and unique across vehicles.
    """

    mac: str
    ssid: str


@dataclass(frozen=True)
class BsmRecord:
    """One basic safety message: kinematic state broadcast under a pseudonym."""

    pseudonym: Pseudonym
    timestamp: float
    x: float
    y: float
    speed: float
    heading: float
    accel: float

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class ProbeRecord:
    """One Wi-Fi probe beacon: stable identity plus emission time only."""

    wifi_id: WifiId
    timestamp: float


@dataclass(frozen=True)
class RadioObservation:
    """A single message as captured by one antenna, with received power."""

    antenna_id: int
    payload: BsmRecord | ProbeRecord
    rssi: float

    @property
    def timestamp(self) -> float:
        return self.payload.timestamp

    @property
    def kind(self) -> str:
        return "bsm" if isinstance(self.payload, BsmRecord) else "probe"


@dataclass
class GroundTruth:
    """Owner maps for every identifier a simulation run emitted.

    Keys are the attacker-visible identifiers (pseudonym value, MAC); the
    maps are total over all identifiers appearing in any observation.
    """

    pseudonym_owner: dict[int, VehicleId] = field(default_factory=dict)
    wifi_owner: dict[str, VehicleId] = field(default_factory=dict)
