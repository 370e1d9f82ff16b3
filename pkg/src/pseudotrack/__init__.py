"""Vehicular-network privacy testbed.

Simulates DSRC safety-message and Wi-Fi probe emissions from vehicles
under pseudonym-changing schemes, captures them with a small set of
monitoring antennas, and evaluates multi-radio tracking attacks against
ground truth.
"""

__version__ = "0.1.0"

from .types import (
    BsmRecord,
    ConfigError,
    GroundTruth,
    ProbeRecord,
    Pseudonym,
    RadioObservation,
    WifiId,
)

__all__ = [
    "BsmRecord",
    "ConfigError",
    "GroundTruth",
    "ProbeRecord",
    "Pseudonym",
    "RadioObservation",
    "WifiId",
    "__version__",
]
