"""CSV serialization of observation logs and ground truth.

Observation logs are plain CSV so they stay human-inspectable and
diff-friendly. Floats are written with ``repr`` so a write/read cycle is
lossless.
"""

from __future__ import annotations

import csv
from typing import Iterable

from .types import (
    BsmRecord,
    GroundTruth,
    ProbeRecord,
    Pseudonym,
    RadioObservation,
    WifiId,
)

LOG_HEADER = [
    "antenna_id",
    "kind",
    "timestamp",
    "rssi",
    "identifier",
    "x",
    "y",
    "speed",
    "heading",
    "accel",
]

KIND_BSM = "bsm"
KIND_PROBE = "probe"

_KINEMATIC_COLUMNS = ("x", "y", "speed", "heading", "accel")


class LogParseError(ValueError):
    """An observation or ground-truth file violates its schema."""


def _encode_pseudonym(p: Pseudonym) -> str:
    return f"{p.value:016x}|{p.issued_at!r}"


def _decode_pseudonym(text: str, line_no: int) -> Pseudonym:
    try:
        raw_value, raw_issued = text.split("|", 1)
        return Pseudonym(value=int(raw_value, 16), issued_at=float(raw_issued))
    except ValueError as exc:
        raise LogParseError(f"line {line_no}: bad pseudonym identifier {text!r}") from exc


def _encode_wifi(w: WifiId) -> str:
    if "|" in w.ssid or "|" in w.mac:
        raise ValueError(f"wifi identifier may not contain '|': {w!r}")
    return f"{w.mac}|{w.ssid}"


def _decode_wifi(text: str, line_no: int) -> WifiId:
    if "|" not in text:
        raise LogParseError(f"line {line_no}: bad wifi identifier {text!r}")
    mac, ssid = text.split("|", 1)
    return WifiId(mac=mac, ssid=ssid)


def write_observation_log(observations: Iterable[RadioObservation], destination) -> None:
    """Write observations (already sorted by timestamp) as CSV."""
    with open(destination, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(LOG_HEADER)
        for obs in observations:
            payload = obs.payload
            if isinstance(payload, BsmRecord):
                writer.writerow(
                    [
                        obs.antenna_id,
                        KIND_BSM,
                        repr(payload.timestamp),
                        repr(obs.rssi),
                        _encode_pseudonym(payload.pseudonym),
                        repr(payload.x),
                        repr(payload.y),
                        repr(payload.speed),
                        repr(payload.heading),
                        repr(payload.accel),
                    ]
                )
            elif isinstance(payload, ProbeRecord):
                writer.writerow(
                    [
                        obs.antenna_id,
                        KIND_PROBE,
                        repr(payload.timestamp),
                        repr(obs.rssi),
                        _encode_wifi(payload.wifi_id),
                        "",
                        "",
                        "",
                        "",
                        "",
                    ]
                )
            else:
                raise TypeError(f"unsupported payload type: {type(payload).__name__}")


def _parse_float(text: str, column: str, line_no: int) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise LogParseError(f"line {line_no}: bad {column} value {text!r}") from exc


def read_observation_log(source) -> list[RadioObservation]:
    """Read an observation log, validating the schema row by row."""
    observations: list[RadioObservation] = []
    with open(source, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise LogParseError("line 1: missing header") from None
        if header != LOG_HEADER:
            raise LogParseError(f"line 1: unexpected header {header!r}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(LOG_HEADER):
                raise LogParseError(f"line {line_no}: expected {len(LOG_HEADER)} fields, got {len(row)}")
            antenna_raw, kind, ts_raw, rssi_raw, identifier = row[:5]
            kinematics = row[5:]
            try:
                antenna_id = int(antenna_raw)
            except ValueError as exc:
                raise LogParseError(f"line {line_no}: bad antenna_id {antenna_raw!r}") from exc
            timestamp = _parse_float(ts_raw, "timestamp", line_no)
            rssi = _parse_float(rssi_raw, "rssi", line_no)
            if kind == KIND_BSM:
                values = [
                    _parse_float(text, column, line_no)
                    for text, column in zip(kinematics, _KINEMATIC_COLUMNS)
                ]
                payload: BsmRecord | ProbeRecord = BsmRecord(
                    pseudonym=_decode_pseudonym(identifier, line_no),
                    timestamp=timestamp,
                    x=values[0],
                    y=values[1],
                    speed=values[2],
                    heading=values[3],
                    accel=values[4],
                )
            elif kind == KIND_PROBE:
                for text, column in zip(kinematics, _KINEMATIC_COLUMNS):
                    if text != "":
                        raise LogParseError(
                            f"line {line_no}: probe row has non-empty {column} column"
                        )
                payload = ProbeRecord(wifi_id=_decode_wifi(identifier, line_no), timestamp=timestamp)
            else:
                raise LogParseError(f"line {line_no}: unknown kind {kind!r}")
            observations.append(RadioObservation(antenna_id=antenna_id, payload=payload, rssi=rssi))
    return observations


GT_PSEUDONYM_HEADER = ["pseudonym", "vehicle"]
GT_WIFI_HEADER = ["mac", "vehicle"]


def write_ground_truth(truth: GroundTruth, destination) -> None:
    """Write ground truth as a two-section CSV (pseudonym map, then MAC map)."""
    with open(destination, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(GT_PSEUDONYM_HEADER)
        for value in sorted(truth.pseudonym_owner):
            writer.writerow([f"{value:016x}", truth.pseudonym_owner[value]])
        writer.writerow(GT_WIFI_HEADER)
        for mac in sorted(truth.wifi_owner):
            writer.writerow([mac, truth.wifi_owner[mac]])


def read_ground_truth(source) -> GroundTruth:
    truth = GroundTruth()
    with open(source, newline="") as handle:
        reader = csv.reader(handle)
        rows = [row for row in reader if row]
    if not rows or rows[0] != GT_PSEUDONYM_HEADER:
        raise LogParseError("ground truth: missing pseudonym section header")
    section = "pseudonym"
    for line_no, row in enumerate(rows[1:], start=2):
        if row == GT_WIFI_HEADER:
            section = "wifi"
            continue
        if len(row) != 2:
            raise LogParseError(f"ground truth line {line_no}: expected 2 fields")
        key, raw_vehicle = row
        try:
            vehicle = int(raw_vehicle)
        except ValueError as exc:
            raise LogParseError(f"ground truth line {line_no}: bad vehicle id {raw_vehicle!r}") from exc
        if section == "pseudonym":
            try:
                truth.pseudonym_owner[int(key, 16)] = vehicle
            except ValueError as exc:
                raise LogParseError(f"ground truth line {line_no}: bad pseudonym {key!r}") from exc
        else:
            truth.wifi_owner[key] = vehicle
    if section != "wifi":
        raise LogParseError("ground truth: missing mac section header")
    return truth
