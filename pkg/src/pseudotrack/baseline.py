"""Dead-reckoning pseudonym linker (SLOWTrack-style baseline).

Links pseudonym tracks purely from safety messages, joining a track that
ends to one that begins nearby shortly after, as predicted by the last
(position, velocity) pair. No Wi-Fi side channel: silence gaps longer
than ``max_gap`` or gaps in antenna coverage break linkage.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

from .types import BsmRecord, RadioObservation


@dataclass(frozen=True)
class SlowtrackConfig:
    max_gap: float = 6.0
    position_tolerance: float = 15.0
    velocity_tolerance: float = 5.0

    def validate(self) -> None:
        if min(self.max_gap, self.position_tolerance, self.velocity_tolerance) <= 0:
            raise ValueError("slowtrack parameters must be positive")


@dataclass
class _Track:
    pseudonym_value: int
    first: BsmRecord
    last: BsmRecord


def slowtrack_link(
    all_bsm_observations: list[RadioObservation],
    config: SlowtrackConfig = SlowtrackConfig(),
) -> list[set[int]]:
    """Partition observed pseudonyms into predicted vehicles.

    Tracks (per-pseudonym message runs, all zones merged) are processed
    earliest-end-first; each links to the not-yet-claimed track starting
    within ``max_gap`` whose first message lies closest to the
    dead-reckoned position (last position + last velocity * gap), within
    the position and speed tolerances.
    """
    config.validate()
    tracks: dict[int, _Track] = {}
    for obs in sorted(all_bsm_observations, key=lambda o: o.timestamp):
        payload = obs.payload
        if not isinstance(payload, BsmRecord):
            raise ValueError("slowtrack_link expects BSM observations only")
        value = payload.pseudonym.value
        if value not in tracks:
            tracks[value] = _Track(pseudonym_value=value, first=payload, last=payload)
        else:
            tracks[value].last = payload

    ordered = sorted(tracks.values(), key=lambda tr: (tr.last.timestamp, tr.pseudonym_value))
    by_start = sorted(tracks.values(), key=lambda tr: (tr.first.timestamp, tr.pseudonym_value))
    start_times = [tr.first.timestamp for tr in by_start]

    claimed: set[int] = set()
    successor: dict[int, int] = {}
    for track in ordered:
        end_t = track.last.timestamp
        lo = bisect_right(start_times, end_t)
        hi = bisect_right(start_times, end_t + config.max_gap)
        best = None
        for nxt in by_start[lo:hi]:
            if nxt.pseudonym_value in claimed or nxt.pseudonym_value == track.pseudonym_value:
                continue
            gap = nxt.first.timestamp - end_t
            vx = track.last.speed * math.cos(track.last.heading)
            vy = track.last.speed * math.sin(track.last.heading)
            err = math.hypot(
                nxt.first.x - (track.last.x + vx * gap),
                nxt.first.y - (track.last.y + vy * gap),
            )
            if err > config.position_tolerance:
                continue
            if abs(nxt.first.speed - track.last.speed) > config.velocity_tolerance:
                continue
            key = (err, nxt.first.timestamp, nxt.pseudonym_value)
            if best is None or key < best[0]:
                best = (key, nxt)
        if best is not None:
            successor[track.pseudonym_value] = best[1].pseudonym_value
            claimed.add(best[1].pseudonym_value)

    # Follow successor links into groups.
    groups: list[set[int]] = []
    for track in by_start:
        if track.pseudonym_value in claimed:
            continue
        group = set()
        value: int | None = track.pseudonym_value
        while value is not None:
            group.add(value)
            value = successor.get(value)
        groups.append(group)
    return groups
