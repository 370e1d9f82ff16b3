"""Per-zone pseudonym chaining by kinematic continuity.

Groups the safety messages one antenna collects into per-vehicle chains:
a greedy online tracker that extends a chain when the same pseudonym
reappears and, when a fresh pseudonym shows up, joins it to the open
chain whose dead-reckoned state it best continues, subject to position,
speed and time gates. An optional second pass bridges longer radio-silent
gaps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .types import BsmRecord, Pseudonym, RadioObservation


@dataclass(frozen=True)
class LinkerConfig:
    gate_radius: float = 15.0
    gate_speed: float = 5.0
    max_gap: float = 2.5
    # A genuine pseudonym change cannot produce two messages closer than
    # the emission period, so joins across smaller gaps are rejected.
    min_change_gap: float = 0.9
    max_silence: float = 6.0
    bridge_silence: bool = True


@dataclass
class PseudonymChain:
    """Messages one zone attributed to a single vehicle.

    ``pseudonyms`` is in first-appearance order; every message's pseudonym
    appears in it, and a superseded pseudonym never recurs.
    """

    zone: int
    observations: list[RadioObservation] = field(default_factory=list)
    pseudonyms: list[Pseudonym] = field(default_factory=list)

    @property
    def first_seen(self) -> float:
        return self.observations[0].timestamp

    @property
    def last_seen(self) -> float:
        return self.observations[-1].timestamp

    @property
    def current_pseudonym(self) -> Pseudonym:
        return self.pseudonyms[-1]

    @property
    def last_payload(self) -> BsmRecord:
        payload = self.observations[-1].payload
        assert isinstance(payload, BsmRecord)
        return payload

    def pseudonym_values(self) -> set[int]:
        return {p.value for p in self.pseudonyms}

    def append(self, obs: RadioObservation) -> None:
        payload = obs.payload
        assert isinstance(payload, BsmRecord)
        if not self.pseudonyms or payload.pseudonym != self.current_pseudonym:
            self.pseudonyms.append(payload.pseudonym)
        self.observations.append(obs)


def predict_state(last: BsmRecord, dt: float) -> tuple[float, float, float]:
    """Dead-reckoned (x, y, speed) after ``dt`` seconds of the last state.

    Constant-acceleration motion along the reported heading; predicted
    speed never goes below zero.
    """
    direction_x = math.cos(last.heading)
    direction_y = math.sin(last.heading)
    travel = last.speed * dt + 0.5 * last.accel * dt * dt
    return (
        last.x + travel * direction_x,
        last.y + travel * direction_y,
        max(0.0, last.speed + last.accel * dt),
    )


def match_pseudonyms(
    zone_bsm_log: list[RadioObservation],
    gate_radius: float = 15.0,
    gate_speed: float = 5.0,
    max_gap: float = 2.5,
    min_change_gap: float = 0.9,
) -> list[PseudonymChain]:
    """Greedy online association of one zone's safety messages into chains.

    For each incoming message (time order):

    * a chain whose current pseudonym matches extends unconditionally;
    * otherwise the message joins the open chain whose predicted position
      is nearest, provided position error <= gate_radius, speed error <=
      gate_speed and the gap lies in [min_change_gap, max_gap] (ties:
      smaller position error, then earlier last_seen);
    * otherwise it opens a new chain.

    The lower gap bound reflects the broadcast cadence: a chain that
    emitted more recently than one message period cannot have changed its
    pseudonym yet, so such joins would interleave two vehicles. Chains
    silent for more than max_gap are closed and can no longer be extended,
    including by their own pseudonym.
    """
    open_chains: list[PseudonymChain] = []
    done: list[PseudonymChain] = []

    for obs in zone_bsm_log:
        payload = obs.payload
        if not isinstance(payload, BsmRecord):
            raise ValueError("match_pseudonyms expects BSM observations only")
        t = payload.timestamp

        still_open = []
        for chain in open_chains:
            if t - chain.last_seen > max_gap + 1e-9:
                done.append(chain)
            else:
                still_open.append(chain)
        open_chains = still_open

        target = None
        for chain in open_chains:
            if chain.current_pseudonym == payload.pseudonym:
                target = chain
                break
        if target is None:
            best = None
            for chain in open_chains:
                gap = t - chain.last_seen
                # one vehicle emits at most one message per instant, and a
                # change cannot beat the broadcast cadence
                if gap <= 0 or gap < min_change_gap - 1e-9:
                    continue
                px, py, pv = predict_state(chain.last_payload, gap)
                err = math.hypot(payload.x - px, payload.y - py)
                if err <= gate_radius and abs(payload.speed - pv) <= gate_speed:
                    key = (err, chain.last_seen)
                    if best is None or key < best[0]:
                        best = (key, chain)
            if best is not None:
                target = best[1]
        if target is None:
            target = PseudonymChain(zone=obs.antenna_id)
            open_chains.append(target)
        target.append(obs)

    done.extend(open_chains)
    done.sort(key=lambda c: (c.first_seen, c.pseudonyms[0].value))
    return done


def silence_bridge(
    chains: list[PseudonymChain],
    max_silence: float = 6.0,
    gate_radius: float = 15.0,
) -> list[PseudonymChain]:
    """Merge chains separated by a silent gap the dead-reckoning explains.

    A chain that ends is merged with a later-starting chain when the
    predicted position at the later chain's first timestamp falls within
    ``gate_radius`` and the gap is at most ``max_silence``. Merging is
    greedy by smallest prediction error; each chain end and each chain
    start is consumed at most once, so whole sequences can be stitched.
    """
    candidates = []
    for i, ended in enumerate(chains):
        for j, later in enumerate(chains):
            if i == j:
                continue
            gap = later.first_seen - ended.last_seen
            if gap <= 0 or gap > max_silence + 1e-9:
                continue
            px, py, _ = predict_state(ended.last_payload, gap)
            first = later.observations[0].payload
            err = math.hypot(first.x - px, first.y - py)
            if err <= gate_radius:
                candidates.append((err, ended.first_seen, later.first_seen, i, j))

    successor: dict[int, int] = {}
    has_predecessor: set[int] = set()
    for err, _, _, i, j in sorted(candidates):
        if i in successor or j in has_predecessor:
            continue
        successor[i] = j
        has_predecessor.add(j)

    merged = []
    for i, chain in enumerate(chains):
        if i in has_predecessor:
            continue
        combined = PseudonymChain(zone=chain.zone)
        k: int | None = i
        while k is not None:
            part = chains[k]
            combined.observations.extend(part.observations)
            for p in part.pseudonyms:
                if p not in combined.pseudonyms:
                    combined.pseudonyms.append(p)
            k = successor.get(k)
        merged.append(combined)
    merged.sort(key=lambda c: (c.first_seen, c.pseudonyms[0].value))
    return merged
