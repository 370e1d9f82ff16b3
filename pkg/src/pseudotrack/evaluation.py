"""Ground-truth scoring, attack orchestration, and experiment running.

Scoring is pairwise over observed pseudonyms: two pseudonyms count as a
true-positive pair when the attacker groups them together and ground
truth agrees. The experiment runner sweeps (scheme, tracker/metric, seed)
cells, reusing simulations across cells that share them, and emits a
long-format CSV plus a JSON manifest.
"""

from __future__ import annotations

import csv
import json
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .baseline import SlowtrackConfig, slowtrack_link
from .linker import LinkerConfig, PseudonymChain, match_pseudonyms, silence_bridge
from .matching import (
    ChainAssociation,
    MatchConfig,
    METRIC_NAMES,
    TripReconstruction,
    ZoneProbeIndex,
    candidate_series,
    candidate_totals,
    find_match,
    reconstruct_trips,
)
from .mobility import MapConfig, TrafficConfig, simulate_traffic
from .radio import AntennaZone, RadioConfig, capture, validate_zones
from .schemes import SchemeConfig, apply_scheme_all
from .types import BsmRecord, ConfigError, GroundTruth, RadioObservation

# Tracker modes accepted by experiment cells and the track command: the
# three association metrics, the chains-only tracker (no Wi-Fi channel)
# and the dead-reckoning baseline.
TRACKER_MODES = METRIC_NAMES + ("linker", "slowtrack")

RESULTS_HEADER = ["scheme", "metric", "seed", "precision", "recall", "f", "runtime"]


def f_measure(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; zero when both are zero."""
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def pairwise_score(
    predicted_grouping: list[set[int]],
    truth: GroundTruth,
    universe: set[int],
) -> tuple[float, float]:
    """Pairwise precision and recall of a pseudonym grouping.

    Over all unordered pairs of pseudonyms in ``universe``: a pair is a
    true positive when grouped together and owned by the same vehicle, a
    false positive when grouped but owned by different vehicles, and a
    false negative when owned by the same vehicle but not grouped.
    Pseudonyms missing from the grouping count as singletons. Empty
    denominators score 1.0 (nothing claimed, or nothing to recall).
    """
    seen: set[int] = set()
    for group in predicted_grouping:
        extra = group - universe
        if extra:
            raise ValueError(f"prediction contains pseudonyms outside the universe: {sorted(extra)[:3]}")
        overlap = group & seen
        if overlap:
            raise ValueError(f"prediction groups overlap on pseudonyms: {sorted(overlap)[:3]}")
        seen |= group

    def owner(value: int) -> int:
        try:
            return truth.pseudonym_owner[value]
        except KeyError:
            raise ValueError(f"ground truth has no owner for pseudonym {value:#x}") from None

    tp = 0
    positives = 0
    for group in predicted_grouping:
        n = len(group)
        positives += n * (n - 1) // 2
        per_vehicle: dict[int, int] = {}
        for value in group:
            v = owner(value)
            per_vehicle[v] = per_vehicle.get(v, 0) + 1
        tp += sum(c * (c - 1) // 2 for c in per_vehicle.values())

    vehicle_counts: dict[int, int] = {}
    for value in universe:
        v = owner(value)
        vehicle_counts[v] = vehicle_counts.get(v, 0) + 1
    actual_pairs = sum(c * (c - 1) // 2 for c in vehicle_counts.values())

    precision = tp / positives if positives else 1.0
    recall = tp / actual_pairs if actual_pairs else 1.0
    return precision, recall


class _Union:
    def __init__(self):
        self.parent: dict = {}

    def find(self, a):
        self.parent.setdefault(a, a)
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def grouping_from_chains(chains: list[PseudonymChain]) -> list[set[int]]:
    """Chains-only grouping: each chain is a predicted vehicle; chains that
    share a pseudonym are necessarily the same vehicle and merge."""
    uf = _Union()
    keys = list(range(len(chains)))
    by_value: dict[int, int] = {}
    for i, chain in enumerate(chains):
        uf.find(i)
        for value in chain.pseudonym_values():
            if value in by_value:
                uf.union(by_value[value], i)
            else:
                by_value[value] = i
    groups: dict[int, set[int]] = {}
    for i in keys:
        groups.setdefault(uf.find(i), set()).update(chains[i].pseudonym_values())
    return sorted(groups.values(), key=lambda g: min(g))


def grouping_from_trips(
    trips: list[TripReconstruction],
    chains: list[PseudonymChain],
) -> list[set[int]]:
    """Pseudonym partition implied by the reconstructed trips.

    Chains sharing a Wi-Fi identity merge; chains sharing a pseudonym also
    merge (the strongest possible link), which keeps the result a proper
    partition when the same pseudonym is seen in several zones. Chains in
    no trip form their own groups.
    """
    index = {id(chain): i for i, chain in enumerate(chains)}
    seen_in_trip: set[int] = set()
    uf = _Union()
    for i in range(len(chains)):
        uf.find(i)
    for trip in trips:
        members = []
        for _, chain, _ in trip.visits:
            key = id(chain)
            if key not in index:
                raise ValueError("trip references a chain that is not in the chain list")
            if key in seen_in_trip:
                raise ValueError("internal consistency error: chain appears in two trips")
            seen_in_trip.add(key)
            members.append(index[key])
        for a, b in zip(members, members[1:]):
            uf.union(a, b)
    by_value: dict[int, int] = {}
    for i, chain in enumerate(chains):
        for value in chain.pseudonym_values():
            if value in by_value:
                uf.union(by_value[value], i)
            else:
                by_value[value] = i
    groups: dict[int, set[int]] = {}
    for i, chain in enumerate(chains):
        groups.setdefault(uf.find(i), set()).update(chain.pseudonym_values())
    return sorted(groups.values(), key=lambda g: min(g))


@dataclass
class AttackResult:
    grouping: list[set[int]]
    chains: list[PseudonymChain] = field(default_factory=list)
    associations: list[ChainAssociation] = field(default_factory=list)
    trips: list[TripReconstruction] = field(default_factory=list)
    n_candidates: int = 0


def run_attack(
    observations: list[RadioObservation],
    metric: str,
    radio: RadioConfig = RadioConfig(),
    linker: LinkerConfig = LinkerConfig(),
    match: MatchConfig = MatchConfig(),
    baseline: SlowtrackConfig = SlowtrackConfig(),
) -> AttackResult:
    """Run one tracker over a captured observation log."""
    if metric not in TRACKER_MODES:
        raise ConfigError(f"unknown metric {metric!r}; valid: {', '.join(TRACKER_MODES)}")

    bsm_by_zone: dict[int, list[RadioObservation]] = {}
    probe_by_zone: dict[int, list[RadioObservation]] = {}
    for obs in observations:
        target = bsm_by_zone if isinstance(obs.payload, BsmRecord) else probe_by_zone
        target.setdefault(obs.antenna_id, []).append(obs)

    if metric == "slowtrack":
        all_bsm = [o for zone in sorted(bsm_by_zone) for o in bsm_by_zone[zone]]
        return AttackResult(grouping=slowtrack_link(all_bsm, baseline))

    chains: list[PseudonymChain] = []
    for zone in sorted(bsm_by_zone):
        zone_chains = match_pseudonyms(
            sorted(bsm_by_zone[zone], key=lambda o: o.timestamp),
            gate_radius=linker.gate_radius,
            gate_speed=linker.gate_speed,
            max_gap=linker.max_gap,
            min_change_gap=linker.min_change_gap,
        )
        if linker.bridge_silence:
            zone_chains = silence_bridge(zone_chains, linker.max_silence, linker.gate_radius)
        chains.extend(zone_chains)

    if metric == "linker":
        return AttackResult(grouping=grouping_from_chains(chains), chains=chains)

    indexes = {zone: ZoneProbeIndex(probe_by_zone.get(zone, [])) for zone in bsm_by_zone}
    associations = []
    n_candidates = 0
    series_for = candidate_totals if metric == "count" else candidate_series
    for chain in chains:
        cands = series_for(chain, indexes[chain.zone], match.slack)
        n_candidates += len(cands)
        associations.append(
            find_match(
                chain,
                cands,
                metric,
                config=match,
                expected_ratio=radio.expected_count_ratio,
                tx_offset_db=radio.dsrc_tx_dbm - radio.wifi_tx_dbm,
            )
        )
    trips = reconstruct_trips(associations)
    grouping = grouping_from_trips(trips, chains)
    return AttackResult(
        grouping=grouping,
        chains=chains,
        associations=associations,
        trips=trips,
        n_candidates=n_candidates,
    )


def observed_universe(observations: list[RadioObservation]) -> set[int]:
    """Pseudonym values seen at least once by any antenna."""
    return {
        obs.payload.pseudonym.value
        for obs in observations
        if isinstance(obs.payload, BsmRecord)
    }


@dataclass
class EvalReport:
    """One (scheme, metric, seed) result row."""

    scheme_kind: str
    scheme_params: dict
    metric: str
    seed: int
    precision: float | None
    recall: float | None
    f: float | None
    n_chains: int = 0
    n_candidates: int = 0
    n_trips: int = 0
    runtime: float = 0.0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class ExperimentPlan:
    """Everything one experiment matrix needs, fully resolved."""

    map: MapConfig = field(default_factory=MapConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    radio: RadioConfig = field(default_factory=RadioConfig)
    zones: list[AntennaZone] = field(default_factory=list)
    linker: LinkerConfig = field(default_factory=LinkerConfig)
    match: MatchConfig = field(default_factory=MatchConfig)
    baseline: SlowtrackConfig = field(default_factory=SlowtrackConfig)
    cells: list[tuple[SchemeConfig, str]] = field(default_factory=list)
    seeds: list[int] = field(default_factory=lambda: [1])

    def validate(self) -> None:
        if not self.seeds:
            raise ConfigError("experiment plan needs at least one seed")
        if not self.cells:
            raise ConfigError("experiment plan needs at least one (scheme, metric) cell")
        if not self.zones:
            raise ConfigError("experiment plan needs at least one antenna zone")
        validate_zones(self.zones)
        self.radio.validate()
        for scheme, metric in self.cells:
            scheme.validate()
            if metric not in TRACKER_MODES:
                raise ConfigError(f"unknown metric {metric!r}; valid: {', '.join(TRACKER_MODES)}")


def simulate_cell_inputs(plan: ExperimentPlan, scheme: SchemeConfig, seed: int):
    """Simulate traffic, apply the scheme, and capture observations."""
    road_map = plan.map.build()
    traffic = plan.traffic
    traces = simulate_traffic(
        road_map,
        traffic.n_vehicles,
        traffic.duration,
        traffic.dt,
        (traffic.v_min, traffic.v_max),
        seed,
        traffic.exit_probability,
        traffic.straight_bias,
        traffic.turn_speed,
        traffic.platoon_max_size,
        traffic.platoon_headway,
    )
    streams = apply_scheme_all(traces, scheme, seed, plan.radio.bsm_period)
    observations, truth = capture(traces, streams, plan.zones, road_map, plan.radio, seed)
    return observations, truth


def _run_scheme_seed(plan: ExperimentPlan, scheme: SchemeConfig, metrics: list[str], seed: int) -> list[EvalReport]:
    """All metric rows for one (scheme, seed); the simulation is shared."""
    rows = []
    shared_start = time.perf_counter()
    try:
        observations, truth = simulate_cell_inputs(plan, scheme, seed)
        universe = observed_universe(observations)
    except Exception as exc:  # pragma: no cover - defensive, surfaced in reports
        shared_time = time.perf_counter() - shared_start
        return [
            EvalReport(
                scheme_kind=scheme.kind,
                scheme_params=scheme.params(),
                metric=metric,
                seed=seed,
                precision=None,
                recall=None,
                f=None,
                runtime=shared_time,
                error=f"{type(exc).__name__}: {exc}",
            )
            for metric in metrics
        ]
    shared_time = time.perf_counter() - shared_start

    for metric in metrics:
        start = time.perf_counter()
        try:
            result = run_attack(
                observations,
                metric,
                radio=plan.radio,
                linker=plan.linker,
                match=plan.match,
                baseline=plan.baseline,
            )
            precision, recall = pairwise_score(result.grouping, truth, universe)
            rows.append(
                EvalReport(
                    scheme_kind=scheme.kind,
                    scheme_params=scheme.params(),
                    metric=metric,
                    seed=seed,
                    precision=precision,
                    recall=recall,
                    f=f_measure(precision, recall),
                    n_chains=len(result.chains),
                    n_candidates=result.n_candidates,
                    n_trips=len(result.trips),
                    runtime=shared_time + time.perf_counter() - start,
                )
            )
        except Exception as exc:
            rows.append(
                EvalReport(
                    scheme_kind=scheme.kind,
                    scheme_params=scheme.params(),
                    metric=metric,
                    seed=seed,
                    precision=None,
                    recall=None,
                    f=None,
                    runtime=shared_time + time.perf_counter() - start,
                    error=f"{type(exc).__name__}: {exc}",
                )
            )
        shared_time = 0.0  # only the first metric of the group carries it
    return rows


def run_experiment(plan: ExperimentPlan, workers: int = 1) -> list[EvalReport]:
    """Run every (scheme, metric, seed) cell of the plan.

    Cells sharing a scheme reuse one simulation per seed. A failing cell
    becomes a report row with an error; the run continues. Row order is
    deterministic: groups follow plan cell order, seeds follow plan order.
    """
    plan.validate()

    groups: list[tuple[SchemeConfig, list[str]]] = []
    for scheme, metric in plan.cells:
        for existing, metrics in groups:
            if existing == scheme:
                if metric not in metrics:
                    metrics.append(metric)
                break
        else:
            groups.append((scheme, [metric]))

    tasks = [(scheme, metrics, seed) for scheme, metrics in groups for seed in plan.seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_task, [(plan, s, m, seed) for s, m, seed in tasks]))
    else:
        chunks = [_run_scheme_seed(plan, s, m, seed) for s, m, seed in tasks]

    by_key = {}
    for (scheme, metrics, seed), chunk in zip(tasks, chunks):
        for metric, row in zip(metrics, chunk):
            by_key[(scheme, metric, seed)] = row
    reports = []
    for scheme, metric in plan.cells:
        for seed in plan.seeds:
            reports.append(by_key[(scheme, metric, seed)])
    return reports


def _run_task(args):
    plan, scheme, metrics, seed = args
    return _run_scheme_seed(plan, scheme, metrics, seed)


def write_results_csv(reports: list[EvalReport], destination) -> None:
    """Long-format results: one row per (scheme, metric, seed)."""
    with open(destination, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(RESULTS_HEADER)
        for row in reports:
            writer.writerow(
                [
                    row.scheme_kind,
                    row.metric,
                    row.seed,
                    "" if row.precision is None else repr(row.precision),
                    "" if row.recall is None else repr(row.recall),
                    "" if row.f is None else repr(row.f),
                    repr(row.runtime),
                ]
            )


def summarize(reports: list[EvalReport]) -> list[dict]:
    """Median and interquartile range of f per (scheme, metric) cell."""
    cells: dict[tuple[str, str], list[float]] = {}
    order = []
    for row in reports:
        key = (row.scheme_kind, row.metric)
        if key not in cells:
            cells[key] = []
            order.append(key)
        if row.ok and row.f is not None:
            cells[key].append(row.f)
    out = []
    for key in order:
        values = sorted(cells[key])
        if values:
            median = statistics.median(values)
            q1, q3 = _quartiles(values)
            iqr = q3 - q1
        else:
            median = None
            iqr = None
        out.append(
            {
                "scheme": key[0],
                "metric": key[1],
                "median_f": median,
                "iqr_f": iqr,
                "seeds": len(values),
            }
        )
    return out


def _quartiles(values: list[float]) -> tuple[float, float]:
    if len(values) == 1:
        return values[0], values[0]
    qs = statistics.quantiles(values, n=4, method="inclusive")
    return qs[0], qs[2]


def write_manifest(
    destination,
    config_dict: dict,
    config_sha256: str,
    reports: list[EvalReport],
    extra: dict | None = None,
) -> None:
    payload = {
        "config": config_dict,
        "config_sha256": config_sha256,
        "rows": [
            {
                "scheme": r.scheme_kind,
                "scheme_params": {k: list(v) if isinstance(v, tuple) else v for k, v in r.scheme_params.items()},
                "metric": r.metric,
                "seed": r.seed,
                "precision": r.precision,
                "recall": r.recall,
                "f": r.f,
                "chains": r.n_chains,
                "candidates": r.n_candidates,
                "trips": r.n_trips,
                "runtime": r.runtime,
                "error": r.error,
            }
            for r in reports
        ],
        "summary": summarize(reports),
    }
    if extra:
        payload.update(extra)
    with open(destination, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")
