"""Run configuration: a single JSON file with full defaulting.

Sections: ``map``, ``traffic``, ``radio``, ``zones``, ``scheme``,
``linker``, ``radar``, ``baseline``, ``eval``, plus top-level ``seeds``
and ``out``. Every omitted section falls back to defaults that mirror the
reference scenario (1 Hz safety messages, 100 ms probes, 50 m antennas,
23/20 dBm transmit powers, 25 seeds).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, fields

from .baseline import SlowtrackConfig
from .evaluation import ExperimentPlan, TRACKER_MODES
from .linker import LinkerConfig
from .matching import MatchConfig, MetricWeights
from .mobility import MapConfig, TrafficConfig
from .radio import AntennaZone, RadioConfig, validate_zones
from .schemes import SchemeConfig
from .types import ConfigError

SECTION_NAMES = ("map", "traffic", "radio", "zones", "scheme", "linker", "radar", "baseline", "eval")

DEFAULT_SEEDS = list(range(1, 26))

# Default experiment cells: the five basic schemes against all three
# association metrics.
DEFAULT_CELL_SCHEMES = ("Periodical", "Disposable", "Distance", "Random", "Car2Car")
DEFAULT_CELL_METRICS = ("count", "statistical", "pearson")


@dataclass
class RunConfig:
    map: MapConfig = field(default_factory=MapConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    radio: RadioConfig = field(default_factory=RadioConfig)
    zones: list[AntennaZone] = field(default_factory=list)
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    linker: LinkerConfig = field(default_factory=LinkerConfig)
    match: MatchConfig = field(default_factory=MatchConfig)
    baseline: SlowtrackConfig = field(default_factory=SlowtrackConfig)
    cells: list[tuple[SchemeConfig, str]] = field(default_factory=list)
    workers: int = 1
    seeds: list[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    out: str | None = None
    defaulted_sections: list[str] = field(default_factory=list)


# Antennas mount at a roadside corner of their intersection, not on the
# carriageway itself; the offset keeps emitters a few meters away so the
# path-loss model is never evaluated at near-zero distance.
ANTENNA_CORNER_OFFSET = 9.0


def default_zones(map_config: MapConfig, radius: float = 50.0) -> list[AntennaZone]:
    """Three well-separated interior intersections (fewer on small maps).

    Two antennas sit on the central row so through-traffic on that
    corridor is seen by both (the cross-zone reconstruction case); the
    third watches the crossing column.
    """
    block = map_config.block_length
    fill = min(map_config.building_fill, 0.95)
    curb_gap = (block - block * math.sqrt(fill)) / 2.0 if fill > 0 else block / 2.0
    offset = min(ANTENNA_CORNER_OFFSET, curb_gap / 2.0)
    mid_row = map_config.rows // 2
    candidates = [
        (1, mid_row),
        (map_config.cols - 2, mid_row),
        (map_config.cols // 2, 1),
    ]
    zones: list[AntennaZone] = []
    for col, row in candidates:
        if not (0 <= col < map_config.cols and 0 <= row < map_config.rows):
            continue
        x = col * block + offset
        y = row * block + offset
        if any(math.hypot(z.x - x, z.y - y) <= z.radius + radius for z in zones):
            continue
        zones.append(AntennaZone(antenna_id=len(zones), x=x, y=y, radius=radius))
    if not zones:
        raise ConfigError("map too small for default antenna placement; configure zones explicitly")
    return zones


def _build_section(cls, data: dict, section: str):
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"{section}.{key}: unknown field")
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def _parse_zones(raw, section: str = "zones") -> list[AntennaZone]:
    zones = []
    if not isinstance(raw, list):
        raise ConfigError(f"{section}: expected a list of zone objects")
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise ConfigError(f"{section}[{i}]: expected an object")
        extra = set(entry) - {"antenna_id", "center", "radius"}
        if extra:
            raise ConfigError(f"{section}[{i}].{sorted(extra)[0]}: unknown field")
        center = entry.get("center")
        if not (isinstance(center, (list, tuple)) and len(center) == 2):
            raise ConfigError(f"{section}[{i}].center: expected [x, y]")
        zones.append(
            AntennaZone(
                antenna_id=int(entry.get("antenna_id", i)),
                x=float(center[0]),
                y=float(center[1]),
                radius=float(entry.get("radius", 50.0)),
            )
        )
    return zones


def _parse_scheme(raw, section: str = "scheme") -> SchemeConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"{section}: expected an object")
    data = dict(raw)
    if "silence_range" in data:
        lo, hi = data.pop("silence_range")
        data["silence_min"] = float(lo)
        data["silence_max"] = float(hi)
    scheme = _build_section(SchemeConfig, data, section)
    scheme.validate()
    return scheme


def _parse_match(raw) -> MatchConfig:
    data = dict(raw)
    weights = data.pop("weights", None)
    metric = data.get("metric", "pearson")
    if metric not in TRACKER_MODES:
        raise ConfigError(f"radar.metric: unknown metric {metric!r}; valid: {', '.join(TRACKER_MODES)}")
    cfg = _build_section(MatchConfig, data, "radar")
    if weights is not None:
        w = _build_section(MetricWeights, weights, "radar.weights")
        w.validate()
        cfg = MatchConfig(
            metric=cfg.metric,
            slack=cfg.slack,
            weights=w,
            n_points=cfg.n_points,
            statistical_normalize=cfg.statistical_normalize,
        )
    return cfg


def resolve_config(raw: dict) -> RunConfig:
    """Validate a raw config dict and fill in defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be an object")
    unknown = set(raw) - set(SECTION_NAMES) - {"seeds", "out"}
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown section")

    cfg = RunConfig()
    defaulted = [name for name in SECTION_NAMES if name not in raw]

    if "map" in raw:
        cfg.map = _build_section(MapConfig, raw["map"], "map")
    if cfg.map.rows < 2 or cfg.map.cols < 2 or cfg.map.block_length <= 0:
        raise ConfigError("map: needs rows, cols >= 2 and positive block_length")
    if "traffic" in raw:
        cfg.traffic = _build_section(TrafficConfig, raw["traffic"], "traffic")
    if "radio" in raw:
        cfg.radio = _build_section(RadioConfig, raw["radio"], "radio")
    cfg.radio.validate()
    cfg.zones = _parse_zones(raw["zones"]) if "zones" in raw else default_zones(cfg.map)
    validate_zones(cfg.zones)
    cfg.scheme = _parse_scheme(raw["scheme"]) if "scheme" in raw else SchemeConfig()
    if "linker" in raw:
        cfg.linker = _build_section(LinkerConfig, raw["linker"], "linker")
    cfg.match = _parse_match(raw["radar"]) if "radar" in raw else MatchConfig()
    if "baseline" in raw:
        cfg.baseline = _build_section(SlowtrackConfig, raw["baseline"], "baseline")

    eval_raw = raw.get("eval", {})
    if not isinstance(eval_raw, dict):
        raise ConfigError("eval: expected an object")
    extra = set(eval_raw) - {"cells", "workers"}
    if extra:
        raise ConfigError(f"eval.{sorted(extra)[0]}: unknown field")
    cfg.workers = int(eval_raw.get("workers", 1))
    if "cells" in eval_raw:
        cells = []
        for i, cell in enumerate(eval_raw["cells"]):
            if not isinstance(cell, dict) or set(cell) - {"scheme", "metric"}:
                raise ConfigError(f"eval.cells[{i}]: expected {{scheme, metric}}")
            scheme_raw = cell.get("scheme", {})
            if isinstance(scheme_raw, str):
                scheme_raw = {"kind": scheme_raw}
            scheme = _parse_scheme(scheme_raw, f"eval.cells[{i}].scheme")
            metric = cell.get("metric", cfg.match.metric)
            if metric not in TRACKER_MODES:
                raise ConfigError(
                    f"eval.cells[{i}].metric: unknown metric {metric!r}; valid: {', '.join(TRACKER_MODES)}"
                )
            cells.append((scheme, metric))
        cfg.cells = cells
    else:
        cfg.cells = [
            (SchemeConfig(kind=kind), metric)
            for kind in DEFAULT_CELL_SCHEMES
            for metric in DEFAULT_CELL_METRICS
        ]

    if "seeds" in raw:
        seeds = raw["seeds"]
        if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
            raise ConfigError("seeds: expected a non-empty list of integers")
        cfg.seeds = list(seeds)
    if "out" in raw:
        cfg.out = str(raw["out"])

    cfg.defaulted_sections = defaulted
    return cfg


def load_config(path=None) -> RunConfig:
    """Load and resolve a config file; None means all defaults."""
    if path is None:
        return resolve_config({})
    with open(path) as handle:
        try:
            raw = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return resolve_config(raw)


def config_to_dict(cfg: RunConfig) -> dict:
    """Fully resolved configuration as a plain JSON-serializable dict."""
    def section(obj):
        return {f.name: getattr(obj, f.name) for f in fields(obj)}

    match = section(cfg.match)
    match["weights"] = section(cfg.match.weights)
    return {
        "map": section(cfg.map),
        "traffic": section(cfg.traffic),
        "radio": section(cfg.radio),
        "zones": [
            {"antenna_id": z.antenna_id, "center": [z.x, z.y], "radius": z.radius}
            for z in cfg.zones
        ],
        "scheme": section(cfg.scheme),
        "linker": section(cfg.linker),
        "radar": match,
        "baseline": section(cfg.baseline),
        "eval": {
            "workers": cfg.workers,
            "cells": [
                {"scheme": section(scheme), "metric": metric}
                for scheme, metric in cfg.cells
            ],
        },
        "seeds": cfg.seeds,
        "out": cfg.out,
        "defaulted_sections": cfg.defaulted_sections,
    }


def config_hash(cfg: RunConfig) -> str:
    """SHA-256 of the canonical resolved configuration."""
    payload = config_to_dict(cfg)
    payload.pop("defaulted_sections", None)
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def experiment_plan(cfg: RunConfig) -> ExperimentPlan:
    return ExperimentPlan(
        map=cfg.map,
        traffic=cfg.traffic,
        radio=cfg.radio,
        zones=cfg.zones,
        linker=cfg.linker,
        match=cfg.match,
        baseline=cfg.baseline,
        cells=cfg.cells,
        seeds=cfg.seeds,
    )
