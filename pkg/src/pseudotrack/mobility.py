"""Ground-truth vehicle motion.

A synthetic Manhattan-grid road network with waypoint-following vehicles
(random walk over intersections, per-segment cruise speeds, bounded
acceleration at turns), plus ingestion of external floating-car-data
traces.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .obslog import LogParseError
from .types import ConfigError

# Hard bound on |acceleration| used when adjusting to a new segment speed.
TURN_ACCEL = 3.0

# building_fill is clamped here so obstacles never touch road segments.
MAX_BUILDING_FILL = 0.95


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle (building footprint)."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


@dataclass(frozen=True)
class RoadMap:
    """Grid road network: ``cols`` x ``rows`` intersections spaced ``block_length`` apart.

    Intersection (c, r) sits at (c * block_length, r * block_length).
    Obstacles lie strictly inside blocks and never overlap road segments.
    """

    rows: int
    cols: int
    block_length: float
    obstacles: tuple[Rect, ...] = ()

    @property
    def width(self) -> float:
        return (self.cols - 1) * self.block_length

    @property
    def height(self) -> float:
        return (self.rows - 1) * self.block_length

    def node_position(self, col: int, row: int) -> tuple[float, float]:
        return (col * self.block_length, row * self.block_length)

    def nodes(self) -> list[tuple[int, int]]:
        return [(c, r) for r in range(self.rows) for c in range(self.cols)]

    def is_boundary(self, col: int, row: int) -> bool:
        return col in (0, self.cols - 1) or row in (0, self.rows - 1)

    def boundary_nodes(self) -> list[tuple[int, int]]:
        return [(c, r) for (c, r) in self.nodes() if self.is_boundary(c, r)]

    def neighbors(self, col: int, row: int) -> list[tuple[int, int]]:
        out = []
        for dc, dr in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            c, r = col + dc, row + dr
            if 0 <= c < self.cols and 0 <= r < self.rows:
                out.append((c, r))
        return out

    def contains_point(self, x: float, y: float, margin: float = 0.0) -> bool:
        return -margin <= x <= self.width + margin and -margin <= y <= self.height + margin


def generate_map(rows: int, cols: int, block_length: float, building_fill: float) -> RoadMap:
    """Build a grid map with one centered rectangular obstacle per block.

    Each obstacle covers ``building_fill`` of its block's area. Fills above
    0.95 would put obstacle edges onto the roads and are clamped with a
    warning.
    """
    if rows < 2 or cols < 2:
        raise ConfigError(f"map needs at least 2x2 intersections, got {rows}x{cols}")
    if block_length <= 0:
        raise ConfigError(f"block_length must be positive, got {block_length}")
    if not 0.0 <= building_fill <= 1.0:
        raise ConfigError(f"building_fill must be in [0, 1], got {building_fill}")
    if building_fill > MAX_BUILDING_FILL:
        warnings.warn(
            f"building_fill {building_fill} would touch road edges; clamped to {MAX_BUILDING_FILL}",
            stacklevel=2,
        )
        building_fill = MAX_BUILDING_FILL

    obstacles: list[Rect] = []
    if building_fill > 0.0:
        side = block_length * math.sqrt(building_fill)
        gap = (block_length - side) / 2.0
        for r in range(rows - 1):
            for c in range(cols - 1):
                x0 = c * block_length + gap
                y0 = r * block_length + gap
                obstacles.append(Rect(x0, y0, x0 + side, y0 + side))
    return RoadMap(rows=rows, cols=cols, block_length=block_length, obstacles=tuple(obstacles))


@dataclass
class VehicleTrace:
    """Ground-truth spatiotemporal path of one vehicle.

    Samples are on a uniform time grid of step ``dt`` starting at
    ``entry_time``; ``exit_time`` is the instant the vehicle stops emitting
    (map exit or end of run). ``accel[k]`` is the speed change applied over
    the step starting at sample k.
    """

    vehicle: int
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    speed: np.ndarray
    heading: np.ndarray
    accel: np.ndarray
    entry_time: float
    exit_time: float

    def __len__(self) -> int:
        return len(self.t)

    def states_at(self, times: np.ndarray) -> tuple[np.ndarray, ...]:
        """Interpolated (x, y, speed) plus left-sample heading and accel."""
        times = np.asarray(times, dtype=float)
        xs = np.interp(times, self.t, self.x)
        ys = np.interp(times, self.t, self.y)
        speeds = np.interp(times, self.t, self.speed)
        idx = np.clip(np.searchsorted(self.t, times + 1e-9, side="right") - 1, 0, len(self.t) - 1)
        return xs, ys, speeds, self.heading[idx], self.accel[idx]

    def cumulative_distance(self) -> np.ndarray:
        """Chord-length distance traveled up to each sample."""
        dx = np.diff(self.x)
        dy = np.diff(self.y)
        out = np.zeros(len(self.t))
        np.cumsum(np.hypot(dx, dy), out=out[1:])
        return out


@dataclass(frozen=True)
class MapConfig:
    """Map section of the run configuration."""

    rows: int = 5
    cols: int = 5
    block_length: float = 100.0
    building_fill: float = 0.4

    def build(self) -> RoadMap:
        return generate_map(self.rows, self.cols, self.block_length, self.building_fill)


@dataclass(frozen=True)
class TrafficConfig:
    """Traffic section of the run configuration."""

    n_vehicles: int = 60
    duration: float = 600.0
    dt: float = 0.1
    v_min: float = 8.0
    v_max: float = 14.0
    exit_probability: float = 0.15
    straight_bias: float = 0.8
    turn_speed: float = 6.5
    platoon_max_size: int = 1
    platoon_headway: float = 1.5


def simulate_traffic(
    road_map: RoadMap,
    n_vehicles: int,
    duration: float,
    dt: float = 0.1,
    speed_profile: tuple[float, float] = (8.0, 14.0),
    seed: int = 0,
    exit_probability: float = 0.15,
    straight_bias: float = 0.8,
    turn_speed: float = 6.5,
    platoon_max_size: int = 1,
    platoon_headway: float = 1.5,
) -> list[VehicleTrace]:
    """Simulate through-traffic random-walking over the grid.

    Vehicles arrive at a random boundary intersection at a random time in
    [0, 0.8 * duration], optionally in small platoons (size uniform in
    1..platoon_max_size, headway ``platoon_headway`` seconds) sharing one
    route. A route is a random walk with no immediate U-turns that
    continues straight with probability ``straight_bias`` where possible
    and leaves the map at a boundary intersection with
    ``exit_probability``. Each vehicle cruises at its own per-segment
    speed drawn from ``speed_profile``, brakes to ``turn_speed`` for 90
    degree corners, and accelerates back out, all at |a| <= 3 m/s^2.

    Deterministic for a given seed; per-vehicle kinematics draw from
    per-vehicle substreams.
    """
    if dt <= 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    v_min, v_max = speed_profile
    if v_min < 0 or v_min > v_max:
        raise ConfigError(f"bad speed profile ({v_min}, {v_max})")
    if duration <= 0:
        raise ConfigError(f"duration must be positive, got {duration}")
    if not 0.0 <= straight_bias <= 1.0:
        raise ConfigError(f"straight_bias must be in [0, 1], got {straight_bias}")
    if platoon_max_size < 1 or platoon_headway <= 0:
        raise ConfigError("platoon parameters must be positive")

    group_rng = np.random.default_rng([seed, 4])
    max_blocks = int(duration * v_max / road_map.block_length) + 3

    traces = []
    vid = 0
    platoon_idx = 0
    while vid < n_vehicles:
        size = min(int(group_rng.integers(1, platoon_max_size + 1)), n_vehicles - vid)
        route_rng = np.random.default_rng([seed, 5, platoon_idx])
        base = route_rng.uniform(0.0, 0.8 * duration)
        route = _plan_route(road_map, route_rng, max_blocks, exit_probability, straight_bias)
        for member in range(size):
            entry_step = int((base + member * platoon_headway) / dt)
            entry_step = min(entry_step, max(int((duration - dt) / dt), 0))
            rng = np.random.default_rng([seed, vid])
            traces.append(
                _drive_route(
                    road_map, vid, route, entry_step, rng, duration, dt, v_min, v_max, turn_speed
                )
            )
            vid += 1
        platoon_idx += 1
    return traces


def _plan_route(road_map, rng, max_blocks, exit_probability, straight_bias):
    """Node sequence of one walk; it either leaves the map at its last node
    or is long enough to outlast any vehicle following it."""
    boundary = road_map.boundary_nodes()
    node = boundary[rng.integers(len(boundary))]
    options = road_map.neighbors(*node)
    nxt = options[rng.integers(len(options))]
    route = [node, nxt]
    prev = node
    node = nxt
    for _ in range(max_blocks):
        candidates = [n for n in road_map.neighbors(*node) if n != prev]
        if road_map.is_boundary(*node) and (not candidates or rng.random() < exit_probability):
            return route
        nxt = _pick_next(rng, candidates, node, prev, straight_bias)
        route.append(nxt)
        prev, node = node, nxt
    return route


def _pick_next(rng, candidates, node, prev, straight_bias):
    """Next intersection: straight ahead with ``straight_bias`` when possible."""
    ahead = (2 * node[0] - prev[0], 2 * node[1] - prev[1])
    if ahead in candidates and len(candidates) > 1:
        if rng.random() < straight_bias:
            return ahead
        others = [c for c in candidates if c != ahead]
        return others[rng.integers(len(others))]
    return candidates[rng.integers(len(candidates))]


def _drive_route(
    road_map, vid, route, entry_step, rng, duration, dt, v_min, v_max, turn_speed
) -> VehicleTrace:
    points = [np.array(road_map.node_position(*n), dtype=float) for n in route]
    turning = _turn_flags(route)
    seg_idx = 0
    seg_from = points[0]
    seg_to = points[1]
    seg_len = float(np.hypot(*(seg_to - seg_from)))
    unit = (seg_to - seg_from) / seg_len
    heading = math.atan2(unit[1], unit[0])

    target = rng.uniform(v_min, v_max)
    v = target  # vehicles enter already cruising
    corner_v = min(turn_speed, v_max)

    ts, xs, ys, vs, hs, accels = [], [], [], [], [], []
    s = 0.0  # arc position inside the current segment
    step = entry_step
    exit_t = None

    while True:
        t = step * dt
        if t >= duration - 1e-9:
            break
        pos = seg_from + unit * s
        ts.append(t)
        xs.append(pos[0])
        ys.append(pos[1])
        vs.append(v)
        hs.append(heading)

        # Advance by v * dt along the route, crossing intersections as needed.
        remaining = v * dt
        left_map = False
        while remaining > 0.0:
            to_node = seg_len - s
            if remaining < to_node - 1e-12:
                s += remaining
                remaining = 0.0
                break
            remaining -= to_node
            covered = v * dt - remaining
            seg_idx += 1
            if seg_idx >= len(route) - 1:
                # Route exhausted; only happens for routes that leave the map.
                exit_t = t + covered / v if v > 0 else t + dt
                left_map = True
                break
            seg_from = points[seg_idx]
            seg_to = points[seg_idx + 1]
            seg_len = float(np.hypot(*(seg_to - seg_from)))
            unit = (seg_to - seg_from) / seg_len
            heading = math.atan2(unit[1], unit[0])
            s = 0.0
            target = rng.uniform(v_min, v_max)
        if left_map:
            accels.append(0.0)
            break

        # Cruise at the segment speed, but brake inside the envelope that
        # reaches turn_speed by the next 90 degree corner.
        desired = target
        if turning[seg_idx] and v > corner_v:
            allowed = math.sqrt(corner_v * corner_v + 2.0 * TURN_ACCEL * max(seg_len - s, 0.0))
            desired = min(desired, allowed)
        dv = max(-TURN_ACCEL * dt, min(TURN_ACCEL * dt, desired - v))
        accels.append(dv / dt)
        v += dv
        step += 1

    if exit_t is None:
        exit_t = duration
    if not ts:
        # Entry landed on the final grid step; keep a single degenerate sample.
        t = entry_step * dt
        pos = seg_from + unit * s
        ts, xs, ys, vs, hs, accels = [t], [pos[0]], [pos[1]], [v], [heading], [0.0]
        exit_t = min(exit_t, t + dt)

    return VehicleTrace(
        vehicle=vid,
        t=np.array(ts),
        x=np.array(xs),
        y=np.array(ys),
        speed=np.array(vs),
        heading=np.array(hs),
        accel=np.array(accels),
        entry_time=float(ts[0]),
        exit_time=float(exit_t),
    )


def _turn_flags(route) -> list[bool]:
    """Whether the node ending segment i changes the travel direction."""
    flags = []
    for i in range(len(route) - 1):
        if i + 2 < len(route):
            ahead = (2 * route[i + 1][0] - route[i][0], 2 * route[i + 1][1] - route[i][1])
            flags.append(route[i + 2] != ahead)
        else:
            flags.append(False)
    return flags


FCD_HEADER = ["vehicle", "timestamp", "x", "y", "speed", "heading"]


def ingest_fcd(source, dt: float | None = None) -> list[VehicleTrace]:
    """Ingest floating-car-data traces from CSV.

    Expects the header ``vehicle,timestamp,x,y,speed,heading``. Acceleration
    is computed by first differences of speed. When the input sampling is
    irregular the trace is resampled to a uniform grid by linear
    interpolation: to ``dt`` when given, otherwise to the median input gap.
    """
    per_vehicle: dict[str, list[tuple[int, float, float, float, float, float]]] = {}
    order: list[str] = []
    with open(source, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise LogParseError("line 1: missing header") from None
        if header != FCD_HEADER:
            raise LogParseError(f"line 1: unexpected header {header!r}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(FCD_HEADER):
                raise LogParseError(f"line {line_no}: expected {len(FCD_HEADER)} fields")
            name = row[0]
            try:
                values = tuple(float(cell) for cell in row[1:])
            except ValueError as exc:
                raise LogParseError(f"line {line_no}: bad numeric value in {row!r}") from exc
            if name not in per_vehicle:
                per_vehicle[name] = []
                order.append(name)
            per_vehicle[name].append((line_no,) + values)

    # numeric vehicle names keep their value; other names get fresh ids
    # above every numeric one so the two can never collide
    numeric: dict[str, int] = {}
    for name in order:
        try:
            numeric[name] = int(name)
        except ValueError:
            pass
    next_free = max(numeric.values(), default=-1) + 1
    vehicle_ids: dict[str, int] = {}
    for name in order:
        if name in numeric:
            vehicle_ids[name] = numeric[name]
        else:
            vehicle_ids[name] = next_free
            next_free += 1

    traces = []
    for name in order:
        rows = per_vehicle[name]
        vid = vehicle_ids[name]
        t = np.array([r[1] for r in rows])
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            bad = int(np.flatnonzero(np.diff(t) <= 0)[0])
            raise LogParseError(
                f"vehicle {name}: non-monotonic timestamp at line {rows[bad + 1][0]}"
            )
        x = np.array([r[2] for r in rows])
        y = np.array([r[3] for r in rows])
        speed = np.array([r[4] for r in rows])
        heading = np.array([r[5] for r in rows])
        traces.append(_build_fcd_trace(vid, t, x, y, speed, heading, dt))
    return traces


def _build_fcd_trace(vid, t, x, y, speed, heading, dt) -> VehicleTrace:
    if len(t) == 1:
        grid_dt = dt if dt else 1.0
    else:
        gaps = np.diff(t)
        regular = bool(np.all(np.abs(gaps - gaps[0]) <= 1e-9))
        if dt is not None:
            grid_dt = dt
        elif regular:
            grid_dt = float(gaps[0])
        else:
            grid_dt = float(np.median(gaps))
        needs_resample = dt is not None or not regular
        if needs_resample:
            n = int((t[-1] - t[0]) / grid_dt + 1e-9) + 1
            grid = t[0] + np.arange(n) * grid_dt
            x = np.interp(grid, t, x)
            y = np.interp(grid, t, y)
            speed = np.interp(grid, t, speed)
            heading = _wrap_angle(np.interp(grid, t, np.unwrap(heading)))
            t = grid

    accel = np.zeros(len(t))
    if len(t) > 1:
        accel[:-1] = np.diff(speed) / np.diff(t)
    return VehicleTrace(
        vehicle=vid,
        t=np.asarray(t, dtype=float),
        x=np.asarray(x, dtype=float),
        y=np.asarray(y, dtype=float),
        speed=np.asarray(speed, dtype=float),
        heading=np.asarray(heading, dtype=float),
        accel=accel,
        entry_time=float(t[0]),
        exit_time=float(t[-1]) + (grid_dt if len(t) == 1 else float(t[1] - t[0])),
    )


def _wrap_angle(a):
    return (a + math.pi) % (2.0 * math.pi) - math.pi
