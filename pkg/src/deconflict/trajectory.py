"""Time-discretized flight trajectories: ingestion, synthesis and geodesy.

Trajectories are sampled once per minute. Times are integer minutes since
midnight UTC; positions are (latitude, longitude) in degrees plus altitude in
feet.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, TextIO

import numpy as np

EARTH_RADIUS_NM = 3440.065
CSV_HEADER = ("flight_id", "time_min", "lat_deg", "lon_deg", "alt_ft")


class TrajectoryError(ValueError):
    """Base class for invalid trajectory input."""


class ParseError(TrajectoryError):
    pass


class GapError(TrajectoryError):
    pass


class DuplicateError(TrajectoryError):
    pass


@dataclass(frozen=True)
class TrajectoryPoint:
    lat: float
    lon: float
    alt: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.lat, self.lon, self.alt)):
            raise TrajectoryError(f"non-finite coordinate in {self}")
        if not -90.0 <= self.lat <= 90.0:
            raise TrajectoryError(f"latitude {self.lat} out of [-90, 90]")
        if not -180.0 <= self.lon < 180.0:
            raise TrajectoryError(f"longitude {self.lon} out of [-180, 180)")
        if self.alt < 0:
            raise TrajectoryError(f"negative altitude {self.alt}")


@dataclass(frozen=True)
class Trajectory:
    """One flight sampled at consecutive minutes starting at ``departure_time``."""

    flight_id: str
    departure_time: int
    points: tuple[TrajectoryPoint, ...]

    def __post_init__(self):
        if not self.points:
            raise TrajectoryError(f"flight {self.flight_id!r} has no points")
        object.__setattr__(self, "points", tuple(self.points))

    @property
    def arrival_time(self) -> int:
        return self.departure_time + len(self.points) - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.departure_time, self.arrival_time + 1)

    def point_at(self, minute: int) -> TrajectoryPoint:
        return self.points[minute - self.departure_time]

    @cached_property
    def coords(self) -> np.ndarray:
        """(n, 3) array of lat, lon, alt."""
        return np.array([(p.lat, p.lon, p.alt) for p in self.points], dtype=float)

    @cached_property
    def unit_vectors(self) -> np.ndarray:
        lat = np.radians(self.coords[:, 0])
        lon = np.radians(self.coords[:, 1])
        return np.column_stack(
            (np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat))
        )


@dataclass(frozen=True)
class FlightSet:
    """Flights with unique ids, kept sorted by ``flight_id``."""

    flights: tuple[Trajectory, ...] = ()

    def __post_init__(self):
        flights = tuple(sorted(self.flights, key=lambda f: f.flight_id))
        ids = [f.flight_id for f in flights]
        if len(set(ids)) != len(ids):
            raise DuplicateError("duplicate flight ids")
        object.__setattr__(self, "flights", flights)

    def __len__(self) -> int:
        return len(self.flights)

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self.flights)

    @property
    def ids(self) -> list[str]:
        return [f.flight_id for f in self.flights]

    def by_id(self) -> dict[str, Trajectory]:
        return {f.flight_id: f for f in self.flights}

    def subset(self, ids: Iterable[str]) -> "FlightSet":
        lookup = self.by_id()
        return FlightSet(tuple(lookup[i] for i in ids))


def great_circle_nm(p: TrajectoryPoint, q: TrajectoryPoint) -> float:
    """Haversine distance between two points on the mean-radius sphere."""
    phi1, phi2 = math.radians(p.lat), math.radians(q.lat)
    dphi = phi2 - phi1
    dlam = math.radians(q.lon - p.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    h = min(max(h, 0.0), 1.0)
    return 2 * EARTH_RADIUS_NM * math.atan2(math.sqrt(h), math.sqrt(1 - h))


def haversine_nm(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Vectorized :func:`great_circle_nm` over degree arrays (broadcasts)."""
    phi1, phi2 = np.radians(lat1), np.radians(lat2)
    dphi = phi2 - phi1
    dlam = np.radians(np.asarray(lon2) - np.asarray(lon1))
    h = np.sin(dphi / 2) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlam / 2) ** 2
    h = np.clip(h, 0.0, 1.0)
    return 2 * EARTH_RADIUS_NM * np.arctan2(np.sqrt(h), np.sqrt(1 - h))


# -- CSV ----------------------------------------------------------------------


def load_trajectories(source: TextIO) -> FlightSet:
    """Parse the trajectory CSV format into a :class:`FlightSet`.

    Rows may appear in any order; each flight's minutes must be consecutive
    and unique.
    """
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None:
        return FlightSet()
    if tuple(h.strip() for h in header) != CSV_HEADER:
        raise ParseError(f"bad header {header!r}, expected {','.join(CSV_HEADER)}")

    rows: dict[str, dict[int, TrajectoryPoint]] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 5:
            raise ParseError(f"line {lineno}: expected 5 fields, got {len(row)}")
        fid = row[0].strip()
        if not fid:
            raise ParseError(f"line {lineno}: empty flight_id")
        try:
            minute = int(row[1])
            point = TrajectoryPoint(float(row[2]), float(row[3]), float(row[4]))
        except TrajectoryError as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
        per_flight = rows.setdefault(fid, {})
        if minute in per_flight:
            raise DuplicateError(f"line {lineno}: duplicate ({fid}, {minute})")
        per_flight[minute] = point

    flights = []
    for fid, by_minute in rows.items():
        minutes = sorted(by_minute)
        for a, b in zip(minutes, minutes[1:]):
            if b != a + 1:
                raise GapError(f"flight {fid}: gap between minutes {a} and {b}")
        flights.append(Trajectory(fid, minutes[0], tuple(by_minute[m] for m in minutes)))
    return FlightSet(tuple(flights))


def dump_trajectories(fs: FlightSet, sink: TextIO) -> None:
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for f in fs:
        for minute, p in zip(range(f.departure_time, f.arrival_time + 1), f.points):
            writer.writerow((f.flight_id, minute, repr(p.lat), repr(p.lon), repr(p.alt)))


def read_trajectories(path: str | Path) -> FlightSet:
    with open(path, newline="", encoding="utf-8") as fh:
        return load_trajectories(fh)


def write_trajectories(fs: FlightSet, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        dump_trajectories(fs, fh)


def trajectories_to_csv(fs: FlightSet) -> str:
    buf = io.StringIO()
    dump_trajectories(fs, buf)
    return buf.getvalue()


# -- synthetic traffic ----------------------------------------------------------


@dataclass(frozen=True)
class SyntheticConfig:
    """Shared-corridor traffic: every flight flies a great circle from a point
    in the origin box to a point in the destination box at constant speed and
    a constant flight level."""

    n_flights: int = 100
    origin_lat: tuple[float, float] = (44.0, 46.0)
    origin_lon: tuple[float, float] = (-40.0, -38.0)
    dest_lat: tuple[float, float] = (49.0, 51.0)
    dest_lon: tuple[float, float] = (-20.0, -18.0)
    speed_kt: float = 480.0
    altitudes_ft: tuple[float, ...] = (35000.0, 37000.0)
    start_min: int = 600
    window_min: int = 480
    seed: int = 0

    def __post_init__(self):
        for name in ("origin_lat", "origin_lon", "dest_lat", "dest_lon", "altitudes_ft"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if self.n_flights < 0:
            raise ValueError("n_flights must be non-negative")
        if self.window_min < 0:
            raise ValueError("window_min must be non-negative")
        if self.speed_kt <= 0:
            raise ValueError("speed_kt must be positive")
        if not self.altitudes_ft:
            raise ValueError("need at least one altitude level")
        for name in ("origin_lat", "origin_lon", "dest_lat", "dest_lon"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: lower bound above upper bound")
        same_box = (self.origin_lat, self.origin_lon) == (self.dest_lat, self.dest_lon)
        zero_extent = (
            self.origin_lat[0] == self.origin_lat[1] and self.origin_lon[0] == self.origin_lon[1]
        )
        if same_box and zero_extent:
            raise ValueError("degenerate corridor: origin and destination are the same point")

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown synthetic config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "SyntheticConfig":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return asdict(self)


def _to_unit(lat_deg: float, lon_deg: float) -> np.ndarray:
    lat, lon = math.radians(lat_deg), math.radians(lon_deg)
    return np.array([math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)])


def _great_circle_track(o: tuple[float, float], d: tuple[float, float], step_nm: float):
    """(lat, lon) samples every ``step_nm`` from ``o`` to ``d``; the last sample
    is ``d`` itself."""
    u, v = _to_unit(*o), _to_unit(*d)
    omega = math.acos(min(1.0, max(-1.0, float(u @ v))))
    dist = omega * EARTH_RADIUS_NM
    if dist == 0.0:
        return [o]
    n_steps = max(1, math.ceil(dist / step_nm))
    frac = np.minimum(np.arange(n_steps + 1) * step_nm / dist, 1.0)
    s = math.sin(omega)
    w = (np.sin((1 - frac) * omega) / s)[:, None] * u + (np.sin(frac * omega) / s)[:, None] * v
    lat = np.degrees(np.arcsin(np.clip(w[:, 2], -1.0, 1.0)))
    lon = np.degrees(np.arctan2(w[:, 1], w[:, 0]))
    lon = np.where(lon >= 180.0, lon - 360.0, lon)
    return list(zip(lat.tolist(), lon.tolist()))


def generate_synthetic(config: SyntheticConfig) -> FlightSet:
    """Seeded corridor traffic; identical configs give identical flight sets."""
    rng = np.random.default_rng(config.seed)
    step = config.speed_kt / 60.0
    width = len(str(max(config.n_flights - 1, 0)))
    flights = []
    for n in range(config.n_flights):
        o = (rng.uniform(*config.origin_lat), rng.uniform(*config.origin_lon))
        d = (rng.uniform(*config.dest_lat), rng.uniform(*config.dest_lon))
        dep = config.start_min + int(rng.integers(0, config.window_min + 1))
        alt = config.altitudes_ft[int(rng.integers(0, len(config.altitudes_ft)))]
        pts = tuple(TrajectoryPoint(lat, lon, alt) for lat, lon in _great_circle_track(o, d, step))
        flights.append(Trajectory(f"F{n:0{width}d}", dep, pts))
    return FlightSet(tuple(flights))
