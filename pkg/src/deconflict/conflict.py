"""Potential-conflict detection and clustering.

A pair of trajectory points ``(s, t)`` (minute ``s`` on flight ``i``, minute
``t`` on flight ``j``) is *potentially* conflicting when the points are
horizontally closer than ``horizontal_nm``, vertically closer than
``vertical_ft`` and ``d_max + temporal_min > |s - t|``, i.e. some pair of
departure delays in ``[0, d_max]`` brings them within ``temporal_min`` of each
other. Potentially conflicting pairs of one flight pair are grouped into
clusters; each cluster becomes one :class:`Conflict` with a forbidden
interval ``[dmin, dmax]`` for the delay difference ``D_i - D_j``.
"""

from __future__ import annotations

import json
import logging
import math
import os
from bisect import bisect_left
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, NamedTuple

import numpy as np

from .trajectory import EARTH_RADIUS_NM, FlightSet, Trajectory, haversine_nm

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SeparationParams:
    horizontal_nm: float = 30.0
    temporal_min: int = 3
    vertical_ft: float = 2000.0

    def __post_init__(self):
        if not (self.horizontal_nm > 0 and self.temporal_min > 0 and self.vertical_ft > 0):
            raise ValueError("separation minima must be strictly positive")
        if int(self.temporal_min) != self.temporal_min:
            raise ValueError("temporal separation must be a whole number of minutes")


class PointPair(NamedTuple):
    s: int
    t: int


@dataclass(frozen=True)
class Conflict:
    """Cluster ``k`` of potentially conflicting point pairs between ``i < j``.

    ``pairs`` may be empty for hand-built conflicts that only carry an
    interval; detected conflicts always have pairs.
    """

    k: int
    i: str
    j: str
    pairs: frozenset[PointPair]
    dmin: int
    dmax: int

    def __post_init__(self):
        if not self.i < self.j:
            raise ValueError(f"conflict {self.k}: flights must satisfy i < j, got {self.i!r}, {self.j!r}")
        if self.dmin > self.dmax:
            raise ValueError(f"conflict {self.k}: empty forbidden interval")
        object.__setattr__(self, "pairs", frozenset(PointPair(*p) for p in self.pairs))

    @classmethod
    def from_pairs(cls, k: int, i: str, j: str, pairs: Iterable, temporal_min: int) -> "Conflict":
        pairs = frozenset(PointPair(*p) for p in pairs)
        if not pairs:
            raise ValueError("a detected conflict needs at least one point pair")
        diffs = [p.t - p.s for p in pairs]
        return cls(k, i, j, pairs, 1 - temporal_min + min(diffs), temporal_min - 1 + max(diffs))

    @property
    def flights(self) -> tuple[str, str]:
        return (self.i, self.j)

    def other(self, flight: str) -> str:
        return self.j if flight == self.i else self.i

    def entry_time(self, flight: str) -> int | None:
        """First minute at which ``flight`` takes part in this conflict."""
        if not self.pairs:
            return None
        if flight == self.i:
            return min(p.s for p in self.pairs)
        if flight == self.j:
            return min(p.t for p in self.pairs)
        raise KeyError(flight)

    def with_id(self, k: int) -> "Conflict":
        return Conflict(k, self.i, self.j, self.pairs, self.dmin, self.dmax)

    def to_record(self) -> dict:
        return {
            "k": self.k,
            "i": self.i,
            "j": self.j,
            "pairs": sorted([p.s, p.t] for p in self.pairs),
            "dmin": self.dmin,
            "dmax": self.dmax,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Conflict":
        return cls(
            int(rec["k"]), str(rec["i"]), str(rec["j"]),
            frozenset(PointPair(int(s), int(t)) for s, t in rec["pairs"]),
            int(rec["dmin"]), int(rec["dmax"]),
        )


def forbidden_interval(c: Conflict) -> tuple[int, int]:
    return (c.dmin, c.dmax)


def is_avoided(c: Conflict, delay_i: float, delay_j: float) -> bool:
    """True when the delay difference of ``c.i`` and ``c.j`` leaves the
    forbidden interval."""
    diff = delay_i - delay_j
    return not (c.dmin <= diff <= c.dmax)


class ConflictSet:
    """Conflicts with unique ids plus, for every flight, its conflicts in the
    order the flight reaches them."""

    def __init__(self, conflicts: Iterable[Conflict] = ()):
        self.conflicts: tuple[Conflict, ...] = tuple(sorted(conflicts, key=lambda c: c.k))
        ids = [c.k for c in self.conflicts]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate conflict ids")
        self._by_id = {c.k: c for c in self.conflicts}
        per_flight: dict[str, list[Conflict]] = {}
        for c in self.conflicts:
            per_flight.setdefault(c.i, []).append(c)
            per_flight.setdefault(c.j, []).append(c)
        self.per_flight: dict[str, tuple[int, ...]] = {
            f: tuple(c.k for c in sorted(cs, key=lambda c: (_order_key(c, f), c.k)))
            for f, cs in sorted(per_flight.items())
        }

    def __len__(self) -> int:
        return len(self.conflicts)

    def __iter__(self):
        return iter(self.conflicts)

    def __getitem__(self, k: int) -> Conflict:
        return self._by_id[k]

    def __eq__(self, other) -> bool:
        return isinstance(other, ConflictSet) and self.conflicts == other.conflicts

    def __repr__(self) -> str:
        return f"ConflictSet({len(self.conflicts)} conflicts)"

    @property
    def flights(self) -> list[str]:
        return sorted(self.per_flight)

    def conflicts_of(self, flight: str) -> tuple[int, ...]:
        """Conflict ids of ``flight`` in temporal order (empty if none)."""
        return self.per_flight.get(flight, ())

    def upstream(self, flight: str, k: int) -> tuple[int, ...]:
        """Conflicts of ``flight`` reached before conflict ``k``."""
        order = self.conflicts_of(flight)
        return order[: order.index(k)]

    def restrict(self, flights: Iterable[str]) -> "ConflictSet":
        keep = set(flights)
        return ConflictSet(c for c in self.conflicts if c.i in keep and c.j in keep)

    def to_records(self) -> list[dict]:
        return [c.to_record() for c in self.conflicts]

    def to_json(self) -> str:
        return json.dumps(self.to_records(), indent=1, sort_keys=True)

    @classmethod
    def from_records(cls, records: Iterable[dict]) -> "ConflictSet":
        return cls(Conflict.from_record(r) for r in records)

    @classmethod
    def from_json(cls, text: str) -> "ConflictSet":
        return cls.from_records(json.loads(text))


def _order_key(c: Conflict, flight: str) -> float:
    t = c.entry_time(flight)
    return float(c.k) if t is None else float(t)


def detect_potential_pairs(
    a: Trajectory, b: Trajectory, params: SeparationParams, d_max: int
) -> set[PointPair]:
    """All potentially conflicting ``(s, t)`` with ``s`` on ``a`` and ``t`` on ``b``."""
    if a.flight_id == b.flight_id:
        raise ValueError("cannot detect conflicts of a flight with itself")
    window = d_max + params.temporal_min  # need |s - t| < window
    s_lo = max(a.departure_time, b.departure_time - window + 1)
    s_hi = min(a.arrival_time, b.arrival_time + window - 1)
    t_lo = max(b.departure_time, a.departure_time - window + 1)
    t_hi = min(b.arrival_time, a.arrival_time + window - 1)
    if s_lo > s_hi or t_lo > t_hi:
        return set()

    sa = slice(s_lo - a.departure_time, s_hi - a.departure_time + 1)
    sb = slice(t_lo - b.departure_time, t_hi - b.departure_time + 1)
    s_times = np.arange(s_lo, s_hi + 1)
    t_times = np.arange(t_lo, t_hi + 1)

    # Cheap chord prefilter with a small angular margin; survivors are
    # re-tested with the exact haversine distance.
    angle = min(math.pi, params.horizontal_nm / EARTH_RADIUS_NM * 1.001 + 1e-9)
    close = a.unit_vectors[sa] @ b.unit_vectors[sb].T > math.cos(angle)
    close &= np.abs(s_times[:, None] - t_times[None, :]) < window
    close &= np.abs(a.coords[sa, 2][:, None] - b.coords[sb, 2][None, :]) < params.vertical_ft
    rows, cols = np.nonzero(close)
    if rows.size == 0:
        return set()
    ca, cb = a.coords[sa][rows], b.coords[sb][cols]
    dist = haversine_nm(ca[:, 0], ca[:, 1], cb[:, 0], cb[:, 1])
    keep = dist < params.horizontal_nm
    return {
        PointPair(int(s), int(t))
        for s, t in zip(s_times[rows[keep]], t_times[cols[keep]])
    }


def cluster_conflicts(
    pairs: Iterable, i: str, j: str, params: SeparationParams, first_id: int = 0
) -> list[Conflict]:
    """Split the pairs of one flight pair into king-move connected clusters.

    Clusters are returned ordered by their smallest ``(s, t)`` and numbered
    consecutively from ``first_id``.
    """
    remaining = {PointPair(*p) for p in pairs}
    clusters = []
    for seed in sorted(remaining):
        if seed not in remaining:
            continue
        remaining.discard(seed)
        members = [seed]
        queue = deque([seed])
        while queue:
            s, t = queue.popleft()
            for ds in (-1, 0, 1):
                for dt in (-1, 0, 1):
                    nb = PointPair(s + ds, t + dt)
                    if nb in remaining:
                        remaining.discard(nb)
                        members.append(nb)
                        queue.append(nb)
        clusters.append(members)
    clusters.sort(key=min)
    return [
        Conflict.from_pairs(first_id + n, i, j, members, params.temporal_min)
        for n, members in enumerate(clusters)
    ]


def satisfies_projection_condition(pairs: Iterable) -> bool:
    """Check the interval-projection property of a cluster: between any two
    member pairs, every intermediate ``s`` has a member with ``t`` inside the
    pairs' ``t`` range, and vice versa."""
    pairs = sorted({PointPair(*p) for p in pairs})
    by_s: dict[int, list[int]] = {}
    by_t: dict[int, list[int]] = {}
    for s, t in pairs:
        by_s.setdefault(s, []).append(t)
        by_t.setdefault(t, []).append(s)
    for v in (*by_s.values(), *by_t.values()):
        v.sort()

    def has_in(values, lo, hi):
        if values is None:
            return False
        n = bisect_left(values, lo)
        return n < len(values) and values[n] <= hi

    for (s1, t1), (s2, t2) in combinations(pairs, 2):
        slo, shi, tlo, thi = min(s1, s2), max(s1, s2), min(t1, t2), max(t1, t2)
        if not all(has_in(by_s.get(s), tlo, thi) for s in range(slo, shi + 1)):
            return False
        if not all(has_in(by_t.get(t), slo, shi) for t in range(tlo, thi + 1)):
            return False
    return True


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("DECONFLICT_THREADS", "1")))
    except ValueError:
        return 1


def detect_all(
    fs: FlightSet,
    params: SeparationParams = SeparationParams(),
    d_max: int = 0,
    workers: int | None = None,
    check_projection: bool = False,
) -> ConflictSet:
    """Detect and cluster conflicts over every unordered flight pair.

    Conflict ids follow the order ``(i, j, first s)`` and do not depend on
    ``workers``.
    """
    flights = list(fs)  # sorted by flight_id, so a before b means a.id < b.id
    jobs = list(combinations(flights, 2))

    def run(job):
        a, b = job
        pairs = detect_potential_pairs(a, b, params, d_max)
        return cluster_conflicts(pairs, a.flight_id, b.flight_id, params) if pairs else []

    workers = default_workers() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_pair = list(pool.map(run, jobs))
    else:
        per_pair = [run(job) for job in jobs]

    conflicts = [c for group in per_pair for c in group]
    conflicts.sort(key=lambda c: (c.i, c.j, min(c.pairs)))
    if check_projection:
        for c in conflicts:
            if not satisfies_projection_condition(c.pairs):
                log.warning("cluster %s-%s at %s violates the projection condition",
                            c.i, c.j, min(c.pairs))
    return ConflictSet(c.with_id(k) for k, c in enumerate(conflicts))
