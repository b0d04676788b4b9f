"""Departure-delay QUBO, penalty weights and decoding of bit assignments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ..conflict import is_avoided
from ..graph import Instance
from .bqf import BinaryQuadraticForm, DepartureDelay, QuboBuilder


@dataclass(frozen=True)
class Discretization:
    """Allowed delays ``{0, delta_d, ..., n_levels * delta_d}``."""

    delta_d: int
    n_levels: int

    def __post_init__(self):
        if self.delta_d <= 0:
            raise ValueError("delta_d must be positive")
        if self.n_levels < 0:
            raise ValueError("n_levels must be non-negative")

    @classmethod
    def from_dmax(cls, delta_d: int, d_max: int) -> "Discretization":
        if d_max % delta_d:
            raise ValueError(f"d_max={d_max} is not a multiple of delta_d={delta_d}")
        return cls(delta_d, d_max // delta_d)

    @property
    def d_max(self) -> int:
        return self.delta_d * self.n_levels

    @property
    def delays(self) -> list[int]:
        return [self.delta_d * l for l in range(self.n_levels + 1)]


@dataclass(frozen=True)
class PenaltyWeights:
    encoding: float
    conflict: float
    consistency: float = 0.0

    def __post_init__(self):
        for name in ("encoding", "conflict", "consistency"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"penalty weight {name}={v} must be finite and non-negative")

    @classmethod
    def uniform(cls, value: float) -> "PenaltyWeights":
        return cls(value, value, value)


@dataclass
class Solution:
    """A bit assignment read back as delays, with constraint flags."""

    delays: dict[str, float | None]
    total_delay: float | None
    encoding_ok: bool
    consistency_ok: bool = True
    conflicts_ok: bool = True
    maneuvers: dict[tuple[int, str], int] = field(default_factory=dict)
    accumulated: dict[tuple[str, int], float | None] = field(default_factory=dict)
    broken_groups: list[str] = field(default_factory=list)
    violated_conflicts: list[int] = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.encoding_ok and self.consistency_ok and self.conflicts_ok

    def to_dict(self) -> dict:
        return {
            "delays": self.delays,
            "total_delay": self.total_delay,
            "feasible": self.feasible,
            "encoding_ok": self.encoding_ok,
            "consistency_ok": self.consistency_ok,
            "conflicts_ok": self.conflicts_ok,
            "maneuvers": {f"{k}:{f}": v for (k, f), v in sorted(self.maneuvers.items())},
            "accumulated": {f"{f}:{k}": v for (f, k), v in sorted(self.accumulated.items())},
            "broken_groups": self.broken_groups,
            "violated_conflicts": self.violated_conflicts,
            **({"extras": self.extras} if self.extras else {}),
        }


def one_hot_value(assign: dict, keys: Sequence, values: Sequence):
    """Value selected by a one-hot group, or None when the group is broken."""
    on = [v for k, v in zip(keys, values) if assign.get(k, 0)]
    return on[0] if len(on) == 1 else None


@dataclass(frozen=True)
class DepartureModel:
    instance: Instance
    disc: Discretization

    def group(self, flight: str) -> list[DepartureDelay]:
        return [DepartureDelay(flight, l) for l in range(self.disc.n_levels + 1)]

    def departure_delays(self, assign: dict) -> tuple[dict, list[str]]:
        delays, broken = {}, []
        for f in self.instance.flights:
            delays[f] = one_hot_value(assign, self.group(f), self.disc.delays)
            if delays[f] is None:
                broken.append(f"d[{f}]")
        return delays, broken

    def decode(self, assign: dict) -> Solution:
        delays, broken = self.departure_delays(assign)
        violated = [
            c.k for c in self.instance.conflicts
            if delays[c.i] is not None and delays[c.j] is not None
            and not is_avoided(c, delays[c.i], delays[c.j])
        ]
        total = None if broken else sum(delays.values())
        return Solution(delays, total, not broken, True, not violated,
                        broken_groups=broken, violated_conflicts=violated)


def build_departure_qubo(inst: Instance, disc: Discretization, w: PenaltyWeights) -> BinaryQuadraticForm:
    """One-hot departure delays with encoding, delay and conflict terms.

    Variables are ordered flight by flight, level by level, so there are
    exactly ``n_flights * (n_levels + 1)`` of them.
    """
    if disc.d_max != inst.d_max:
        raise ValueError(f"discretization d_max={disc.d_max} does not match instance d_max={inst.d_max}")
    model = DepartureModel(inst, disc)
    b = QuboBuilder()
    for f in inst.flights:
        b.add_variables(model.group(f))
    for f in inst.flights:
        b.add_one_hot(model.group(f), w.encoding)
        for l in range(1, disc.n_levels + 1):
            b.add_linear(DepartureDelay(f, l), disc.delta_d * l)
    add_departure_conflicts(b, inst, disc, w.conflict)
    return b.build(model)


def add_departure_conflicts(b: QuboBuilder, inst: Instance, disc: Discretization, weight: float) -> None:
    levels = range(disc.n_levels + 1)
    for c in inst.conflicts:
        for l in levels:
            for l2 in levels:
                if c.dmin <= disc.delta_d * (l - l2) <= c.dmax:
                    b.add_quadratic(DepartureDelay(c.i, l), DepartureDelay(c.j, l2), weight)


def greedy_delays(inst: Instance, delays: Sequence[int]) -> dict[str, int] | None:
    """Flights in id order each take the smallest delay compatible with the
    flights already placed; None if some flight has no compatible delay."""
    placed: dict[str, int] = {}
    for f in inst.flights:
        mine = [inst.conflicts[k] for k in inst.conflicts.conflicts_of(f)]
        for d in delays:
            ok = True
            for c in mine:
                other = c.other(f)
                if other in placed:
                    di, dj = (d, placed[other]) if f == c.i else (placed[other], d)
                    if not is_avoided(c, di, dj):
                        ok = False
                        break
            if ok:
                placed[f] = d
                break
        else:
            return None
    return placed


def sufficient_penalties(inst: Instance, disc: Discretization) -> PenaltyWeights:
    """Uniform weights ``max(d_max, U) + delta_d`` where ``U`` is the total
    delay of a greedily found feasible assignment (``n_flights * d_max`` when
    greedy fails).

    Every penalty term is a non-negative integer multiple of its weight, so an
    infeasible assignment costs at least one weight; since that exceeds the
    cost of a known feasible assignment, every minimum is feasible.
    """
    greedy = greedy_delays(inst, disc.delays)
    upper = sum(greedy.values()) if greedy is not None else inst.n_flights * disc.d_max
    return PenaltyWeights.uniform(max(disc.d_max, upper) + disc.delta_d)


def decode(q: BinaryQuadraticForm, bits: Iterable[int]) -> Solution:
    """Read a bit vector back through the model that built ``q``.

    Forms without a model (e.g. read from disk without rebuilding) only get
    their departure one-hot groups checked; delays are then level indices.
    """
    bits = list(bits)
    if len(bits) != q.num_variables:
        raise ValueError(f"expected {q.num_variables} bits, got {len(bits)}")
    assign = q.assignment(bits)
    if q.model is not None:
        return q.model.decode(assign)
    groups: dict[str, dict[int, int]] = {}
    for k, v in assign.items():
        if isinstance(k, DepartureDelay):
            groups.setdefault(k.flight, {})[k.level] = v
    delays, broken = {}, []
    for f, g in sorted(groups.items()):
        on = [l for l, v in g.items() if v]
        delays[f] = on[0] if len(on) == 1 else None
        if delays[f] is None:
            broken.append(f"d[{f}]")
    total = None if broken else sum(delays.values())
    return Solution(delays, total, not broken, broken_groups=broken, extras={"levels_only": True})
