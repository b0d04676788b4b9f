"""Conflict graph, instance extraction and structural statistics."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping

import numpy as np
from scipy import stats

from .conflict import Conflict, ConflictSet, is_avoided
from .trajectory import FlightSet


class GraphError(ValueError):
    pass


class InsufficientData(ValueError):
    pass


@dataclass(frozen=True)
class ConflictGraph:
    """Flights as vertices; an edge per flight pair with at least one conflict,
    labelled with the ids of those conflicts."""

    vertices: tuple[str, ...]
    edges: Mapping[tuple[str, str], tuple[int, ...]]

    def adjacency(self) -> dict[str, set[str]]:
        adj = {v: set() for v in self.vertices}
        for u, v in self.edges:
            adj[u].add(v)
            adj[v].add(u)
        return adj

    def degree(self, v: str) -> int:
        return sum(1 for e in self.edges if v in e)

    def subgraph(self, vertices: Iterable[str]) -> "ConflictGraph":
        keep = set(vertices)
        return ConflictGraph(
            tuple(sorted(keep)),
            {e: ids for e, ids in self.edges.items() if e[0] in keep and e[1] in keep},
        )


def build_conflict_graph(fs: FlightSet | Iterable[str], cs: ConflictSet, d_max: int | None = None) -> ConflictGraph:
    """``d_max`` is informational: ``cs`` must already have been detected at it."""
    ids = fs.ids if isinstance(fs, FlightSet) else list(fs)
    known = set(ids)
    edges: dict[tuple[str, str], list[int]] = {}
    for c in cs:
        if c.i not in known or c.j not in known:
            raise GraphError(f"conflict {c.k} references unknown flight ({c.i}, {c.j})")
        edges.setdefault((c.i, c.j), []).append(c.k)
    return ConflictGraph(
        tuple(sorted(known)), {e: tuple(sorted(ks)) for e, ks in sorted(edges.items())}
    )


class DisjointSet:
    """Union-find with path halving and union by size."""

    def __init__(self, items: Iterable[Hashable] = ()):
        self.parent: dict = {}
        self.size: dict = {}
        for x in items:
            self.add(x)

    def add(self, x) -> None:
        if x not in self.parent:
            self.parent[x] = x
            self.size[x] = 1

    def find(self, x):
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return True

    def groups(self) -> list[list]:
        out: dict = {}
        for x in self.parent:
            out.setdefault(self.find(x), []).append(x)
        return [sorted(g) for g in out.values()]


def connected_components(g: ConflictGraph) -> list[list[str]]:
    """Vertex sets of the components, each sorted, ordered by smallest id."""
    ds = DisjointSet(g.vertices)
    for u, v in g.edges:
        ds.union(u, v)
    return sorted(ds.groups(), key=lambda comp: comp[0])


@dataclass(frozen=True)
class Instance:
    """One connected component of the conflict graph: the unit of optimization."""

    flights: tuple[str, ...]
    conflicts: ConflictSet
    d_max: int
    trajectories: FlightSet | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "flights", tuple(sorted(self.flights)))
        known = set(self.flights)
        for c in self.conflicts:
            if c.i not in known or c.j not in known:
                raise GraphError(f"conflict {c.k} leaves the instance")

    @property
    def n_flights(self) -> int:
        return len(self.flights)

    @property
    def n_conflicts(self) -> int:
        return len(self.conflicts)

    def is_trivial(self) -> bool:
        """No conflict is actualized when every flight departs on time."""
        return all(is_avoided(c, 0, 0) for c in self.conflicts)

    def with_d_max(self, d_max: int) -> "Instance":
        return Instance(self.flights, self.conflicts, d_max, self.trajectories)

    def to_dict(self) -> dict:
        return {
            "flights": list(self.flights),
            "conflicts": self.conflicts.to_records(),
            "d_max": self.d_max,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Instance":
        return cls(tuple(data["flights"]), ConflictSet.from_records(data["conflicts"]), int(data["d_max"]))


def make_instance(flights: Iterable[str], intervals: Iterable[tuple[str, str, int, int]], d_max: int) -> Instance:
    """Hand-built instance from ``(i, j, dmin, dmax)`` forbidden intervals."""
    conflicts = []
    for k, (i, j, lo, hi) in enumerate(intervals):
        if i > j:
            i, j, lo, hi = j, i, -hi, -lo
        conflicts.append(Conflict(k, i, j, frozenset(), lo, hi))
    return Instance(tuple(flights), ConflictSet(conflicts), d_max)


def extract_instances(
    g: ConflictGraph,
    fs: FlightSet | None,
    cs: ConflictSet,
    d_max: int,
    include_trivial: bool = False,
) -> list[Instance]:
    out = []
    for comp in connected_components(g):
        inst = Instance(
            tuple(comp),
            cs.restrict(comp),
            d_max,
            fs.subset(comp) if fs is not None else None,
        )
        if include_trivial or not inst.is_trivial():
            out.append(inst)
    return out


# -- statistics ---------------------------------------------------------------


@dataclass(frozen=True)
class LinearFit:
    slope: float
    stderr: float
    intercept: float


@dataclass(frozen=True)
class DegreeStats:
    histogram: dict[int, int]
    fit: LinearFit | None
    fit_error: str | None = None

    @property
    def alpha(self) -> float | None:
        return None if self.fit is None else self.fit.slope


def _regress(x, y) -> LinearFit:
    res = stats.linregress(np.asarray(x, float), np.asarray(y, float))
    return LinearFit(float(res.slope), float(res.stderr), float(res.intercept))


def fit_power_law(histogram: Mapping[int, int]) -> LinearFit:
    """Least-squares line through ``(log degree, log count)`` over bins with
    nonzero degree and count."""
    bins = sorted((d, c) for d, c in histogram.items() if d > 0 and c > 0)
    if len(bins) < 2:
        raise InsufficientData(f"power-law fit needs 2 nonzero bins, have {len(bins)}")
    d, c = zip(*bins)
    return _regress(np.log(d), np.log(c))


def degree_histogram(g: ConflictGraph) -> dict[int, int]:
    adj = g.adjacency()
    return dict(sorted(Counter(len(n) for n in adj.values()).items()))


def degree_stats(g: ConflictGraph) -> DegreeStats:
    hist = degree_histogram(g)
    try:
        return DegreeStats(hist, fit_power_law(hist))
    except InsufficientData as exc:
        return DegreeStats(hist, None, str(exc))


def _bitmask_adjacency(adj: Mapping) -> tuple[list, list[int]]:
    order = sorted(adj)
    index = {v: n for n, v in enumerate(order)}
    masks = [0] * len(order)
    for v, nbrs in adj.items():
        for u in nbrs:
            if u != v:
                masks[index[v]] |= 1 << index[u]
                masks[index[u]] |= 1 << index[v]
    return order, masks


def min_fill_order(adj: Mapping | ConflictGraph) -> tuple[list, int]:
    """Greedy min-fill elimination order and its width.

    Ties go to the smallest vertex id. The width (largest neighbourhood at
    elimination time) bounds the treewidth from above.
    """
    if isinstance(adj, ConflictGraph):
        adj = adj.adjacency()
    order, masks = _bitmask_adjacency(adj)
    alive = (1 << len(order)) - 1
    elim, width = [], 0
    while alive:
        best, best_fill = -1, None
        rest = alive
        while rest:
            v = (rest & -rest).bit_length() - 1
            rest &= rest - 1
            nb = masks[v]
            fill = 0
            r = nb
            while r:
                u = (r & -r).bit_length() - 1
                r &= r - 1
                fill += (nb & ~masks[u] & ~(1 << u)).bit_count()
            fill //= 2
            if best_fill is None or fill < best_fill:
                best, best_fill = v, fill
                if fill == 0:
                    break
        nb = masks[best]
        width = max(width, nb.bit_count())
        r = nb
        while r:
            u = (r & -r).bit_length() - 1
            r &= r - 1
            masks[u] = (masks[u] | nb) & ~(1 << u) & ~(1 << best)
        alive &= ~(1 << best)
        elim.append(order[best])
    return elim, width


def treewidth_estimate(adj: Mapping | ConflictGraph) -> int:
    return min_fill_order(adj)[1]


def component_treewidths(g: ConflictGraph) -> list[tuple[int, int]]:
    """``(size, treewidth estimate)`` for every component."""
    adj = g.adjacency()
    out = []
    for comp in connected_components(g):
        sub = {v: adj[v] & set(comp) for v in comp}
        out.append((len(comp), treewidth_estimate(sub)))
    return out


def treewidth_size_slope(components: Iterable[tuple[int, int]], min_size: int = 50) -> LinearFit:
    """Slope of treewidth against component size over components with at
    least ``min_size`` flights."""
    pts = [(s, tw) for s, tw in components if s >= min_size]
    if len(pts) < 2 or len({s for s, _ in pts}) < 2:
        raise InsufficientData(f"need 2 distinct component sizes >= {min_size}, have {len(pts)} components")
    size, tw = zip(*pts)
    return _regress(size, tw)


def component_size_histogram(g: ConflictGraph) -> dict[int, int]:
    return dict(sorted(Counter(len(c) for c in connected_components(g)).items()))


def fmt_float(x: float | None) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))
