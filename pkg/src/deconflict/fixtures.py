"""Small hand-made and seeded random instances for tests and experiments."""

from __future__ import annotations

from itertools import product

import numpy as np

from .conflict import Conflict, ConflictSet
from .graph import DisjointSet, Instance, make_instance
from .qubo.bqf import BinaryQuadraticForm, Index


def witness_instance(d_max: int = 3) -> Instance:
    """Two flights whose only conflict forbids ``d_A - d_B`` in [-2, 1]."""
    return make_instance(["A", "B"], [("A", "B", -2, 1)], d_max)


def random_instance(
    rng: np.random.Generator,
    n_flights: int,
    n_conflicts: int,
    d_max: int,
    temporal_min: int = 3,
    max_offset: int | None = None,
    connected: bool = False,
) -> Instance:
    """Conflicts shaped like detected ones: ``t - s`` offsets ``o .. o + e``
    give the interval ``[1 - dt + o, dt - 1 + o + e]``."""
    if n_flights < 2 and n_conflicts:
        raise ValueError("conflicts need two flights")
    flights = [f"F{n}" for n in range(n_flights)]
    max_offset = d_max if max_offset is None else max_offset
    pairs = []
    if connected:
        for n in range(1, n_flights):
            pairs.append((int(rng.integers(0, n)), n))
    while len(pairs) < n_conflicts:
        a, b = sorted(rng.choice(n_flights, size=2, replace=False).tolist())
        pairs.append((a, b))
    conflicts = []
    for k, (a, b) in enumerate(pairs):
        o = int(rng.integers(-max_offset, max_offset + 1))
        e = int(rng.integers(0, 3))
        conflicts.append(Conflict(k, flights[a], flights[b], frozenset(),
                                  1 - temporal_min + o, temporal_min - 1 + o + e))
    return Instance(tuple(flights), ConflictSet(conflicts), d_max)


def is_connected(inst: Instance) -> bool:
    ds = DisjointSet(inst.flights)
    for c in inst.conflicts:
        ds.union(c.i, c.j)
    return len(ds.groups()) <= 1


def seven_flight_instance() -> Instance:
    """7 flights, 9 conflicts, temporal separation 6, d_max 18; connected,
    not trivial, and needing delay at ``delta_d = 9``.

    Found by scanning seeds in order, so it is fixed.
    """
    from .solve import brute_force_delays  # avoid an import cycle
    from .qubo.models import Discretization

    for seed in range(1000):
        rng = np.random.default_rng(seed)
        inst = random_instance(rng, 7, 9, 18, temporal_min=6, max_offset=12, connected=True)
        if inst.is_trivial():
            continue
        opt = brute_force_delays(inst, Discretization(9, 2))
        if opt.feasible and opt.total_delay >= 18:
            return inst
    raise RuntimeError("no seven-flight fixture found")


def random_bqf(rng: np.random.Generator, n: int, density: float = 0.5, scale: float = 5.0) -> BinaryQuadraticForm:
    linear = {i: float(rng.uniform(-scale, scale)) for i in range(n)}
    quadratic = {
        (i, j): float(rng.uniform(-scale, scale))
        for i in range(n) for j in range(i + 1, n) if rng.random() < density
    }
    return BinaryQuadraticForm([Index(i) for i in range(n)], linear, quadratic, float(rng.uniform(-scale, scale)))


def random_global_table(
    rng: np.random.Generator,
    flights: list[str],
    n_delays: int,
    n_thetas: int,
    entries_per_pair: int,
    delta_d: int = 3,
):
    """Delay values ``0, delta_d, ...``, shape values ``0..n_thetas-1`` and a
    random conflict table over consecutive flight pairs."""
    delays = {f: [delta_d * n for n in range(n_delays)] for f in flights}
    thetas = {f: list(range(n_thetas)) for f in flights}
    table = {}
    for a, b in zip(flights, flights[1:]):
        i, j = sorted((a, b))
        combos = list(product(delays[i], thetas[i], delays[j], thetas[j]))
        pick = rng.choice(len(combos), size=min(entries_per_pair, len(combos)), replace=False)
        table[(i, j)] = sorted(combos[int(p)] for p in pick)
    return delays, thetas, table


def solver_fixtures(seed: int = 77) -> list[tuple[str, BinaryQuadraticForm]]:
    """Compiled QUBOs from every model, 8 to 30 variables."""
    from .qubo import (
        Discretization,
        build_departure_qubo,
        build_exclusive_qubo,
        build_flexible_qubo,
        build_global_qubo,
        build_interstitial_qubo,
        flexible_penalties,
        global_penalties,
        interstitial_penalties,
        sufficient_penalties,
    )

    out = []
    w3 = witness_instance(3)
    disc = Discretization(1, 3)
    out.append(("witness", build_departure_qubo(w3, disc, sufficient_penalties(w3, disc))))
    seven = seven_flight_instance()
    disc = Discretization(9, 2)
    out.append(("seven", build_departure_qubo(seven, disc, sufficient_penalties(seven, disc))))
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, 5, 7, 15, connected=True)
    disc = Discretization(3, 5)
    out.append(("departure-30", build_departure_qubo(inst, disc, sufficient_penalties(inst, disc))))
    inst = random_instance(rng, 4, 5, 6, connected=True)
    disc = Discretization(2, 3)
    man = {(f, c.k): int(rng.integers(1, 6)) for c in inst.conflicts for f in (c.i, c.j)}
    out.append(("exclusive", build_exclusive_qubo(inst, man, disc, sufficient_penalties(inst, disc))))
    inst = random_instance(rng, 3, 2, 2, max_offset=2, connected=True)
    disc = Discretization(1, 2)
    man = {(f, c.k): 1 for c in inst.conflicts for f in (c.i, c.j)}
    out.append(("flexible", build_flexible_qubo(inst, man, disc, flexible_penalties(inst, man, disc))))
    inst = random_instance(rng, 2, 2, 2, max_offset=2, connected=True)
    disc = Discretization(1, 2)
    out.append(("interstitial", build_interstitial_qubo(inst, 1, disc, interstitial_penalties(inst, 1, disc))))
    flights = ["A", "B", "C"]
    delays, thetas, table = random_global_table(rng, flights, 2, 2, 3)
    out.append(("global", build_global_qubo(flights, delays, thetas, table,
                                            global_penalties(flights, delays, thetas, table))))
    return out
