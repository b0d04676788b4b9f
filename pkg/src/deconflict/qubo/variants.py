"""QUBO models beyond departure delays.

* global: departure delay plus a discrete shape parameter per flight, with
  pairwise conflict tables over joint values;
* exclusive: one flight of every conflict maneuvers around the other;
* flexible: maneuvers are optional when accumulated delays already separate
  the flights; optionally both flights may maneuver;
* interstitial: bounded extra delay may be absorbed between conflicts.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Iterable, Mapping, Sequence

from ..conflict import is_avoided
from ..graph import Instance
from .bqf import (
    AccumDelay,
    Ancilla,
    BinaryQuadraticForm,
    DelayDiff,
    DepartureDelay,
    Maneuver,
    PairDelay,
    PairTheta,
    QuboBuilder,
    Theta,
    add_product_gadget,
)
from .models import (
    DepartureModel,
    Discretization,
    PenaltyWeights,
    Solution,
    greedy_delays,
    one_hot_value,
)

# -- global trajectory modifications ------------------------------------------


@dataclass(frozen=True)
class GlobalModel:
    flights: tuple[str, ...]
    delays: Mapping[str, tuple]
    thetas: Mapping[str, tuple]
    table: Mapping[tuple[str, str], frozenset]

    def decode(self, assign: dict) -> Solution:
        delays, thetas, broken = {}, {}, []
        for f in self.flights:
            delays[f] = one_hot_value(assign, [DepartureDelay(f, n) for n in range(len(self.delays[f]))], self.delays[f])
            thetas[f] = one_hot_value(assign, [Theta(f, n) for n in range(len(self.thetas[f]))], self.thetas[f])
            if delays[f] is None:
                broken.append(f"d[{f}]")
            if thetas[f] is None:
                broken.append(f"theta[{f}]")

        consistent = True
        for k, v in assign.items():
            if isinstance(k, PairDelay):
                want = assign[DepartureDelay(k.i, k.a)] * assign[DepartureDelay(k.j, k.b)]
            elif isinstance(k, PairTheta):
                want = assign[Theta(k.i, k.a)] * assign[Theta(k.j, k.b)]
            else:
                continue
            consistent &= v == want

        clashes = []
        for (i, j), entries in sorted(self.table.items()):
            vals = (delays[i], thetas[i], delays[j], thetas[j])
            if None not in vals and vals in entries:
                clashes.append(f"{i}:{j}")
        total = None if broken else sum(delays.values())
        return Solution(delays, total, not broken, consistent, not clashes,
                        broken_groups=broken, extras={"theta": thetas, "conflicting_pairs": clashes})


def _value_index(values: Sequence, v, what: str) -> int:
    try:
        return list(values).index(v)
    except ValueError:
        raise ValueError(f"unknown value reference {v!r} for {what}") from None


def build_global_qubo(
    inst: Instance | Sequence[str],
    delay_values: Mapping[str, Sequence],
    theta_values: Mapping[str, Sequence],
    table: Mapping[tuple[str, str], Iterable[tuple]],
    w: PenaltyWeights,
) -> BinaryQuadraticForm:
    """Delay and shape parameter per flight; ``table[(i, j)]`` lists the joint
    values ``(d_i, theta_i, d_j, theta_j)`` that make ``i`` and ``j`` conflict.

    Pair variables are created only for value pairs that some table entry
    mentions.
    """
    flights = tuple(inst.flights if isinstance(inst, Instance) else sorted(inst))
    delays = {f: tuple(delay_values[f]) for f in flights}
    thetas = {f: tuple(theta_values[f]) for f in flights}

    resolved: dict[tuple[str, str], list[tuple[int, int, int, int]]] = {}
    for (i, j), entries in sorted(table.items()):
        if not i < j:
            raise ValueError(f"conflict table key ({i}, {j}) must have i < j")
        if i not in delays or j not in delays:
            raise ValueError(f"conflict table references unknown flight in ({i}, {j})")
        resolved[(i, j)] = sorted({
            (
                _value_index(delays[i], a, f"delay of {i}"),
                _value_index(thetas[i], phi, f"theta of {i}"),
                _value_index(delays[j], b, f"delay of {j}"),
                _value_index(thetas[j], psi, f"theta of {j}"),
            )
            for a, phi, b, psi in entries
        })

    b = QuboBuilder()
    for f in flights:
        dgroup = [DepartureDelay(f, n) for n in range(len(delays[f]))]
        tgroup = [Theta(f, n) for n in range(len(thetas[f]))]
        b.add_one_hot(dgroup, w.encoding)
        b.add_one_hot(tgroup, w.encoding)
        for n, value in enumerate(delays[f]):
            b.add_linear(DepartureDelay(f, n), value)

    for (i, j), entries in resolved.items():
        dpairs = sorted({(a, bb) for a, _, bb, _ in entries})
        tpairs = sorted({(phi, psi) for _, phi, _, psi in entries})
        for a, bb in dpairs:
            add_product_gadget(b, DepartureDelay(i, a), DepartureDelay(j, bb), PairDelay(i, a, j, bb), w.consistency)
        for phi, psi in tpairs:
            add_product_gadget(b, Theta(i, phi), Theta(j, psi), PairTheta(i, phi, j, psi), w.consistency)
        for a, phi, bb, psi in entries:
            b.add_quadratic(PairDelay(i, a, j, bb), PairTheta(i, phi, j, psi), w.conflict)

    model = GlobalModel(
        flights, delays, thetas,
        {(i, j): frozenset((a, phi, bb, psi) for a, phi, bb, psi in entries) for (i, j), entries in table.items()},
    )
    return b.build(model)


def global_penalties(flights: Sequence[str], delay_values, theta_values, table) -> PenaltyWeights:
    """Weights above the delay of a greedily found conflict-free choice."""
    placed: dict[str, tuple] = {}
    for f in sorted(flights):
        options = sorted(product(delay_values[f], theta_values[f]), key=lambda o: o[0])
        for d, th in options:
            ok = True
            for g, (dg, tg) in placed.items():
                i, j = sorted((f, g))
                vals = (d, th, dg, tg) if i == f else (dg, tg, d, th)
                if vals in set(map(tuple, table.get((i, j), ()))):
                    ok = False
                    break
            if ok:
                placed[f] = (d, th)
                break
        else:
            placed = {}
            break
    if placed:
        upper = sum(d for d, _ in placed.values())
    else:
        upper = sum(max(delay_values[f]) for f in flights)
    return PenaltyWeights.uniform(upper + 1)


# -- local modifications --------------------------------------------------------


def _maneuver_delay(maneuver: Mapping, flight: str, k: int) -> int:
    try:
        return maneuver[(flight, k)]
    except KeyError:
        raise ValueError(f"missing maneuver delay for flight {flight} at conflict {k}") from None


def _check_maneuvers(inst: Instance, maneuver: Mapping) -> None:
    for c in inst.conflicts:
        _maneuver_delay(maneuver, c.i, c.k)
        _maneuver_delay(maneuver, c.j, c.k)


def _departure_terms(b: QuboBuilder, inst: Instance, disc: Discretization, weight: float) -> DepartureModel:
    dep = DepartureModel(inst, disc)
    for f in inst.flights:
        b.add_variables(dep.group(f))
    for f in inst.flights:
        b.add_one_hot(dep.group(f), weight)
        for l in range(1, disc.n_levels + 1):
            b.add_linear(DepartureDelay(f, l), disc.delta_d * l)
    return dep


@dataclass(frozen=True)
class ExclusiveModel:
    instance: Instance
    disc: Discretization
    maneuver: Mapping[tuple[str, int], int]

    def decode(self, assign: dict) -> Solution:
        delays, broken = DepartureModel(self.instance, self.disc).departure_delays(assign)
        chosen = {}
        for c in self.instance.conflicts:
            a = assign[Maneuver(c.k)]
            chosen[(c.k, c.i)], chosen[(c.k, c.j)] = a, 1 - a
        acc = _accumulated(self.instance, delays, chosen, self.maneuver)
        total = None
        if not broken:
            total = sum(delays.values()) + sum(self.maneuver[(f, k)] for (k, f), a in chosen.items() if a)
        return Solution(delays, total, not broken, maneuvers=chosen, accumulated=acc, broken_groups=broken)


def _accumulated(inst: Instance, delays: dict, chosen: dict, maneuver: Mapping) -> dict:
    """Delay of each flight on reaching each of its conflicts."""
    acc = {}
    for f in inst.flights:
        run = delays[f]
        for k in inst.conflicts.conflicts_of(f):
            acc[(f, k)] = run
            if run is not None and chosen.get((k, f)):
                run += maneuver[(f, k)]
    return acc


def build_exclusive_qubo(
    inst: Instance, maneuver: Mapping[tuple[str, int], int], disc: Discretization, w: PenaltyWeights
) -> BinaryQuadraticForm:
    """Bit ``a_k`` per conflict: 1 makes flight ``i`` maneuver, 0 flight ``j``."""
    if disc.d_max != inst.d_max:
        raise ValueError("discretization does not match instance d_max")
    _check_maneuvers(inst, maneuver)
    b = QuboBuilder()
    _departure_terms(b, inst, disc, w.encoding)
    for c in inst.conflicts:
        di, dj = maneuver[(c.i, c.k)], maneuver[(c.j, c.k)]
        b.add_variables([Maneuver(c.k)])
        b.add_linear(Maneuver(c.k), di - dj)
        b.add_offset(dj)
    return b.build(ExclusiveModel(inst, disc, dict(maneuver)))


def _subset_sums(values: Iterable[int]) -> set[int]:
    sums = {0}
    for v in values:
        sums |= {s + v for s in sums}
    return sums


@dataclass(frozen=True)
class FlexibleModel:
    instance: Instance
    disc: Discretization
    maneuver: Mapping[tuple[str, int], int]
    grids: Mapping[int, tuple[int, ...]]
    allow_both: bool

    def decode(self, assign: dict) -> Solution:
        inst = self.instance
        delays, broken = DepartureModel(inst, self.disc).departure_delays(assign)
        chosen = {}
        for c in inst.conflicts:
            chosen[(c.k, c.i)] = assign[Maneuver(c.k, c.i)]
            chosen[(c.k, c.j)] = assign[Maneuver(c.k, c.j)]
        acc = _accumulated(inst, delays, chosen, self.maneuver)

        consistent, violated = True, []
        for c in inst.conflicts:
            grid = self.grids[c.k]
            diff_bits = one_hot_value(assign, [DelayDiff(c.k, g) for g in grid], grid)
            if diff_bits is None:
                broken.append(f"D[{c.k}]")
            ai, aj = chosen[(c.k, c.i)], chosen[(c.k, c.j)]
            if self.allow_both and assign[Ancilla(c.k)] != (ai | aj):
                consistent = False
            if acc[(c.i, c.k)] is None or acc[(c.j, c.k)] is None:
                continue
            actual = acc[(c.i, c.k)] - acc[(c.j, c.k)]
            if diff_bits is not None and diff_bits != actual:
                consistent = False
            if ai and aj and not self.allow_both:
                violated.append(c.k)
            elif not (ai or aj) and not is_avoided(c, acc[(c.i, c.k)], acc[(c.j, c.k)]):
                violated.append(c.k)

        total = None
        if not any(g.startswith("d[") for g in broken):
            total = sum(delays.values()) + sum(self.maneuver[(f, k)] for (k, f), a in chosen.items() if a)
        return Solution(delays, total, not broken, consistent, not violated, maneuvers=chosen,
                        accumulated=acc, broken_groups=broken, violated_conflicts=violated)


def flexible_grids(inst: Instance, maneuver: Mapping, disc: Discretization) -> dict[int, tuple[int, ...]]:
    """Delay-difference values per conflict: ``delta_d`` steps spanning every
    difference reachable from departure delays and upstream maneuvers."""
    grids = {}
    cs = inst.conflicts
    for c in cs:
        up_i = [maneuver[(c.i, k)] for k in cs.upstream(c.i, c.k)]
        up_j = [maneuver[(c.j, k)] for k in cs.upstream(c.j, c.k)]
        lo, hi = -(disc.d_max + sum(up_j)), disc.d_max + sum(up_i)
        grid = tuple(range(lo, hi + 1, disc.delta_d))
        on_grid = set(grid)
        reach_i = {d + s for d in disc.delays for s in _subset_sums(up_i)}
        reach_j = {d + s for d in disc.delays for s in _subset_sums(up_j)}
        for x in reach_i:
            for y in reach_j:
                if x - y not in on_grid:
                    raise ValueError(
                        f"conflict {c.k}: reachable delay difference {x - y} is not on the "
                        f"delta_d={disc.delta_d} grid from {lo}; make maneuver delays multiples of delta_d"
                    )
        grids[c.k] = grid
    return grids


def build_flexible_qubo(
    inst: Instance,
    maneuver: Mapping[tuple[str, int], int],
    disc: Discretization,
    w: PenaltyWeights,
    allow_both: bool = False,
) -> BinaryQuadraticForm:
    if disc.d_max != inst.d_max:
        raise ValueError("discretization does not match instance d_max")
    _check_maneuvers(inst, maneuver)
    grids = flexible_grids(inst, maneuver, disc)
    cs = inst.conflicts

    b = QuboBuilder()
    _departure_terms(b, inst, disc, w.encoding)
    for c in cs:
        ai, aj = Maneuver(c.k, c.i), Maneuver(c.k, c.j)
        b.add_variables([ai, aj])
        group = [DelayDiff(c.k, g) for g in grids[c.k]]
        b.add_variables(group)
        if allow_both:
            b.add_variables([Ancilla(c.k)])
        b.add_one_hot(group, w.encoding)
        b.add_linear(ai, maneuver[(c.i, c.k)])
        b.add_linear(aj, maneuver[(c.j, c.k)])

    def accumulated_terms(f: str, k: int, sign: float):
        terms = [(DepartureDelay(f, l), sign * disc.delta_d * l) for l in range(1, disc.n_levels + 1)]
        terms += [(Maneuver(kk, f), sign * maneuver[(f, kk)]) for kk in cs.upstream(f, k)]
        return terms

    for c in cs:
        terms = accumulated_terms(c.i, c.k, 1.0) + accumulated_terms(c.j, c.k, -1.0)
        terms += [(DelayDiff(c.k, g), -float(g)) for g in grids[c.k]]
        b.add_squared(terms, 0.0, w.consistency)

        ai, aj = Maneuver(c.k, c.i), Maneuver(c.k, c.j)
        forbidden = [g for g in grids[c.k] if c.dmin <= g <= c.dmax]
        if allow_both:
            ak = Ancilla(c.k)
            # zero exactly when ak == ai OR aj
            s = w.consistency
            b.add_linear(ai, s)
            b.add_linear(aj, s)
            b.add_linear(ak, s)
            b.add_quadratic(ai, aj, s)
            b.add_quadratic(ai, ak, -2 * s)
            b.add_quadratic(aj, ak, -2 * s)
            for g in forbidden:
                b.add_linear(DelayDiff(c.k, g), w.conflict)
                b.add_quadratic(DelayDiff(c.k, g), ak, -w.conflict)
        else:
            for g in forbidden:
                dk = DelayDiff(c.k, g)
                b.add_linear(dk, w.conflict)
                b.add_quadratic(dk, ai, -w.conflict)
                b.add_quadratic(dk, aj, -w.conflict)
                b.add_quadratic(ai, aj, 2 * w.conflict)
    return b.build(FlexibleModel(inst, disc, dict(maneuver), grids, allow_both))


def flexible_penalties(inst: Instance, maneuver: Mapping, disc: Discretization) -> PenaltyWeights:
    """Weights above the cost of a known feasible assignment: either greedy
    departure delays, or no departure delay and the cheaper maneuver at every
    conflict."""
    all_maneuver = sum(min(maneuver[(c.i, c.k)], maneuver[(c.j, c.k)]) for c in inst.conflicts)
    greedy = greedy_delays(inst, disc.delays)
    upper = all_maneuver if greedy is None else min(all_maneuver, sum(greedy.values()))
    return PenaltyWeights.uniform(max(disc.d_max, upper) + disc.delta_d)


@dataclass(frozen=True)
class InterstitialModel:
    instance: Instance
    disc: Discretization
    bounds: Mapping[tuple[str, int], int]
    grids: Mapping[tuple[str, int], tuple[int, ...]]

    def decode(self, assign: dict) -> Solution:
        inst = self.instance
        delays, broken = DepartureModel(inst, self.disc).departure_delays(assign)
        acc = {}
        for (f, k), grid in self.grids.items():
            acc[(f, k)] = one_hot_value(assign, [AccumDelay(f, k, g) for g in grid], grid)
            if acc[(f, k)] is None:
                broken.append(f"D[{f},{k}]")

        consistent = True
        for f in inst.flights:
            prev = delays[f]
            for k in inst.conflicts.conflicts_of(f):
                cur = acc[(f, k)]
                if prev is not None and cur is not None:
                    consistent &= prev <= cur <= prev + self.bounds[(f, k)]
                prev = cur
        violated = [
            c.k for c in inst.conflicts
            if acc[(c.i, c.k)] is not None and acc[(c.j, c.k)] is not None
            and not is_avoided(c, acc[(c.i, c.k)], acc[(c.j, c.k)])
        ]
        total = None
        lasts = [acc[(f, inst.conflicts.conflicts_of(f)[-1])] for f in inst.flights]
        if not broken:
            total = sum(lasts)
        return Solution(delays, total, not broken, consistent, not violated,
                        accumulated=acc, broken_groups=broken, violated_conflicts=violated)


def _bound_table(inst: Instance, bounds) -> dict[tuple[str, int], int]:
    table = {}
    for f in inst.flights:
        for k in inst.conflicts.conflicts_of(f):
            if isinstance(bounds, Mapping):
                try:
                    table[(f, k)] = int(bounds[(f, k)])
                except KeyError:
                    raise ValueError(f"missing interstitial bound for flight {f} at conflict {k}") from None
            else:
                table[(f, k)] = int(bounds)
            if table[(f, k)] < 0:
                raise ValueError("interstitial bounds must be non-negative")
    return table


def build_interstitial_qubo(
    inst: Instance,
    bounds: Mapping[tuple[str, int], int] | int,
    disc: Discretization,
    w: PenaltyWeights,
) -> BinaryQuadraticForm:
    """Accumulated delay of each flight at each of its conflicts, one-hot on
    the ``delta_d`` grid; between consecutive conflicts it may grow by at most
    the bound of the later conflict.

    ``bounds`` maps ``(flight, conflict)`` to the largest extra delay absorbed
    just before that conflict; a single integer applies everywhere.
    """
    if disc.d_max != inst.d_max:
        raise ValueError("discretization does not match instance d_max")
    for f in inst.flights:
        if not inst.conflicts.conflicts_of(f):
            raise ValueError(f"flight {f} has no conflicts; drop it from the interstitial model")
    table = _bound_table(inst, bounds)
    dd = disc.delta_d

    grids: dict[tuple[str, int], tuple[int, ...]] = {}
    for f in inst.flights:
        reach = disc.d_max
        for k in inst.conflicts.conflicts_of(f):
            reach += table[(f, k)]
            grids[(f, k)] = tuple(range(0, reach // dd * dd + 1, dd))

    b = QuboBuilder()
    _departure_terms_no_delay(b, inst, disc, w.encoding)
    for f in inst.flights:
        for k in inst.conflicts.conflicts_of(f):
            group = [AccumDelay(f, k, g) for g in grids[(f, k)]]
            b.add_one_hot(group, w.encoding)

    for f in inst.flights:
        order = inst.conflicts.conflicts_of(f)
        first, bound = order[0], table[(f, order[0])]
        for l, g in product(range(disc.n_levels + 1), grids[(f, first)]):
            alpha = dd * l
            if g < alpha or g - alpha > bound:
                b.add_quadratic(AccumDelay(f, first, g), DepartureDelay(f, l), w.consistency)
        for prev, k in zip(order, order[1:]):
            bound = table[(f, k)]
            for g, g_prev in product(grids[(f, k)], grids[(f, prev)]):
                if g < g_prev or g - g_prev > bound:
                    b.add_quadratic(AccumDelay(f, k, g), AccumDelay(f, prev, g_prev), w.consistency)
        last = order[-1]
        for g in grids[(f, last)]:
            b.add_linear(AccumDelay(f, last, g), g)

    for c in inst.conflicts:
        for g, g2 in product(grids[(c.i, c.k)], grids[(c.j, c.k)]):
            if c.dmin <= g - g2 <= c.dmax:
                b.add_quadratic(AccumDelay(c.i, c.k, g), AccumDelay(c.j, c.k, g2), w.conflict)
    return b.build(InterstitialModel(inst, disc, table, grids))


def _departure_terms_no_delay(b: QuboBuilder, inst: Instance, disc: Discretization, weight: float) -> None:
    dep = DepartureModel(inst, disc)
    for f in inst.flights:
        b.add_variables(dep.group(f))
    for f in inst.flights:
        b.add_one_hot(dep.group(f), weight)


def interstitial_penalties(inst: Instance, bounds, disc: Discretization) -> PenaltyWeights:
    """Greedy departure delays with no interstitial delay are feasible."""
    table = _bound_table(inst, bounds)
    greedy = greedy_delays(inst, disc.delays)
    if greedy is not None:
        upper = sum(greedy.values())
    else:
        upper = sum(disc.d_max + sum(table[(f, k)] for k in inst.conflicts.conflicts_of(f)) for f in inst.flights)
    return PenaltyWeights.uniform(max(disc.d_max, upper) + disc.delta_d)
