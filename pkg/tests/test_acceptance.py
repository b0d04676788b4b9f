"""Acceptance gate. One test per criterion; the summary at the end of the
run prints a pass/fail line for each."""

import json
import math
import time
from itertools import combinations, product

import networkx as nx
import numpy as np
import pynauty
import pytest

from deconflict.cli import main
from deconflict.conflict import SeparationParams, detect_all, is_avoided
from deconflict.fixtures import (
    random_bqf,
    random_global_table,
    random_instance,
    seven_flight_instance,
    solver_fixtures,
    witness_instance,
)
from deconflict.graph import (
    build_conflict_graph,
    connected_components,
    fit_power_law,
    make_instance,
    treewidth_estimate,
)
from deconflict.qubo import (
    Discretization,
    Maneuver,
    PenaltyWeights,
    build_departure_qubo,
    build_exclusive_qubo,
    build_global_qubo,
    build_interstitial_qubo,
    global_penalties,
    interstitial_penalties,
    s_gadget,
    sufficient_penalties,
    to_ising,
)
from deconflict.qubo.bqf import DepartureDelay, PairDelay, PairTheta, Theta
from deconflict.solve import (
    AnnealSchedule,
    brute_force_delays,
    brute_force_qubo,
    discretization_sweep,
    ground_states,
    penalty_validity_sweep,
    simulated_annealing,
    time_to_solution_99,
)
from deconflict.trajectory import SyntheticConfig, generate_synthetic

from oracles import all_assignments, bfs_component_count, exact_treewidth, pointwise_actualized

TOL = 1e-9


def optimum(inst, dd, dm):
    """Constrained optimum on the grid, ``inf`` when infeasible."""
    opt = brute_force_delays(inst.with_d_max(dm), Discretization.from_dmax(dd, dm))
    return math.inf if opt.total_delay is None else opt.total_delay


# 1 -------------------------------------------------------------------------------


def test_criterion_01_interval_soundness():
    start = time.perf_counter()
    params = SeparationParams()
    fs = generate_synthetic(SyntheticConfig(n_flights=50, seed=7))
    cs = detect_all(fs, params, 18)
    assert len(cs) > 20
    mismatches = 0
    for c in cs:
        for di, dj in product(range(19), repeat=2):
            predicted = not is_avoided(c, di, dj)
            simulated = pointwise_actualized(c.pairs, di, dj, params.temporal_min)
            mismatches += predicted != simulated
    assert mismatches == 0
    assert time.perf_counter() - start < 60


# 2 -------------------------------------------------------------------------------


def test_criterion_02_qubo_matches_constrained_oracle():
    start = time.perf_counter()
    checked = 0
    seed = 0
    while checked < 60:
        rng = np.random.default_rng(seed)
        seed += 1
        nf = int(rng.integers(2, 5))
        nd = int(rng.integers(1, 4))
        dd = int(rng.integers(1, 4))
        inst = random_instance(rng, nf, int(rng.integers(1, 2 * nf)), nd * dd)
        disc = Discretization(dd, nd)
        opt = brute_force_delays(inst, disc)
        if not opt.feasible:
            continue
        res = brute_force_qubo(build_departure_qubo(inst, disc, sufficient_penalties(inst, disc)))
        assert res.solution.feasible
        assert res.solution.total_delay == opt.total_delay
        checked += 1
    assert time.perf_counter() - start < 60


# 3 -------------------------------------------------------------------------------


def test_criterion_03_ising_equivalence():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 13))
        q = random_bqf(rng, n, density=float(rng.uniform(0.1, 1.0)))
        ising = to_ising(q)
        for bits in all_assignments(n):
            worst = max(worst, abs(q.energy(bits) - ising.energy(2 * bits - 1)))
    assert worst <= TOL


# 4 -------------------------------------------------------------------------------


def monotonicity_fixtures():
    out = []
    seed = 0
    while len(out) < 20:
        rng = np.random.default_rng(1000 + seed)
        seed += 1
        nf = int(rng.integers(2, 5))
        inst = random_instance(rng, nf, int(rng.integers(nf - 1, 2 * nf)), 18, max_offset=12, connected=True)
        if not inst.is_trivial():
            out.append(inst)
    return out


def test_criterion_04_discretization_monotonicity():
    violations = 0
    for inst in monotonicity_fixtures():
        for chain in ([1, 3, 9], [1, 2, 6, 18]):
            vals = [optimum(inst, dd, 18) for dd in chain]
            violations += sum(a > b for a, b in zip(vals, vals[1:]))
        for dd in (1, 2, 3, 6):
            vals = [optimum(inst, dd, dm) for dm in (6, 12, 18)]
            violations += sum(a < b for a, b in zip(vals, vals[1:]))
    assert violations == 0


# 5 -------------------------------------------------------------------------------


def test_criterion_05_strict_improvement_witness():
    w = witness_instance(3)
    table = discretization_sweep(w, [1, 3], [3])
    assert table.lookup(1, 3).total_delay == 2
    assert table.lookup(3, 3).total_delay == 3
    # the QUBO agrees with enumeration on both grids
    for dd, want in ((1, 2), (3, 3)):
        disc = Discretization.from_dmax(dd, 3)
        res = brute_force_qubo(build_departure_qubo(w, disc, sufficient_penalties(w, disc)))
        assert res.solution.total_delay == want


# 6 -------------------------------------------------------------------------------


def validity_fixtures():
    out = [(witness_instance(3), Discretization(1, 3)), (witness_instance(3), Discretization(3, 1))]
    seed = 0
    while len(out) < 15:
        rng = np.random.default_rng(2000 + seed)
        seed += 1
        nf = int(rng.integers(2, 5))
        nd = int(rng.integers(1, 20 // nf))
        dd = int(rng.integers(1, 4))
        inst = random_instance(rng, nf, int(rng.integers(1, 2 * nf)), nd * dd, connected=True)
        if nf * (nd + 1) <= 20 and not inst.is_trivial():
            out.append((inst, Discretization(dd, nd)))
    return out


def test_criterion_06_penalty_validity():
    for inst, disc in validity_fixtures():
        w = sufficient_penalties(inst, disc)
        vm = penalty_validity_sweep(inst, disc, [0.0, w.conflict], [0.0, w.encoding])
        opt = brute_force_delays(inst, disc)
        if opt.feasible and opt.total_delay > 0:
            assert not vm.cell(0.0, 0.0)
        if opt.feasible:
            assert vm.cell(w.conflict, w.encoding)

    inst = seven_flight_instance()
    assert len(inst.flights) == 7 and inst.n_conflicts == 9
    disc = Discretization(9, 2)
    w = sufficient_penalties(inst, disc)
    grid_c = list(np.linspace(0, w.conflict, 8))
    grid_e = list(np.linspace(0, w.encoding, 8))
    vm = penalty_validity_sweep(inst, disc, grid_c, grid_e)
    assert vm.is_staircase()
    assert vm.valid.any() and not vm.valid.all()


# 7 -------------------------------------------------------------------------------


def test_criterion_07_sa_quality():
    fixtures = solver_fixtures()
    assert all(q.num_variables <= 30 for _, q in fixtures)
    assert max(q.num_variables for _, q in fixtures) >= 28
    simulated_annealing(fixtures[0][1], AnnealSchedule(sweeps=2, restarts=1))  # compile
    for name, q in fixtures:
        exact = brute_force_qubo(q).energy
        hits, slowest = 0, 0.0
        for trial in range(100):
            res = simulated_annealing(q, AnnealSchedule(seed=trial))
            hits += abs(res.energy - exact) <= TOL
            slowest = max(slowest, res.wall_time)
        assert hits >= 99, f"{name}: {hits}/100"
        assert slowest < 1.0, f"{name}: {slowest:.3f} s"


# 8 -------------------------------------------------------------------------------


def test_criterion_08_product_gadget():
    for x, y, z in product((0, 1), repeat=3):
        if z == x * y:
            assert s_gadget(x, y, z) == 0
        else:
            assert s_gadget(x, y, z) >= 1
    rng = np.random.default_rng(8)
    checked = 0
    for _ in range(30):
        flights = ["A", "B", "C"][: int(rng.integers(2, 4))]
        delays, thetas, table = random_global_table(rng, flights, 2, 2, int(rng.integers(1, 5)))
        q = build_global_qubo(flights, delays, thetas, table, global_penalties(flights, delays, thetas, table))
        if q.num_variables > 22:
            continue
        _, states = ground_states(q)
        for bits in states:
            a = q.assignment(bits)
            for k, v in a.items():
                if isinstance(k, PairDelay):
                    assert v == a[DepartureDelay(k.i, k.a)] * a[DepartureDelay(k.j, k.b)]
                elif isinstance(k, PairTheta):
                    assert v == a[Theta(k.i, k.a)] * a[Theta(k.j, k.b)]
        checked += 1
    assert checked >= 10


# 9 -------------------------------------------------------------------------------


def test_criterion_09_maneuver_model_equivalences():
    inst = make_instance(["A", "B"], [("A", "B", -2, 2)], 0)
    disc = Discretization(1, 0)
    q = build_exclusive_qubo(inst, {("A", 0): 2, ("B", 0): 5}, disc, PenaltyWeights.uniform(50.0))
    res = brute_force_qubo(q)
    assert res.energy == 2
    assert res.solution.feasible and res.solution.total_delay == 2
    assert q.assignment(res.bits)[Maneuver(0)] == 1
    # swapping the costs flips the choice
    q = build_exclusive_qubo(inst, {("A", 0): 5, ("B", 0): 2}, disc, PenaltyWeights.uniform(50.0))
    res = brute_force_qubo(q)
    assert res.energy == 2 and q.assignment(res.bits)[Maneuver(0)] == 0

    seed = checked = 0
    while checked < 10:
        rng = np.random.default_rng(900 + seed)
        seed += 1
        inst = random_instance(rng, int(rng.integers(2, 4)), 2, 2, max_offset=2, connected=True)
        disc = Discretization(1, 2)
        qi = build_interstitial_qubo(inst, 0, disc, interstitial_penalties(inst, 0, disc))
        if qi.num_variables > 24:
            continue
        qd = build_departure_qubo(inst, disc, sufficient_penalties(inst, disc))
        ri, rd = brute_force_qubo(qi), brute_force_qubo(qd)
        assert ri.solution.feasible == rd.solution.feasible
        assert ri.solution.total_delay == rd.solution.total_delay
        checked += 1


# 10 ------------------------------------------------------------------------------


def connected_graphs_up_to_8():
    """Every connected graph on 1..8 vertices, one per isomorphism class."""
    out = [g for g in nx.graph_atlas_g() if g.number_of_nodes() > 0 and nx.is_connected(g)]
    seen = set()
    for g in nx.graph_atlas_g():
        if g.number_of_nodes() != 7:
            continue
        base = {v: set(g[v]) for v in range(7)}
        for r in range(1, 8):
            for nbrs in combinations(range(7), r):
                adj = {v: set(base[v]) for v in range(7)}
                adj[7] = set(nbrs)
                for u in nbrs:
                    adj[u].add(7)
                cert = pynauty.certificate(pynauty.Graph(8, adjacency_dict={v: sorted(n) for v, n in adj.items()}))
                if cert in seen:
                    continue
                seen.add(cert)
                h = nx.Graph(adj)
                if nx.is_connected(h):
                    out.append(h)
    return out


def test_criterion_10_graph_analytics():
    graphs = connected_graphs_up_to_8()
    assert sum(1 for g in graphs if g.number_of_nodes() == 8) == 11117
    for g in graphs:
        n = g.number_of_nodes()
        est = treewidth_estimate({v: set(g[v]) for v in g})
        exact = exact_treewidth(n, list(g.edges))
        assert est >= exact
        if nx.is_tree(g) or g.number_of_edges() == n * (n - 1) // 2:
            assert est == exact

    hist = {d: round(10_000 * d ** -2.0) for d in range(1, 31)}
    assert fit_power_law(hist).slope == pytest.approx(-2.0, abs=0.05)

    from deconflict.conflict import Conflict, ConflictSet

    rng = np.random.default_rng(10)
    for t in range(100):
        n = int(rng.integers(1, 40))
        g = nx.gnp_random_graph(n, float(rng.uniform(0, 0.15)), seed=t)
        cs = ConflictSet(Conflict(k, f"{i:02d}", f"{j:02d}", frozenset(), 0, 0) for k, (i, j) in enumerate(g.edges))
        cg = build_conflict_graph([f"{v:02d}" for v in range(n)], cs)
        assert len(connected_components(cg)) == bfs_component_count(range(n), g.edges)


# 11 ------------------------------------------------------------------------------


def test_criterion_11_t99():
    assert time_to_solution_99(0.99, 20e-6) == 20e-6
    assert abs(time_to_solution_99(0.5, 20e-6) * 1e6 - 132.88) <= 0.01


# 12 ------------------------------------------------------------------------------


def pipeline(out, n_flights, stats_dmax="6,18"):
    cfg = json.dumps({"n_flights": n_flights})
    common = ["--synthetic", cfg, "--seed", "42"]
    assert main(["detect", *common, "--out", str(out / "detect")]) == 0
    assert main(["stats", *common, "--dmax", stats_dmax, "--out", str(out / "stats")]) == 0
    conflicts = ["--conflicts", str(out / "detect" / "conflicts.json"), "--seed", "42"]
    assert main(["build", *conflicts, "--out", str(out / "build")]) == 0
    code = main(["solve", *conflicts, "--restarts", "20", "--t99-runs", "5", "--out", str(out / "solve")])
    assert code in (0, 3)


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_12_determinism(tmp_path):
    pipeline(tmp_path / "a", 40)
    pipeline(tmp_path / "b", 40)
    a, b = tree_bytes(tmp_path / "a"), tree_bytes(tmp_path / "b")
    assert a.keys() == b.keys() and len(a) > 10
    assert [k for k in a if a[k] != b[k]] == []

    start = time.perf_counter()
    pipeline(tmp_path / "c", 100, stats_dmax="18")
    assert time.perf_counter() - start < 30
