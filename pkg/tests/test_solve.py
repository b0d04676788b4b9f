import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deconflict.fixtures import random_bqf, random_instance, witness_instance
from deconflict.graph import make_instance
from deconflict.qubo import BinaryQuadraticForm, Discretization, decode, Index, PenaltyWeights, build_departure_qubo
from deconflict.qubo.models import sufficient_penalties
from deconflict.solve import (
    AnnealSchedule,
    SolveResult,
    SolverGuardError,
    brute_force_delays,
    brute_force_qubo,
    discretization_sweep,
    ground_states,
    penalty_validity_sweep,
    simulated_annealing,
    success_probability,
    time_to_solution_99,
)

from oracles import all_assignments, exhaustive_min


def form(n, linear, quadratic=None, offset=0.0):
    return BinaryQuadraticForm([Index(i) for i in range(n)], linear, quadratic or {}, offset)


def test_brute_force_examples():
    res = brute_force_qubo(form(1, {0: -1.0}))
    assert list(res.bits) == [1] and res.energy == -1
    res = brute_force_qubo(form(2, {0: 1.0, 1: 1.0}, {(0, 1): 3.0}))
    assert list(res.bits) == [0, 0] and res.energy == 0


def test_brute_force_beats_random_sampling():
    rng = np.random.default_rng(1)
    q = random_bqf(rng, 12)
    best = brute_force_qubo(q).energy
    samples = rng.integers(0, 2, (10_000, 12))
    assert best <= q.energies(samples).min() + 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 10))
def test_brute_force_matches_plain_loop(seed, n):
    q = random_bqf(np.random.default_rng(seed), n)
    res = brute_force_qubo(q)
    e, bits = exhaustive_min(q)
    assert res.energy == pytest.approx(e, abs=1e-9)
    assert list(res.bits) == list(bits)  # lexicographically first minimum
    assert res.energy == q.energy(res.bits)


def test_brute_force_tie_break_is_lexicographic():
    q = form(3, {}, {}, 0.0)
    assert list(brute_force_qubo(q).bits) == [0, 0, 0]
    q = form(2, {0: -1.0, 1: -1.0}, {(0, 1): 1.0})
    assert list(brute_force_qubo(q).bits) == [0, 1]


def test_brute_force_large_split_path():
    """20 variables exercise the chunked high/low split."""
    rng = np.random.default_rng(5)
    q = random_bqf(rng, 20, density=0.2)
    res = brute_force_qubo(q)
    samples = rng.integers(0, 2, (20_000, 20))
    assert res.energy <= q.energies(samples).min() + 1e-9
    # every single flip from the optimum is no better
    for i in range(20):
        bits = res.bits.copy()
        bits[i] ^= 1
        assert q.energy(bits) >= res.energy - 1e-9


def test_guards():
    with pytest.raises(SolverGuardError):
        brute_force_qubo(form(31, {}))
    inst = random_instance(np.random.default_rng(0), 8, 3, 9)
    with pytest.raises(SolverGuardError):
        brute_force_delays(inst, Discretization(1, 9))


def test_ground_states_enumerates_ties():
    q = form(2, {0: -1.0, 1: -1.0}, {(0, 1): 1.0})
    e, states = ground_states(q)
    assert e == -1 and [list(s) for s in states] == [[0, 1], [1, 0], [1, 1]]


def test_brute_force_delays_examples():
    assert brute_force_delays(make_instance(["A", "B"], [], 3), Discretization(3, 1)).total_delay == 0
    inst = make_instance(["A", "B"], [("A", "B", -2, 2)], 3)
    opt = brute_force_delays(inst, Discretization(3, 1))
    assert opt.total_delay == 3 and opt.evaluations == 4
    w = witness_instance(3)
    fine = brute_force_delays(w, Discretization(1, 3))
    assert fine.total_delay == 2 and fine.delays["A"] - fine.delays["B"] == 2
    assert brute_force_delays(w, Discretization(3, 1)).total_delay == 3


def test_brute_force_delays_infeasible():
    inst = make_instance(["A", "B"], [("A", "B", -5, 5)], 3)
    opt = brute_force_delays(inst, Discretization(3, 1))
    assert not opt.feasible and opt.total_delay is None


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_departure_optimum_matches_delay_oracle(seed):
    rng = np.random.default_rng(seed)
    nf, nd = int(rng.integers(2, 5)), int(rng.integers(0, 4))
    dd = int(rng.integers(1, 4))
    inst = random_instance(rng, nf, int(rng.integers(1, 5)), nd * dd)
    disc = Discretization(dd, nd)
    opt = brute_force_delays(inst, disc)
    res = brute_force_qubo(build_departure_qubo(inst, disc, sufficient_penalties(inst, disc)))
    if opt.feasible:
        assert res.solution.feasible and res.solution.total_delay == opt.total_delay
    else:
        assert not res.solution.feasible


def test_schedule_validation():
    with pytest.raises(ValueError):
        AnnealSchedule(sweeps=0)
    with pytest.raises(ValueError):
        AnnealSchedule(beta_start=10, beta_end=1)
    betas = AnnealSchedule(sweeps=5).betas()
    assert betas[0] == pytest.approx(0.1) and betas[-1] == pytest.approx(10)
    assert np.all(np.diff(np.log(betas)) == pytest.approx(np.log(100) / 4))


def test_sa_one_variable():
    for c in (-2.0, 3.0):
        res = simulated_annealing(form(1, {0: c}), AnnealSchedule(sweeps=10, restarts=2))
        assert res.energy == min(0.0, c)


def test_sa_deterministic():
    q = random_bqf(np.random.default_rng(2), 12)
    s = AnnealSchedule(sweeps=200, restarts=5, seed=11)
    a, b = simulated_annealing(q, s), simulated_annealing(q, s)
    assert a.to_dict() == b.to_dict()


def test_sa_energy_equals_form_at_bits():
    q = random_bqf(np.random.default_rng(4), 15)
    res = simulated_annealing(q, AnnealSchedule(sweeps=100, restarts=3))
    assert res.energy == q.energy(res.bits)
    assert len(res.restart_energies) == 3 and min(res.restart_energies) == res.energy


def test_sa_quality_on_random_forms():
    q = random_bqf(np.random.default_rng(8), 12)
    exact = brute_force_qubo(q).energy
    hits = sum(
        abs(simulated_annealing(q, AnnealSchedule(restarts=20, seed=t)).energy - exact) <= 1e-9
        for t in range(20)
    )
    assert hits >= 19


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 12))
def test_sa_never_below_exact(seed, n):
    q = random_bqf(np.random.default_rng(seed), n)
    res = simulated_annealing(q, AnnealSchedule(sweeps=50, restarts=2, seed=seed))
    assert res.energy >= brute_force_qubo(q).energy - 1e-9


def test_success_probability():
    assert success_probability([1.0, 1.0], 1.0) == 1
    assert success_probability([2.0, 3.0], 1.0) == 0
    assert success_probability([1.0, 1.0, 1.0 + 1e-12, 2.0], 1.0) == 0.75
    with pytest.raises(ValueError):
        success_probability([], 0.0)
    r = SolveResult(np.zeros(1), 5.0, None, 1)
    assert success_probability([r], 5.0) == 1


def test_t99_examples():
    assert time_to_solution_99(0.99, 7.0) == 7.0
    assert time_to_solution_99(1.0, 7.0) == 7.0
    assert time_to_solution_99(0.5, 20e-6) == pytest.approx(1.3288e-4, rel=1e-4)
    assert time_to_solution_99(0.0, 1.0) == math.inf
    with pytest.raises(ValueError):
        time_to_solution_99(1.5, 1.0)


@given(st.floats(1e-6, 0.98), st.floats(1e-6, 0.98))
def test_t99_decreasing(p1, p2):
    if p1 < p2:
        assert time_to_solution_99(p1, 1.0) > time_to_solution_99(p2, 1.0)


def test_validity_sweep_examples():
    inst = make_instance(["A", "B"], [("A", "B", -2, 2)], 3)
    disc = Discretization(3, 1)
    w = sufficient_penalties(inst, disc)
    vm = penalty_validity_sweep(inst, disc, [0.0, w.conflict], [0.0, w.encoding])
    assert not vm.cell(0.0, 0.0)
    assert vm.cell(w.conflict, w.encoding)
    assert vm.is_staircase()


def test_validity_sweep_without_conflicts():
    inst = make_instance(["A", "B"], [], 6)
    disc = Discretization(3, 2)
    grid = [0.0, 1.0, 6.5, 7.0, 20.0]
    vm = penalty_validity_sweep(inst, disc, grid, grid)
    for le in grid:
        for lc in grid:
            if le > 6:
                assert vm.cell(lc, le)


def test_validity_sweep_agrees_with_ground_states():
    inst = random_instance(np.random.default_rng(9), 3, 3, 6)
    disc = Discretization(3, 2)
    grid = [0.0, 2.0, 5.0, 9.0]
    vm = penalty_validity_sweep(inst, disc, grid, grid)
    for le in grid:
        for lc in grid:
            q = build_departure_qubo(inst, disc, PenaltyWeights(le, lc))
            _, states = ground_states(q)
            assert vm.cell(lc, le) == all(decode(q, s).feasible for s in states)
    assert "lambda_conflict" in vm.to_csv()


def test_discretization_sweep_examples():
    free = make_instance(["A", "B"], [], 18)
    t = discretization_sweep(free, [1, 3], [3, 6])
    assert all(r.total_delay == 0 for r in t.rows)
    w = witness_instance(3)
    t = discretization_sweep(w, [1, 3, 2], [3])
    assert t.lookup(1, 3).total_delay < t.lookup(3, 3).total_delay
    assert t.lookup(2, 3) is None and t.notes
    assert t.to_csv().startswith("delta_d,d_max,min_total_delay,feasible")


@pytest.mark.parametrize("solver", ["exact", "sa"])
def test_discretization_sweep_solvers_agree(solver):
    w = witness_instance(3)
    a = discretization_sweep(w, [1, 3], [3], "enumerate")
    b = discretization_sweep(w, [1, 3], [3], solver, AnnealSchedule(sweeps=100, restarts=5))
    assert [r.total_delay for r in a.rows] == [r.total_delay for r in b.rows]
    with pytest.raises(ValueError):
        discretization_sweep(w, [1], [3], "bogus")


def test_empty_form_solvers():
    q = form(0, {}, {}, 1.5)
    assert brute_force_qubo(q).energy == 1.5
    assert simulated_annealing(q, AnnealSchedule(sweeps=1, restarts=1)).energy == 1.5
    assert sum(1 for _ in all_assignments(0)) == 1
