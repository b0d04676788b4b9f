"""Exact and heuristic QUBO solvers, the constrained delay oracle, and the
experiment sweeps built on them."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numba
import numpy as np

from .conflict import is_avoided
from .graph import Instance
from .qubo.bqf import BinaryQuadraticForm
from .qubo.models import (
    Discretization,
    PenaltyWeights,
    Solution,
    build_departure_qubo,
    decode,
    sufficient_penalties,
)

TOL = 1e-9
MAX_BRUTE_FORCE_VARS = 30
MAX_DELAY_ASSIGNMENTS = 10**7
MAX_SWEEP_VARS = 22


class SolverGuardError(ValueError):
    """Instance too large for an exhaustive method."""


@dataclass(frozen=True)
class AnnealSchedule:
    sweeps: int = 1000
    restarts: int = 100
    beta_start: float = 0.1
    beta_end: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.sweeps < 1 or self.restarts < 1:
            raise ValueError("sweeps and restarts must be at least 1")
        if not 0 < self.beta_start < self.beta_end:
            raise ValueError("need 0 < beta_start < beta_end")

    def betas(self) -> np.ndarray:
        if self.sweeps == 1:
            return np.array([self.beta_end])
        return np.geomspace(self.beta_start, self.beta_end, self.sweeps)


@dataclass
class SolveResult:
    bits: np.ndarray
    energy: float
    solution: Solution | None
    evaluations: int
    restart_energies: list[float] = field(default_factory=list)
    wall_time: float = 0.0

    def to_dict(self, timing: bool = False) -> dict:
        out = {
            "bits": "".join(str(int(b)) for b in self.bits),
            "energy": self.energy,
            "evaluations": self.evaluations,
            "restart_energies": self.restart_energies,
            "solution": None if self.solution is None else self.solution.to_dict(),
        }
        if timing:
            out["wall_time"] = self.wall_time
        return out


# -- exhaustive enumeration ---------------------------------------------------
#
# Bit strings are enumerated as integers with x_0 as the most significant bit,
# so the first minimum found is the lexicographically smallest. The variables
# are split into a high block (enumerated in chunks) and a low block (all
# 2^m strings kept in memory); cross terms are one matrix product per chunk.


def _bit_table(m: int) -> np.ndarray:
    idx = np.arange(1 << m, dtype=np.int64)
    shifts = np.arange(m - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts) & 1).astype(np.float64)


def _iter_energies(forms: Sequence[BinaryQuadraticForm], chunk_rows: int = 1 << 22):
    """Yield ``(start_index, [energies of each form])`` over all bit strings,
    block by block."""
    n = forms[0].num_variables
    m = min(n, 16)
    h = n - m
    low = _bit_table(m)
    parts = []
    for q in forms:
        lin, quad = q.dense()
        e_low = q.offset + low @ lin[h:] + np.einsum("ij,ij->i", low @ quad[h:, h:], low)
        parts.append((lin[:h], quad[:h, :h], quad[:h, h:], e_low))
    per_chunk = max(1, chunk_rows >> m)
    for hstart in range(0, 1 << h, per_chunk):
        hidx = np.arange(hstart, min(1 << h, hstart + per_chunk), dtype=np.int64)
        high = ((hidx[:, None] >> np.arange(h - 1, -1, -1, dtype=np.int64)) & 1).astype(np.float64)
        out = []
        for lin_h, quad_hh, quad_hl, e_low in parts:
            e_high = high @ lin_h + np.einsum("ij,ij->i", high @ quad_hh, high)
            block = e_high[:, None] + (high @ quad_hl) @ low.T + e_low[None, :]
            out.append(block.ravel())
        yield hstart << m, out


def _bits_of(index: int, n: int) -> np.ndarray:
    return np.array([(index >> (n - 1 - v)) & 1 for v in range(n)], dtype=np.int8)


def _guard(q: BinaryQuadraticForm, limit: int) -> None:
    if q.num_variables > limit:
        raise SolverGuardError(f"{q.num_variables} variables exceeds the exhaustive limit of {limit}")


def brute_force_qubo(q: BinaryQuadraticForm) -> SolveResult:
    """Global minimum by enumerating all ``2^n`` bit strings.

    Energies within ``1e-9`` of the minimum count as ties; the
    lexicographically smallest tied string wins.
    """
    _guard(q, MAX_BRUTE_FORCE_VARS)
    start = time.perf_counter()
    n = q.num_variables
    if n == 0:
        bits = np.zeros(0, dtype=np.int8)
        return SolveResult(bits, q.offset, decode(q, bits), 1, [q.offset], time.perf_counter() - start)
    best, best_idx = math.inf, -1
    for base, (e,) in _iter_energies([q]):
        cm = float(e.min())
        if cm < best - TOL:
            best = cm
            best_idx = base + int(np.flatnonzero(e <= cm + TOL)[0])
        elif cm < best:
            best = cm
    bits = _bits_of(best_idx, n)
    energy = q.energy(bits)
    return SolveResult(bits, energy, decode(q, bits), 1 << n, [energy], time.perf_counter() - start)


def ground_states(q: BinaryQuadraticForm, limit: int = 1 << 20) -> tuple[float, np.ndarray]:
    """Minimum energy and every bit string within ``1e-9`` of it, in
    lexicographic order (at most ``limit`` of them)."""
    _guard(q, MAX_BRUTE_FORCE_VARS)
    n = q.num_variables
    if n == 0:
        return q.offset, np.zeros((1, 0), dtype=np.int8)
    best, found = math.inf, []
    for base, (e,) in _iter_energies([q]):
        cm = float(e.min())
        if cm < best - TOL:
            found = []
        best = min(best, cm)
        hits = np.flatnonzero(e <= best + TOL)
        found.extend((base + hits).tolist())
        if len(found) > limit:
            raise SolverGuardError(f"more than {limit} ground states")
    states = np.array([_bits_of(i, n) for i in found], dtype=np.int8)
    energies = np.array([q.energy(s) for s in states])
    keep = energies <= energies.min() + TOL
    return float(energies.min()), states[keep]


@dataclass(frozen=True)
class DelayOptimum:
    delays: dict[str, int] | None
    total_delay: int | None
    evaluations: int

    @property
    def feasible(self) -> bool:
        return self.delays is not None


def brute_force_delays(inst: Instance, disc: Discretization) -> DelayOptimum:
    """Minimum-total-delay assignment satisfying every conflict, by
    enumeration; flights in id order, earlier flights most significant for
    tie-breaking."""
    nf, levels = inst.n_flights, disc.n_levels + 1
    total = levels ** nf
    if total > MAX_DELAY_ASSIGNMENTS:
        raise SolverGuardError(f"{total} delay assignments exceeds the limit of {MAX_DELAY_ASSIGNMENTS}")
    pos = {f: n for n, f in enumerate(inst.flights)}
    cons = [(pos[c.i], pos[c.j], c.dmin, c.dmax) for c in inst.conflicts]
    weights = levels ** np.arange(nf - 1, -1, -1, dtype=np.int64)
    best_total, best_idx = None, -1
    chunk = 1 << 20
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        lv = (idx[:, None] // weights) % levels
        d = lv * disc.delta_d
        ok = np.ones(len(idx), dtype=bool)
        for i, j, lo, hi in cons:
            diff = d[:, i] - d[:, j]
            ok &= (diff < lo) | (diff > hi)
        if not ok.any():
            continue
        tot = d.sum(axis=1)
        tot = np.where(ok, tot, np.iinfo(np.int64).max)
        n = int(np.argmin(tot))
        if best_total is None or tot[n] < best_total:
            best_total, best_idx = int(tot[n]), int(idx[n])
    if best_total is None:
        return DelayOptimum(None, None, total)
    lv = (best_idx // weights) % levels
    delays = {f: int(lv[n]) * disc.delta_d for n, f in enumerate(inst.flights)}
    return DelayOptimum(delays, best_total, total)


# -- simulated annealing -------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _anneal(lin, indptr, nbrs, wts, betas, x, rand):
    """Metropolis single-flip sweeps; returns the best state seen and its
    energy relative to the all-zeros string."""
    n = lin.shape[0]
    field = lin.copy()
    energy = 0.0
    for i in range(n):
        if x[i]:
            energy += lin[i]
            for p in range(indptr[i], indptr[i + 1]):
                j = nbrs[p]
                field[j] += wts[p]
                if x[j] and j < i:
                    energy += wts[p]
    best = x.copy()
    best_e = energy
    for s in range(betas.shape[0]):
        beta = betas[s]
        for i in range(n):
            delta = field[i] if x[i] == 0 else -field[i]
            if delta <= 0.0 or rand[s, i] < math.exp(-beta * delta):
                sign = 1.0 if x[i] == 0 else -1.0
                x[i] = 1 - x[i]
                energy += delta
                for p in range(indptr[i], indptr[i + 1]):
                    field[nbrs[p]] += sign * wts[p]
                if energy < best_e - 1e-12:
                    best_e = energy
                    best[:] = x
    return best, best_e


def _csr(q: BinaryQuadraticForm):
    n = q.num_variables
    lin = np.zeros(n)
    for i, v in q.linear.items():
        lin[i] = v
    adj: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    for (i, j), v in q.quadratic.items():
        adj[i].append((j, v))
        adj[j].append((i, v))
    indptr = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        indptr[i + 1] = indptr[i] + len(adj[i])
    nbrs = np.array([j for row in adj for j, _ in row], dtype=np.int64)
    wts = np.array([v for row in adj for _, v in row], dtype=np.float64)
    return lin, indptr, nbrs, wts


def simulated_annealing(q: BinaryQuadraticForm, schedule: AnnealSchedule = AnnealSchedule()) -> SolveResult:
    """Restarted simulated annealing; restart ``r`` draws from seed ``seed + r``.

    The best state over all restarts is returned (earliest restart on ties).
    """
    start = time.perf_counter()
    n = q.num_variables
    if n == 0:
        bits = np.zeros(0, dtype=np.int8)
        return SolveResult(bits, q.offset, decode(q, bits), 0, [q.offset] * schedule.restarts,
                           time.perf_counter() - start)
    lin, indptr, nbrs, wts = _csr(q)
    betas = schedule.betas()
    best_bits, best_e, per_restart = None, math.inf, []
    for r in range(schedule.restarts):
        rng = np.random.default_rng(schedule.seed + r)
        x = rng.integers(0, 2, size=n).astype(np.int8)
        rand = rng.random((len(betas), n))
        bits, e = _anneal(lin, indptr, nbrs, wts, betas, x, rand)
        e = q.energy(bits)
        per_restart.append(e)
        if e < best_e - TOL:
            best_bits, best_e = bits, e
    evaluations = schedule.restarts * len(betas) * n
    return SolveResult(best_bits, best_e, decode(q, best_bits), evaluations, per_restart,
                       time.perf_counter() - start)


# -- metrics ---------------------------------------------------------------------


def success_probability(results: Sequence[SolveResult | float], exact_energy: float) -> float:
    if not results:
        raise ValueError("need at least one result")
    energies = [r.energy if isinstance(r, SolveResult) else float(r) for r in results]
    return sum(abs(e - exact_energy) <= TOL for e in energies) / len(energies)


def time_to_solution_99(p: float, t_anneal: float) -> float:
    """Expected time to see the optimum once with 99% confidence."""
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    if p >= 0.99:
        return t_anneal
    if p == 0:
        return math.inf
    return math.log(0.01) / math.log1p(-p) * t_anneal


# -- sweeps ----------------------------------------------------------------------


@dataclass
class ValidityMap:
    """``valid[e, c]`` for ``encoding[e]`` and ``conflict[c]`` weights."""

    conflict: list[float]
    encoding: list[float]
    valid: np.ndarray

    def cell(self, conflict: float, encoding: float) -> bool:
        return bool(self.valid[self.encoding.index(encoding), self.conflict.index(conflict)])

    def is_staircase(self) -> bool:
        """No valid cell has an invalid cell weakly above and to the right."""
        v = self.valid
        for e in range(v.shape[0]):
            for c in range(v.shape[1]):
                if v[e, c] and not v[e:, c:].all():
                    return False
        return True

    def to_dict(self) -> dict:
        return {
            "lambda_conflict": self.conflict,
            "lambda_encoding": self.encoding,
            "valid": self.valid.astype(int).tolist(),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lambda_conflict", "lambda_encoding", "valid"])
        for e, le in enumerate(self.encoding):
            for c, lc in enumerate(self.conflict):
                w.writerow([repr(float(lc)), repr(float(le)), int(self.valid[e, c])])
        return buf.getvalue()


def departure_parts(inst: Instance, disc: Discretization):
    """Delay-only, encoding-only (unit weight) and conflict-only (unit
    weight) departure forms over the same variables."""
    zero = PenaltyWeights(0.0, 0.0)
    delay = build_departure_qubo(inst, disc, zero)
    enc = build_departure_qubo(inst, disc, PenaltyWeights(1.0, 0.0))
    enc = BinaryQuadraticForm(enc.keys, _sub(enc.linear, delay.linear), enc.quadratic, enc.offset)
    conf = build_departure_qubo(inst, disc, PenaltyWeights(0.0, 1.0))
    conf = BinaryQuadraticForm(conf.keys, _sub(conf.linear, delay.linear), conf.quadratic, conf.offset)
    return delay, enc, conf


def _sub(a: dict, b: dict) -> dict:
    return {k: a.get(k, 0.0) - b.get(k, 0.0) for k in set(a) | set(b)}


def penalty_validity_sweep(
    inst: Instance,
    disc: Discretization,
    conflict_weights: Iterable[float],
    encoding_weights: Iterable[float],
) -> ValidityMap:
    """A cell is valid when every global minimum of the departure QUBO at
    those weights satisfies both the encoding and the conflict constraints."""
    conflict_weights = [float(v) for v in conflict_weights]
    encoding_weights = [float(v) for v in encoding_weights]
    delay, enc, conf = departure_parts(inst, disc)
    _guard(delay, MAX_SWEEP_VARS)
    if delay.num_variables == 0:
        return ValidityMap(conflict_weights, encoding_weights,
                           np.ones((len(encoding_weights), len(conflict_weights)), dtype=bool))
    d, pe, pc = (np.concatenate(a) for a in zip(*(blocks for _, blocks in _iter_energies([delay, enc, conf]))))
    violated = (pe > TOL) | (pc > TOL)
    valid = np.zeros((len(encoding_weights), len(conflict_weights)), dtype=bool)
    for e, le in enumerate(encoding_weights):
        for c, lc in enumerate(conflict_weights):
            energy = d + le * pe + lc * pc
            minima = energy <= energy.min() + TOL
            valid[e, c] = not violated[minima].any()
    return ValidityMap(conflict_weights, encoding_weights, valid)


@dataclass
class SweepRow:
    delta_d: int
    d_max: int
    total_delay: float | None
    feasible: bool


@dataclass
class SweepTable:
    rows: list[SweepRow]
    notes: list[str] = field(default_factory=list)

    def lookup(self, delta_d: int, d_max: int) -> SweepRow | None:
        for r in self.rows:
            if r.delta_d == delta_d and r.d_max == d_max:
                return r
        return None

    def to_dict(self) -> dict:
        return {"rows": [vars(r) for r in self.rows], "notes": self.notes}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["delta_d", "d_max", "min_total_delay", "feasible"])
        for r in self.rows:
            w.writerow([r.delta_d, r.d_max, "" if r.total_delay is None else r.total_delay, int(r.feasible)])
        return buf.getvalue()


SWEEP_SOLVERS = ("enumerate", "exact", "sa")


def solve_departure(inst: Instance, disc: Discretization, solver: str = "enumerate",
                    schedule: AnnealSchedule = AnnealSchedule()) -> tuple[float | None, bool]:
    """Minimum total delay under one discretization (None when infeasible)."""
    if solver == "enumerate":
        opt = brute_force_delays(inst, disc)
        return opt.total_delay, opt.feasible
    q = build_departure_qubo(inst, disc, sufficient_penalties(inst, disc))
    res = brute_force_qubo(q) if solver == "exact" else simulated_annealing(q, schedule)
    sol = res.solution
    if not sol.feasible:
        return None, False
    return sol.total_delay, True


def discretization_sweep(
    inst: Instance,
    delta_ds: Iterable[int],
    d_maxes: Iterable[int],
    solver: str = "enumerate",
    schedule: AnnealSchedule = AnnealSchedule(),
) -> SweepTable:
    if solver not in SWEEP_SOLVERS:
        raise ValueError(f"unknown solver {solver!r}; choose from {SWEEP_SOLVERS}")
    table = SweepTable([])
    for dd in delta_ds:
        for dm in d_maxes:
            if dm % dd:
                table.notes.append(f"skipped delta_d={dd}, d_max={dm}: not divisible")
                continue
            disc = Discretization.from_dmax(dd, dm)
            total, ok = solve_departure(inst.with_d_max(dm), disc, solver, schedule)
            table.rows.append(SweepRow(dd, dm, total, ok))
    return table


def delays_feasible(inst: Instance, delays: dict) -> bool:
    return all(is_avoided(c, delays[c.i], delays[c.j]) for c in inst.conflicts)

