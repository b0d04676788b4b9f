"""``deconflict`` command line: detect, stats, build, solve.

Stages hand off through files in ``--out``. Every output is written to a
temporary file and renamed into place; ``manifest.json`` is written last.

Exit codes: 0 success, 2 input or configuration error, 3 some instance
exceeded a solver guard (the others still complete).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import zlib
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .conflict import ConflictSet, SeparationParams, default_workers, detect_all
from .graph import (
    InsufficientData,
    Instance,
    build_conflict_graph,
    component_size_histogram,
    component_treewidths,
    connected_components,
    degree_stats,
    extract_instances,
    fmt_float,
    treewidth_size_slope,
)
from .qubo import (
    MODELS,
    PenaltyWeights,
    build_departure_qubo,
    build_exclusive_qubo,
    build_flexible_qubo,
    build_global_qubo,
    build_interstitial_qubo,
    export_qubo,
    flexible_penalties,
    global_penalties,
    interstitial_penalties,
    max_coefficient_ratio,
    sufficient_penalties,
    to_ising,
)
from .qubo.io import atomic_write
from .qubo.models import Discretization
from .solve import (
    AnnealSchedule,
    SolverGuardError,
    brute_force_qubo,
    discretization_sweep,
    penalty_validity_sweep,
    simulated_annealing,
    success_probability,
    time_to_solution_99,
)
from .trajectory import FlightSet, SyntheticConfig, TrajectoryError, generate_synthetic, read_trajectories

log = logging.getLogger("deconflict")

EXIT_OK, EXIT_INPUT, EXIT_GUARD = 0, 2, 3


class InputError(Exception):
    pass


def sub_seed(seed: int, name: str) -> int:
    """Independent, reproducible seed for the named consumer of randomness."""
    return int(np.random.SeedSequence([seed, zlib.crc32(name.encode())]).generate_state(1)[0])


# -- argument parsing ------------------------------------------------------------


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_source(p: argparse.ArgumentParser, conflicts: bool) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--input", type=Path, help="trajectory CSV")
    src.add_argument("--synthetic", help="synthetic corridor config: JSON text or path to a JSON file")
    if conflicts:
        src.add_argument("--conflicts", type=Path, help="conflicts JSON written by 'detect'")
    p.add_argument("--horizontal-nm", type=float, default=30.0)
    p.add_argument("--temporal-min", type=int, default=3)
    p.add_argument("--vertical-ft", type=float, default=2000.0)
    p.add_argument("--seed", type=int, default=0, help="master seed (synthetic generation, annealing)")
    p.add_argument("--out", type=Path, required=True, help="output directory")


def _add_model(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dmax", type=int, default=18)
    p.add_argument("--delta-d", type=int, default=3)
    p.add_argument("--model", choices=MODELS, default="departure")
    p.add_argument("--weights", default="auto", help="'auto' or lambda_e,lambda_c[,lambda_s]")
    p.add_argument("--maneuver-delay", help="integer for every (flight, conflict), or a JSON file")
    p.add_argument("--interstitial-bound", help="integer for every (flight, conflict), or a JSON file")
    p.add_argument("--global-table", type=Path, help="JSON file with flights, delays, thetas and table")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deconflict", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="detect and cluster potential conflicts")
    _add_source(p, conflicts=False)
    p.add_argument("--dmax", type=int, default=18)

    p = sub.add_parser("stats", help="conflict-graph statistics over a d_max grid")
    _add_source(p, conflicts=False)
    p.add_argument("--dmax", type=_int_list, default=[0, 6, 12, 18, 30, 45, 60])
    p.add_argument("--min-size", type=int, default=50, help="smallest component in the treewidth fit")

    p = sub.add_parser("build", help="compile instances into QUBO files")
    _add_source(p, conflicts=True)
    _add_model(p)

    p = sub.add_parser("solve", help="solve instances and run experiments")
    _add_source(p, conflicts=True)
    _add_model(p)
    p.add_argument("--solver", choices=("exact", "sa"), default="sa")
    p.add_argument("--sweeps", type=int, default=1000)
    p.add_argument("--restarts", type=int, default=100)
    p.add_argument("--beta", type=_float_list, default=[0.1, 10.0], help="start,end inverse temperature")
    p.add_argument("--validity-grid", type=_float_list,
                   help="penalty weights to sweep (same values for both axes)")
    p.add_argument("--sweep-delta-d", type=_int_list, help="delta_d values of a discretization sweep")
    p.add_argument("--sweep-dmax", type=_int_list, help="d_max values of a discretization sweep")
    p.add_argument("--t99-runs", type=int, default=0, help="single-restart annealing runs per instance")
    p.add_argument("--t-anneal", type=float, default=20e-6, help="seconds per annealing run in the T99 report")
    return parser


# -- inputs ----------------------------------------------------------------------


def load_flights(args) -> FlightSet:
    if args.input is not None:
        try:
            return read_trajectories(args.input)
        except OSError as exc:
            raise InputError(f"cannot read {args.input}: {exc}") from exc
    if args.synthetic is not None:
        text = args.synthetic
        if not text.lstrip().startswith("{"):
            try:
                text = Path(text).read_text(encoding="utf-8")
            except OSError as exc:
                raise InputError(f"cannot read synthetic config {args.synthetic}: {exc}") from exc
        data = json.loads(text)
        data.setdefault("seed", sub_seed(args.seed, "synthetic"))
        return generate_synthetic(SyntheticConfig.from_dict(data))
    raise InputError("one of --input or --synthetic is required")


def separation(args) -> SeparationParams:
    return SeparationParams(args.horizontal_nm, args.temporal_min, args.vertical_ft)


def load_instances(args) -> list[Instance]:
    if getattr(args, "conflicts", None) is not None:
        try:
            cs = ConflictSet.from_json(args.conflicts.read_text(encoding="utf-8"))
        except OSError as exc:
            raise InputError(f"cannot read {args.conflicts}: {exc}") from exc
        g = build_conflict_graph(cs.flights, cs)
        return extract_instances(g, None, cs, args.dmax)
    fs = load_flights(args)
    cs = detect_all(fs, separation(args), args.dmax)
    return extract_instances(build_conflict_graph(fs, cs), fs, cs, args.dmax)


def _table_file(path: Path | None):
    if path is None:
        raise InputError("--model global needs --global-table")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        table: dict = {}
        for i, j, *vals in data["table"]:
            table.setdefault((i, j), []).append(tuple(vals))
        return data["flights"], data["delays"], data["thetas"], table
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise InputError(f"bad global table {path}: {exc}") from exc


def _per_flight_conflict(value: str | None, inst: Instance, what: str) -> dict:
    """``(flight, k) -> int`` from a uniform integer or a JSON file of
    ``[flight, k, value]`` rows."""
    if value is None:
        raise InputError(f"--model needs {what}")
    try:
        uniform = int(value)
    except ValueError:
        uniform = None
    if uniform is not None:
        return {(f, c.k): uniform for c in inst.conflicts for f in (c.i, c.j)}
    try:
        rows = json.loads(Path(value).read_text(encoding="utf-8"))
        return {(f, int(k)): int(v) for f, k, v in rows}
    except (OSError, ValueError, TypeError) as exc:
        raise InputError(f"bad {what} file {value}: {exc}") from exc


def _weights(args, auto: PenaltyWeights) -> PenaltyWeights:
    if args.weights == "auto":
        return auto
    try:
        vals = [float(v) for v in args.weights.split(",")]
    except ValueError:
        raise InputError(f"--weights must be 'auto' or numbers, got {args.weights!r}") from None
    if len(vals) not in (2, 3):
        raise InputError("--weights takes lambda_e,lambda_c[,lambda_s]")
    return PenaltyWeights(*vals)


def compile_instance(args, inst: Instance):
    """QUBO of ``inst`` under ``args.model`` and the weights used."""
    try:
        disc = Discretization.from_dmax(args.delta_d, args.dmax)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    model = args.model
    try:
        if model == "departure":
            w = _weights(args, sufficient_penalties(inst, disc))
            return build_departure_qubo(inst, disc, w), w
        if model == "exclusive":
            man = _per_flight_conflict(args.maneuver_delay, inst, "--maneuver-delay")
            w = _weights(args, sufficient_penalties(inst, disc))
            return build_exclusive_qubo(inst, man, disc, w), w
        if model == "flexible":
            man = _per_flight_conflict(args.maneuver_delay, inst, "--maneuver-delay")
            w = _weights(args, flexible_penalties(inst, man, disc))
            return build_flexible_qubo(inst, man, disc, w), w
        if model == "interstitial":
            bounds = _per_flight_conflict(args.interstitial_bound, inst, "--interstitial-bound")
            w = _weights(args, interstitial_penalties(inst, bounds, disc))
            return build_interstitial_qubo(inst, bounds, disc, w), w
    except (KeyError, ValueError) as exc:
        raise InputError(f"model {model}: {exc}") from exc
    raise InputError(f"unknown model {model}")


def model_jobs(args) -> list[tuple[str, list[str], object, PenaltyWeights]]:
    """``(name, flights, qubo, weights)`` for every instance to compile."""
    if args.model == "global":
        flights, delays, thetas, table = _table_file(args.global_table)
        try:
            w = _weights(args, global_penalties(flights, delays, thetas, table))
            q = build_global_qubo(flights, delays, thetas, table, w)
        except (KeyError, ValueError) as exc:
            raise InputError(f"model global: {exc}") from exc
        return [("instance_000", sorted(flights), q, w)]
    jobs = []
    for n, inst in enumerate(load_instances(args)):
        q, w = compile_instance(args, inst)
        jobs.append((f"instance_{n:03d}", list(inst.flights), q, w))
    return jobs


# -- outputs ---------------------------------------------------------------------


def write_json(path: Path, data) -> None:
    atomic_write(path, json.dumps(data, indent=1, sort_keys=True) + "\n")


def write_rows(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)] + [",".join(str(v) for v in r) for r in rows]
    atomic_write(path, "\n".join(lines) + "\n")


def _weights_dict(w: PenaltyWeights) -> dict:
    return {"encoding": w.encoding, "conflict": w.conflict, "consistency": w.consistency}


# -- subcommands -----------------------------------------------------------------


def cmd_detect(args) -> int:
    fs = load_flights(args)
    cs = detect_all(fs, separation(args), args.dmax)
    atomic_write(args.out / "conflicts.json", cs.to_json() + "\n")
    summary = {
        "n_flights": len(fs),
        "n_conflicts": len(cs),
        "n_pairs": sum(len(c.pairs) for c in cs),
        "n_flight_pairs": len({(c.i, c.j) for c in cs}),
        "d_max": args.dmax,
    }
    write_json(args.out / "summary.json", summary)
    write_json(args.out / "manifest.json", {"command": "detect", "files": ["conflicts.json", "summary.json"]})
    print(f"flights={summary['n_flights']} conflicts={summary['n_conflicts']} pairs={summary['n_pairs']}")
    return EXIT_OK


def cmd_stats(args) -> int:
    fs = load_flights(args)
    params = separation(args)
    counts, sizes, degrees, alphas, tws, gammas = [], [], [], [], [], []
    for dm in args.dmax:
        cs = detect_all(fs, params, dm)
        g = build_conflict_graph(fs, cs)
        comps = connected_components(g)
        nontrivial = extract_instances(g, None, cs, dm)
        counts.append((dm, len(comps), len(nontrivial)))
        sizes += [(dm, s, c) for s, c in component_size_histogram(g).items()]
        ds = degree_stats(g)
        degrees += [(dm, d, c) for d, c in ds.histogram.items()]
        if ds.fit is None:
            alphas.append((dm, "", "", ds.fit_error))
        else:
            alphas.append((dm, fmt_float(ds.fit.slope), fmt_float(ds.fit.stderr), ""))
        widths = component_treewidths(g)
        tws += [(dm, comps[n][0], s, w) for n, (s, w) in enumerate(widths)]
        try:
            fit = treewidth_size_slope(widths, args.min_size)
            gammas.append((dm, fmt_float(fit.slope), fmt_float(fit.stderr), ""))
        except InsufficientData as exc:
            gammas.append((dm, "", "", str(exc)))
    out = args.out
    write_rows(out / "components.csv", ["d_max", "components", "nontrivial_components"], counts)
    write_rows(out / "component_sizes.csv", ["d_max", "size", "count"], sizes)
    write_rows(out / "degree_histogram.csv", ["d_max", "degree", "count"], degrees)
    write_rows(out / "alpha.csv", ["d_max", "alpha", "stderr", "note"], alphas)
    write_rows(out / "treewidth.csv", ["d_max", "component", "size", "treewidth"], tws)
    write_rows(out / "gamma.csv", ["d_max", "gamma", "stderr", "note"], gammas)
    files = ["components.csv", "component_sizes.csv", "degree_histogram.csv", "alpha.csv",
             "treewidth.csv", "gamma.csv"]
    write_json(out / "manifest.json", {"command": "stats", "files": files, "d_max": args.dmax})
    return EXIT_OK


def cmd_build(args) -> int:
    entries = []
    for name, flights, q, w in model_jobs(args):
        export_qubo(q, args.out / f"{name}.qubo")
        ising = to_ising(q)
        c_max = max_coefficient_ratio(ising) if (ising.h or ising.J) else None
        entries.append({
            "name": name,
            "file": f"{name}.qubo",
            "flights": flights,
            "n_variables": q.num_variables,
            "n_couplers": len(q.quadratic),
            "c_max": c_max,
            "weights": _weights_dict(w),
        })
    write_json(args.out / "manifest.json", {"command": "build", "model": args.model, "instances": entries})
    print(f"built {len(entries)} instance(s)")
    return EXIT_OK


def _solve_one(args, job, schedule: AnnealSchedule):
    name, flights, q, w = job
    rec = {"name": name, "flights": flights, "n_variables": q.num_variables, "weights": _weights_dict(w)}
    try:
        if args.solver == "exact":
            res = brute_force_qubo(q)
        else:
            sched = AnnealSchedule(schedule.sweeps, schedule.restarts, schedule.beta_start,
                                   schedule.beta_end, sub_seed(schedule.seed, f"sa:{name}"))
            res = simulated_annealing(q, sched)
    except SolverGuardError as exc:
        rec["error"] = str(exc)
        return rec, False
    rec.update(res.to_dict())
    return rec, True


def cmd_solve(args) -> int:
    if len(args.beta) != 2:
        raise InputError("--beta takes start,end")
    try:
        schedule = AnnealSchedule(args.sweeps, args.restarts, args.beta[0], args.beta[1], args.seed)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    out = args.out
    jobs = model_jobs(args)
    instances = [] if args.model == "global" else load_instances(args)

    workers = default_workers()
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda j: _solve_one(args, j, schedule), jobs))
    else:
        results = [_solve_one(args, j, schedule) for j in jobs]

    all_ok = all(ok for _, ok in results)
    records = [r for r, _ in results]
    files = ["results.json", "results.csv"]
    write_json(out / "results.json", {"model": args.model, "solver": args.solver, "instances": records})
    rows = []
    for r in records:
        sol = r.get("solution") or {}
        rows.append((r["name"], len(r["flights"]), r["n_variables"], fmt_float(r.get("energy")),
                     "" if sol.get("total_delay") is None else sol["total_delay"],
                     int(bool(sol.get("feasible"))), r.get("error", "")))
    write_rows(out / "results.csv",
               ["instance", "n_flights", "n_variables", "energy", "total_delay", "feasible", "error"], rows)

    if args.validity_grid and instances:
        disc = Discretization.from_dmax(args.delta_d, args.dmax)
        for n, inst in enumerate(instances):
            try:
                vm = penalty_validity_sweep(inst, disc, args.validity_grid, args.validity_grid)
            except SolverGuardError as exc:
                log.warning("validity sweep skipped for instance %d: %s", n, exc)
                all_ok = False
                continue
            atomic_write(out / f"validity_{n:03d}.csv", vm.to_csv())
            files.append(f"validity_{n:03d}.csv")

    if args.sweep_delta_d and instances:
        dmaxes = args.sweep_dmax or [args.dmax]
        for n, inst in enumerate(instances):
            try:
                table = discretization_sweep(inst, args.sweep_delta_d, dmaxes, "enumerate")
            except SolverGuardError as exc:
                log.warning("discretization sweep skipped for instance %d: %s", n, exc)
                all_ok = False
                continue
            atomic_write(out / f"sweep_{n:03d}.csv", table.to_csv())
            write_json(out / f"sweep_{n:03d}.json", table.to_dict())
            files += [f"sweep_{n:03d}.csv", f"sweep_{n:03d}.json"]

    if args.t99_runs > 0:
        t99_rows = []
        for name, _, q, _ in jobs:
            try:
                exact = brute_force_qubo(q).energy
            except SolverGuardError:
                exact = None
            energies = []
            for r in range(args.t99_runs):
                sched = AnnealSchedule(schedule.sweeps, 1, schedule.beta_start, schedule.beta_end,
                                       sub_seed(schedule.seed, f"t99:{name}:{r}"))
                energies.append(simulated_annealing(q, sched).energy)
            reference = min(energies) if exact is None else exact
            p = success_probability(energies, reference)
            t99_rows.append((name, q.num_variables, int(exact is not None), fmt_float(p),
                             fmt_float(args.t_anneal), fmt_float(time_to_solution_99(p, args.t_anneal))))
        write_rows(out / "t99.csv", ["instance", "n_variables", "exact_reference", "p", "t_anneal", "t99"],
                   t99_rows)
        files.append("t99.csv")

    write_json(out / "manifest.json", {"command": "solve", "model": args.model, "solver": args.solver,
                                       "files": files, "complete": all_ok})
    n_feasible = sum(1 for r in records if (r.get("solution") or {}).get("feasible"))
    print(f"solved {len(records)} instance(s), {n_feasible} feasible")
    return EXIT_OK if all_ok else EXIT_GUARD


COMMANDS = {"detect": cmd_detect, "stats": cmd_stats, "build": cmd_build, "solve": cmd_solve}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args)
    except (InputError, TrajectoryError, json.JSONDecodeError, ValueError, OSError) as exc:
        print(f"deconflict: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
