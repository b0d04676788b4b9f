"""Success probability and T99 of single-restart annealing on the
acceptance fixtures, as a function of sweep count."""

import argparse
import csv
from pathlib import Path

from deconflict.fixtures import solver_fixtures
from deconflict.solve import AnnealSchedule, brute_force_qubo, simulated_annealing, success_probability, time_to_solution_99


def main(args) -> None:
    args.out.mkdir(parents=True, exist_ok=True)
    rows = []
    for name, q in solver_fixtures():
        exact = brute_force_qubo(q).energy
        for sweeps in args.sweeps:
            energies = [simulated_annealing(q, AnnealSchedule(sweeps=sweeps, restarts=1, seed=r)).energy
                        for r in range(args.runs)]
            p = success_probability(energies, exact)
            t = sweeps * args.t_sweep
            rows.append((name, q.num_variables, sweeps, p, t, time_to_solution_99(p, t)))
            print(f"{name:>13} n={q.num_variables:>2} sweeps={sweeps:>5} p={p:.3f} T99={rows[-1][-1]:.3g} s")
    with open(args.out / "t99.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fixture", "n_variables", "sweeps", "p", "t_run", "t99"])
        w.writerows(rows)


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--sweeps", type=int, nargs="+", default=[10, 100, 1000])
    p.add_argument("--runs", type=int, default=200)
    p.add_argument("--t-sweep", type=float, default=20e-9, help="nominal seconds per sweep")
    p.add_argument("--out", type=Path, default=Path("runs/t99"))
    main(p.parse_args())
