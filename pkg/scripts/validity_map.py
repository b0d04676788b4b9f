"""Penalty-weight validity map of the seven-flight fixture.

A cell is valid when every ground state of the departure QUBO is a
conflict-free one-hot assignment.
"""

import argparse
from pathlib import Path

import numpy as np

from deconflict.fixtures import seven_flight_instance
from deconflict.qubo import Discretization, sufficient_penalties
from deconflict.solve import penalty_validity_sweep


def main(args) -> None:
    inst = seven_flight_instance()
    disc = Discretization.from_dmax(args.delta_d, inst.d_max)
    w = sufficient_penalties(inst, disc)
    top = args.top or 1.5 * w.conflict
    grid = [float(v) for v in np.linspace(0, top, args.points)]
    vm = penalty_validity_sweep(inst, disc, grid, grid)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "validity.csv").write_text(vm.to_csv())
    print(f"{len(inst.flights)} flights, {inst.n_conflicts} conflicts, sufficient weight {w.conflict:g}")
    print("rows: lambda_encoding (top = largest), columns: lambda_conflict")
    for e in range(len(grid) - 1, -1, -1):
        print(f"{grid[e]:>7.1f} " + "".join("#" if v else "." for v in vm.valid[e]))
    print(f"staircase: {vm.is_staircase()}")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--delta-d", type=int, default=9)
    p.add_argument("--points", type=int, default=24)
    p.add_argument("--top", type=float, default=None)
    p.add_argument("--out", type=Path, default=Path("runs/validity"))
    main(p.parse_args())
