"""Minimal total delay against delay resolution and d_max.

Uses the two-flight witness (forbidden difference [-2, 1]) and a handful of
random connected instances; every cell is solved by exact enumeration.
"""

import argparse
from pathlib import Path

import numpy as np

from deconflict.fixtures import random_instance, witness_instance
from deconflict.solve import discretization_sweep


def main(args) -> None:
    args.out.mkdir(parents=True, exist_ok=True)
    instances = [("witness", witness_instance(max(args.dmax)))]
    rng = np.random.default_rng(args.seed)
    for n in range(args.random):
        instances.append((f"random{n}", random_instance(rng, 4, 5, max(args.dmax), max_offset=12, connected=True)))
    for name, inst in instances:
        table = discretization_sweep(inst, args.delta_d, args.dmax)
        (args.out / f"{name}.csv").write_text(table.to_csv())
        print(f"== {name}")
        header = "delta_d " + " ".join(f"{d:>6}" for d in args.dmax)
        print(header)
        for dd in args.delta_d:
            cells = []
            for dm in args.dmax:
                row = table.lookup(dd, dm)
                cells.append("     ." if row is None else f"{'inf' if row.total_delay is None else row.total_delay:>6}")
            print(f"{dd:>7} " + " ".join(cells))
        for note in table.notes:
            print("  note:", note)


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--delta-d", type=int, nargs="+", default=[1, 2, 3, 6, 9, 18])
    p.add_argument("--dmax", type=int, nargs="+", default=[6, 12, 18])
    p.add_argument("--random", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("runs/discretization"))
    main(p.parse_args())
