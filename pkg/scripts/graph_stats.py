"""Conflict-graph structure of a synthetic corridor as d_max grows.

Prints component counts, the degree exponent and the largest component's
treewidth estimate per d_max, and writes the full tables via ``deconflict stats``.
"""

import argparse
import csv
import json
from pathlib import Path

from deconflict.cli import main as cli


def read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run(args) -> None:
    cfg = json.dumps({"n_flights": args.flights})
    dmax = ",".join(str(d) for d in args.dmax)
    code = cli(["stats", "--synthetic", cfg, "--seed", str(args.seed), "--dmax", dmax,
                "--min-size", str(args.min_size), "--out", str(args.out)])
    if code:
        raise SystemExit(code)
    comps = {int(r["d_max"]): r for r in read(args.out / "components.csv")}
    alpha = {int(r["d_max"]): f"{float(r['alpha']):.2f}" if r["alpha"] else "-" for r in read(args.out / "alpha.csv")}
    widest: dict[int, tuple[int, int]] = {}
    for r in read(args.out / "treewidth.csv"):
        d, s, w = int(r["d_max"]), int(r["size"]), int(r["treewidth"])
        widest[d] = max(widest.get(d, (0, 0)), (s, w))
    print(f"{'d_max':>5} {'comps':>6} {'nontriv':>8} {'alpha':>8} {'largest':>8} {'tw':>4}")
    for d in args.dmax:
        s, w = widest.get(d, (0, 0))
        c = comps[d]
        print(f"{d:>5} {c['components']:>6} {c['nontrivial_components']:>8} {alpha[d]:>8} {s:>8} {w:>4}")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--flights", type=int, default=200)
    p.add_argument("--dmax", type=int, nargs="+", default=[0, 6, 12, 18, 30, 45, 60])
    p.add_argument("--min-size", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("runs/graph_stats"))
    run(p.parse_args())
