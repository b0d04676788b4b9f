import csv
import json

import numpy as np
import pytest

from deconflict.cli import EXIT_GUARD, EXIT_INPUT, EXIT_OK, build_parser, main, model_jobs, sub_seed
from deconflict.conflict import Conflict, ConflictSet
from deconflict.qubo import import_qubo, max_coefficient_ratio, to_ising
from deconflict.trajectory import (
    FlightSet,
    SyntheticConfig,
    Trajectory,
    TrajectoryPoint,
    generate_synthetic,
    write_trajectories,
)


def conflict_file(tmp_path, rows, name="conflicts.json"):
    cs = ConflictSet(Conflict(k, i, j, frozenset(), lo, hi) for k, (i, j, lo, hi) in enumerate(rows))
    path = tmp_path / name
    path.write_text(cs.to_json())
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_detect_empty_file(tmp_path):
    src = tmp_path / "empty.csv"
    src.write_text("")
    out = tmp_path / "out"
    assert main(["detect", "--input", str(src), "--out", str(out)]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["n_flights"] == 0 and summary["n_conflicts"] == 0


def test_detect_malformed_csv(tmp_path, capsys):
    src = tmp_path / "bad.csv"
    src.write_text("flight_id,minute,lat,lon,alt\nA,zero,1,2,3\n")
    assert main(["detect", "--input", str(src), "--out", str(tmp_path / "o")]) == EXIT_INPUT
    assert "error" in capsys.readouterr().err


def test_missing_source_and_bad_flag(tmp_path):
    assert main(["detect", "--out", str(tmp_path)]) == EXIT_INPUT
    assert main(["detect", "--bogus"]) == EXIT_INPUT
    assert main(["detect", "--input", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == EXIT_INPUT


def test_detect_deterministic(tmp_path):
    cfg = json.dumps({"n_flights": 20, "seed": 1})
    for run in ("a", "b"):
        assert main(["detect", "--synthetic", cfg, "--out", str(tmp_path / run)]) == EXIT_OK
    for name in ("conflicts.json", "summary.json", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_detect_from_csv_matches_synthetic(tmp_path):
    fs = generate_synthetic(SyntheticConfig(n_flights=15, seed=3))
    write_trajectories(fs, tmp_path / "t.csv")
    main(["detect", "--input", str(tmp_path / "t.csv"), "--out", str(tmp_path / "a")])
    main(["detect", "--synthetic", json.dumps({"n_flights": 15, "seed": 3}), "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "conflicts.json").read_bytes() == (tmp_path / "b" / "conflicts.json").read_bytes()


def test_sub_seed_is_stable_and_named():
    assert sub_seed(42, "synthetic") == sub_seed(42, "synthetic")
    assert sub_seed(42, "synthetic") != sub_seed(42, "sa:instance_000")
    assert sub_seed(42, "x") != sub_seed(43, "x")


def test_stats_conflict_free(tmp_path):
    # flights on distinct parallels, far apart
    far = FlightSet(tuple(
        Trajectory(f"F{n}", 0, tuple(TrajectoryPoint(10.0 * n, -30 + 0.1 * m, 35000) for m in range(20)))
        for n in range(5)
    ))
    write_trajectories(far, tmp_path / "far.csv")
    out = tmp_path / "out"
    assert main(["stats", "--input", str(tmp_path / "far.csv"), "--dmax", "0,18", "--out", str(out)]) == EXIT_OK
    rows = read_csv(out / "components.csv")
    assert [int(r["components"]) for r in rows] == [5, 5]
    assert [int(r["nontrivial_components"]) for r in rows] == [0, 0]


def test_stats_single_flight_fit_undefined(tmp_path):
    fs = generate_synthetic(SyntheticConfig(n_flights=1, seed=0))
    write_trajectories(fs, tmp_path / "one.csv")
    out = tmp_path / "out"
    assert main(["stats", "--input", str(tmp_path / "one.csv"), "--dmax", "18", "--out", str(out)]) == EXIT_OK
    (row,) = read_csv(out / "alpha.csv")
    assert row["alpha"] == "" and row["note"]
    (row,) = read_csv(out / "gamma.csv")
    assert row["gamma"] == "" and row["note"]


def build(tmp_path, conflicts, *extra, out="out"):
    argv = ["build", "--conflicts", str(conflicts), "--out", str(tmp_path / out), *extra]
    code = main(argv)
    manifest = json.loads((tmp_path / out / "manifest.json").read_text()) if code == EXIT_OK else None
    return code, manifest


def test_build_departure_two_flights(tmp_path):
    cf = conflict_file(tmp_path, [("A", "B", -2, 2)])
    code, m = build(tmp_path, cf, "--dmax", "6", "--delta-d", "3")
    assert code == EXIT_OK
    (entry,) = m["instances"]
    assert entry["n_variables"] == 6 and entry["flights"] == ["A", "B"]


def test_build_exclusive_adds_one_bit_per_conflict(tmp_path):
    cf = conflict_file(tmp_path, [("A", "B", -2, 2), ("B", "C", 0, 3), ("A", "C", -1, 1)])
    _, dep = build(tmp_path, cf, "--dmax", "6", "--delta-d", "3", out="dep")
    code, exc = build(tmp_path, cf, "--dmax", "6", "--delta-d", "3", "--model", "exclusive",
                      "--maneuver-delay", "2", out="exc")
    assert code == EXIT_OK
    assert exc["instances"][0]["n_variables"] == dep["instances"][0]["n_variables"] + 3


def test_build_missing_model_parameter(tmp_path):
    cf = conflict_file(tmp_path, [("A", "B", -2, 2)])
    assert build(tmp_path, cf, "--model", "exclusive")[0] == EXIT_INPUT
    assert build(tmp_path, cf, "--model", "interstitial")[0] == EXIT_INPUT
    assert build(tmp_path, cf, "--model", "global")[0] == EXIT_INPUT
    assert build(tmp_path, cf, "--weights", "1,x")[0] == EXIT_INPUT
    assert build(tmp_path, cf, "--dmax", "7", "--delta-d", "3")[0] == EXIT_INPUT


@pytest.mark.parametrize("model,extra", [
    ("departure", []),
    ("exclusive", ["--maneuver-delay", "2"]),
    ("flexible", ["--maneuver-delay", "3"]),
    ("interstitial", ["--interstitial-bound", "3"]),
])
def test_build_manifest_matches_reimport(tmp_path, model, extra):
    cf = conflict_file(tmp_path, [("A", "B", -2, 2), ("B", "C", 0, 3)])
    code, m = build(tmp_path, cf, "--dmax", "6", "--delta-d", "3", "--model", model, *extra)
    assert code == EXIT_OK
    for entry in m["instances"]:
        q = import_qubo(tmp_path / "out" / entry["file"])
        assert q.num_variables == entry["n_variables"]
        assert entry["c_max"] == pytest.approx(max_coefficient_ratio(to_ising(q)), rel=1e-12)


def test_build_global_from_table(tmp_path):
    table = {
        "flights": ["A", "B"],
        "delays": {"A": [0, 3], "B": [0, 3]},
        "thetas": {"A": [0, 1], "B": [0, 1]},
        "table": [["A", "B", 0, 0, 0, 0], ["A", "B", 3, 1, 0, 1]],
    }
    path = tmp_path / "table.json"
    path.write_text(json.dumps(table))
    code, m = build(tmp_path, tmp_path / "unused", "--model", "global", "--global-table", str(path))
    assert code == EXIT_OK and m["instances"][0]["n_variables"] > 0


def solve(tmp_path, conflicts, *extra, out="out"):
    argv = ["solve", "--conflicts", str(conflicts), "--out", str(tmp_path / out), *extra]
    return main(argv)


def test_solve_witness_sweep(tmp_path):
    cf = conflict_file(tmp_path, [("A", "B", -2, 1)])
    code = solve(tmp_path, cf, "--dmax", "3", "--delta-d", "3", "--solver", "exact",
                 "--sweep-delta-d", "1,3", "--sweep-dmax", "3")
    assert code == EXIT_OK
    rows = {int(r["delta_d"]): int(r["min_total_delay"]) for r in read_csv(tmp_path / "out" / "sweep_000.csv")}
    assert rows == {1: 2, 3: 3}
    results = json.loads((tmp_path / "out" / "results.json").read_text())
    assert results["instances"][0]["solution"]["total_delay"] == 3


def test_solve_guard_gives_exit_3_but_writes_results(tmp_path):
    cf = conflict_file(tmp_path, [("A", "B", -2, 2), ("C", "D", -1, 1)])
    # 2 * 19 bits per instance at delta_d 1 is past the exact-solver guard
    code = solve(tmp_path, cf, "--dmax", "18", "--delta-d", "1", "--solver", "exact")
    assert code == EXIT_GUARD
    results = json.loads((tmp_path / "out" / "results.json").read_text())
    assert all("error" in r for r in results["instances"])
    assert json.loads((tmp_path / "out" / "manifest.json").read_text())["complete"] is False


def test_solve_writes_validity_map(tmp_path):
    small = conflict_file(tmp_path, [("A", "B", -2, 2)], "small.json")
    assert solve(tmp_path, small, "--dmax", "6", "--delta-d", "3", "--solver", "exact",
                 "--validity-grid", "0,1,100") == EXIT_OK
    assert (tmp_path / "out" / "validity_000.csv").exists()


def test_solve_sa_deterministic_and_t99(tmp_path):
    cf = conflict_file(tmp_path, [("A", "B", -2, 2), ("B", "C", 0, 3)])
    args = ["--dmax", "6", "--delta-d", "3", "--sweeps", "200", "--restarts", "5", "--t99-runs", "10", "--seed", "7"]
    assert solve(tmp_path, cf, *args, out="a") == EXIT_OK
    assert solve(tmp_path, cf, *args, out="b") == EXIT_OK
    for name in ("results.json", "results.csv", "t99.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    (row,) = read_csv(tmp_path / "a" / "t99.csv")
    assert float(row["p"]) > 0


def test_solve_missing_model_parameters(tmp_path):
    cf = conflict_file(tmp_path, [("A", "B", -2, 2)])
    assert solve(tmp_path, cf, "--model", "flexible") == EXIT_INPUT
    assert solve(tmp_path, cf, "--beta", "1") == EXIT_INPUT


def test_reimported_energies_match(tmp_path):
    cf = conflict_file(tmp_path, [("A", "B", -2, 2), ("B", "C", 0, 3), ("A", "C", -1, 4)])
    _, m = build(tmp_path, cf, "--dmax", "6", "--delta-d", "3", "--model", "flexible", "--maneuver-delay", "3")
    args = build_parser().parse_args(["build", "--conflicts", str(cf), "--out", str(tmp_path / "x"),
                                      "--dmax", "6", "--delta-d", "3", "--model", "flexible",
                                      "--maneuver-delay", "3"])
    (_, _, q, _), = model_jobs(args)
    back = import_qubo(tmp_path / "out" / m["instances"][0]["file"])
    rng = np.random.default_rng(0)
    bits = rng.integers(0, 2, (100, q.num_variables))
    assert np.allclose(q.energies(bits), back.energies(bits), atol=1e-9, rtol=0)
    assert back.keys == q.keys
