import csv
import json

import numpy as np
import pytest

from symsearch import experiments as ex
from symsearch.cli import main

TINY = ["--set", "run.max_episodes=2", "--set", "search.n_evaluate=4", "--set",
        "objective.restarts=1"]


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return str(path)


@pytest.fixture
def data(tmp_path):
    x = np.linspace(-1, 1, 12)
    return write_csv(tmp_path / "d.csv", ["x1", "y"], zip(x, x))


def test_solve_recovers_identity(data, tmp_path, capsys):
    out = str(tmp_path / "r.json")
    code = main(["solve", data, "--library", "", "--out", out,
                 "--set", "run.max_episodes=20", "--set", "search.n_evaluate=50"])
    assert code == 0
    rep = json.loads(open(out).read())
    ex.validate_report(rep)
    row = rep["groups"][0]["rows"][0]
    assert row["recovered"] and row["best_infix"] == "x1"
    with open(out + ".trace.csv") as fh:
        head = next(csv.reader(fh))
    assert head == ["episode_index", "reward", "running_best", "wall_seconds"]


def test_solve_unsolved_exits_3(tmp_path):
    x = np.linspace(0.1, 2, 15)
    path = write_csv(tmp_path / "d.csv", ["x1", "y"], zip(x, np.exp(np.sin(3 * x)) * x ** 5))
    assert main(["solve", path, "--out", str(tmp_path / "r.json"), *TINY]) == 3


@pytest.mark.parametrize("header,rows,needle", [
    (["x", "y"], [[1, 2], [2, 3]], "row 1"),
    (["x1", "y"], [[1, 2], [2, "abc"]], "row 3, column y"),
    (["x1", "y"], [[1, 2], [2, "nan"]], "non-finite"),
    (["x1", "y"], [[1, 2]], "at least 2"),
    (["x1", "x2", "y"], [[1, 2, 3], [1, 2]], "row 3"),
])
def test_solve_data_errors_exit_2(tmp_path, capsys, header, rows, needle):
    path = write_csv(tmp_path / "d.csv", header, rows)
    assert main(["solve", path, *TINY]) == 2
    assert needle in capsys.readouterr().err


def test_missing_file_is_data_error(tmp_path):
    assert main(["solve", str(tmp_path / "absent.csv"), *TINY]) == 2


@pytest.mark.parametrize("argv", [
    ["bench", "--runs", "-1"],
    ["bench", "--suite", "no-such-suite", "--runs", "0"],
    ["bench", "--set", "search.cpuct=1", "--runs", "0"],
    ["bench", "--set", "nonsense"],
    ["noise", "--levels", "0,0.5", "--runs", "0"],
    ["ablate", "--disable", "feasibility", "--runs", "0"],
    ["ablate", "--disable", "magic", "--runs", "0"],
    ["bench", "--config", "/no/such/file.json"],
])
def test_usage_errors_exit_1(argv):
    assert main(argv) == 1


def test_argparse_errors_exit_1():
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main(["bench", "--runs", "many"])
    assert e.value.code == 1


def test_zero_runs_gives_empty_valid_report(tmp_path):
    out = str(tmp_path / "r.json")
    assert main(["bench", "--runs", "0", "--out", out]) == 0
    rep = json.loads(open(out).read())
    ex.validate_report(rep)
    assert rep["groups"][0]["rows"] == []
    assert rep["groups"][0]["aggregate"] == {"runs": 0, "recovery_rate": None, "mean_r2": None}


def test_bench_is_byte_reproducible_and_timing_separate(tmp_path):
    a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
    argv = ["bench", "--suite", "nguyen-mini", "--runs", "1", "--seed", "7", *TINY]
    assert main(argv + ["--out", a]) == 0
    assert main(argv + ["--out", b]) == 0
    assert open(a, "rb").read() == open(b, "rb").read()
    timing = json.loads(open(a + ".timing.json").read())
    assert len(timing["cells"]) == 3
    assert '"wall_seconds"' not in open(a).read()


def test_seed_changes_report(tmp_path):
    a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
    argv = ["bench", "--suite", "nguyen-mini", "--runs", "1", *TINY]
    main(argv + ["--seed", "1", "--out", a])
    main(argv + ["--seed", "2", "--out", b])
    ra, rb = json.loads(open(a).read()), json.loads(open(b).read())
    assert [r["seed"] for r in ra["groups"][0]["rows"]] != [r["seed"] for r in rb["groups"][0]["rows"]]


def test_ablate_reports_both_groups(tmp_path):
    out = str(tmp_path / "r.json")
    assert main(["ablate", "--disable", "entropy,snrmse", "--suite", "nguyen-mini", "--runs", "1",
                 "--out", out, *TINY]) == 0
    rep = json.loads(open(out).read())
    ex.validate_report(rep)
    assert [g["label"] for g in rep["groups"]] == ["baseline", "ablated"]
    assert rep["groups"][1]["settings"]["disabled"] == ["entropy", "snrmse"]
    abl = rep["manifest"]["ablated_config"]
    assert abl["model"]["entropy_term_enabled"] is False and abl["objective"]["lam"] == 0.0
    assert rep["manifest"]["config"]["objective"]["lam"] == 0.1


def test_noise_sweep_groups(tmp_path):
    out = str(tmp_path / "r.json")
    assert main(["noise", "--levels", "0,0.05", "--suite", "nguyen-mini", "--runs", "1",
                 "--out", out, *TINY]) == 0
    rep = json.loads(open(out).read())
    assert [g["settings"]["noise"] for g in rep["groups"]] == [0.0, 0.05]


def test_parallel_jobs_match_serial(tmp_path):
    a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
    argv = ["bench", "--suite", "nguyen-mini", "--runs", "1", *TINY]
    main(argv + ["--out", a])
    main(argv + ["--out", b, "--jobs", "2"])
    assert open(a, "rb").read() == open(b, "rb").read()


def test_registry_list(capsys):
    assert main(["registry", "list", "--suite", "nguyen-mini"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert [l.split()[0] for l in out] == ["Nguyen-1", "Nguyen-6", "Nguyen-8"]
    assert main(["registry", "list"]) == 0
    assert "suites:" in capsys.readouterr().out
    assert main(["registry", "list", "--suite", "nope"]) == 1


def test_schema_rejects_malformed_report():
    import jsonschema
    with pytest.raises(jsonschema.ValidationError):
        ex.validate_report({"manifest": {}, "groups": [{"label": 3}]})
