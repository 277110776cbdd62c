import csv
import json
import os

import pytest

from nitschefem.cli import main
from nitschefem.reports import study_header


def write_config(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def base_study_config(**overrides):
    cfg = {
        "problem": "poisson",
        "degree": 2,
        "meshes": [[4, 4], [8, 8], [16, 16]],
        "dirichlet_sides": {"1": ["south", "east", "north", "west"]},
        "gamma": 2.0,
        "variants": ["nitsche"],
        "solution": {"kind": "trig"},
        "label": "demo",
    }
    cfg.update(overrides)
    return cfg


def read_rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_study_happy_path(tmp_path):
    cfg = write_config(tmp_path, "study.json", base_study_config())
    out = str(tmp_path / "out")
    assert main(["study", cfg, "--out", out]) == 0
    rows = read_rows(os.path.join(out, "demo_nitsche.csv"))
    assert rows[0] == study_header(1)
    assert len(rows) == 4
    status_col = rows[0].index("solve_status")
    assert all(r[status_col] == "ok" for r in rows[1:])
    rate_col = rows[0].index("l2_rate")
    assert rows[1][rate_col] == "" and rows[2][rate_col] != ""
    assert os.path.exists(os.path.join(out, "demo_convergence.png"))


def test_study_csv_is_deterministic(tmp_path):
    cfg = write_config(tmp_path, "study.json", base_study_config())
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["study", cfg, "--out", out1]) == 0
    assert main(["study", cfg, "--out", out2]) == 0
    with open(os.path.join(out1, "demo_nitsche.csv"), "rb") as fh:
        first = fh.read()
    with open(os.path.join(out2, "demo_nitsche.csv"), "rb") as fh:
        second = fh.read()
    assert first == second


def test_threaded_study_is_byte_identical(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, "study.json", base_study_config())
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["study", cfg, "--out", out1]) == 0
    monkeypatch.setenv("NITSCHE_THREADS", "3")
    assert main(["study", cfg, "--out", out2]) == 0
    with open(os.path.join(out1, "demo_nitsche.csv"), "rb") as fh:
        first = fh.read()
    with open(os.path.join(out2, "demo_nitsche.csv"), "rb") as fh:
        second = fh.read()
    assert first == second


def test_gamma_one_rejected(tmp_path, capsys):
    cfg = write_config(tmp_path, "study.json", base_study_config(gamma=1.0))
    assert main(["study", cfg, "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "open interval" in err


def test_unknown_key_rejected(tmp_path):
    cfg = write_config(tmp_path, "study.json",
                       base_study_config(tolerance=0.1))
    assert main(["study", cfg, "--out", str(tmp_path)]) == 2


def test_too_few_meshes_rejected(tmp_path):
    cfg = write_config(tmp_path, "study.json",
                       base_study_config(meshes=[[4, 4], [8, 8]]))
    assert main(["study", cfg, "--out", str(tmp_path)]) == 2


def test_under_penalized_rows_exit_three(tmp_path):
    payload = base_study_config(
        meshes=[[8, 8], [16, 16], [32, 32]],
        constants={"mode": "explicit", "c_tr": [4.9], "c_pen": [0.05]})
    cfg = write_config(tmp_path, "study.json", payload)
    out = str(tmp_path / "out")
    assert main(["study", cfg, "--out", out]) == 3
    rows = read_rows(os.path.join(out, "demo_nitsche.csv"))
    status_col = rows[0].index("solve_status")
    assert any(r[status_col] == "indefinite" for r in rows[1:])


def test_trace_poisson_two_meshes(tmp_path):
    payload = {
        "problem": "poisson", "degree": 2, "meshes": [[4, 4], [8, 8]],
        "dirichlet_sides": {"1": ["south", "east", "north", "west"]},
        "label": "tr",
    }
    cfg = write_config(tmp_path, "trace.json", payload)
    out = str(tmp_path / "out")
    assert main(["trace", cfg, "--out", out, "--seed", "5"]) == 0
    rows = read_rows(os.path.join(out, "tr_trace.csv"))
    assert len(rows) == 1 + 2
    assert os.path.exists(os.path.join(out, "tr_trace.png"))


def test_trace_row_counts_per_kind(tmp_path):
    for problem, degree, sides, expected in (
            ("biharmonic", 2,
             {"1": ["south", "east", "north", "west"], "2": ["west"]}, 2),
            ("plate", 2,
             {"1": ["south", "west"], "2": ["south"]}, 3)):
        payload = {"problem": problem, "degree": degree, "meshes": [[4, 4]],
                   "dirichlet_sides": sides, "label": problem}
        cfg = write_config(tmp_path, f"{problem}.json", payload)
        out = str(tmp_path / problem)
        assert main(["trace", cfg, "--out", out]) == 0
        rows = read_rows(os.path.join(out, f"{problem}_trace.csv"))
        assert len(rows) == 1 + expected


def test_trace_is_deterministic_given_seed(tmp_path):
    payload = {
        "problem": "poisson", "degree": 2, "meshes": [[6, 6]],
        "dirichlet_sides": {"1": ["south", "east", "north", "west"]},
        "label": "tr",
    }
    cfg = write_config(tmp_path, "trace.json", payload)
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["trace", cfg, "--out", out1, "--seed", "3"]) == 0
    assert main(["trace", cfg, "--out", out2, "--seed", "3"]) == 0
    with open(os.path.join(out1, "tr_trace.csv"), "rb") as fh:
        first = fh.read()
    with open(os.path.join(out2, "tr_trace.csv"), "rb") as fh:
        second = fh.read()
    assert first == second


def test_missing_config_file(tmp_path, capsys):
    assert main(["study", str(tmp_path / "nope.json")]) == 2
    assert "config error" in capsys.readouterr().err


def test_plate_config_happy_path(tmp_path):
    payload = {
        "problem": "plate", "degree": 3, "meshes": [[2, 2], [4, 4], [8, 8]],
        "dirichlet_sides": {"1": ["south", "west"], "2": ["south", "west"]},
        "material": {"youngs_modulus": 1.0, "poisson_ratio": 0.3,
                     "thickness": 0.1},
        "label": "plate_demo",
    }
    cfg = write_config(tmp_path, "plate.json", payload)
    out = str(tmp_path / "out")
    assert main(["study", cfg, "--out", out]) == 0
    rows = read_rows(os.path.join(out, "plate_demo_nitsche.csv"))
    assert rows[0] == study_header(3)
    assert len(rows) == 4
