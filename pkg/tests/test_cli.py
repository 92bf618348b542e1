import csv
import hashlib
import json
import shutil
import subprocess

import numpy as np
import pytest

from tendonfinger import CycleDataset, synthesize_cycles
from tendonfinger.cli import (
    EXIT_IO,
    EXIT_PARSE,
    EXIT_SOLVER,
    EXIT_VALIDATION,
    REPRO_OUTPUTS,
    RunConfig,
    main,
    run,
)

PROBLEM = {
    "finger": {"preset": "default"},
    "tendon_excursion": 8.0,
    "obstacles": [{"type": "circle", "center": [45, 45], "radius": 32.5}],
}


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


@pytest.fixture
def problem_file(tmp_path):
    path = tmp_path / "problem.json"
    path.write_text(json.dumps(PROBLEM))
    return path


def test_simulate_bundled_pinch(tmp_path):
    assert main(["simulate", "--scenario", "bundled:pinch_65mm", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "curve.csv")
    assert len(rows) == 201
    assert sum(int(r["knee"]) for r in rows) == 1
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["pre_knee_fit"]["r_squared"] >= 0.999
    assert summary["grasp_type"] == "OpposedPinch"


def test_manifest_hashes_match_files(tmp_path):
    run(RunConfig("alignment", tmp_path))
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "alignment"
    assert {e["path"] for e in manifest["files"]} == {"alignment.csv", "summary.json"}
    for e in manifest["files"]:
        data = (tmp_path / e["path"]).read_bytes()
        assert e["sha256"] == hashlib.sha256(data).hexdigest() and e["bytes"] == len(data)
    assert len(_rows(tmp_path / "alignment.csv")) == 50


def test_simulate_single_finger_problem(tmp_path, problem_file):
    assert main(["simulate", "--scenario", str(problem_file), "--out", str(tmp_path)]) == 0
    eq = json.loads((tmp_path / "equilibrium.json").read_text())
    assert eq["contacts"] and eq["tendon_tension_N"] > 0
    assert eq["phase"] in {"Cage", "Closed"}


def test_compliance_field_default_finger(tmp_path):
    run(RunConfig("compliance-field", tmp_path))
    rows = _rows(tmp_path / "compliance_field.csv")
    assert len(rows) == 61 and float(rows[-1]["point_mm"]) == pytest.approx(150.0)
    center = json.loads((tmp_path / "center.json").read_text())
    assert center["center_of_compliance_mm"] == pytest.approx(35.0, abs=0.01)


def test_fit_synthetic_and_from_file(tmp_path):
    out = tmp_path / "synth"
    assert main(["fit", "--out", str(out), "--seed", "3"]) == 0
    fit = json.loads((out / "fit.json").read_text())
    assert np.allclose(fit["matrix"], [[0.445, 0.0543], [0.0543, 0.409]], atol=0.02)
    assert fit["well_conditioned"]
    # refit the written cycles through --data
    again = tmp_path / "again"
    assert main(["fit", "--data", str(out / "cycles.csv"), "--out", str(again)]) == 0
    assert json.loads((again / "fit.json").read_text())["matrix"] == fit["matrix"]


def test_fit_from_external_csv(tmp_path):
    k = np.array([[0.569, 0.0553, 0.0323], [0.0553, 0.696, 0.0755], [0.0323, 0.0755, 0.809]])
    path = tmp_path / "cycles.csv"
    path.write_text(synthesize_cycles(k, 0.1).to_csv())
    run(RunConfig("fit", tmp_path / "out", data=str(path)))
    fit = json.loads((tmp_path / "out" / "fit.json").read_text())
    np.testing.assert_allclose(fit["matrix"], k, atol=1e-12)
    assert isinstance(CycleDataset.from_csv(path.read_text()), CycleDataset)


def test_sweep_expands_cross_product(tmp_path, problem_file):
    manifest = run(RunConfig("simulate", tmp_path, str(problem_file),
                             ("tendon_excursion=6|8", "finger.k_proximal=10|14"), jobs=2))
    sweep = json.loads((tmp_path / "sweep.json").read_text())
    assert [s["run"] for s in sweep] == ["run_000", "run_001", "run_002", "run_003"]
    assert sweep[3]["overrides"] == {"tendon_excursion": 8, "finger.k_proximal": 14}
    assert len([e for e in manifest["files"] if e["path"].endswith("equilibrium.json")]) == 4
    a = json.loads((tmp_path / "run_000" / "equilibrium.json").read_text())
    d = json.loads((tmp_path / "run_003" / "equilibrium.json").read_text())
    assert a["tendon_excursion_mm"] == 6 and d["tendon_excursion_mm"] == 8


def test_well_outputs(tmp_path):
    assert main(["well", "--scenario", "bundled:pinch_65mm", "--out", str(tmp_path)]) == 0
    well = json.loads((tmp_path / "well.json").read_text())
    k = json.loads((tmp_path / "stiffness.json").read_text())
    assert well["hessian_error"] < 0.01
    np.testing.assert_allclose(k["matrix"], well["hessian"], rtol=1e-9)
    assert len(_rows(tmp_path / "well.csv")) == 16


def test_repro_parallel_matches_serial(tmp_path):
    run(RunConfig("repro", tmp_path / "serial"))
    run(RunConfig("repro", tmp_path / "parallel", jobs=3))
    for name in REPRO_OUTPUTS:
        assert (tmp_path / "serial" / name).read_bytes() == (tmp_path / "parallel" / name).read_bytes()
    rep = json.loads((tmp_path / "serial" / "eq6_report.json").read_text())
    assert rep["well_conditioned"]


def test_parse_error_exit_code(tmp_path, capsys):
    assert main(["simulate"]) == EXIT_PARSE
    assert main(["bogus", "--out", str(tmp_path)]) == EXIT_PARSE
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    assert main(["simulate", "--scenario", str(bad), "--out", str(tmp_path / "o")]) == EXIT_PARSE
    assert _error(capsys)["error"] == "ParseError"


def test_validation_exit_code(tmp_path, capsys):
    code = main(["simulate", "--scenario", "bundled:pinch_65mm", "--out", str(tmp_path),
                 "--set", "object.width=-5"])
    assert code == EXIT_VALIDATION
    err = _error(capsys)
    assert err["field"] == "object.width" and err["exit_code"] == EXIT_VALIDATION
    assert main(["fit", "--out", str(tmp_path), "--set", "nope=1"]) == EXIT_VALIDATION
    assert main(["simulate", "--scenario", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == EXIT_VALIDATION


def test_solver_exit_code(tmp_path, problem_file, capsys):
    code = main(["simulate", "--scenario", str(problem_file), "--out", str(tmp_path),
                 "--set", "solver.max_iterations=1"])
    assert code == EXIT_SOLVER
    assert _error(capsys)["error"] == "NonConvergence"


def test_io_exit_code(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["alignment", "--out", str(blocker / "sub")]) == EXIT_IO


@pytest.mark.skipif(shutil.which("tendonfinger") is None, reason="console script not installed")
def test_console_script():
    res = subprocess.run(["tendonfinger", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("tendonfinger ")
