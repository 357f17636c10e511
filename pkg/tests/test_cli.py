"""End-to-end tests of the command-line front end through main(argv)."""

import json

import numpy as np
import pytest

from cli import build_parser, compute_value, main
from config import CURVE_COLUMNS, DEFINITIONS, EXIT_NO_WITNESS, EXIT_NON_CONVERGED, EXIT_OK, EXIT_VALIDATION
from errors import InvalidInput
from expvar import Loadings, Weights
from linalg import DataMatrix


@pytest.fixture
def files(tmp_path):
    data = tmp_path / "A.csv"
    loadings = tmp_path / "Z.csv"
    np.savetxt(data, np.diag([3.0, 2.0, 1.0]), delimiter=",")
    np.savetxt(loadings, np.eye(3)[:, :2], delimiter=",")
    return {"data": str(data), "loadings": str(loadings), "dir": tmp_path}


def _json(capsys):
    return json.loads(capsys.readouterr().out)


# ── compute ───────────────────────────────────────────────────────


def test_compute_all_definitions(files, capsys):
    assert main(["compute", "--data", files["data"], "--loadings", files["loadings"]]) == EXIT_OK
    out = _json(capsys)
    assert list(out["values"]) == list(DEFINITIONS)
    for value in out["values"].values():
        assert value == pytest.approx(13.0)
    assert out["total_var_A"] == pytest.approx(14.0)


def test_compute_single_method_csv(files, capsys):
    code = main(["compute", "--data", files["data"], "--loadings", files["loadings"], "--method", "qrproj", "--format", "csv"])
    assert code == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "definition,value,pev"
    assert lines[1].startswith("QRprojVar,13,")


def test_compute_rejects_non_unit_loadings(files, capsys):
    path = files["dir"] / "raw.csv"
    np.savetxt(path, [[2.0, 0.0], [0.0, 1.0], [0.0, 0.0]], delimiter=",")
    argv = ["compute", "--data", files["data"], "--loadings", str(path)]
    assert main(argv) == EXIT_VALIDATION
    assert "--normalize" in capsys.readouterr().err
    assert main([*argv, "--normalize"]) == EXIT_OK


def test_compute_weights_need_projected_method(files, capsys):
    argv = ["compute", "--data", files["data"], "--loadings", files["loadings"], "--weights", "2,1"]
    assert main([*argv, "--method", "subsp"]) == EXIT_VALIDATION
    assert main(argv) == EXIT_VALIDATION
    capsys.readouterr()
    assert main([*argv, "--method", "optproj"]) == EXIT_OK
    assert _json(capsys)["value"] == pytest.approx(4.0 * 9.0 + 4.0)


def test_compute_missing_file(files, capsys):
    assert main(["compute", "--data", str(files["dir"] / "nope.csv"), "--loadings", files["loadings"]]) == EXIT_VALIDATION
    assert "not found" in capsys.readouterr().err


def test_compute_value_helper():
    A = DataMatrix(np.diag([3.0, 2.0, 1.0]))
    Z = Loadings(np.eye(3)[:, :2])
    assert compute_value(A, Z, "upnorm") == pytest.approx(13.0)
    with pytest.raises(InvalidInput):
        compute_value(A, Z, "subsp", weights=Weights.ones(2))
    with pytest.raises(InvalidInput):
        compute_value(A, Z, "bogus")


# ── solve ─────────────────────────────────────────────────────────


def test_solve_json(files, capsys):
    assert main(["solve", "--data", files["data"], "--m", "2", "--seed", "1"]) == EXIT_OK
    out = _json(capsys)
    assert out["converged"] and out["matched_svd"]
    assert out["objective"] == pytest.approx(4.0 * 9.0 + 4.0)


def test_solve_csv_is_headerless(files, capsys):
    assert main(["solve", "--data", files["data"], "--m", "2", "--format", "csv"]) == EXIT_OK
    Z = np.loadtxt(capsys.readouterr().out.splitlines(), delimiter=",")
    np.testing.assert_allclose(np.abs(Z), np.eye(3)[:, :2], atol=1e-8)


def test_solve_non_convergence_exit_code(files, capsys):
    assert main(["solve", "--data", files["data"], "--m", "2", "--max-iter", "1"]) == EXIT_NON_CONVERGED
    assert _json(capsys)["converged"] is False


def test_solve_rank_error(files, capsys):
    assert main(["solve", "--data", files["data"], "--m", "4"]) == EXIT_VALIDATION
    assert "RankDeficient" in capsys.readouterr().err


# ── experiment ────────────────────────────────────────────────────


def _config(files, **extra):
    path = files["dir"] / "run.json"
    raw = {"name": "custom", "n": 10, "p": 6, "m": 2, "sigma_head": [3.0, 2.0], "trials": 2, "lambdas": 3}
    path.write_text(json.dumps({**raw, **extra}))
    return str(path)


def test_experiment_pev_curves_csv(files, capsys):
    assert main(["experiment", "pev-curves", "--config", _config(files)]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == ",".join(CURVE_COLUMNS)
    assert len(lines) == 1 + 3 * len(DEFINITIONS)


def test_experiment_pev_curves_to_file(files):
    out = files["dir"] / "curves.csv"
    argv = ["experiment", "pev-curves", "--config", _config(files), "--out", str(out), "--dispersion", "--seed", "3"]
    assert main(argv) == EXIT_OK
    meta = json.loads((files["dir"] / "curves.csv.meta.json").read_text())
    assert meta["seed"] == 3
    assert (files["dir"] / "curves.csv.dispersion.csv").read_text().startswith("definition,lambda,sd_pev_x100,trials")


def test_experiment_ranking(files, capsys):
    assert main(["experiment", "ranking", "--config", _config(files, epsilons=[0.0])]) == EXIT_OK
    reports = _json(capsys)
    assert len(reports) == 1
    assert reports[0]["definitions"] == list(DEFINITIONS)


def test_experiment_bad_config(files, capsys):
    assert main(["experiment", "pev-curves", "--config", _config(files, colour="red")]) == EXIT_VALIDATION
    assert "colour" in capsys.readouterr().err


# ── demo ──────────────────────────────────────────────────────────


def test_demo_anomaly_subspace(capsys):
    assert main(["demo", "anomaly-subspace"]) == EXIT_OK
    assert _json(capsys)["verified"] is True


def test_demo_witness_not_found(monkeypatch, capsys):
    import demos
    from errors import WitnessNotFound

    def never():
        raise WitnessNotFound("synthetic")

    monkeypatch.setitem(demos.DEMOS, "overcount", never)
    assert main(["demo", "overcount"]) == EXIT_NO_WITNESS
    assert "WitnessNotFound" in capsys.readouterr().err


def test_unknown_subcommand_exits_with_usage():
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2


# ── shared flags ──────────────────────────────────────────────────


@pytest.mark.parametrize("command", [["compute", "--data", "A", "--loadings", "Z"], ["solve", "--data", "A", "--m", "2"]])
def test_format_is_unset_unless_given(command):
    assert build_parser().parse_args(command).format is None


def test_solve_non_convergence_prints_partial_json(files, capsys):
    assert main(["solve", "--data", files["data"], "--m", "2", "--max-iter", "1"]) == EXIT_NON_CONVERGED
    out = _json(capsys)
    assert out["converged"] is False
    assert "objective" in out and "matched_svd" in out


def test_flags_before_subcommand(files, capsys):
    argv = ["--format", "csv", "--seed", "1", "compute", "--data", files["data"], "--loadings", files["loadings"]]
    assert main(argv) == EXIT_OK
    assert capsys.readouterr().out.splitlines()[0] == "definition,value,pev"


def test_subcommand_flag_wins_over_global(files, capsys):
    argv = ["--format", "csv", "compute", "--data", files["data"], "--loadings", files["loadings"], "--format", "json"]
    assert main(argv) == EXIT_OK
    assert list(_json(capsys)["values"]) == list(DEFINITIONS)


def test_global_seed_reaches_experiment_metadata(files):
    out = files["dir"] / "curves.csv"
    assert main(["--seed", "5", "experiment", "pev-curves", "--config", _config(files), "--out", str(out)]) == EXIT_OK
    assert json.loads((files["dir"] / "curves.csv.meta.json").read_text())["seed"] == 5
