import csv
import json

import numpy as np
import pytest

import kanchor.evaluation as ev
from kanchor.cli import main
from kanchor.sem import random_spec


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_generate_writes_csv_and_manifest(tmp_path):
    out = tmp_path / "g"
    assert main(["generate", "--design", "main", "--n", "700", "--seed", "7", "--out", str(out)]) == 0
    assert len(_rows(out / "data.csv")) == 700
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "generate" and manifest["seed"] == 7
    assert {"config", "version", "timestamp", "args"} <= set(manifest)


def test_generate_is_reproducible(tmp_path):
    for name in ("a", "b"):
        main(["generate", "--n", "50", "--seed", "3", "--out", str(tmp_path / name)])
    assert (tmp_path / "a" / "data.csv").read_bytes() == (tmp_path / "b" / "data.csv").read_bytes()


def test_generate_variant_anchor_mean(tmp_path):
    main(["generate", "--design", "variant", "--n", "100000", "--seed", "1", "--out", str(tmp_path)])
    z = np.array([float(r["z"]) for r in _rows(tmp_path / "data.csv")])
    assert z.mean() == pytest.approx(0.25, abs=0.01)


def test_benchmark_default_methods_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["benchmark", "--trials", "50", "--seed", "11", "--out", str(a)]) == 0
    table = capsys.readouterr().out
    assert main(["benchmark", "--trials", "50", "--seed", "11", "--out", str(b)]) == 0
    methods = {r["method"] for r in _rows(a / "results.csv")}
    assert methods == {"kar", "kar2", "kiv", "kpa", "kreg", "ar", "iv", "pa", "ols"}
    assert all(m in table for m in methods)
    for name in ("results.csv", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    config = json.loads((a / "manifest.json").read_text())["config"]
    assert config["n"] == 700 and config["split3"] == [250, 250, 200] and config["gamma"] == 2.0


def test_benchmark_kreg_equals_kar_at_gamma_one(tmp_path):
    main(["benchmark", "--methods", "kreg,kar", "--gamma", "1", "--trials", "1", "--out", str(tmp_path)])
    vals = {r["method"]: float(r["value"]) for r in _rows(tmp_path / "results.csv")}
    assert vals["kreg"] == pytest.approx(vals["kar"], abs=1e-10)


def test_replay_reproduces_bitwise(tmp_path):
    a = tmp_path / "a"
    main(["benchmark", "--methods", "kar,ols", "--trials", "2", "--seed", "4", "--out", str(a)])
    assert main(["replay", str(a / "manifest.json"), "--out", str(tmp_path / "b")]) == 0
    for name in ("results.csv", "summary.json"):
        assert (a / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_campaign_failure_exit_code(tmp_path, monkeypatch, capsys):
    def broken(*args, **kwargs):
        raise np.linalg.LinAlgError("singular")

    monkeypatch.setattr(ev, "_fit_predict", broken)
    code = main(["benchmark", "--methods", "ols", "--trials", "3", "--out", str(tmp_path)])
    captured = capsys.readouterr()
    assert code != 0
    assert "campaign failed" in captured.err and "campaign failed" not in captured.out
    assert (tmp_path / "summary.json").exists()


def test_bad_flags_exit_nonzero(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["benchmark", "--methods", "lasso", "--out", str(tmp_path)])
    assert exc.value.code != 0
    with pytest.raises(SystemExit):
        main(["benchmark", "--splits", "1,2", "--out", str(tmp_path)])
    assert main(["benchmark", "--n", "100", "--splits", "250,250,200", "--out", str(tmp_path)]) == 2


def test_identifiability_case_one(capsys):
    assert main(["identifiability", "--case", "thm3-i"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2
    case, gamma, norm, verdict = lines[1].split()
    assert case == "thm3-i" and float(norm) == 0.0 and verdict == "pass"


def test_identifiability_spec_file(tmp_path, capsys):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(random_spec(np.random.default_rng(0)).to_dict()))
    assert main(["identifiability", "--spec", str(path), "--gammas", "0,2", "--out", str(tmp_path / "o")]) == 0
    out = capsys.readouterr().out
    assert out.count("spec") == 2
    assert len(_rows(tmp_path / "o" / "results.csv")) == 2


def test_identifiability_malformed_spec(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"B_CZ": [[1, 2]\n')
    assert main(["identifiability", "--spec", str(path)]) == 2
    err = capsys.readouterr().err
    assert "line" in err and "column" in err


def test_gamma_sweep_summary_shape(tmp_path):
    gammas = "0,0.5,1,2,5,10,100"
    code = main(["gamma-sweep", "--design", "kiv", "--gammas", gammas, "--trials", "1",
                 "--alpha-consts", "1.5", "--out", str(tmp_path)])
    assert code == 0
    summary = json.loads((tmp_path / "summary.json").read_text())["summary"]
    sweep = [k for k in summary if k != "kiv"]
    assert len(sweep) == 14 and "kiv" in summary
    config = json.loads((tmp_path / "manifest.json").read_text())["config"]
    assert config["n"] == 1000 and config["split3"] == [200, 200, 600] and config["xi_const"] == 1.0


def test_shift_two_orientations(tmp_path, capsys):
    assert main(["shift", "--design", "main", "--threshold", "0", "--methods", "kar,ar",
                 "--trials", "2", "--out", str(tmp_path)]) == 0
    labels = {r["method"] for r in _rows(tmp_path / "results.csv")}
    assert labels == {"kar@train_below", "kar@train_above", "ar@train_below", "ar@train_above"}
    assert "train_above" in capsys.readouterr().out


def test_benchmark_from_csv(tmp_path, nmes_csv, nmes_schema):
    code = main(["benchmark", "--csv", nmes_csv, "--schema", nmes_schema, "--group-value", "1",
                 "--methods", "ols,ar", "--trials", "2", "--fixed-subsample", "--out", str(tmp_path)])
    assert code == 0
    config = json.loads((tmp_path / "manifest.json").read_text())["config"]
    assert config["dropped_missing"] == 4 and config["dropped_log"] == 1 and config["fixed_subsample"]


def test_csv_needs_schema(tmp_path, nmes_csv):
    assert main(["benchmark", "--csv", nmes_csv, "--out", str(tmp_path)]) == 2
