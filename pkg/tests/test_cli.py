import csv
import io
import json

import numpy as np
import pytest

from quantdim.cli import main
from quantdim.oracles import cascade_beta

HEADER = "# quantdim 0.1.0 protocol=max-fit/v1"


def run(*argv):
    buf = io.StringIO()
    code = main(list(argv), stdout=buf)
    return code, buf.getvalue()


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0] == HEADER
    rows = list(csv.DictReader(lines[1:]))
    return rows


def test_spectrum_menger_matches_oracle(tmp_path):
    code, _ = run("spectrum", "--spec", "menger", "--depth", "10", "--order", "-0.5",
                  "--out", str(tmp_path))
    assert code == 0
    p = [0.66, 0.2, 0.08, 0.06]
    for row in read_csv(tmp_path / "beta.csv"):
        if row["n"] == "10":
            assert float(row["value"]) == pytest.approx(cascade_beta(p, float(row["q"])), abs=1e-9)
    marks = {r["name"]: float(r["value"]) for r in read_csv(tmp_path / "markers.csv")}
    assert marks["q_r"] == pytest.approx(1.870, abs=2e-3)
    assert marks["D_r"] == pytest.approx(1.075, abs=2e-3)
    assert marks["D_0"] == pytest.approx(1.3951, abs=1e-4)
    assert (tmp_path / "spectrum.gp").exists()
    assert json.loads((tmp_path / "config.json").read_text())["command"] == "spectrum"


def test_spectrum_uniform_beta(tmp_path):
    code, _ = run("spectrum", "--spec", "uniform", "--depth", "8", "--out", str(tmp_path),
                  "--q-grid", "0,0.5,1,2")
    assert code == 0
    for row in read_csv(tmp_path / "beta.csv"):
        assert float(row["value"]) == pytest.approx(1 - float(row["q"]), abs=1e-9)


def test_atomic_spectrum_degenerate_note(tmp_path):
    code, _ = run("spectrum", "--spec", "atom", "--order", "0.5", "--out", str(tmp_path))
    assert code == 0
    m = json.loads((tmp_path / "spectrum.json").read_text())["markers"]
    assert m["q_r"] == 0 and any("atomic" in n for n in m["notes"])


def test_byte_identical_reruns(tmp_path):
    args = ["quantize", "--spec", "menger", "--depth", "5", "--order", "1", "--n-list", "2,4,8",
            "--seed", "7", "--starts", "2"]
    run(*args, "--out", str(tmp_path / "a"))
    run(*args, "--out", str(tmp_path / "b"))
    for name in ("error_curve.csv", "error_curve.json", "quantizer.json", "config.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_quantize_uniform_fit(tmp_path):
    code, _ = run("quantize", "--spec", "uniform", "--order", "-0.5", "--n-list", "2:64",
                  "--out", str(tmp_path))
    assert code == 0
    curve = json.loads((tmp_path / "error_curve.json").read_text())
    assert curve["D_hat"] == pytest.approx(1.0, abs=0.03)
    assert curve["c_hat"] == pytest.approx(0.125, rel=0.02)
    assert read_csv(tmp_path / "error_curve.csv")[0]["n"] == "2"


def test_quantize_linear_log_order(tmp_path):
    code, _ = run("quantize", "--spec", "linear2x", "--order", "0", "--n-list", "8:64",
                  "--out", str(tmp_path))
    assert code == 0
    c = json.loads((tmp_path / "error_curve.json").read_text())["c_hat"]
    c_unif = np.exp(-1) / 2
    assert c / c_unif == pytest.approx(0.8244, rel=0.05)


def test_quantize_atom_positive_order_notes(tmp_path):
    code, _ = run("quantize", "--spec", "atom", "--depth", "4", "--order", "0.5", "--n-list", "2,4",
                  "--out", str(tmp_path))
    assert code == 0
    curve = json.loads((tmp_path / "error_curve.json").read_text())
    assert curve["D_hat"] == "nan" and curve["notes"]


@pytest.mark.parametrize("argv,code", [
    (["quantize", "--spec", "ex29", "--order", "-0.6", "--n-list", "2,4"], 2),
    (["quantize", "--spec", "uniform", "--order", "-1", "--n-list", "2,4"], 2),
    (["spectrum", "--spec", "menger", "--depth", "40"], 3),
    (["spectrum", "--spec", "no-such-measure"], 1),
    (["spectrum", "--inline", "{\"d\": 1, \"variant\": \"ifs\"}"], 1),
    (["qr", "--spec", "uniform-cascade", "--depth", "2", "--order", "0.5"], 1),
])
def test_exit_codes(tmp_path, argv, code):
    assert run(*argv, "--out", str(tmp_path))[0] == code


def test_bad_arguments_exit_through_argparse():
    with pytest.raises(SystemExit) as exc:
        run("spectrum", "--spec", "uniform", "--depth", "0")
    assert exc.value.code == 2


def test_partition_modes(tmp_path):
    for extra in (["--budget", "20"], ["--x", "100"], ["--gamma", "4,16,64"], ["--alpha", "0.5,1"]):
        code, _ = run("partition", "--spec", "menger", "--depth", "8", "--order", "1",
                      "--out", str(tmp_path / extra[0][2:]), *extra)
        assert code == 0, extra


def test_oracle_commands(tmp_path):
    out = ["oracles", "--out", str(tmp_path)]
    assert run(*out, "list")[0] == 0
    assert run(*out, "eval", "linear2x", "--phi", "0")[0] == 0
    assert run(*out, "beta", "--p", "0.5,0.5", "--q", "0,1,2")[0] == 0
    assert run(*out, "midpoint", "--n", "4", "--order", "-0.5")[0] == 0


def test_verify_list():
    code, text = run("verify", "--list")
    assert code == 0
    for cid in ("C1", "C6", "C12", "B1"):
        assert cid in text


@pytest.mark.parametrize("suite", ["cascade", "bounds"])
def test_verify_suites(tmp_path, suite):
    code, text = run("verify", "--suite", suite, "--out", str(tmp_path))
    assert code == 0, text
    report = json.loads((tmp_path / "verify.json").read_text())
    assert report["passed"] and all(c["passed"] for c in report["criteria"])
