import csv
import io
import json
import math
import shutil
import subprocess

import pytest

from boundednoise import NoiseFamily, PrivacyParams, RateFunction, noise_upper_bound
from boundednoise.cli import main
from boundednoise.theory import t_star_poly_closed_form


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_calibrate_then_verify_round_trip(capsys):
    code, out, _ = run(capsys, "calibrate", "--family", "poly", "--p", "2", "--eps", "1",
                       "--delta", "1e-6", "--k", "10")
    doc = json.loads(out)
    assert code == 0 and doc["verdict"] == "certified" and doc["schemaVersion"] == 1
    R = doc["R"]
    assert R == noise_upper_bound(NoiseFamily.poly(2), PrivacyParams(1.0, 1e-6, 10, 1.0))
    code, out, _ = run(capsys, "verify", "--eps", "1", "--delta", "1e-6", "--k", "10",
                       "--R", repr(R))
    assert code == 0 and json.loads(out)["verdict"] == "certified"
    code, out, _ = run(capsys, "verify", "--eps", "1", "--delta", "1e-6", "--k", "10",
                       "--R", repr(0.9 * R))
    assert code == 2 and json.loads(out)["verdict"] == "rejected"


def test_calibrate_sensitivity_doubles_R(capsys):
    base = ["calibrate", "--eps", "1", "--delta", "1e-6", "--k", "10"]
    r1 = json.loads(run(capsys, *base, "--Delta", "1")[1])["R"]
    r2 = json.loads(run(capsys, *base, "--Delta", "2")[1])["R"]
    assert r2 / r1 == pytest.approx(2.0, rel=2e-6)


@pytest.mark.parametrize("argv", [
    ["calibrate", "--delta", "1e-6", "--k", "3"],             # missing --eps
    ["calibrate", "--eps", "-1", "--delta", "1e-6", "--k", "3"],
    ["compare", "--k-sweep", "", "--eps", "0.1", "--delta", "1e-6"],
    ["compare", "--eps", "0.1", "--delta", "1e-6", "--k", "3"],   # no sweep
    ["nonsense"],
])
def test_usage_errors_exit_1(capsys, argv):
    assert run(capsys, *argv)[0] == 1


def test_config_file_is_applied(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mgfPanels": 4096, "bisectRelTol": 1e-4}))
    code, out, _ = run(capsys, "calibrate", "--eps", "1", "--delta", "1e-6", "--k", "5",
                       "--config", str(cfg))
    from boundednoise import CertConfig
    assert code == 0
    assert json.loads(out)["configHash"] == CertConfig(mgf_panels=4096,
                                                       bisect_rel_tol=1e-4).digest()


def test_compare_table(capsys):
    code, out, err = run(capsys, "compare", "--k-sweep", "100,10", "--eps", "0.5",
                         "--delta", "1e-6")
    assert code == 0 and "compare" in err
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [int(r["k"]) for r in rows] == [100, 10]        # input order kept
    for r in rows:
        norm = math.sqrt(int(r["k"]) * math.log(1 / 1e-6)) / 0.5
        assert float(r["normalizer"]) == pytest.approx(norm, rel=1e-12)
        for col in ("bounded_R", "bounded_q0.95", "gauss_q1-1e-6"):
            assert float(r[col + "_norm"]) == pytest.approx(float(r[col]) / norm, rel=1e-12)
        assert float(r["bounded_q0.5"]) < float(r["bounded_q0.999"]) <= float(r["bounded_R"])


def test_compare_jobs_do_not_change_output(capsys):
    argv = ["compare", "--eps-sweep", "0.5,1", "--delta", "1e-6", "--k", "20"]
    serial = run(capsys, *argv, "--jobs", "1")[1]
    parallel = run(capsys, *argv, "--jobs", "2")[1]
    assert serial == parallel


def test_sample_is_deterministic_csv_and_json(capsys):
    a = run(capsys, "sample", "--R", "3", "--n", "50", "--seed", "9")[1]
    b = run(capsys, "sample", "--R", "3", "--n", "50", "--seed", "9")[1]
    assert a == b and a.splitlines()[0] == "index,value" and len(a.splitlines()) == 51
    doc = json.loads(run(capsys, "sample", "--R", "3", "--n", "5", "--seed", "9",
                         "--format", "json")[1])
    assert doc["columns"] == ["index", "value"] and len(doc["rows"]) == 5


def test_falsify_exit_codes(capsys):
    base = ["falsify", "--eps", "1", "--delta", "1e-6", "--k", "10", "--n", "5000"]
    code, out, _ = run(capsys, *base, "--R", "2")
    assert code == 2 and json.loads(out)["verdict"] == "refuted"
    code, out, _ = run(capsys, *base, "--R", "500")
    assert code == 0 and json.loads(out)["verdict"] == "notRefuted"


def test_theory_matches_closed_form(capsys):
    code, out, _ = run(capsys, "theory", "--rate", "poly", "--p", "2", "--k", "1e6")
    doc = json.loads(out)
    assert code == 0
    assert doc["tStar"] == pytest.approx(t_star_poly_closed_form(2.0, 1e6), rel=1e-12)
    assert len(doc["heavyTail"]) == 5


def test_adaptive_table(capsys, tmp_path):
    out_path = tmp_path / "a.csv"
    code, _, _ = run(capsys, "adaptive", "--n-sweep", "30000", "--output", str(out_path))
    assert code == 0
    rows = list(csv.reader(open(out_path)))
    assert rows[0] == ["n", "k_bounded_p1", "k_bounded_p2", "k_gaussian"]
    assert rows[1][0] == "30000" and all(int(x) >= 0 for x in rows[1])


@pytest.mark.skipif(shutil.which("boundednoise") is None, reason="console script not installed")
def test_console_script():
    res = subprocess.run(["boundednoise", "calibrate", "--k", "1"], capture_output=True, text=True)
    assert res.returncode == 1 and res.stdout == ""
