from __future__ import annotations

import json
import subprocess
import sys

import pytest

from convexlab import cli


def run(capsys, *argv) -> tuple[int, str, str]:
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def payload(capsys, *argv) -> dict:
    code, out, err = run(capsys, *argv)
    assert code == 0, err
    body = json.loads(out)
    assert body["schema_version"] == cli.SCHEMA_VERSION
    assert set(body) >= {"command", "config", "certified", "estimated"}
    return body


def test_modulus(capsys, tmp_path):
    csv_path = tmp_path / "m.csv"
    body = payload(capsys, "modulus", "--dim", "2", "--planes", "4", "--angles", "256", "--t-grid", "0.5,1,2",
                   "--csv", str(csv_path))
    assert body["estimated"]["modulus"]["delta_hat"][-1] == pytest.approx(1.0, abs=1e-3)
    assert "2" in body["estimated"]["power_type"]
    assert csv_path.read_text().splitlines()[0].startswith("t,")
    assert "csv" not in body["config"]


def test_certify(capsys):
    body = payload(capsys, "certify", "--map", "shear:k=1")
    assert body["certified"]["epsilon_star"] == pytest.approx(0.125 * (1 - 1e-6))
    assert body["certified"]["r"] == "inf"
    assert body["estimated"] == {"constants": {}}
    body = payload(capsys, "certify", "--map", "shear:k=1", "--r", "0.5", "--mode", "banach")
    assert body["certified"]["epsilon_star"] == pytest.approx(0.0955, abs=1e-4)


def test_certify_hypothesis_exit_code(capsys):
    code, out, err = run(capsys, "certify", "--map", "quad1d", "--r", "1")
    assert code == 2 and out == "" and "hypothesis" in err
    code, _, _ = run(capsys, "certify", "--map", "shear:k=1", "--mode", "banach",
                     "--norm", '{"kind": "p", "p": 1, "dim": 2}')
    assert code == 2


def test_usage_errors_exit_2(capsys):
    for argv in (["check", "--map", "shear:k=1"],
                 ["certify", "--map", "shear:k=1", "--center", "a,b"],
                 ["check", "--map", "shear:k=1", "--eps", "0.1", "--center", "0"],
                 ["extremal", "--n", "3", "--m", "8", "--budget", "1000"],
                 ["certify", "--map", "nosuchmap"]):
        with pytest.raises(SystemExit) as exc:
            cli.main(argv)
        assert exc.value.code == 2
        capsys.readouterr()


def test_internal_error_exit_1(capsys, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("boom")
    monkeypatch.setattr(cli, "certify_map", boom)
    code, out, err = run(capsys, "certify", "--map", "shear:k=1")
    assert code == 1 and "internal error" in err


def test_check_and_violations_csv(capsys, tmp_path):
    vpath = tmp_path / "v.csv"
    body = payload(capsys, "check", "--map", "shear:k=1", "--eps", "0.6", "--pairs", "2000", "--seed", "7",
                   "--hull", "--grid-density", "256", "--violations-csv", str(vpath))
    mid = body["estimated"]["midpoint"]
    assert mid["verdict"] == "nonconvex-witnessed"
    assert len(vpath.read_text().splitlines()) == mid["n_violations"] + 1
    assert 0 <= body["estimated"]["hull"]["relative_gap"] < 1


def test_check_output_independent_of_threads(capsys, tmp_path):
    texts = []
    for threads in ("1", "3"):
        out = tmp_path / f"r{threads}.json"
        code, _, _ = run(capsys, "check", "--map", "shear:k=1", "--eps", "0.6", "--pairs", "1500",
                         "--threads", threads, "--out", str(out))
        assert code == 0
        texts.append(out.read_bytes())
        meta = json.loads((tmp_path / f"r{threads}.json.meta.json").read_text())
        assert meta["threads"] == int(threads) and "timestamp" in meta
    assert texts[0] == texts[1]


def test_seed_from_environment(capsys, monkeypatch):
    monkeypatch.setenv("CONVEXLAB_SEED", "123")
    body = payload(capsys, "check", "--map", "identity:n=2", "--eps", "0.5", "--pairs", "100")
    assert body["config"]["seed"] == 123
    body = payload(capsys, "check", "--map", "identity:n=2", "--eps", "0.5", "--pairs", "100", "--seed", "4")
    assert body["config"]["seed"] == 4
    monkeypatch.setenv("CONVEXLAB_SEED", "x")
    with pytest.raises(SystemExit):
        cli.main(["check", "--map", "identity:n=2", "--eps", "0.5", "--pairs", "10"])


def test_smoothness(capsys, tmp_path):
    body = payload(capsys, "smoothness", "--map", "shear:k=1", "--order", "2", "--center", "0,0",
                   "--region", '{"ball": {"center": [0, 0], "radius": 0.5}}', "--budget", "2000")
    est = body["estimated"]
    assert est["omega2"]["fitted_constant"] == pytest.approx(2.0, rel=0.02)
    assert est["sigma_min"] == pytest.approx(1.0)
    assert est["second_order_check"]["passed"] is True
    assert body["bias_direction"] == "lower"


def test_extremal_csv_and_json(capsys, tmp_path):
    code, out, _ = run(capsys, "extremal", "--n", "1", "--m", "10")
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("n,m,variant")
    assert lines[1].split(",")[4] == "0.5"
    code, out, _ = run(capsys, "extremal", "--n", "2", "--m", "2", "--sequence")
    assert len(out.splitlines()) == 3
    body = payload(capsys, "extremal", "--n", "2", "--m", "4", "--json")
    assert body["estimated"]["extremal"]["rows"][0]["epsilon_hat"] == pytest.approx(0.25)


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "convexlab", "extremal", "--n", "1", "--m", "2"],
                       capture_output=True, text=True, check=True)
    assert r.stdout.splitlines()[1].startswith("1,2,full")
