import json

import pytest

from cslab.cli import SUBCOMMANDS, main

SMALL = {
    "schema": "cslab-experiment/1",
    "scales": [5, 6],
    "sizes": [256],
    "energies": [1.0, 5.0],
    "samples": 4,
    "phase_grid": 64,
    "eigfunc": {"pairs": 6, "k": 6},
}


def write_config(tmp_path, **over):
    cfg = dict(SMALL, **over)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def run(tmp_path, sub, *extra, name=None, **over):
    out = tmp_path / (name or sub)
    code = main([sub, "--config", write_config(tmp_path, **over), "--out", str(out), *extra])
    return code, out


@pytest.mark.parametrize("sub", [s for s in SUBCOMMANDS if s != "verify"])
def test_subcommand_writes_run_directory(tmp_path, sub):
    code, out = run(tmp_path, sub)
    assert code in (0, 1)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["subcommand"] == sub and manifest["status"] == code
    assert "config.json" in manifest["files"]
    for name in manifest["files"]:
        data = (out / name).read_bytes()
        assert b"\r\n" not in data


def test_tidy_csv_headers(tmp_path):
    _, out = run(tmp_path, "curves")
    assert (out / "curves_0_rotation_k5.csv").read_text().splitlines()[0] == "x,i,mu"
    _, out = run(tmp_path, "eigfunc")
    assert (out / "decay.csv").read_text().splitlines()[0] == "site,offset,log_abs_psi"
    _, out = run(tmp_path, "ldt", energies=[5.0])
    assert (out / "ldt_0.csv").read_text().splitlines()[0] == "qk,delta,mass,components"


def test_outputs_deterministic_and_thread_independent(tmp_path):
    _, a = run(tmp_path, "lyapunov", "--threads", "1", name="a")
    _, b = run(tmp_path, "lyapunov", "--threads", "3", name="b")
    assert (a / "lyapunov.csv").read_bytes() == (b / "lyapunov.csv").read_bytes()
    ma = json.loads((a / "manifest.json").read_text())["files"]
    mb = json.loads((b / "manifest.json").read_text())["files"]
    assert ma == mb


def test_cf_rational_exit_code(tmp_path, capsys):
    code, _ = run(tmp_path, "cf", alpha={"mode": "numeric", "value": "0.5"})
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "rational-input"


def test_ids_cap_exit_code(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("CSL_CAP_OVERRIDE", raising=False)
    code, _ = run(tmp_path, "ids", sizes=[10**6])
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "cap-exceeded"


def test_invalid_config_exit_code(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"schema": "cslab-experiment/1", "unknown": 1}))
    assert main(["cf", "--config", str(path), "--out", str(tmp_path / "x")]) == 2
    assert json.loads(capsys.readouterr().err.strip())["error"] == "invalid-config"


def test_unknown_subcommand(capsys):
    assert main(["frobnicate"]) == 2
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "usage"


def test_unknown_check_id(tmp_path, capsys):
    code, _ = run(tmp_path, "verify", "--check", "no-such-check")
    assert code == 2


def test_single_check(tmp_path, capsys):
    code, out = run(tmp_path, "verify", "--check", "continued-fractions")
    report = json.loads((out / "report.json").read_text())
    ids = {c["id"] for c in report["checks"]}
    assert {"cf-convergents", "cf-best-approximation", "cf-sandwich"} <= ids
    lines = capsys.readouterr().out.splitlines()
    assert all(line.startswith(("PASS", "FAIL")) for line in lines)


def test_seed_override(tmp_path):
    _, out = run(tmp_path, "cf", "--seed", "7")
    assert json.loads((out / "config.json").read_text())["seed"] == 7
