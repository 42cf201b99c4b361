import json
import subprocess
import sys
from pathlib import Path

import pytest

from corrpoly.cli import COMMANDS, RunConfig, csv_bytes, main, read_series_csv

GOLDEN = Path(__file__).parent / "golden"
SMALL = ["--realizations", "4", "--n-steps", "4", "--half-width", "8", "--seed", "7"]
SERIES_COMMANDS = {
    "covariance-check": ["--half-width", "8"],
    "field-sample": ["--half-width", "4", "--n-steps", "2"],
    "free-energy": SMALL + ["--betas", "0,0.5"],
    "fractional-moment": SMALL + ["--betas", "0.5"],
    "diffusivity": SMALL + ["--ts", "4,8,16,32", "--paths", "4", "--beta", "0", "--n-boot", "20"],
    "variance": SMALL + ["--ts", "4,8,16,32", "--beta", "0.5", "--n-boot", "20"],
    "overlap-check": SMALL + ["--beta", "0.3", "--pairs", "2"],
    "girsanov-check": SMALL + ["--beta", "0.0"],
    "second-moment-check": SMALL + ["--beta", "0.0"],
    "weak-disorder": SMALL + ["--ts", "2,4", "--beta", "0"],
    "selftest": [],
}
PINNING_COMMANDS = {
    "pinning": ["--hs", "0,0.5", "--pin-spacing", "0.5"],
    "critical-probe": ["--h", "1.0", "--domains", "4,8,16", "--pin-spacing", "0.5"],
}


def _run(tmp_path, command, args):
    out = tmp_path / command
    code = main([command, *args, "--out", str(out)])
    return code, out


def _golden(name):
    return (GOLDEN / name).read_bytes()


@pytest.mark.parametrize("command", sorted(SERIES_COMMANDS))
def test_series_command_schema(tmp_path, command):
    code, out = _run(tmp_path, command, SERIES_COMMANDS[command])
    assert code == 0
    data = (out / f"{command}.csv").read_bytes()
    assert data.startswith(_golden("series_header.csv"))
    assert b"\r" not in data
    manifest = json.loads((out / f"{command}.json").read_text())
    assert manifest["exit_status"] == 0 and manifest["command"] == command
    assert manifest["outputs"][f"{command}.csv"]


@pytest.mark.parametrize("command", sorted(PINNING_COMMANDS))
def test_pinning_command_schema(tmp_path, command):
    code, out = _run(tmp_path, command, PINNING_COMMANDS[command])
    assert code == 0
    assert (out / f"{command}.csv").read_bytes().startswith(_golden("pinning_header.csv"))


def test_every_command_covered():
    assert set(COMMANDS) == set(SERIES_COMMANDS) | set(PINNING_COMMANDS) | {"fit"}


def test_csv_number_format():
    data = csv_bytes(("x", "y", "se", "n", "flag"), [(0.1, 1 / 3, 0.0, 5, "")])
    assert data == b"x,y,se,n,flag\n0.10000000000000001,0.33333333333333331,0,5,\n"


def test_fit_roundtrip(tmp_path):
    src = tmp_path / "s.csv"
    rows = [(x, 2.0 * x**0.75, 0.01 * x**0.75, 10, "") for x in (1.0, 2.0, 4.0, 8.0, 16.0)]
    src.write_bytes(csv_bytes(("x", "y", "se", "n", "flag"), rows))
    series = read_series_csv(src)
    assert series.x_values.tolist() == [1.0, 2.0, 4.0, 8.0, 16.0]
    code, out = _run(tmp_path, "fit", ["--input", str(src), "--n-boot", "50"])
    assert code == 0
    fit = json.loads((out / "fit.json").read_text())["results"]["fit"]
    assert fit["slope"] == pytest.approx(0.75, abs=1e-12)


def test_manifest_reproduces_config(tmp_path):
    code, out = _run(tmp_path, "free-energy", SMALL + ["--betas", "0.25,0.5", "--theta", "1.5"])
    manifest = json.loads((out / "free-energy.json").read_text())
    cfg = RunConfig.from_manifest(manifest)
    assert cfg.theta == 1.5 and cfg.betas == (0.25, 0.5) and cfg.seed == 7
    assert cfg.to_dict() == manifest["config"]
    assert manifest["stream_scheme"] and manifest["backend"] in ("cython", "python")
    # rerun from the manifest config reproduces the data bytes
    again = tmp_path / "again"
    code2 = main(["free-energy", "--config", str(_write_config(tmp_path, cfg)), "--out", str(again)])
    assert code == code2 == 0
    assert (again / "free-energy.csv").read_bytes() == (out / "free-energy.csv").read_bytes()


def _write_config(tmp_path, cfg):
    path = tmp_path / "run.cfg"
    path.write_text(cfg.to_text())
    return path


def test_warnings_reach_manifest(tmp_path):
    code, out = _run(tmp_path, "free-energy", SMALL + ["--betas", "0.5"])
    warns = json.loads((out / "free-energy.json").read_text())["warnings"]
    assert any("fewer than 30" in w["message"] for w in warns)


def test_strict_promotes_warnings(tmp_path):
    code, _ = _run(tmp_path, "free-energy", SMALL + ["--betas", "0.5", "--strict"])
    assert code == 3


def test_validation_errors_exit_2(tmp_path, capsys):
    assert _run(tmp_path, "free-energy", ["--betas", "0.5,0.25"])[0] == 2
    assert _run(tmp_path, "free-energy", ["--seed", "-1"])[0] == 2
    assert _run(tmp_path, "free-energy", ["--boundary", "periodic"])[0] == 2
    assert _run(tmp_path, "fit", ["--input", str(tmp_path / "missing.csv")])[0] == 2
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2


def test_numerical_failure_exit_3(tmp_path):
    # too few points for a fit
    src = tmp_path / "s.csv"
    src.write_bytes(csv_bytes(("x", "y", "se", "n", "flag"), [(1.0, 1.0, 0.1, 3, ""), (2.0, 2.0, 0.1, 3, "")]))
    code, out = _run(tmp_path, "fit", ["--input", str(src)])
    assert code == 3
    assert json.loads((out / "fit.json").read_text())["error"].startswith("FitError")


def test_workers_do_not_change_output(tmp_path):
    a = _run(tmp_path / "a", "free-energy", SMALL + ["--betas", "0.5", "--workers", "1"])[1]
    b = _run(tmp_path / "b", "free-energy", SMALL + ["--betas", "0.5", "--workers", "2"])[1]
    assert (a / "free-energy.csv").read_bytes() == (b / "free-energy.csv").read_bytes()


def test_env_workers_default(tmp_path, monkeypatch):
    monkeypatch.setenv("CORRPOLY_WORKERS", "2")
    out = _run(tmp_path, "free-energy", SMALL + ["--betas", "0.5"])[1]
    assert json.loads((out / "free-energy.json").read_text())["config"]["output.workers"] == 2


def test_plot_written(tmp_path):
    pytest.importorskip("matplotlib")
    out = _run(tmp_path, "free-energy", SMALL + ["--betas", "0.25,0.5", "--plot"])[1]
    assert (out / "free-energy.svg").read_text().lstrip().startswith("<?xml")


def test_console_script(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "corrpoly.cli", "selftest", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
