import hashlib
import json
import subprocess
import sys
from pathlib import Path

import pytest

from inn.cli import ConfigError, main, parse_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _run(args, capsys):
    code = main([str(a) for a in args])
    out, err = capsys.readouterr()
    return code, out, err


def _csv_value(path, key):
    for line in Path(path).read_text().splitlines():
        k, *rest = line.split(",")
        if k == key:
            return float(rest[-1])
    raise KeyError(key)


def test_convergence_p1(tmp_path, capsys):
    code, out, _ = _run(["convergence", "--config", CONFIGS / "convergence_p1.ini", "--out", tmp_path], capsys)
    assert code == 0 and json.loads(out)["status"] == "ok"
    assert -1.1 <= _csv_value(tmp_path / "convergence.csv", "slope") <= -0.9
    assert (tmp_path / "convergence.svg").read_text().startswith("<svg")
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["node_counts"] == [41, 81, 161, 321]
    for name, digest in manifest["artifacts"].items():
        assert hashlib.sha256((tmp_path / name).read_bytes()).hexdigest() == digest


def test_train_shipped_config_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert _run(["train", "--config", CONFIGS / "separable3d_train.ini", "--out", d], capsys)[0] == 0
    assert _csv_value(a / "metrics.csv", "train_mse") <= 4e-4
    for name in ("history.csv", "metrics.csv", "checkpoint.json", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_seed_flag_overrides(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("function = linear\nn_inputs = 1\nn_samples = 50\nmodel = full\nnodes = 5\nepochs = 2\nseed = 1\n")
    assert _run(["train", "--config", cfg, "--out", tmp_path / "o", "--seed", 7], capsys)[0] == 0
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["config"]["seed"] == 7


def test_malformed_config_lists_every_key(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("bogus = 1\nlr = abc\nepochs = 0\n")
    code, _, err = _run(["train", "--config", cfg, "--out", tmp_path / "o"], capsys)
    assert code != 0
    msg = json.loads(err.strip().splitlines()[-1])
    assert msg["status"] == "error" and msg["kind"] == "config"
    assert msg["keys"] == ["bogus", "epochs", "lr"]
    assert "bogus" in msg["message"]
    assert not (tmp_path / "o" / "manifest.json").exists()


@pytest.mark.parametrize(
    "command,text,key",
    [
        ("convergence", "node_counts = 41, 81\n", "node_counts"),
        ("solve-poisson", "q = 1\np = 2\n", "p"),
        ("solve-heat", "power_bounds = 200, 100\n", "power_bounds"),
        ("calibrate", "starts = 3\n", "checkpoint"),
        ("gradcheck", "kinds = full, mlp\n", "kinds"),
        ("train", "lr = 1\nlr = 2\n", "lr"),
        ("train", "[extra]\nlr = 1\n", "[extra]"),
    ],
)
def test_config_errors(command, text, key):
    with pytest.raises(ConfigError) as e:
        parse_config(command, text)
    assert key in e.value.problems


def test_parse_defaults_and_comments():
    c = parse_config("solve-heat", "# comment\nmodes = 12  # inline\n")
    assert c["modes"] == 12 and c["n_x"] == 64 and c["seed"] == 0
    assert parse_config("train", "stop_mse = none\n")["stop_mse"] is None


def test_solve_poisson_and_gradcheck(tmp_path, capsys):
    assert _run(["solve-poisson", "--out", tmp_path / "p"], capsys)[0] == 0
    assert _csv_value(tmp_path / "p" / "error.csv", "max_nodal_error") <= 1e-6
    cfg = tmp_path / "g.ini"
    cfg.write_text("instances = 5\n")
    assert _run(["gradcheck", "--config", cfg, "--out", tmp_path / "g"], capsys)[0] == 0
    rows = (tmp_path / "g" / "gradcheck.csv").read_text().splitlines()[1:]
    assert [r.split(",")[0] for r in rows] == ["full", "tucker", "cp"]
    assert all(float(v) <= 1e-5 for r in rows for v in r.split(",")[2:])


def test_calibrate_from_checkpoint(tmp_path, capsys):
    cfg = tmp_path / "t.ini"
    cfg.write_text("function = shifted_square\nn_inputs = 1\nn_samples = 400\nmodel = full\nnodes = 11\nepochs = 300\nlr = 1e-2\nstop_mse = 1e-9\n")
    assert _run(["train", "--config", cfg, "--out", tmp_path / "t"], capsys)[0] == 0
    cal = tmp_path / "c.ini"
    cal.write_text(f"checkpoint = {tmp_path / 't' / 'checkpoint.json'}\nobservations = 0.04\nreport = true\nprobe_density = 21\n")
    assert _run(["calibrate", "--config", cal, "--out", tmp_path / "c"], capsys)[0] == 0
    assert _csv_value(tmp_path / "c" / "calibration.csv", "best") <= 1e-8
    basins = (tmp_path / "c" / "basins.csv").read_text().splitlines()
    assert len(basins) == 3


def test_solve_heat_small(tmp_path, capsys):
    cfg = tmp_path / "h.ini"
    cfg.write_text("n_x = 16\nn_t = 16\nn_power = 3\nn_absorptivity = 3\nmodes = 2\nepochs = 20\nn_colloc = 50\nfd_nx = 33\n")
    assert _run(["solve-heat", "--config", cfg, "--out", tmp_path / "h"], capsys)[0] == 0
    names = {p.name for p in (tmp_path / "h").iterdir()}
    assert {"checkpoint.json", "history.csv", "r2.csv", "imposition.csv", "slice_0.csv", "fd_3.csv", "manifest.json"} <= names
    assert _csv_value(tmp_path / "h" / "imposition.csv", "ic_max_error") <= 1e-10


def test_runtime_error_is_machine_readable(tmp_path, capsys):
    cal = tmp_path / "c.ini"
    cal.write_text(f"checkpoint = {tmp_path / 'missing.json'}\nobservations = 1\n")
    code, _, err = _run(["calibrate", "--config", cal, "--out", tmp_path / "c"], capsys)
    assert code == 1 and json.loads(err)["kind"] == "FileNotFoundError"


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "inn.cli", "convergence", "--out", str(tmp_path), "--config", "/nonexistent.ini"],
        capture_output=True,
        text=True,
        env={"INN_THREADS": "1", "PATH": ""},
    )
    assert proc.returncode == 2
    assert json.loads(proc.stderr)["keys"] == ["--config"]
    proc = subprocess.run(
        [sys.executable, "-m", "inn.cli", "convergence", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
        env={"INN_THREADS": "zero", "PATH": ""},
    )
    assert proc.returncode == 2 and "INN_THREADS" in proc.stderr
