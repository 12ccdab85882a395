"""Command line runner: presets, config validation, exit codes and artifacts."""

import json
import subprocess
import sys

import pytest

from cartan_ray import cli
from cartan_ray.experiments import EXPERIMENTS


def _cfg(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(p)


def test_list_presets(capsys):
    assert cli.main(["list-presets"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) >= 12
    assert [ln.split(" → ")[0] for ln in lines] == list(EXPERIMENTS)
    assert "transport-check → transport equation X u^f = -f by finite differences" in lines
    assert cli.main(["list-presets"]) == 0
    assert capsys.readouterr().out.splitlines() == lines


def test_presets_ship_and_validate():
    for name in cli.preset_names():
        cfg = cli.parse_config(cli.preset_text(name), name)
        assert cfg == cli.default_config(name)


def test_describe(capsys):
    assert cli.main(["describe", "jacobi-hyperbolic"]) == 0
    out = capsys.readouterr().out
    head, schema = out.split("\nschema: ")
    assert json.loads(head)["experiment"] == "jacobi-hyperbolic"
    assert json.loads(schema)["additionalProperties"] is False
    assert cli.main(["describe", "no-such"]) == 2


def test_run_preset_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "jh"
    assert cli.main(["run", "jacobi-hyperbolic", "--out", str(out), "--threads", "1"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"] and summary["config"]["experiment"] == "jacobi-hyperbolic"
    assert "runtime_s" in json.loads((out / "timing.json").read_text())
    rows = (out / "jacobi.csv").read_text().splitlines()
    assert rows[0] == "t,u,envelope" and len(rows) == 2002
    text = capsys.readouterr().out
    assert "PASS  sinh_rel_err" in text and "FAIL" not in text


def test_summary_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert cli.main(["run", "jacobi-envelope", "--out", str(d), "--threads", "2"]) == 0
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()
    assert (a / "envelope.csv").read_bytes() == (b / "envelope.csv").read_bytes()


def test_seed_override(tmp_path):
    cfg = _cfg(tmp_path, {"experiment": "jacobi-envelope", "params": {"n_geodesics": 1}})
    runs = {}
    for seed in (0, 5):
        out = tmp_path / f"s{seed}"
        assert cli.main(["run", "--config", cfg, "--out", str(out), "--seed-override", str(seed)]) == 0
        runs[seed] = json.loads((out / "summary.json").read_text())
    assert runs[5]["config"]["seed"] == 5
    assert runs[0]["metrics"] != runs[5]["metrics"]
    assert cli.main(["run", "--config", cfg, "--seed-override", "-1"]) == 2


def test_malformed_json_reports_position(tmp_path, capsys):
    cfg = _cfg(tmp_path, '{\n  "experiment": "uf-decay",\n  "seed": ,\n}')
    assert cli.main(["run", "--config", cfg]) == 2
    err = capsys.readouterr().err
    assert f"{cfg}:3:11:" in err


@pytest.mark.parametrize("doc", [
    {"experiment": "uf-decay", "colour": "blue"},
    {"experiment": "uf-decay", "params": {"radii": [2.0, 4.0], "n_dir": 3}},
    {"experiment": "uf-decay", "tolerances": {"slack": 0.1}},
    {"experiment": "uf-decay", "metric": {"profile": "euclidean", "curvature": 0}},
    {"experiment": "uf-decay", "seed": -2},
    {"experiment": "not-an-experiment"},
    {"params": {}},
    [1, 2, 3],
])
def test_schema_rejects(tmp_path, capsys, doc):
    assert cli.main(["run", "--config", _cfg(tmp_path, doc)]) == 2
    assert capsys.readouterr().err.startswith("error: ")


def test_usage_errors(tmp_path):
    assert cli.main(["run"]) == 2
    assert cli.main(["run", "uf-decay", "--config", "x.json"]) == 2
    assert cli.main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    assert cli.main(["run", "uf-decay", "--threads", "0"]) == 2


def test_numeric_failure_exit_1(tmp_path, capsys):
    # eta <= 1 has no finite ray transform
    cfg = _cfg(tmp_path, {"experiment": "uf-decay", "fields": [{"name": "poly", "params": {"eta": 0.5}}]})
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "numerical failure" in capsys.readouterr().err


def test_failed_check_exit_1(tmp_path, capsys):
    cfg = _cfg(tmp_path, {"experiment": "ray-transform-gaussian", "tolerances": {"abs": 0.0},
                          "params": {"offsets": [0.5]}})
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "FAIL  max_abs_err" in capsys.readouterr().out


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "cartan_ray", "run", "ray-transform-gaussian",
                          "--out", str(tmp_path / "r")], capture_output=True, text=True, timeout=600)
    assert out.returncode == 0, out.stderr
    sino = (tmp_path / "r" / "sinogram.csv").read_text().splitlines()
    assert sino[0] == "offset,value,exact" and len(sino) == 5
