import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from ghostrocof.cli import main
from ghostrocof.config import ConfigError, load_config

SCALAR_CASE = """mpc.baseMVA = 100;
mpc.bus = [
    1 3 0 0 0 0 1 1 0 345 1 1.06 0.94;
    2 1 0 0 0 0 1 1 0 345 1 1.06 0.94;
];
mpc.gen = [
    1 100 0 300 -300 1 100 1 250 10;
];
mpc.branch = [
    1 2 0 0.5 0 0 0 0 0 0 1 -360 360;
];
"""

# three generators on a triangle, damping proportional to inertia
TRI_CASE = """mpc.baseMVA = 100;
mpc.bus = [
    1 3 0 0 0 0 1 1 0 345 1 1.06 0.94;
    2 2 0 0 0 0 1 1 0 345 1 1.06 0.94;
    3 2 0 0 0 0 1 1 0 345 1 1.06 0.94;
    4 1 0 0 0 0 1 1 0 345 1 1.06 0.94;
];
mpc.gen = [
    1 200 0 300 -300 1 100 1 250 10;
    2 100 0 300 -300 1 100 1 250 10;
    3 300 0 300 -300 1 100 1 250 10;
];
mpc.branch = [
    1 4 0 0.1 0 0 0 0 0 0 1 -360 360;
    2 4 0 0.2 0 0 0 0 0 0 1 -360 360;
    3 4 0 0.1 0 0 0 0 0 0 1 -360 360;
];
"""


@pytest.fixture
def scalar_cfg(tmp_path):
    (tmp_path / "one.m").write_text(SCALAR_CASE)
    (tmp_path / "one.yaml").write_text("generators:\n  G1: {M: 2.0, D: 1.0}\n")
    cfg = {"case": "one.m", "machines": "one.yaml", "out": "out"}
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


@pytest.fixture
def tri_cfg(tmp_path):
    (tmp_path / "tri.m").write_text(TRI_CASE)
    (tmp_path / "tri.yaml").write_text(
        "generators:\n  G1: {M: 2.0, D: 0.4}\n  G2: {M: 1.0, D: 0.2}\n  G3: {M: 3.0, D: 0.6}\n")
    cfg = {"case": "tri.m", "machines": "tri.yaml", "out": "out",
           "region": {"metric": "system-max", "r_max": 1.0},
           "model": {"type": "custom", "dim": 3,
                     "blocks": [{"type": "gaussian", "indices": [0, 1, 2],
                                 "stds": [1.0, 1.0, 1.0]}]},
           "sampler": {"sigma": 1.0, "blocks": None, "n_samples": 2000, "burn_in": 1000}}
    path = tmp_path / "tri_run.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


def small_ieee(tmp_path, **sampler):
    cfg = {"case": "ieee39", "region": {"N": 20},
           "sampler": {"n_samples": 3000, "burn_in": 2000, **sampler}, "out": "out"}
    path = tmp_path / "ieee.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


def test_demo_diamond(tmp_path, capsys):
    assert main(["demo-diamond", "--samples", "20000", "--burn-in", "5000",
                 "--out", str(tmp_path)]) == 0
    st = json.loads((tmp_path / "stats.json").read_text())
    assert abs(st["p_x_positive"] - 0.5) < 4 * st["p_x_positive_se"]
    assert (tmp_path / "diamond.csv").read_text().startswith("statistic,value,std_error")
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["command"] == "demo-diamond" and "region_digest" in man


def test_missing_case_file_exit_2(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump({"case": str(tmp_path / "nope.m"), "machines": "m.yaml"}))
    assert main(["reduce", "--config", str(path)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "FileNotFoundError"
    assert "nope.m" in err["message"]


def test_module_error_is_structured(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump({"region": {"metric": "nadir"}}))
    assert main(["region", "--config", str(path)]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError" and "nadir" in err["message"]


def test_unknown_config_key(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("smaples: 3\n")
    with pytest.raises(ConfigError):
        load_config(path)
    path.write_text("sampler: {scales: 10}\n")
    with pytest.raises(ConfigError):
        load_config(path).validate()


def test_reduce_and_region(tmp_path, capsys):
    assert main(["reduce", "--out", str(tmp_path)]) == 0
    red = json.loads((tmp_path / "reduced.json").read_text())
    assert len(red["labels"]) == 10
    assert len((tmp_path / "reduced_lines.csv").read_text().splitlines()) == 46
    assert main(["region", "--N", "100", "--out", str(tmp_path)]) == 0
    assert "2020 half-spaces" in capsys.readouterr().out


def test_trajectory_scalar(scalar_cfg, capsys):
    assert main(["trajectory", "--config", str(scalar_cfg), "--u", "4"]) == 0
    path = scalar_cfg.parent / "out" / "trajectory.csv"
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (401, 5)
    t, wdot = data[:, 0], data[:, 4]
    np.testing.assert_allclose(wdot, 2 * np.exp(-0.5 * t), rtol=1e-5)


def test_trajectory_zero_and_dimension(tmp_path, capsys):
    assert main(["trajectory", "--out", str(tmp_path), "--u", ",".join(["0"] * 10)]) == 0
    data = np.loadtxt(tmp_path / "trajectory.csv", delimiter=",", skiprows=1)
    assert not data[:, 1:].any()
    assert main(["trajectory", "--out", str(tmp_path), "--u", "1,2"]) == 1
    assert "dimension" in json.loads(capsys.readouterr().err)["message"]


def test_sample_then_trajectory_violates(tmp_path, capsys):
    cfg = small_ieee(tmp_path)
    assert main(["sample", "--config", str(cfg), "--N", "100"]) == 0
    out = tmp_path / "out"
    for name in ("samples.csv", "samples.npy", "violations.csv", "summary.csv", "stats.json",
                 "manifest.json", "region.json"):
        assert (out / name).exists(), name
    assert main(["trajectory", "--config", str(cfg), "--from-samples", str(out / "samples.npy"),
                 "--index", "17"]) == 0
    data = np.loadtxt(out / "trajectory.csv", delimiter=",", skiprows=1)
    assert np.abs(data[:, 13:]).max() > 1.0


def test_manifest_reproduces_stats(tmp_path, capsys):
    cfg = small_ieee(tmp_path)
    assert main(["sample", "--config", str(cfg), "--seed", "3"]) == 0
    out = tmp_path / "out"
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 3 and man["config"]["sampler"]["seed"] == 3
    again = tmp_path / "again"
    assert main(["sample", "--config", str(out / "manifest.json"), "--out", str(again)]) == 0
    for name in ("violations.csv", "summary.csv"):
        assert (out / name).read_bytes() == (again / name).read_bytes()


def test_report_recomputes(tmp_path, capsys):
    cfg = small_ieee(tmp_path)
    assert main(["sample", "--config", str(cfg)]) == 0
    out = tmp_path / "out"
    before = (out / "violations.csv").read_bytes()
    (out / "violations.csv").unlink()
    assert main(["report", "--config", str(cfg)]) == 0
    assert (out / "violations.csv").read_bytes() == before


def test_env_and_flag_precedence(tmp_path, monkeypatch, capsys):
    cfg = small_ieee(tmp_path, seed=1)
    monkeypatch.setenv("GHOSTROCOF_SEED", "5")
    monkeypatch.setenv("GHOSTROCOF_SAMPLES", "500")
    assert load_config(cfg).sampler["seed"] == 5
    assert main(["sample", "--config", str(cfg), "--seed", "9"]) == 0
    man = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert man["seed"] == 9
    assert man["runs"][0]["n_samples"] == 500


def test_sweep_and_chains(tmp_path, capsys):
    cfg = small_ieee(tmp_path)
    assert main(["sample", "--config", str(cfg), "--N", "5", "20", "--chains", "2",
                 "--samples", "1000"]) == 0
    out = tmp_path / "out"
    t1 = (out / "table1.csv").read_text().splitlines()
    assert t1[0].startswith("N,G1,G2") and [r.split(",")[0] for r in t1[1:]] == ["5", "20"]
    assert (out / "N5" / "manifest.json").exists()
    man = json.loads((out / "N20" / "manifest.json").read_text())
    assert man["chains"] == 2 and len(man["runs"]) == 2
    assert len(np.load(out / "N20" / "samples.npy")) == 2000


def test_system_metric_region(tri_cfg, capsys):
    assert main(["sample", "--config", str(tri_cfg)]) == 0
    out = tri_cfg.parent / "out"
    rows = (out / "violations.csv").read_text().splitlines()
    assert rows[1].startswith("system,100,")
    region = json.loads((out / "region.json").read_text())
    assert len(region["half_spaces"]) == 2


def test_console_script_exit_code(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ghostrocof.cli", "reduce", "--config",
                           str(tmp_path / "missing.yaml")], capture_output=True, text=True)
    assert proc.returncode == 2
    assert "missing.yaml" in proc.stderr
