import json
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from sphere_fheat import cli
from sphere_fheat.config import load_config, resolve, validate
from sphere_fheat.errors import QuadratureError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write_cfg(tmp_path, cfg, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return str(p)


def spectrum_cfg(**model):
    m = {"hurst": 0.75, "alpha": 1.0, "L": 128, "d0": 0.0}
    m.update(model)
    return {"experiment": "spectrum", "seed": 1, "model": m, "options": {"t": 1.0, "window": [8, 64], "mode": "analytic"}}


def spatial_cfg(alpha, hurst):
    return {"experiment": "variogram", "seed": 1, "model": {"hurst": hurst, "alpha": alpha, "L": 256},
            "options": {"kind": "spatial"}}


# ---- run ---------------------------------------------------------------------------------------


def test_spectrum_run_reports_slope(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(CONFIGS / "spectrum.yaml"), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["passed"] is True
    assert abs(report["result"]["fit"]["slope"] + 4.0) <= 0.1
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["toolkit"] == "sphere_fheat"
    assert set(manifest["files"]) == {"report.json", "spectrum.csv"}
    assert manifest["config"]["options"]["tolerance"] == 0.1
    assert not any(p.name.startswith(".") for p in out.iterdir())


def test_zero_replicates_is_config_error_without_files(tmp_path):
    cfg = load_config(CONFIGS / "sample.yaml")
    cfg["replicates"] = 0
    out = tmp_path / "out"
    assert cli.main(["run", "--config", write_cfg(tmp_path, cfg), "--out", str(out)]) == cli.EXIT_CONFIG
    assert not out.exists() or not any(out.iterdir())


def test_rerun_is_byte_identical(tmp_path):
    cfg = str(CONFIGS / "sample.yaml")
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", "--config", cfg, "--out", str(a), "--seed", "99"]) == 0
    assert cli.main(["run", "--config", cfg, "--out", str(b), "--seed", "99", "--workers", "2"]) == 0
    fa = json.loads((a / "manifest.json").read_text())["files"]
    fb = json.loads((b / "manifest.json").read_text())["files"]
    csvs = [n for n in fa if n.endswith(".csv")]
    assert csvs
    assert {n: fa[n] for n in csvs} == {n: fb[n] for n in csvs}
    for n in csvs:
        assert (a / n).read_bytes() == (b / n).read_bytes()


def test_seed_changes_output(tmp_path):
    cfg = str(CONFIGS / "sample.yaml")
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "1"]) == 0
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "2"]) == 0
    assert (tmp_path / "a" / "coefficients.csv").read_bytes() != (tmp_path / "b" / "coefficients.csv").read_bytes()


def test_assertion_failure_leaves_no_manifest(tmp_path):
    out = tmp_path / "out"
    cfg = write_cfg(tmp_path, spectrum_cfg())
    assert cli.main(["run", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "manifest.json").exists()
    # a vanishing tolerance makes the same fit fail; the stale manifest must go
    assert cli.main(["run", "--config", cfg, "--out", str(out), "--tolerance-scale", "1e-9"]) == cli.EXIT_ASSERTION
    assert not (out / "manifest.json").exists()
    assert json.loads((out / "report.json").read_text())["passed"] is False


def test_precondition_exit(tmp_path):
    cfg = {"experiment": "noise", "seed": 3, "replicates": 10, "model": {"hurst": 0.75, "alpha": 2.0, "L": 4}}
    out = tmp_path / "out"
    assert cli.main(["run", "--config", write_cfg(tmp_path, cfg), "--out", str(out)]) == cli.EXIT_PRECONDITION
    assert not (out / "manifest.json").exists()


def test_numerical_failure_exit(tmp_path, monkeypatch):
    def boom(cfg):
        raise QuadratureError("did not converge")

    monkeypatch.setattr(cli, "run_experiment", boom)
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(CONFIGS / "spectrum.yaml"), "--out", str(out)]) == cli.EXIT_NUMERICAL
    assert not (out / "manifest.json").exists()


def test_missing_config_and_bad_seed(tmp_path):
    assert cli.main(["run", "--config", str(tmp_path / "nope.yaml")]) == cli.EXIT_CONFIG
    assert cli.main(["run", "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    cfg = spectrum_cfg()
    cfg["seed"] = -1
    assert cli.main(["validate", "--config", write_cfg(tmp_path, cfg)]) == cli.EXIT_CONFIG
    del cfg["seed"]
    assert cli.main(["validate", "--config", write_cfg(tmp_path, cfg)]) == cli.EXIT_CONFIG


# ---- validate ----------------------------------------------------------------------------------


def test_validate_spatial_accepts_small_gamma(tmp_path, capsys):
    assert cli.main(["validate", "--config", write_cfg(tmp_path, spatial_cfg(0.5, 0.6))]) == 0
    assert "OK" in capsys.readouterr().out


def test_validate_spatial_rejects_large_gamma(tmp_path, capsys):
    assert cli.main(["validate", "--config", write_cfg(tmp_path, spatial_cfg(2.5, 0.9))]) == cli.EXIT_PRECONDITION
    assert "gamma = 2.05 not in (0, 1)" in capsys.readouterr().err


def test_validate_rejects_rough_initial_data_for_modulus(tmp_path, capsys):
    cfg = load_config(CONFIGS / "modulus_temporal.yaml")
    cfg["model"].update({"d0": 1.0, "beta": 4.5})
    assert cli.main(["validate", "--config", write_cfg(tmp_path, cfg)]) == cli.EXIT_PRECONDITION
    assert "beta > 4H + 2 = 5" in capsys.readouterr().err


def test_validate_lists_every_problem():
    cfg = {"experiment": "noise", "seed": 1, "replicates": 0, "workers": 0, "model": {"hurst": 0.75, "alpha": 1.0, "L": 4}}
    errors, pre = validate(cfg)
    assert len(errors) == 2
    assert len(pre) == 1


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_validate(path):
    errors, pre = validate(load_config(path))
    assert errors == [] and pre == []


def test_resolve_fills_defaults():
    full = resolve(spectrum_cfg())
    assert full["options"]["tolerance"] == 0.1
    assert full["model"]["upsilon"] is not None
    assert full["workers"] == 1


# ---- entry point ---------------------------------------------------------------------------------


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "sphere_fheat.cli", "validate", "--config", str(CONFIGS / "spectrum.yaml")],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert r.stdout.strip() == "OK"


def test_suite_subset(tmp_path):
    out = tmp_path / "suite"
    assert cli.main(["suite", "--criteria", "1", "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert [c["id"] for c in rep["criteria"]] == [1]
    assert (out / "acceptance.csv").read_text().splitlines()[0] == "criterion,name,passed,seconds"
    assert (out / "manifest.json").exists()
