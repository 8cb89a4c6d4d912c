import json
import os

import pytest

from sfsopt import __version__
from sfsopt.cli import cmd_constants, cmd_run, main

EXPERIMENT = {
    "potential": {"name": "quadratic", "params": {"dim": 1, "shift": [0.5]}},
    "sampler": {"kind": "sfs", "sigma": 0.5, "K": 10, "m": 10},
    "n_runs": 6,
    "master_seed": 42,
    "diagnostics": {
        "success_rate": {"tau": [0.5]},
        "moments": {"mean": [0.5], "variance": 0.5},
        "w2_oracle": {"seed": 1},
        "constants": {"sigma": 0.5, "radius": 2.0, "grid_points_per_dim": 21},
    },
}


def write_config(tmp_path, content, name="experiment.json"):
    path = tmp_path / name
    path.write_text(json.dumps(content, indent=2), encoding="utf-8")
    return str(path)


def read_json(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def test_run(tmp_path):
    config = write_config(tmp_path, EXPERIMENT)
    out = tmp_path / "one"
    assert main(["run", "--config", config, "--out", str(out), "--workers", "1"]) == 0
    assert sorted(os.listdir(out)) == ["manifest.json", "runs.csv", "summary.json"]

    lines = (out / "runs.csv").read_text().splitlines()
    assert lines[0] == "run_index,x_0,final_value,best_value,gaussians_consumed,seed"
    assert len(lines) == 7
    assert lines[1].split(",")[0] == "0"
    assert lines[1].split(",")[4] == str(10 * 11)

    summary = read_json(out / "summary.json")
    assert summary["n_runs"] == 6
    assert summary["sampler"] == "sfs"
    assert summary["gaussians_consumed"] == 6 * 10 * 11
    assert summary["success_rate"][0]["tau"] == 0.5
    assert summary["w2_oracle"]["method"] == "exact_1d"
    assert summary["w2_oracle"]["n_samples"] == 6
    assert "passed" in summary["moments"]
    assert summary["constants"][0]["sigma"] == 0.5

    manifest = read_json(out / "manifest.json")
    assert manifest["command"] == "run"
    assert manifest["tool_version"] == __version__
    assert manifest["master_seed"] == 42
    assert len(manifest["seeds"]["sampler"]) == 6
    assert len(manifest["config_sha256"]) == 64
    assert manifest["outputs"] == ["manifest.json", "runs.csv", "summary.json"]


def test_run_is_reproducible(tmp_path):
    config = write_config(tmp_path, EXPERIMENT)
    assert cmd_run(config, out=str(tmp_path / "a"), workers=1) == 0
    assert cmd_run(config, out=str(tmp_path / "b"), workers=2) == 0
    first = (tmp_path / "a" / "runs.csv").read_bytes()
    assert first == (tmp_path / "b" / "runs.csv").read_bytes()

    assert cmd_run(config, out=str(tmp_path / "c"), workers=1, seed=43) == 0
    assert (tmp_path / "c" / "runs.csv").read_bytes() != first
    assert read_json(tmp_path / "c" / "manifest.json")["master_seed"] == 43


def test_output_dir_from_config(tmp_path):
    out = tmp_path / "from_config"
    config = write_config(tmp_path, dict(EXPERIMENT, output_dir=str(out), diagnostics={}))
    assert main(["run", "--config", config, "--workers", "1"]) == 0
    assert (out / "runs.csv").exists()


def test_config_errors(tmp_path):
    bad = dict(EXPERIMENT, sampler={"kind": "sfs", "sigma": 1.5, "K": 10, "m": 10})
    config = write_config(tmp_path, bad)
    out = tmp_path / "out"
    assert main(["run", "--config", config, "--out", str(out)]) == 2
    assert not out.exists()
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    config = write_config(tmp_path, EXPERIMENT)
    assert main(["run", "--config", config, "--workers", "0"]) == 2
    assert main(["run", "--config", config, "--seed", "-1", "--out", str(out)]) == 2
    # compare needs a baseline
    assert main(["compare", "--config", config, "--out", str(out), "--workers", "1"]) == 2
    with pytest.raises(SystemExit):
        main(["run"])


def test_run_failure(tmp_path):
    diverging = dict(
        EXPERIMENT,
        sampler={"kind": "langevin", "sigma": 0.1, "step": 3.0, "steps": 5000},
        diagnostics={},
    )
    config = write_config(tmp_path, diverging)
    assert main(["run", "--config", config, "--out", str(tmp_path / "out"), "--workers", "1"]) == 1


def test_compare(tmp_path):
    experiment = dict(
        EXPERIMENT,
        baseline={"kind": "langevin", "sigma": 0.5, "step": 0.01, "steps": 100, "init": [2.0]},
        diagnostics={"success_rate": {"tau": [0.5]}},
    )
    config = write_config(tmp_path, experiment)
    out = tmp_path / "out"
    assert main(["compare", "--config", config, "--out", str(out), "--workers", "1"]) == 0
    assert sorted(os.listdir(out)) == [
        "comparison.json",
        "manifest.json",
        "runs_baseline.csv",
        "runs_sampler.csv",
        "scatter.csv",
    ]
    comparison = read_json(out / "comparison.json")
    assert comparison["sampler"]["kind"] == "sfs"
    assert comparison["baseline"]["kind"] == "langevin"
    low, high = comparison["mean_difference_ci95"]
    assert low <= comparison["mean_difference"] <= high
    assert comparison["success_rate"][0]["baseline"]["n_runs"] == 6

    scatter = (out / "scatter.csv").read_text().splitlines()
    assert scatter[0] == "sampler,run_index,x_0,value"
    assert len(scatter) == 13
    assert scatter[1].startswith("sfs,0,")
    assert scatter[7].startswith("langevin,0,")

    manifest = read_json(out / "manifest.json")
    assert set(manifest["seeds"]) == {"sampler", "baseline"}
    assert not set(manifest["seeds"]["sampler"]) & set(manifest["seeds"]["baseline"])


def test_verify(tmp_path):
    experiment = {
        "potential": {"name": "double_well", "params": {"c1": 1.0, "c2": 4.0}},
        "sampler": {"kind": "sfs", "sigma": 0.1, "K": 10, "m": 10},
        "verify": {
            "laplace": {"sigma": 0.02, "samples": 20000},
            "large_deviation": {"sigmas": [0.1, 0.05, 0.02], "tolerance": 0.5, "grid_points": 4001},
            "w2_trend": {"sigma": 0.2, "m": 10, "Ks": [2, 4], "n_runs": 20},
            "constants": {
                "potential": {"name": "rastrigin", "params": {"dim": 1}},
                "sigmas": [1.0, 0.5, 0.1],
                "radius": 5.0,
                "grid_points_per_dim": 101,
            },
        },
    }
    config = write_config(tmp_path, experiment)
    out = tmp_path / "out"
    assert main(["verify", "--config", config, "--out", str(out), "--workers", "1"]) == 0
    report = read_json(out / "verification.json")
    checks = {c["name"]: c for c in report["checks"]}
    assert set(checks) == {"laplace_weights", "large_deviation", "w2_trend", "constants"}
    assert checks["laplace_weights"]["passed"]
    assert checks["large_deviation"]["monotone"]
    assert checks["large_deviation"]["passed"]
    assert checks["w2_trend"]["form"] == "stein"
    assert "passed" in checks["w2_trend"]
    assert len(checks["w2_trend"]["distances"]) == 2
    assert checks["constants"]["ratio_log_increasing"]
    assert checks["constants"]["passed"]
    slopes = (out / "slopes.csv").read_text().splitlines()
    assert slopes[0] == "sigma,sigma_log_tail_mass"
    assert len(slopes) == 4
    manifest = read_json(out / "manifest.json")
    assert "w2_trend_K2" in manifest["seeds"]


def test_verify_without_checks(tmp_path):
    config = write_config(tmp_path, EXPERIMENT)
    assert main(["verify", "--config", config, "--out", str(tmp_path / "out")]) == 2


def test_constants(tmp_path):
    config = write_config(tmp_path, EXPERIMENT)
    out = tmp_path / "out"
    assert cmd_constants(config, out=str(out)) == 0
    content = read_json(out / "constants.json")
    (report,) = content["reports"]
    assert report["radius"] == 2.0
    # max of x·a - a²/2 over |x| <= 2 with a = 0.5
    assert report["M1R"] == pytest.approx(0.875)
    assert report["C2_convention"] == "sqrt(d) * C1"
    # K and m fall back to the configured sampler
    assert report["K"] == 10 and report["m"] == 10
