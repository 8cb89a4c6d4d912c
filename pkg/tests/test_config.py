import json

import pytest

from sfsopt.base import ConfigError
from sfsopt.config import (
    ConfigReader,
    ExperimentConfig,
    load_config,
    line_of,
    parse_config,
)
from sfsopt.drift import DriftForm
from sfsopt.potentials import QuadraticTail, Rastrigin
from sfsopt.samplers import LangevinConfig, SfsConfig

CONFIG = """{
  "potential": {
    "name": "rastrigin",
    "params": {"dim": 2, "B": 0.5},
    "smoothing": {"R": 5.0, "delta": 1.0}
  },
  "sampler": {
    "kind": "sfs",
    "sigma": 0.05,
    "K": 100,
    "m": 200
  },
  "baseline": {"kind": "langevin", "sigma": 0.05, "step": 0.001, "steps": 20000, "init": [2, 2]},
  "n_runs": 10,
  "master_seed": 2023,
  "diagnostics": {
    "success_rate": {"tau": [0.5, 1.0]},
    "cluster_masses": {},
    "constants": {"sigmas": [0.1, 0.05], "grid_points_per_dim": 41}
  }
}
"""


def test_parse_config():
    cfg = parse_config(CONFIG)
    assert isinstance(cfg, ExperimentConfig)
    assert cfg.n_runs == 10
    assert cfg.master_seed == 2023
    assert cfg.output_dir == "results"
    assert cfg.timeout is None
    potential = cfg.potential.build()
    assert isinstance(potential, QuadraticTail)
    assert isinstance(potential.inner, Rastrigin)
    assert potential.smoothing_radius == 5.0
    assert cfg.sampler.kind == "sfs"
    assert cfg.sampler.config == SfsConfig(sigma=0.05, K=100, m=200)
    assert cfg.sampler.config.form is DriftForm.GRADIENT
    assert cfg.baseline is not None
    assert cfg.baseline.config == LangevinConfig(sigma=0.05, step=0.001, steps=20000, init=(2.0, 2.0))
    assert cfg.diagnostics.success_tau == (0.5, 1.0)
    assert cfg.diagnostics.cluster_masses.delta_prime == 0.4
    assert cfg.diagnostics.cluster_masses.tolerance is None
    assert cfg.diagnostics.constants.sigmas == (0.1, 0.05)
    assert cfg.diagnostics.constants.grid_points_per_dim == 41
    assert cfg.diagnostics.moments is None
    assert cfg.verify.laplace is None


def test_minimal_config():
    cfg = parse_config('{"potential": {"name": "quadratic"}, "sampler": {"kind": "sfs", "sigma": 1, "K": 1, "m": 1}}')
    assert cfg.n_runs == 1
    assert cfg.master_seed == 0
    assert cfg.baseline is None
    assert cfg.potential.build().dim == 1


def test_sigma_out_of_range():
    text = CONFIG.replace('"sigma": 0.05,', '"sigma": 1.5,', 1)
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.path == "sampler.sigma"
    assert info.value.line == 9
    assert str(info.value).startswith("line 9: sampler.sigma: sigma must satisfy")


def test_unknown_key():
    text = CONFIG.replace('"m": 200', '"m": 200,\n    "steps": 5')
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.path == "sampler.steps"
    assert "unknown key" in info.value.message
    assert info.value.line == 12

    with pytest.raises(ConfigError, match="unknown key 'seed'"):
        parse_config(CONFIG.replace('"n_runs": 10', '"seed": 10'))


@pytest.mark.parametrize(
    "old, new, path",
    [
        ('"name": "rastrigin"', '"name": "sphere"', "potential.name"),
        ('"kind": "sfs"', '"kind": "annealing"', "sampler.kind"),
        ('"K": 100', '"K": 0', "sampler.K"),
        ('"K": 100', '"K": 1.5', "sampler.K"),
        ('"m": 200', '"m": "many"', "sampler.m"),
        ('"n_runs": 10', '"n_runs": 0', "n_runs"),
        ('"master_seed": 2023', '"master_seed": -1', "master_seed"),
        ('"init": [2, 2]', '"init": [2, 2, 2]', "baseline.init"),
        ('"steps": 20000', '"steps": 20000, "burn_in": 20000', "baseline.burn_in"),
        ('"tau": [0.5, 1.0]', '"tau": [0.5, -1.0]', "diagnostics.success_rate.tau"),
        ('"sigmas": [0.1, 0.05]', '"sigmas": [0.1, 2.0]', "diagnostics.constants.sigmas"),
        ('"R": 5.0', '"R": -5.0', "potential.smoothing.R"),
        ('"cluster_masses": {}', '"cluster_masses": {"delta_prime": 0}', "diagnostics.cluster_masses.delta_prime"),
        ('"cluster_masses": {}', '"w2_oracle": {}', "diagnostics.w2_oracle"),
    ],
)
def test_invalid_values(old, new, path):
    assert old in CONFIG
    with pytest.raises(ConfigError) as info:
        parse_config(CONFIG.replace(old, new))
    assert info.value.path == path
    assert info.value.line is not None


def test_potential_errors():
    text = json.dumps(
        {
            "potential": {"name": "quadratic", "params": {"dim": 2, "shift": [1.0]}},
            "sampler": {"kind": "sfs", "sigma": 0.1, "K": 1, "m": 1},
        }
    )
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.path == "potential"
    text = json.dumps(
        {
            "potential": {"name": "quadratic", "params": {"shift": [3.0]}, "smoothing": {"R": 2.0}},
            "sampler": {"kind": "sfs", "sigma": 0.1, "K": 1, "m": 1},
        }
    )
    with pytest.raises(ConfigError, match="smoothing radius"):
        parse_config(text)


def test_missing_keys():
    with pytest.raises(ConfigError, match="missing required key") as info:
        parse_config('{"potential": {"name": "quadratic"}}')
    assert info.value.path == "sampler"
    with pytest.raises(ConfigError) as info:
        parse_config('{"potential": {"name": "quadratic"}, "sampler": {"kind": "sfs", "K": 1, "m": 1}}')
    assert info.value.path == "sampler.sigma"


def test_invalid_json():
    with pytest.raises(ConfigError) as info:
        parse_config('{\n  "potential": {\n    "name": "quadratic",\n  }\n}')
    assert info.value.line == 4
    assert "invalid JSON" in info.value.message
    with pytest.raises(ConfigError, match="expected an object"):
        parse_config("[1, 2]")


def verify_config(Ks=(10, 20), form="stein", sigmas=None):
    large_deviation = {} if sigmas is None else {"sigmas": sigmas}
    return json.dumps(
        {
            "potential": {"name": "double_well", "params": {"c1": 1.0, "c2": 4.0}},
            "sampler": {"kind": "sfs", "sigma": 0.1, "K": 10, "m": 10},
            "verify": {
                "laplace": {"sigma": 0.02, "sfs": {"K": 50, "form": form}},
                "large_deviation": large_deviation,
                "w2_trend": {"Ks": list(Ks), "n_runs": 50},
                "constants": {"potential": {"name": "quadratic"}, "sigma": 0.5, "radius": 2.0},
            },
        },
        indent=2,
    )


def test_verify_section():
    verify = parse_config(verify_config()).verify
    assert verify.laplace.sfs.K == 50
    assert verify.laplace.sfs.m == 200
    assert verify.laplace.sfs.form == "stein"
    assert verify.laplace.tolerance == 0.05
    assert verify.large_deviation.sigmas == (0.2, 0.1, 0.05, 0.02)
    assert verify.w2_trend.Ks == (10, 20)
    assert verify.w2_trend.form == "stein"
    assert verify.constants.potential.name == "quadratic"

    with pytest.raises(ConfigError) as info:
        parse_config(verify_config(Ks=[10]))
    assert info.value.path == "verify.w2_trend.Ks"
    with pytest.raises(ConfigError) as info:
        parse_config(verify_config(form="score"))
    assert info.value.path == "verify.laplace.sfs.form"


def test_line_of():
    assert line_of(CONFIG, "sampler.sigma") == 9
    assert line_of(CONFIG, "diagnostics.constants") == 19
    assert line_of(CONFIG, "verify") is None
    assert line_of(CONFIG, "") is None


def test_field_error():
    reader = ConfigReader(CONFIG)
    error = reader.field_error(ValueError("K must be >= 1, got 0"), "sampler", {"K": 0})
    assert error.path == "sampler.K"
    error = reader.field_error(ValueError("curvatures must be > 0"), "sampler", {"K": 0})
    assert error.path == "sampler"


def test_load_config(tmp_path):
    path = tmp_path / "experiment.json"
    path.write_text(CONFIG, encoding="utf-8")
    assert load_config(str(path)) == parse_config(CONFIG)


@pytest.mark.parametrize("sigmas", [[], [0.1, 0.0], [0.5, 1.5], [0.1, 0.2], [0.1, 0.1]])
def test_large_deviation_sigmas(sigmas):
    with pytest.raises(ConfigError) as info:
        parse_config(verify_config(sigmas=sigmas))
    assert info.value.path == "verify.large_deviation.sigmas"
    assert info.value.line is not None


def test_w2_trend_threshold_is_fixed():
    text = verify_config().replace('"n_runs": 50', '"n_runs": 50, "required": 0')
    with pytest.raises(ConfigError, match="unknown key 'required'"):
        parse_config(text)
