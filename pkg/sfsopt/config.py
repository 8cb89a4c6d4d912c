"""
Experiment configuration.

An experiment is one JSON object; unknown keys anywhere are rejected and every
error is reported as a `ConfigError` naming the dotted key path and, when it can
be located, the line of the config file. Omitted keys take the defaults of the
dataclasses below, which are the complete list of defaults.

    {
      "potential": {"name": "rastrigin", "params": {"dim": 2, "B": 0, "C": 0},
                    "smoothing": {"R": 5.0, "delta": 1.0}},
      "sampler": {"kind": "sfs", "sigma": 0.01, "K": 200, "m": 1000, "form": "gradient"},
      "baseline": {"kind": "langevin", "sigma": 0.01, "step": 0.001, "steps": 200000},
      "n_runs": 50,
      "master_seed": 2023,
      "output_dir": "results",
      "timeout": null,
      "diagnostics": {"success_rate": {"tau": [0.5]}, ...},
      "verify": {"laplace": {...}, "large_deviation": {...}, ...}
    }
"""
from __future__ import annotations

import dataclasses
import json
import re
import typing as tp

from .base import ConfigError
from .drift import DriftForm
from .potentials import Potential, Quadratic, registry
from .rng import check_seed
from .samplers import LangevinConfig, SfsConfig

SAMPLER_CONFIG = tp.Union[SfsConfig, LangevinConfig]
MISSING: tp.Any = object()


@dataclasses.dataclass(frozen=True)
class SmoothingSpec:
    R: float | None = None
    delta: float | None = None


@dataclasses.dataclass(frozen=True)
class PotentialSpec:
    name: str
    params: tp.Mapping[str, tp.Any] = dataclasses.field(default_factory=dict)
    smoothing: SmoothingSpec | None = None

    def build(self) -> Potential:
        smoothing = None
        if self.smoothing is not None:
            smoothing = {"R": self.smoothing.R, "delta": self.smoothing.delta}
        return registry.build(self.name, self.params, smoothing)


@dataclasses.dataclass(frozen=True)
class SamplerSpec:
    kind: str
    config: SAMPLER_CONFIG


@dataclasses.dataclass(frozen=True)
class MomentsSpec:
    mean: tp.Tuple[float, ...]
    variance: float
    n_sigma: float = 3.0
    rel_tol: float = 0.1


@dataclasses.dataclass(frozen=True)
class ClusterSpec:
    delta_prime: float = 0.4
    tolerance: float | None = None


@dataclasses.dataclass(frozen=True)
class W2OracleSpec:
    samples: int | None = None
    seed: int = 0
    n_projections: int = 64


@dataclasses.dataclass(frozen=True)
class ConstantsSpec:
    potential: PotentialSpec | None = None
    sigma: float | None = None
    sigmas: tp.Tuple[float, ...] = ()
    grid_points_per_dim: int = 101
    radius: float | None = None
    tau: float = 0.5
    epsilon: float = 0.25
    K: int | None = None
    m: int | None = None


@dataclasses.dataclass(frozen=True)
class DiagnosticsSpec:
    success_tau: tp.Tuple[float, ...] = ()
    moments: MomentsSpec | None = None
    cluster_masses: ClusterSpec | None = None
    w2_oracle: W2OracleSpec | None = None
    constants: ConstantsSpec | None = None


@dataclasses.dataclass(frozen=True)
class SfsClusterCheck:
    K: int = 100
    m: int = 200
    n_runs: int = 2000
    tolerance: float = 0.15
    form: str = "gradient"


@dataclasses.dataclass(frozen=True)
class LaplaceCheck:
    potential: PotentialSpec | None = None
    sigma: float = 0.02
    samples: int = 100000
    seed: int = 0
    delta_prime: float = 0.4
    tolerance: float = 0.05
    sfs: SfsClusterCheck | None = None


@dataclasses.dataclass(frozen=True)
class LargeDeviationCheck:
    potential: PotentialSpec | None = None
    tau: float = 0.5
    sigmas: tp.Tuple[float, ...] = (0.2, 0.1, 0.05, 0.02)
    tolerance: float = 0.15
    grid_points: int = 20001


@dataclasses.dataclass(frozen=True)
class W2TrendCheck:
    potential: PotentialSpec | None = None
    sigma: float = 0.1
    m: int = 100
    Ks: tp.Tuple[int, ...] = (25, 50, 100, 200, 400)
    n_runs: int = 2000
    seed: int = 0
    form: str = "stein"


@dataclasses.dataclass(frozen=True)
class VerifySpec:
    laplace: LaplaceCheck | None = None
    large_deviation: LargeDeviationCheck | None = None
    w2_trend: W2TrendCheck | None = None
    constants: ConstantsSpec | None = None


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    potential: PotentialSpec
    sampler: SamplerSpec
    baseline: SamplerSpec | None = None
    n_runs: int = 1
    master_seed: int = 0
    output_dir: str = "results"
    timeout: float | None = None
    diagnostics: DiagnosticsSpec = DiagnosticsSpec()
    verify: VerifySpec = VerifySpec()


def line_of(text: str, path: str) -> int | None:
    """1-based line of the last key of dotted `path` in JSON `text`, or None."""
    position = 0
    for key in path.split("."):
        match = re.compile(rf'"{re.escape(key)}"\s*:').search(text, position)
        if match is None:
            return None
        position = match.start()
    return text.count("\n", 0, position) + 1 if path else None


class ConfigReader:
    def __init__(self, text: str) -> None:
        self.text = text

    def error(self, message: str, path: str) -> ConfigError:
        return ConfigError(message, path, line_of(self.text, path))

    def mapping(self, value: tp.Any, path: str, allowed: tp.Iterable[str]) -> tp.Dict[str, tp.Any]:
        if not isinstance(value, dict):
            raise self.error(f"expected an object, got {type(value).__name__}", path)
        unknown = sorted(set(value) - set(allowed))
        if unknown:
            key = unknown[0]
            raise self.error(f"unknown key {key!r}", self.join(path, key))
        return value

    @staticmethod
    def join(path: str, key: str) -> str:
        return f"{path}.{key}" if path else key

    def number(
        self,
        data: tp.Mapping[str, tp.Any],
        key: str,
        path: str,
        default: tp.Any = MISSING,
        positive: bool = False,
    ) -> tp.Any:
        full = self.join(path, key)
        if key not in data or data[key] is None:
            if default is MISSING:
                raise self.error("missing required key", full)
            return default
        value = data[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.error(f"expected a number, got {value!r}", full)
        if positive and value <= 0:
            raise self.error(f"must be > 0, got {value}", full)
        return float(value)

    def integer(
        self,
        data: tp.Mapping[str, tp.Any],
        key: str,
        path: str,
        default: tp.Any = MISSING,
        minimum: int | None = None,
    ) -> tp.Any:
        full = self.join(path, key)
        if key not in data or data[key] is None:
            if default is MISSING:
                raise self.error("missing required key", full)
            return default
        value = data[key]
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.error(f"expected an integer, got {value!r}", full)
        if minimum is not None and value < minimum:
            raise self.error(f"must be >= {minimum}, got {value}", full)
        return value

    def numbers(
        self,
        data: tp.Mapping[str, tp.Any],
        key: str,
        path: str,
        default: tp.Any = MISSING,
        integer: bool = False,
    ) -> tp.Any:
        full = self.join(path, key)
        if key not in data or data[key] is None:
            if default is MISSING:
                raise self.error("missing required key", full)
            return default
        value = data[key]
        if not isinstance(value, list):
            value = [value]
        kind = int if integer else (int, float)
        if any(isinstance(v, bool) or not isinstance(v, kind) for v in value):
            raise self.error(f"expected a list of {'integers' if integer else 'numbers'}", full)
        return tuple(int(v) if integer else float(v) for v in value)

    def string(
        self, data: tp.Mapping[str, tp.Any], key: str, path: str, default: tp.Any = MISSING
    ) -> tp.Any:
        full = self.join(path, key)
        if key not in data or data[key] is None:
            if default is MISSING:
                raise self.error("missing required key", full)
            return default
        if not isinstance(data[key], str):
            raise self.error(f"expected a string, got {data[key]!r}", full)
        return data[key]

    def field_error(self, e: ValueError, path: str, data: tp.Mapping[str, tp.Any]) -> ConfigError:
        # validation messages start with the offending field name
        field = str(e).split(" ", 1)[0]
        return self.error(str(e), self.join(path, field) if field in data else path)

    def potential(self, value: tp.Any, path: str) -> PotentialSpec:
        data = self.mapping(value, path, ("name", "params", "smoothing"))
        name = self.string(data, "name", path)
        if name not in registry:
            raise self.error(
                f"unknown potential {name!r}, expected one of {sorted(registry.builders)}",
                self.join(path, "name"),
            )
        params = data.get("params") or {}
        if not isinstance(params, dict):
            raise self.error("expected an object", self.join(path, "params"))
        smoothing = None
        if data.get("smoothing") is not None:
            smoothing_path = self.join(path, "smoothing")
            sdata = self.mapping(data["smoothing"], smoothing_path, ("R", "delta"))
            smoothing = SmoothingSpec(
                R=self.number(sdata, "R", smoothing_path, None, positive=True),
                delta=self.number(sdata, "delta", smoothing_path, None, positive=True),
            )
        spec = PotentialSpec(name=name, params=dict(params), smoothing=smoothing)
        try:
            spec.build()
        except ValueError as e:
            raise self.error(str(e), path) from e
        return spec

    def sampler(self, value: tp.Any, path: str) -> SamplerSpec:
        if not isinstance(value, dict):
            raise self.error("expected an object", path)
        kind = self.string(value, "kind", path)
        if kind == "sfs":
            data = self.mapping(value, path, ("kind", "sigma", "K", "m", "form"))
            kwargs: tp.Dict[str, tp.Any] = dict(
                sigma=self.number(data, "sigma", path),
                K=self.integer(data, "K", path),
                m=self.integer(data, "m", path),
                form=self.string(data, "form", path, "gradient"),
            )
            factory: tp.Callable[..., SAMPLER_CONFIG] = SfsConfig
        elif kind == "langevin":
            data = self.mapping(
                value,
                path,
                ("kind", "sigma", "step", "steps", "burn_in", "init", "init_spread"),
            )
            kwargs = dict(
                sigma=self.number(data, "sigma", path),
                step=self.number(data, "step", path),
                steps=self.integer(data, "steps", path),
                burn_in=self.integer(data, "burn_in", path, 0),
                init=self.numbers(data, "init", path, None),
                init_spread=self.number(data, "init_spread", path, 0.0),
            )
            factory = LangevinConfig
        else:
            raise self.error(
                f"unknown sampler kind {kind!r}, expected 'sfs' or 'langevin'",
                self.join(path, "kind"),
            )
        try:
            config = factory(**kwargs)
        except ValueError as e:
            raise self.field_error(e, path, data) from e
        return SamplerSpec(kind=kind, config=config)

    def constants(self, value: tp.Any, path: str, with_potential: bool) -> ConstantsSpec:
        allowed = ["sigma", "sigmas", "grid_points_per_dim", "radius", "tau", "epsilon", "K", "m"]
        if with_potential:
            allowed.append("potential")
        data = self.mapping(value, path, allowed)
        spec = ConstantsSpec(
            potential=self.potential(data["potential"], self.join(path, "potential"))
            if data.get("potential") is not None
            else None,
            sigma=self.number(data, "sigma", path, None),
            sigmas=self.numbers(data, "sigmas", path, ()),
            grid_points_per_dim=self.integer(data, "grid_points_per_dim", path, 101, minimum=3),
            radius=self.number(data, "radius", path, None, positive=True),
            tau=self.number(data, "tau", path, 0.5, positive=True),
            epsilon=self.number(data, "epsilon", path, 0.25, positive=True),
            K=self.integer(data, "K", path, None, minimum=1),
            m=self.integer(data, "m", path, None, minimum=1),
        )
        if spec.epsilon >= spec.tau:
            raise self.error(
                f"epsilon must be < tau, got epsilon={spec.epsilon}, tau={spec.tau}",
                self.join(path, "epsilon"),
            )
        sigmas = [("sigma", spec.sigma)] + [("sigmas", s) for s in spec.sigmas]
        for key, sigma in sigmas:
            if sigma is not None and not 0 < sigma <= 1:
                raise self.error(
                    f"sigma must satisfy 0 < sigma <= 1, got {sigma}", self.join(path, key)
                )
        return spec

    def diagnostics(self, value: tp.Any, path: str, potential: Potential) -> DiagnosticsSpec:
        data = self.mapping(
            value, path, ("success_rate", "moments", "cluster_masses", "w2_oracle", "constants")
        )
        taus: tp.Tuple[float, ...] = ()
        if data.get("success_rate") is not None:
            sub = self.join(path, "success_rate")
            sdata = self.mapping(data["success_rate"], sub, ("tau",))
            taus = self.numbers(sdata, "tau", sub)
            if any(t <= 0 for t in taus):
                raise self.error("every tau must be > 0", self.join(sub, "tau"))
        moments = None
        if data.get("moments") is not None:
            sub = self.join(path, "moments")
            mdata = self.mapping(data["moments"], sub, ("mean", "variance", "n_sigma", "rel_tol"))
            moments = MomentsSpec(
                mean=self.numbers(mdata, "mean", sub),
                variance=self.number(mdata, "variance", sub, positive=True),
                n_sigma=self.number(mdata, "n_sigma", sub, 3.0, positive=True),
                rel_tol=self.number(mdata, "rel_tol", sub, 0.1, positive=True),
            )
            if len(moments.mean) not in (1, potential.dim):
                raise self.error(
                    f"mean has {len(moments.mean)} coordinates, potential dim is {potential.dim}",
                    self.join(sub, "mean"),
                )
        clusters = None
        if data.get("cluster_masses") is not None:
            sub = self.join(path, "cluster_masses")
            cdata = self.mapping(data["cluster_masses"], sub, ("delta_prime", "tolerance"))
            clusters = ClusterSpec(
                delta_prime=self.number(cdata, "delta_prime", sub, 0.4, positive=True),
                tolerance=self.number(cdata, "tolerance", sub, None, positive=True),
            )
            if not potential.minima:
                raise self.error("potential lists no minima", sub)
        w2 = None
        if data.get("w2_oracle") is not None:
            sub = self.join(path, "w2_oracle")
            wdata = self.mapping(data["w2_oracle"], sub, ("samples", "seed", "n_projections"))
            w2 = W2OracleSpec(
                samples=self.integer(wdata, "samples", sub, None, minimum=2),
                seed=self.integer(wdata, "seed", sub, 0, minimum=0),
                n_projections=self.integer(wdata, "n_projections", sub, 64, minimum=16),
            )
            if potential.dim != 1 and not isinstance(potential, Quadratic):
                raise self.error(
                    "oracle samples exist only for 1-D potentials and the quadratic target", sub
                )
        constants = None
        if data.get("constants") is not None:
            constants = self.constants(data["constants"], self.join(path, "constants"), False)
        return DiagnosticsSpec(
            success_tau=taus,
            moments=moments,
            cluster_masses=clusters,
            w2_oracle=w2,
            constants=constants,
        )

    def optional_potential(self, data: tp.Mapping[str, tp.Any], path: str) -> PotentialSpec | None:
        if data.get("potential") is None:
            return None
        return self.potential(data["potential"], self.join(path, "potential"))

    def verify(self, value: tp.Any, path: str) -> VerifySpec:
        data = self.mapping(value, path, ("laplace", "large_deviation", "w2_trend", "constants"))
        laplace = None
        if data.get("laplace") is not None:
            sub = self.join(path, "laplace")
            ldata = self.mapping(
                data["laplace"],
                sub,
                ("potential", "sigma", "samples", "seed", "delta_prime", "tolerance", "sfs"),
            )
            sfs = None
            if ldata.get("sfs") is not None:
                ssub = self.join(sub, "sfs")
                sdata = self.mapping(ldata["sfs"], ssub, ("K", "m", "n_runs", "tolerance", "form"))
                sfs = SfsClusterCheck(
                    K=self.integer(sdata, "K", ssub, 100, minimum=1),
                    m=self.integer(sdata, "m", ssub, 200, minimum=1),
                    n_runs=self.integer(sdata, "n_runs", ssub, 2000, minimum=1),
                    tolerance=self.number(sdata, "tolerance", ssub, 0.15, positive=True),
                    form=self.form(sdata, ssub),
                )
            laplace = LaplaceCheck(
                potential=self.optional_potential(ldata, sub),
                sigma=self.sigma(ldata, sub, 0.02),
                samples=self.integer(ldata, "samples", sub, 100000, minimum=2),
                seed=self.integer(ldata, "seed", sub, 0, minimum=0),
                delta_prime=self.number(ldata, "delta_prime", sub, 0.4, positive=True),
                tolerance=self.number(ldata, "tolerance", sub, 0.05, positive=True),
                sfs=sfs,
            )
        large_deviation = None
        if data.get("large_deviation") is not None:
            sub = self.join(path, "large_deviation")
            ddata = self.mapping(
                data["large_deviation"],
                sub,
                ("potential", "tau", "sigmas", "tolerance", "grid_points"),
            )
            large_deviation = LargeDeviationCheck(
                potential=self.optional_potential(ddata, sub),
                tau=self.number(ddata, "tau", sub, 0.5, positive=True),
                sigmas=self.numbers(ddata, "sigmas", sub, (0.2, 0.1, 0.05, 0.02)),
                tolerance=self.number(ddata, "tolerance", sub, 0.15, positive=True),
                grid_points=self.integer(ddata, "grid_points", sub, 20001, minimum=1000),
            )
            sigmas = large_deviation.sigmas
            if not sigmas or any(not 0 < s <= 1 for s in sigmas):
                raise self.error(
                    f"every sigma must satisfy 0 < sigma <= 1, got {list(sigmas)}",
                    self.join(sub, "sigmas"),
                )
            if any(b >= a for a, b in zip(sigmas, sigmas[1:])):
                raise self.error(
                    f"sigmas must be strictly decreasing, got {list(sigmas)}",
                    self.join(sub, "sigmas"),
                )
        trend = None
        if data.get("w2_trend") is not None:
            sub = self.join(path, "w2_trend")
            tdata = self.mapping(
                data["w2_trend"],
                sub,
                (
                    "potential",
                    "sigma",
                    "m",
                    "Ks",
                    "n_runs",
                    "seed",
                    "form",
                ),
            )
            trend = W2TrendCheck(
                potential=self.optional_potential(tdata, sub),
                sigma=self.sigma(tdata, sub, 0.1),
                m=self.integer(tdata, "m", sub, 100, minimum=1),
                Ks=self.numbers(tdata, "Ks", sub, (25, 50, 100, 200, 400), integer=True),
                n_runs=self.integer(tdata, "n_runs", sub, 2000, minimum=2),
                seed=self.integer(tdata, "seed", sub, 0, minimum=0),
                form=self.form(tdata, sub, DriftForm.STEIN.value),
            )
            if len(trend.Ks) < 2 or any(K < 1 for K in trend.Ks):
                raise self.error("need at least two step counts, each >= 1", self.join(sub, "Ks"))
        constants = None
        if data.get("constants") is not None:
            constants = self.constants(data["constants"], self.join(path, "constants"), True)
        return VerifySpec(
            laplace=laplace,
            large_deviation=large_deviation,
            w2_trend=trend,
            constants=constants,
        )

    def form(
        self, data: tp.Mapping[str, tp.Any], path: str, default: str = DriftForm.GRADIENT.value
    ) -> str:
        value = self.string(data, "form", path, default)
        try:
            DriftForm.parse(value)
        except ValueError as e:
            raise self.error(str(e), self.join(path, "form")) from e
        return value

    def sigma(self, data: tp.Mapping[str, tp.Any], path: str, default: float) -> float:
        sigma = self.number(data, "sigma", path, default)
        if not 0 < sigma <= 1:
            raise self.error(
                f"sigma must satisfy 0 < sigma <= 1, got {sigma}", self.join(path, "sigma")
            )
        return sigma

    def experiment(self, value: tp.Any) -> ExperimentConfig:
        data = self.mapping(
            value,
            "",
            (
                "potential",
                "sampler",
                "baseline",
                "n_runs",
                "master_seed",
                "output_dir",
                "timeout",
                "diagnostics",
                "verify",
            ),
        )
        if data.get("potential") is None:
            raise self.error("missing required key", "potential")
        if data.get("sampler") is None:
            raise self.error("missing required key", "sampler")
        potential_spec = self.potential(data["potential"], "potential")
        potential = potential_spec.build()
        master_seed = self.integer(data, "master_seed", "", 0, minimum=0)
        try:
            check_seed(master_seed)
        except ValueError as e:
            raise self.error(str(e), "master_seed") from e
        baseline = None
        if data.get("baseline") is not None:
            baseline = self.sampler(data["baseline"], "baseline")
        sampler = self.sampler(data["sampler"], "sampler")
        for name, spec in (("sampler", sampler), ("baseline", baseline)):
            init = getattr(spec.config, "init", None) if spec else None
            if init is not None and len(init) != potential.dim:
                raise self.error(
                    f"init has {len(init)} coordinates, potential dim is {potential.dim}",
                    f"{name}.init",
                )
        return ExperimentConfig(
            potential=potential_spec,
            sampler=sampler,
            baseline=baseline,
            n_runs=self.integer(data, "n_runs", "", 1, minimum=1),
            master_seed=master_seed,
            output_dir=self.string(data, "output_dir", "", "results"),
            timeout=self.number(data, "timeout", "", None, positive=True),
            diagnostics=self.diagnostics(data["diagnostics"], "diagnostics", potential)
            if data.get("diagnostics") is not None
            else DiagnosticsSpec(),
            verify=self.verify(data["verify"], "verify")
            if data.get("verify") is not None
            else VerifySpec(),
        )


def parse_config(text: str) -> ExperimentConfig:
    try:
        value = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e.msg}", "", e.lineno) from e
    return ConfigReader(text).experiment(value)


def load_config(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read())
