"""
Batch experiment runner.

    sfsopt run      --config cfg.json   runs.csv, summary.json, manifest.json
    sfsopt compare  --config cfg.json   runs_sampler.csv, runs_baseline.csv, scatter.csv,
                                        comparison.json, manifest.json
    sfsopt verify   --config cfg.json   verification.json, slopes.csv, manifest.json
    sfsopt constants --config cfg.json  constants.json, manifest.json

Exit codes: 0 on success, 2 on an invalid or unreadable config, 1 on any other
failure. `verify` exits 0 even when a check fails; the verdicts are in
verification.json.
"""
from __future__ import annotations

import argparse
import dataclasses
import datetime
import hashlib
import logging
import math
import os
import time
import typing as tp

import numpy as np

from . import __version__
from .base import ConfigError, ResultCodec, RunResult
from .config import ConstantsSpec, ExperimentConfig, SamplerSpec, parse_config
from .diagnostics import (
    cluster_masses,
    evaluate_theorem35_bound,
    evaluate_theorem37_bound,
    gaussian_moment_test,
    large_deviation_slope,
    success_rate,
    w2_exact_1d,
    w2_sliced,
    w2_trend,
)
from .gibbs_oracle import (
    GibbsSpec,
    build_oracle_1d,
    compute_constants,
    laplace_weights,
    sample_oracle,
)
from .potentials import Potential, Quadratic
from .rng import check_seed, derive_seed, make_generator
from .samplers import LangevinConfig, SfsConfig, run_batch

logger = logging.getLogger("sfsopt")

# stream id of the baseline batch in `compare`, far from any run index
BASELINE_STREAM = 2**31


@dataclasses.dataclass
class Context:
    config: ExperimentConfig
    config_sha256: str
    out_dir: str
    workers: int
    outputs: tp.List[str] = dataclasses.field(default_factory=list)
    seeds: tp.Dict[str, tp.List[int]] = dataclasses.field(default_factory=dict)

    def write(self, name: str, content: str) -> str:
        path = os.path.join(self.out_dir, name)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(content)
        self.outputs.append(name)
        logger.info(f"Wrote {path}")
        return path

    def batch(self, potential: Potential, cfg: tp.Any, n_runs: int, master_seed: int, label: str) -> tp.List[RunResult]:
        results = run_batch(
            potential, cfg, n_runs, master_seed, self.workers, self.config.timeout
        )
        self.seeds[label] = [r.seed_used for r in results]
        return results


def value_stats(values: tp.Sequence[float]) -> tp.Dict[str, float]:
    array = np.asarray(values, dtype=float)
    return {
        "mean": float(np.mean(array)),
        "median": float(np.median(array)),
        "std": float(np.std(array, ddof=1)) if array.size > 1 else 0.0,
        "min": float(np.min(array)),
        "max": float(np.max(array)),
    }


def headline_values(spec: SamplerSpec, results: tp.Sequence[RunResult]) -> tp.List[float]:
    """Final V for SFS, best-of-trajectory V for Langevin."""
    if spec.kind == "langevin":
        return [r.best_value for r in results]
    return [r.final_value for r in results]


def oracle_reference(
    potential: Potential, sigma: float, n: int, seed: int
) -> np.ndarray:
    """n draws from μ_σ: inverse-CDF for 1-D potentials, exact Gaussian for the quadratic target."""
    if potential.dim == 1:
        oracle = build_oracle_1d(GibbsSpec(potential, sigma))
        return sample_oracle(oracle, n, seed)[:, None]
    if isinstance(potential, Quadratic):
        noise = make_generator(seed).standard_normal((n, potential.dim))
        return potential.shift + math.sqrt(sigma) * noise
    raise ValueError(f"no oracle samples for {potential}")


def w2_to_oracle(
    finals: np.ndarray, potential: Potential, sigma: float, seed: int, n_projections: int = 64
) -> tp.Dict[str, tp.Any]:
    reference = oracle_reference(potential, sigma, len(finals), seed)
    if potential.dim == 1:
        report = w2_exact_1d(finals[:, 0], reference[:, 0])
    else:
        report = w2_sliced(finals, reference, n_projections, seed)
    return dataclasses.asdict(report)


def constants_reports(
    potential: Potential, spec: ConstantsSpec, sampler: SamplerSpec
) -> tp.List[tp.Dict[str, tp.Any]]:
    if spec.sigmas:
        sigmas: tp.Sequence[float] = spec.sigmas
    else:
        sigmas = [spec.sigma if spec.sigma is not None else sampler.config.sigma]
    cfg = sampler.config
    K = spec.K or (cfg.K if isinstance(cfg, SfsConfig) else 200)
    m = spec.m or (cfg.m if isinstance(cfg, SfsConfig) else 1000)
    reports = []
    for sigma in sigmas:
        report = compute_constants(
            potential,
            sigma,
            spec.grid_points_per_dim,
            radius=spec.radius,
            tau=spec.tau,
            epsilon=spec.epsilon,
            K=K,
            m=m,
        )
        content = report.to_json_dict()
        content["theorem35_bound_2K_log"] = evaluate_theorem35_bound(
            report, spec.tau, spec.epsilon, 1.0 / (2 * K), m, potential.dim
        )
        content["theorem35_bound_2m_log"] = evaluate_theorem35_bound(
            report, spec.tau, spec.epsilon, 1.0 / K, 2 * m, potential.dim
        )
        content["theorem37_bound_2K_log"] = evaluate_theorem37_bound(
            report, 1.0 / (2 * K), m, potential.dim
        )
        reports.append(content)
    return reports


def summarize(ctx: Context, potential: Potential, results: tp.Sequence[RunResult]) -> tp.Dict[str, tp.Any]:
    cfg = ctx.config
    spec = cfg.sampler
    diagnostics = cfg.diagnostics
    finals = np.array([r.final_point for r in results])
    summary: tp.Dict[str, tp.Any] = {
        "potential": repr(potential),
        "sampler": spec.kind,
        "sampler_config": dataclasses.asdict(spec.config),
        "n_runs": len(results),
        "master_seed": cfg.master_seed,
        "final_value": value_stats([r.final_value for r in results]),
        "best_value": value_stats([r.best_value for r in results]),
        "gaussians_consumed": sum(r.gaussians_consumed for r in results),
    }
    if diagnostics.success_tau:
        summary["success_rate"] = [
            dataclasses.asdict(success_rate(results, tau, use_best=spec.kind == "langevin"))
            for tau in diagnostics.success_tau
        ]
    if diagnostics.moments is not None:
        moments = diagnostics.moments
        report = gaussian_moment_test(
            finals, moments.mean, moments.variance, moments.n_sigma, moments.rel_tol
        )
        summary["moments"] = dict(dataclasses.asdict(report), passed=report.passed)
    if diagnostics.cluster_masses is not None:
        spec_c = diagnostics.cluster_masses
        clusters = cluster_masses(finals, potential.known_minima, spec_c.delta_prime)
        weights = laplace_weights(potential)
        entry = dict(dataclasses.asdict(clusters), laplace_weights=weights.tolist())
        if spec_c.tolerance is not None:
            entry["passed"] = masses_within(clusters.masses, weights, spec_c.tolerance)
        summary["cluster_masses"] = entry
    if diagnostics.w2_oracle is not None:
        w2 = diagnostics.w2_oracle
        n = w2.samples or len(results)
        if n != len(results):
            raise ValueError(f"w2_oracle.samples={n} must equal n_runs={len(results)}")
        summary["w2_oracle"] = w2_to_oracle(
            finals, potential, spec.config.sigma, w2.seed, w2.n_projections
        )
    if diagnostics.constants is not None:
        summary["constants"] = constants_reports(potential, diagnostics.constants, spec)
    return summary


def masses_within(masses: tp.Sequence[float], weights: np.ndarray, tolerance: float) -> bool:
    return bool(np.all(np.abs(np.asarray(masses) - weights) <= tolerance * weights))


def command_run(ctx: Context) -> None:
    cfg = ctx.config
    potential = cfg.potential.build()
    results = ctx.batch(potential, cfg.sampler.config, cfg.n_runs, cfg.master_seed, "sampler")
    ctx.write("runs.csv", ResultCodec.encode_runs(results))
    ctx.write("summary.json", ResultCodec.encode_json(summarize(ctx, potential, results)))


def command_compare(ctx: Context) -> None:
    cfg = ctx.config
    if cfg.baseline is None:
        raise ConfigError("compare needs a baseline sampler", "baseline")
    potential = cfg.potential.build()
    sampler, baseline = cfg.sampler, cfg.baseline
    if isinstance(sampler.config, SfsConfig) and isinstance(baseline.config, LangevinConfig):
        budget = sampler.config.K * sampler.config.m
        if baseline.config.steps != budget:
            logger.warning(
                f"Budgets differ: SFS uses K*m={budget} drift draws per run, Langevin {baseline.config.steps} steps"
            )
    results = ctx.batch(potential, sampler.config, cfg.n_runs, cfg.master_seed, "sampler")
    baseline_seed = derive_seed(cfg.master_seed, BASELINE_STREAM)
    others = ctx.batch(potential, baseline.config, cfg.n_runs, baseline_seed, "baseline")
    ctx.write("runs_sampler.csv", ResultCodec.encode_runs(results))
    ctx.write("runs_baseline.csv", ResultCodec.encode_runs(others))

    dim = potential.dim
    header = ["sampler", "run_index"] + [f"x_{i}" for i in range(dim)] + ["value"]
    rows = []
    for spec, batch in (("sampler", results), ("baseline", others)):
        langevin = getattr(cfg, spec).kind == "langevin"
        for r in batch:
            point = r.best_point if langevin else r.final_point
            value = r.best_value if langevin else r.final_value
            rows.append(
                [getattr(cfg, spec).kind, str(r.run_index)]
                + [ResultCodec.format_float(v) for v in point]
                + [ResultCodec.format_float(value)]
            )
    ctx.write("scatter.csv", ResultCodec.encode_csv(header, rows))

    ours = headline_values(sampler, results)
    theirs = headline_values(baseline, others)
    difference = float(np.mean(ours) - np.mean(theirs))
    n = len(ours)
    standard_error = math.sqrt(np.var(ours, ddof=1) / n + np.var(theirs, ddof=1) / n) if n > 1 else math.inf
    comparison: tp.Dict[str, tp.Any] = {
        "potential": repr(potential),
        "n_runs": n,
        "sampler": {"kind": sampler.kind, "values": value_stats(ours)},
        "baseline": {"kind": baseline.kind, "values": value_stats(theirs)},
        "mean_difference": difference,
        "mean_difference_ci95": [difference - 1.96 * standard_error, difference + 1.96 * standard_error],
        "sampler_better": difference < 0,
    }
    for tau in cfg.diagnostics.success_tau:
        comparison.setdefault("success_rate", []).append(
            {
                "tau": tau,
                "sampler": dataclasses.asdict(
                    success_rate(results, tau, use_best=sampler.kind == "langevin")
                ),
                "baseline": dataclasses.asdict(
                    success_rate(others, tau, use_best=baseline.kind == "langevin")
                ),
            }
        )
    ctx.write("comparison.json", ResultCodec.encode_json(comparison))


def check_laplace(ctx: Context) -> tp.Dict[str, tp.Any]:
    cfg = ctx.config
    check = cfg.verify.laplace
    assert check is not None
    potential = (check.potential or cfg.potential).build()
    weights = laplace_weights(potential)
    oracle = build_oracle_1d(GibbsSpec(potential, check.sigma))
    samples = sample_oracle(oracle, check.samples, check.seed)
    clusters = cluster_masses(samples, potential.known_minima, check.delta_prime)
    result: tp.Dict[str, tp.Any] = {
        "name": "laplace_weights",
        "potential": repr(potential),
        "sigma": check.sigma,
        "laplace_weights": weights.tolist(),
        "oracle_masses": list(clusters.masses),
        "oracle_remainder": clusters.remainder,
        "quadrature_mass_positive": oracle.interval_mass(0.0, oracle.L),
        "tolerance": check.tolerance,
        "passed": masses_within(clusters.masses, weights, check.tolerance),
    }
    if check.sfs is not None:
        sfs = check.sfs
        runs = ctx.batch(
            potential,
            SfsConfig(sigma=check.sigma, K=sfs.K, m=sfs.m, form=sfs.form),
            sfs.n_runs,
            cfg.master_seed,
            "laplace_sfs",
        )
        finals = np.array([r.final_point for r in runs])
        sfs_clusters = cluster_masses(finals, potential.known_minima, check.delta_prime)
        sfs_passed = masses_within(sfs_clusters.masses, weights, sfs.tolerance)
        result["sfs_masses"] = list(sfs_clusters.masses)
        result["sfs_remainder"] = sfs_clusters.remainder
        result["sfs_tolerance"] = sfs.tolerance
        result["passed"] = result["passed"] and sfs_passed
    return result


def check_large_deviation(ctx: Context) -> tp.Dict[str, tp.Any]:
    cfg = ctx.config
    check = cfg.verify.large_deviation
    assert check is not None
    potential = (check.potential or cfg.potential).build()
    slopes = large_deviation_slope(potential, check.tau, check.sigmas, check.grid_points)
    gaps = [abs(value + check.tau) for _, value in slopes]
    monotone = all(b < a for a, b in zip(gaps, gaps[1:]))
    final_gap = gaps[-1] / check.tau
    ctx.write(
        "slopes.csv",
        ResultCodec.encode_csv(
            ["sigma", "sigma_log_tail_mass"],
            [[ResultCodec.format_float(s), ResultCodec.format_float(v)] for s, v in slopes],
        ),
    )
    return {
        "name": "large_deviation",
        "potential": repr(potential),
        "tau": check.tau,
        "slopes": [list(pair) for pair in slopes],
        "monotone": monotone,
        "final_relative_gap": final_gap,
        "tolerance": check.tolerance,
        "passed": monotone and final_gap <= check.tolerance,
    }


def check_w2_trend(ctx: Context) -> tp.Dict[str, tp.Any]:
    cfg = ctx.config
    check = cfg.verify.w2_trend
    assert check is not None
    potential = (check.potential or cfg.potential).build()
    distances = []
    for K in check.Ks:
        runs = ctx.batch(
            potential,
            SfsConfig(sigma=check.sigma, K=K, m=check.m, form=check.form),
            check.n_runs,
            cfg.master_seed,
            f"w2_trend_K{K}",
        )
        finals = np.array([r.final_point for r in runs])
        distances.append(w2_to_oracle(finals, potential, check.sigma, check.seed)["distance"])
    trend = w2_trend(distances)
    return {
        "name": "w2_trend",
        "potential": repr(potential),
        "sigma": check.sigma,
        "m": check.m,
        "form": check.form,
        "Ks": list(check.Ks),
        "distances": distances,
        "non_increasing": trend.non_increasing,
        "required": trend.required,
        "passed": trend.passed,
    }


def check_constants(ctx: Context) -> tp.Dict[str, tp.Any]:
    cfg = ctx.config
    check = cfg.verify.constants
    assert check is not None
    potential = (check.potential or cfg.potential).build()
    reports = constants_reports(potential, check, cfg.sampler)
    by_sigma = sorted(reports, key=lambda r: -r["sigma"])
    ratios = [r["gamma_sigma_log"] - r["xi_sigma_log"] for r in by_sigma]
    increasing = all(b > a for a, b in zip(ratios, ratios[1:]))
    bound_monotone = all(
        r["theorem35_bound_2K_log"] <= r["bound_theorem35_log"]
        and r["theorem35_bound_2m_log"] <= r["bound_theorem35_log"]
        for r in reports
    )
    return {
        "name": "constants",
        "potential": repr(potential),
        "reports": reports,
        "ratio_log_increasing": increasing if len(ratios) > 1 else None,
        "bound_monotone": bound_monotone,
        "passed": bound_monotone and (increasing or len(ratios) == 1),
    }


def command_verify(ctx: Context) -> None:
    verify = ctx.config.verify
    checks: tp.List[tp.Dict[str, tp.Any]] = []
    for name, run_check in (
        ("laplace", check_laplace),
        ("large_deviation", check_large_deviation),
        ("w2_trend", check_w2_trend),
        ("constants", check_constants),
    ):
        if getattr(verify, name) is None:
            continue
        result = run_check(ctx)
        if not result["passed"]:
            logger.warning(f"Check failed: {name}")
        checks.append(result)
    if not checks:
        raise ConfigError("verify lists no checks", "verify")
    report = {"checks": checks, "passed": all(c["passed"] for c in checks)}
    ctx.write("verification.json", ResultCodec.encode_json(report))


def command_constants(ctx: Context) -> None:
    cfg = ctx.config
    potential = cfg.potential.build()
    spec = cfg.diagnostics.constants or ConstantsSpec()
    reports = constants_reports(potential, spec, cfg.sampler)
    ctx.write("constants.json", ResultCodec.encode_json({"potential": repr(potential), "reports": reports}))


COMMANDS: tp.Dict[str, tp.Callable[[Context], None]] = {
    "run": command_run,
    "compare": command_compare,
    "verify": command_verify,
    "constants": command_constants,
}


def execute(
    command: str,
    config_path: str,
    out: str | None = None,
    workers: int | None = None,
    seed: int | None = None,
) -> int:
    started_at = datetime.datetime.now(datetime.timezone.utc).isoformat()
    start = time.perf_counter()
    try:
        with open(config_path, "rb") as f:
            raw = f.read()
        cfg = parse_config(raw.decode("utf-8"))
        if seed is not None:
            cfg = dataclasses.replace(cfg, master_seed=check_seed(seed))
        if out is not None:
            cfg = dataclasses.replace(cfg, output_dir=out)
    except (ConfigError, ValueError) as e:
        logger.error(f"{config_path}: {e}")
        return 2
    except (OSError, UnicodeDecodeError) as e:
        logger.error(f"cannot read config {config_path}: {e}")
        return 2

    workers = workers or os.cpu_count() or 1
    ctx = Context(
        config=cfg,
        config_sha256=hashlib.sha256(raw).hexdigest(),
        out_dir=cfg.output_dir,
        workers=workers,
    )
    try:
        os.makedirs(ctx.out_dir, exist_ok=True)
        logger.info(f"{command}: {config_path} -> {ctx.out_dir} with {workers} worker(s)")
        COMMANDS[command](ctx)
    except ConfigError as e:
        logger.error(f"{config_path}: {e}")
        return 2
    except Exception:
        logger.exception(f"{command} failed")
        return 1

    manifest = {
        "command": command,
        "config_path": config_path,
        "config_sha256": ctx.config_sha256,
        "tool_version": __version__,
        "master_seed": cfg.master_seed,
        "seeds": ctx.seeds,
        "workers": workers,
        "outputs": sorted(ctx.outputs + ["manifest.json"]),
        "started_at": started_at,
        "elapsed_seconds": time.perf_counter() - start,
    }
    ctx.write("manifest.json", ResultCodec.encode_json(manifest))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sfsopt", description="Schrodinger-Follmer sampler experiments"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "run a sampler batch with diagnostics"),
        ("compare", "run the sampler and the baseline on the same potential"),
        ("verify", "check the theory against oracles"),
        ("constants", "compute the theoretical constants"),
    ):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", required=True, help="experiment config (JSON)")
        sub.add_argument("--out", default=None, help="output directory, overrides output_dir")
        sub.add_argument(
            "--workers",
            type=int,
            default=None,
            help="worker processes (default: number of CPUs)",
        )
        sub.add_argument("--seed", type=int, default=None, help="overrides master_seed")
        sub.add_argument("--verbose", action="store_true", help="debug logging")
    return parser


def main(argv: tp.Optional[tp.Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if args.workers is not None and args.workers < 1:
        logger.error(f"--workers must be >= 1, got {args.workers}")
        return 2
    return execute(args.command, args.config, args.out, args.workers, args.seed)


def cmd_run(config_path: str, **kwargs: tp.Any) -> int:
    return execute("run", config_path, **kwargs)


def cmd_compare(config_path: str, **kwargs: tp.Any) -> int:
    return execute("compare", config_path, **kwargs)


def cmd_verify(config_path: str, **kwargs: tp.Any) -> int:
    return execute("verify", config_path, **kwargs)


def cmd_constants(config_path: str, **kwargs: tp.Any) -> int:
    return execute("constants", config_path, **kwargs)
