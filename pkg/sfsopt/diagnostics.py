from __future__ import annotations

import dataclasses
import enum
import logging
import math
import typing as tp

import numpy as np
import ot
from scipy.stats import norm

from .base import RunResult
from .gibbs_oracle import (
    ConstantsReport,
    GibbsSpec,
    build_oracle_1d,
    check_sigma,
    log_theorem35_bound,
    log_theorem37_bound,
    tail_mass,
)
from .potentials import Potential

__all__ = [
    "ClusterReport",
    "MomentReport",
    "SuccessReport",
    "TrendReport",
    "W2Method",
    "W2Report",
    "cluster_masses",
    "count_non_increasing",
    "evaluate_theorem35_bound",
    "evaluate_theorem37_bound",
    "gaussian_moment_test",
    "large_deviation_slope",
    "projection_directions",
    "success_rate",
    "w2_exact_1d",
    "w2_sliced",
    "w2_trend",
    "wilson_interval",
]

logger = logging.getLogger("sfsopt")


@dataclasses.dataclass(frozen=True)
class SuccessReport:
    tau: float
    n_runs: int
    n_success: int
    rate: float
    wilson_interval: tp.Tuple[float, float]


class W2Method(str, enum.Enum):
    EXACT_1D = "exact_1d"
    SLICED = "sliced"


@dataclasses.dataclass(frozen=True)
class W2Report:
    distance: float
    method: W2Method
    n_samples: int
    n_projections: int | None = None


@dataclasses.dataclass(frozen=True)
class ClusterReport:
    masses: tp.Tuple[float, ...]
    remainder: float
    delta_prime: float
    n_samples: int


@dataclasses.dataclass(frozen=True)
class MomentReport:
    mean: tp.Tuple[float, ...]
    variance: tp.Tuple[float, ...]
    max_covariance: float
    mean_tolerance: float
    passed_mean: bool
    passed_variance: bool
    passed_covariance: bool

    @property
    def passed(self) -> bool:
        return self.passed_mean and self.passed_variance and self.passed_covariance


@dataclasses.dataclass(frozen=True)
class TrendReport:
    values: tp.Tuple[float, ...]
    non_increasing: int
    steps: int
    required: int

    @property
    def passed(self) -> bool:
        return self.non_increasing >= self.required


def wilson_interval(n_success: int, n: int, confidence: float = 0.95) -> tp.Tuple[float, float]:
    z = float(norm.ppf(0.5 + confidence / 2.0))
    p = n_success / n
    denominator = 1.0 + z * z / n
    center = (p + z * z / (2.0 * n)) / denominator
    half = z * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denominator
    return max(0.0, center - half), min(1.0, center + half)


def success_rate(
    results: tp.Sequence[RunResult], tau: float, use_best: bool = False
) -> SuccessReport:
    """Fraction of runs ending τ-close to the minimum value 0, with a Wilson 95% interval."""
    if not results:
        raise ValueError("no results")
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    values = [r.best_value if use_best else r.final_value for r in results]
    n = len(values)
    n_success = sum(1 for v in values if v <= tau)
    return SuccessReport(
        tau=tau,
        n_runs=n,
        n_success=n_success,
        rate=n_success / n,
        wilson_interval=wilson_interval(n_success, n),
    )


def _as_1d(samples: tp.Any) -> np.ndarray:
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 2 and samples.shape[1] == 1:
        samples = samples[:, 0]
    if samples.ndim != 1:
        raise ValueError(f"expected 1-D samples, got shape {samples.shape}")
    return samples


def w2_exact_1d(samples_a: tp.Any, samples_b: tp.Any) -> W2Report:
    """W₂ of two empirical measures on the line (optimal matching of the order statistics)."""
    a, b = _as_1d(samples_a), _as_1d(samples_b)
    if a.size != b.size:
        raise ValueError(f"sample sizes differ: {a.size} != {b.size}")
    if a.size < 2:
        raise ValueError(f"need at least 2 samples, got {a.size}")
    cost = float(ot.emd2_1d(a, b, metric="sqeuclidean"))
    return W2Report(
        distance=math.sqrt(max(cost, 0.0)),
        method=W2Method.EXACT_1D,
        n_samples=int(a.size),
    )


def projection_directions(dim: int, n_projections: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((n_projections, dim))
    return directions / np.linalg.norm(directions, axis=1, keepdims=True)


def w2_sliced(
    samples_a: tp.Any, samples_b: tp.Any, n_projections: int = 64, seed: int = 0
) -> W2Report:
    """Root-mean over random unit directions of the squared 1-D W₂ of the projections."""
    a = np.asarray(samples_a, dtype=float)
    b = np.asarray(samples_b, dtype=float)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if a.shape[1] < 2:
        raise ValueError("sliced W2 needs dim >= 2, use w2_exact_1d")
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"sample sizes differ: {a.shape[0]} != {b.shape[0]}")
    if n_projections < 16:
        raise ValueError(f"n_projections must be >= 16, got {n_projections}")
    directions = projection_directions(a.shape[1], n_projections, seed)
    distance = ot.sliced_wasserstein_distance(a, b, p=2, projections=directions.T)
    return W2Report(
        distance=float(distance),
        method=W2Method.SLICED,
        n_samples=int(a.shape[0]),
        n_projections=n_projections,
    )


def cluster_masses(
    samples: tp.Any, minima: tp.Sequence[tp.Any], delta_prime: float = 0.4
) -> ClusterReport:
    """Fraction of samples within `delta_prime` of each minimizer, plus what falls outside every ball."""
    if delta_prime <= 0:
        raise ValueError(f"delta_prime must be > 0, got {delta_prime}")
    centers = np.array([np.atleast_1d(np.asarray(c, dtype=float)) for c in minima])
    points = np.asarray(samples, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if points.shape[1] != centers.shape[1]:
        raise ValueError(f"dimension mismatch: samples {points.shape}, minima {centers.shape}")
    gaps = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=-1)
    np.fill_diagonal(gaps, np.inf)
    if np.any(gaps < 2.0 * delta_prime):
        raise ValueError(f"balls of radius {delta_prime} around the minima overlap")
    distances = np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=-1)
    inside = distances < delta_prime
    n = len(points)
    counts = inside.sum(axis=0)
    return ClusterReport(
        masses=tuple(float(c) / n for c in counts),
        remainder=float(n - counts.sum()) / n,
        delta_prime=delta_prime,
        n_samples=n,
    )


def large_deviation_slope(
    p: Potential, tau: float, sigmas: tp.Sequence[float], grid_points: int = 20001
) -> tp.List[tp.Tuple[float, float]]:
    """(σ, σ·log μ_σ(V >= τ)) for each σ, by quadrature."""
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    sigmas = [check_sigma(s) for s in sigmas]
    if any(b >= a for a, b in zip(sigmas, sigmas[1:])):
        raise ValueError(f"sigmas must be strictly decreasing, got {sigmas}")
    slopes = []
    for sigma in sigmas:
        oracle = build_oracle_1d(GibbsSpec(p, sigma), grid_points)
        mass = tail_mass(oracle, tau)
        slopes.append((sigma, sigma * math.log(mass) if mass > 0 else -math.inf))
        logger.debug(f"Large deviation at sigma={sigma}: tail mass {mass:.6g}")
    return slopes


def evaluate_theorem35_bound(
    report: ConstantsReport, tau: float, epsilon: float, s: float, m: int, d: int
) -> float:
    """Log of the bound on P(V(Ỹ_{t_K}) > τ); usually far above 0 (vacuous)."""
    if not 0 < epsilon < tau:
        raise ValueError(f"need 0 < epsilon < tau, got epsilon={epsilon}, tau={tau}")
    if (tau, epsilon) == (report.tau, report.epsilon):
        log_c = report.C_tau_eps_d_log
    elif report.profile is not None:
        _, _, log_c = report.profile.log_volume_ratio_constant(tau, epsilon)
    else:
        raise ValueError("report has no radial profile to evaluate other (tau, epsilon)")
    return log_theorem35_bound(
        log_c, report.Csharp1_log, report.Csharp2_log, tau, epsilon, report.sigma, s, m, d
    )


def evaluate_theorem37_bound(report: ConstantsReport, s: float, m: int, d: int) -> float:
    """Log of the W₂ bound between the law of Ỹ_{t_K} and μ_σ."""
    with np.errstate(over="ignore", invalid="ignore"):
        return log_theorem37_bound(
            report.Csharp_sigma_log, report.Csharp3_log, report.Csharp2_log, s, m, d
        )


def gaussian_moment_test(
    points: tp.Any,
    mean: tp.Any,
    variance: float,
    n_sigma: float = 3.0,
    rel_tol: float = 0.1,
) -> MomentReport:
    """
    Check samples against N(mean, variance·I): every coordinate mean within
    n_sigma·√(variance/N), every variance within rel_tol, every covariance within
    n_sigma·variance·√(2/N).
    """
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    target = np.broadcast_to(np.asarray(mean, dtype=float), (d,))
    sample_mean = x.mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    sample_var = np.diag(cov)
    off = cov - np.diag(sample_var)
    max_cov = float(np.max(np.abs(off))) if d > 1 else 0.0
    mean_tol = n_sigma * math.sqrt(variance / n)
    return MomentReport(
        mean=tuple(float(v) for v in sample_mean),
        variance=tuple(float(v) for v in sample_var),
        max_covariance=max_cov,
        mean_tolerance=mean_tol,
        passed_mean=bool(np.all(np.abs(sample_mean - target) <= mean_tol)),
        passed_variance=bool(np.all(np.abs(sample_var - variance) <= rel_tol * variance)),
        passed_covariance=max_cov <= n_sigma * variance * math.sqrt(2.0 / n),
    )


def count_non_increasing(values: tp.Sequence[float]) -> int:
    return sum(1 for a, b in zip(values, values[1:]) if b <= a)


def w2_trend(values: tp.Sequence[float], required: int | None = None) -> TrendReport:
    """Count consecutive steps that do not increase; by default all but one must."""
    steps = max(len(values) - 1, 0)
    return TrendReport(
        values=tuple(float(v) for v in values),
        non_increasing=count_non_increasing(values),
        steps=steps,
        required=max(steps - 1, 0) if required is None else required,
    )
