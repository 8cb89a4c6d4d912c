import math

import numpy as np
import pytest

from sfsopt.base import RunResult
from sfsopt.diagnostics import (
    W2Method,
    cluster_masses,
    count_non_increasing,
    evaluate_theorem35_bound,
    evaluate_theorem37_bound,
    gaussian_moment_test,
    large_deviation_slope,
    success_rate,
    w2_exact_1d,
    w2_sliced,
    w2_trend,
    wilson_interval,
)
from sfsopt.gibbs_oracle import compute_constants
from sfsopt.potentials import make_double_well_1d, make_quadratic


def result(final_value, best_value=None):
    point = np.zeros(1)
    return RunResult(
        final_point=point,
        final_value=final_value,
        best_point=point,
        best_value=final_value if best_value is None else best_value,
        gaussians_consumed=0,
        seed_used=0,
    )


def test_wilson_interval():
    low, high = wilson_interval(50, 100)
    assert low == pytest.approx(0.4038, abs=1e-4)
    assert high == pytest.approx(0.5962, abs=1e-4)
    low, high = wilson_interval(0, 20)
    assert low == pytest.approx(0.0, abs=1e-12)
    assert 0.0 < high < 0.2
    assert wilson_interval(20, 20)[1] == 1.0


def test_success_rate():
    results = [result(v, 0.0) for v in (0.1, 0.4, 0.6, 2.0)]
    report = success_rate(results, 0.5)
    assert report.n_runs == 4
    assert report.n_success == 2
    assert report.rate == 0.5
    low, high = report.wilson_interval
    assert low < 0.5 < high
    assert success_rate(results, 0.5, use_best=True).rate == 1.0
    with pytest.raises(ValueError):
        success_rate([], 0.5)
    with pytest.raises(ValueError):
        success_rate(results, 0.0)


def test_w2_exact_1d():
    rng = np.random.default_rng(0)
    a = rng.standard_normal(1000)
    report = w2_exact_1d(a, rng.permutation(a) + 0.25)
    assert report.distance == pytest.approx(0.25)
    assert report.method is W2Method.EXACT_1D
    assert report.n_samples == 1000
    assert w2_exact_1d(a[:, None], a).distance == 0.0
    # W2(N(0, 1), N(0, 4)) = |1 - 2|
    wide = np.random.default_rng(5)
    gaussian = w2_exact_1d(wide.standard_normal(100000), 2.0 * wide.standard_normal(100000))
    assert gaussian.distance == pytest.approx(1.0, rel=0.02)
    with pytest.raises(ValueError):
        w2_exact_1d(a, a[:10])
    with pytest.raises(ValueError):
        w2_exact_1d(np.zeros((5, 2)), np.zeros((5, 2)))


def test_w2_sliced():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((2000, 3))
    report = w2_sliced(a, a[::-1], n_projections=32)
    assert report.distance == pytest.approx(0.0, abs=1e-12)
    assert report.method is W2Method.SLICED
    assert report.n_projections == 32
    # a translation by v moves every projection by <u, v>; E<u, v>² = ‖v‖²/d
    shift = np.array([0.6, 0.0, 0.0])
    shifted = w2_sliced(a, a + shift, n_projections=4096)
    assert shifted.distance == pytest.approx(0.6 / math.sqrt(3), rel=0.05)
    assert w2_sliced(a, a + shift, seed=3).distance == w2_sliced(a, a + shift, seed=3).distance
    with pytest.raises(ValueError):
        w2_sliced(a, a, n_projections=8)
    with pytest.raises(ValueError):
        w2_sliced(a[:, :1], a[:, :1])
    with pytest.raises(ValueError):
        w2_sliced(a, a[:, :2])


def test_cluster_masses():
    samples = np.array([-1.1, -0.9, -1.0, 1.05, 0.0, 3.0])
    report = cluster_masses(samples, [np.array([-1.0]), np.array([1.0])], 0.4)
    assert report.masses == pytest.approx((0.5, 1 / 6))
    assert report.remainder == pytest.approx(2 / 6)
    assert report.n_samples == 6
    with pytest.raises(ValueError, match="overlap"):
        cluster_masses(samples, [np.array([-1.0]), np.array([-0.5])], 0.4)
    with pytest.raises(ValueError):
        cluster_masses(samples, [np.array([0.0, 0.0])], 0.4)
    with pytest.raises(ValueError):
        cluster_masses(samples, [np.array([0.0])], 0.0)


def test_large_deviation_slope():
    p = make_double_well_1d(1.0, 4.0)
    slopes = large_deviation_slope(p, 0.5, [0.2, 0.1, 0.05, 0.02])
    assert [s for s, _ in slopes] == [0.2, 0.1, 0.05, 0.02]
    values = [v for _, v in slopes]
    # σ log μ_σ(V >= τ) climbs towards -τ from below
    assert all(b > a for a, b in zip(values, values[1:]))
    assert all(v < -0.5 for v in values)
    assert values[-1] > -0.7
    with pytest.raises(ValueError):
        large_deviation_slope(p, 0.5, [0.1, 0.2])
    with pytest.raises(ValueError):
        large_deviation_slope(p, 0.0, [0.1])


def test_gaussian_slope():
    # μ_σ(|x| >= 1) = 2Φ(-1/√σ) for the standard quadratic
    slopes = large_deviation_slope(make_quadratic(1), 0.5, [0.5, 0.1])
    assert slopes[1][1] == pytest.approx(0.1 * math.log(1.565e-3), rel=1e-3)


def test_bounds():
    p = make_quadratic(1, [1.0])
    report = compute_constants(p, 1.0, radius=2.0, K=100, m=100)
    assert evaluate_theorem35_bound(report, 0.5, 0.25, 0.01, 100, 1) == pytest.approx(
        report.bound_theorem35_log
    )
    assert evaluate_theorem37_bound(report, 0.01, 100, 1) == pytest.approx(
        report.bound_theorem37_log
    )
    # more steps and more draws shrink both bounds
    assert evaluate_theorem35_bound(report, 0.5, 0.25, 0.005, 200, 1) < report.bound_theorem35_log
    assert evaluate_theorem37_bound(report, 0.005, 200, 1) < report.bound_theorem37_log
    # other (τ, ε) come from the stored radial profile
    assert math.isfinite(evaluate_theorem35_bound(report, 1.0, 0.5, 0.01, 100, 1))
    with pytest.raises(ValueError):
        evaluate_theorem35_bound(report, 0.5, 0.5, 0.01, 100, 1)


def test_gaussian_moment_test():
    rng = np.random.default_rng(2)
    points = 1.0 + math.sqrt(0.2) * rng.standard_normal((20000, 3))
    report = gaussian_moment_test(points, [1.0, 1.0, 1.0], 0.2, n_sigma=4.0)
    assert report.passed
    assert len(report.mean) == 3
    wrong_mean = gaussian_moment_test(points, 0.0, 0.2, n_sigma=4.0)
    assert not wrong_mean.passed_mean
    wrong_variance = gaussian_moment_test(points, 1.0, 0.4)
    assert not wrong_variance.passed_variance
    correlated = np.repeat(points[:, :1], 2, axis=1)
    assert not gaussian_moment_test(correlated, 1.0, 0.2).passed_covariance
    with pytest.raises(ValueError):
        gaussian_moment_test(points[:1], 1.0, 0.2)


def test_w2_trend():
    assert count_non_increasing([3.0, 2.0, 2.0, 2.5, 1.0]) == 3
    report = w2_trend([0.5, 0.4, 0.45, 0.3, 0.2])
    assert report.steps == 4
    assert report.non_increasing == 3
    assert report.required == 3
    assert report.passed
    assert not w2_trend([0.5, 0.6, 0.7]).passed
    assert w2_trend([0.5, 0.6, 0.7], required=0).passed


def test_exports():
    from sfsopt import diagnostics

    assert "effective_sample_size" not in diagnostics.__all__
    assert not hasattr(diagnostics, "effective_sample_size")
    for name in diagnostics.__all__:
        assert hasattr(diagnostics, name), name
