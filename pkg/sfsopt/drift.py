"""
Monte-Carlo drift of the Schrodinger-Follmer diffusion.

With y_j = x + √((1-t)σ)·Z_j and ℓ_j = (‖y_j‖²/2 - V(y_j))/σ = log f̂_σ(y_j), both
estimators are softmax-weighted averages, w = softmax(ℓ):

  gradient form   Σ_j w_j (y_j - ∇V(y_j)) / σ
  stein form      Σ_j w_j Z_j / √((1-t)σ)

f̂_σ itself is never exponentiated.
"""
from __future__ import annotations

import enum
import logging
import math
import typing as tp

import numpy as np
from scipy.special import softmax

from .base import DivergenceError
from .potentials import Potential

logger = logging.getLogger("sfsopt")


class DriftForm(str, enum.Enum):
    GRADIENT = "gradient"
    STEIN = "stein"

    @classmethod
    def parse(cls, value: tp.Union[str, DriftForm]) -> DriftForm:
        try:
            return cls(value)
        except ValueError:
            raise ValueError(
                f"unknown drift form {value!r}, expected one of {[f.value for f in cls]}"
            ) from None


class LogRatioPoint(tp.NamedTuple):
    x: np.ndarray
    log_fhat: np.ndarray
    score_term: np.ndarray


class DriftEstimate(tp.NamedTuple):
    value: np.ndarray
    standard_error: np.ndarray
    ess: float


def log_fhat(p: Potential, sigma: float, x: tp.Any) -> LogRatioPoint:
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    x = p.check_point(x)
    log_ratio = p.tail_residual(x) / sigma
    score = p.drift_residual(x) / sigma
    if not (np.all(np.isfinite(log_ratio)) and np.all(np.isfinite(score))):
        raise DivergenceError(f"non-finite potential or gradient of {p} at {x.tolist()}")
    return LogRatioPoint(x, log_ratio, score)


def softmax_weights(log_weights: np.ndarray) -> np.ndarray:
    log_weights = np.asarray(log_weights, dtype=float)
    if np.all(log_weights == -np.inf):
        raise DivergenceError("every log-weight is -inf")
    weights = softmax(log_weights)
    if not np.all(np.isfinite(weights)):
        raise DivergenceError("non-finite softmax weights")
    return weights


def effective_sample_size(weights: np.ndarray) -> float:
    """1 / Σ w_j² for normalized weights."""
    weights = np.asarray(weights, dtype=float)
    return float(1.0 / np.sum(weights * weights))


def weighted_mean(weights: np.ndarray, values: np.ndarray) -> np.ndarray:
    """
    Σ_j w_j values_j computed around the heaviest row, so identical rows give that
    row back bit-exactly.
    """
    reference = values[int(np.argmax(weights))]
    return reference + weights @ (values - reference)


def softmax_average(log_weights: np.ndarray, values: np.ndarray) -> np.ndarray:
    return weighted_mean(softmax_weights(log_weights), values)


def _prepare(
    p: Potential, sigma: float, x: tp.Any, t: float, m: int, noise: tp.Any
) -> tp.Tuple[np.ndarray, np.ndarray, float]:
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if not 0.0 <= t < 1.0:
        raise ValueError(f"t must satisfy 0 <= t < 1, got {t}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    x = p.check_point(x)
    noise = np.asarray(noise, dtype=float)
    if noise.shape != (m, p.dim):
        raise ValueError(f"noise must have shape {(m, p.dim)}, got {noise.shape}")
    scale = math.sqrt((1.0 - t) * sigma)
    return x, noise, scale


def _terms(
    p: Potential, sigma: float, x: np.ndarray, noise: np.ndarray, scale: float, form: DriftForm
) -> tp.Tuple[np.ndarray, np.ndarray, float]:
    point = log_fhat(p, sigma, x + scale * noise)
    if form is DriftForm.GRADIENT:
        return point.log_fhat, point.score_term, 1.0
    return point.log_fhat, noise, scale


def estimate_drift(
    p: Potential,
    sigma: float,
    x: tp.Any,
    t: float,
    m: int,
    form: tp.Union[DriftForm, str],
    noise: tp.Any,
) -> np.ndarray:
    """
    Drift estimate b̃_m(x, t) from `noise`, an (m, d) block of standard normals.

    Draws nothing itself: the same noise always gives the same estimate.
    """
    form = DriftForm.parse(form)
    x, noise, scale = _prepare(p, sigma, x, t, m, noise)
    log_weights, values, denominator = _terms(p, sigma, x, noise, scale, form)
    weights = softmax_weights(log_weights)
    if logger.isEnabledFor(logging.DEBUG):
        ess = effective_sample_size(weights)
        if ess < 2.0:
            logger.debug(f"Drift at t={t:.6g} rests on ESS {ess:.3g} of m={m} draws")
    return weighted_mean(weights, values) / denominator


def estimate_drift_with_error(
    p: Potential,
    sigma: float,
    x: tp.Any,
    t: float,
    m: int,
    form: tp.Union[DriftForm, str],
    noise: tp.Any,
) -> DriftEstimate:
    """Drift estimate with its self-normalized standard error per coordinate and the ESS."""
    form = DriftForm.parse(form)
    x, noise, scale = _prepare(p, sigma, x, t, m, noise)
    log_weights, values, denominator = _terms(p, sigma, x, noise, scale, form)
    weights = softmax_weights(log_weights)
    mean = weighted_mean(weights, values)
    centered = values - mean
    variance = (weights * weights) @ (centered * centered)
    return DriftEstimate(
        value=mean / denominator,
        standard_error=np.sqrt(variance) / denominator,
        ess=effective_sample_size(weights),
    )


def exact_drift_quadratic(a: tp.Any, sigma: float) -> np.ndarray:
    """Drift of V(x) = ‖x - a‖²/2, which is a/σ for every (x, t)."""
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    return np.atleast_1d(np.asarray(a, dtype=float)) / sigma
