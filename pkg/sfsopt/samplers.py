"""
Euler-Maruyama drivers.

Schrodinger-Follmer (SFS): Ỹ_0 = 0 and, with s = 1/K and t_k = k/K,

    Ỹ_{k+1} = Ỹ_k + σ s b̃_m(Ỹ_k, t_k) + √(σ s) ε_{k+1}

At step k one (m+1, d) block of standard normals is drawn from the run's
stream: row 0 is ε_{k+1}, rows 1..m are the drift draws Z_1..Z_m.

Langevin: Z_{k+1} = Z_k - η ∇V(Z_k) + √(2ση) ε_{k+1}. The optional random start
init + init_spread·N(0, I) is drawn first, then one d-vector per step.
"""
from __future__ import annotations

import dataclasses
import logging
import math
import typing as tp

import numpy as np

from .base import DivergenceError, RunResult, Sampler, Trajectory
from .drift import DriftForm, estimate_drift
from .gibbs_oracle import check_sigma
from .potentials import Potential
from .rng import GaussianStream, check_seed

logger = logging.getLogger("sfsopt")

LANGEVIN_BLOCK = 4096


@dataclasses.dataclass(frozen=True)
class SfsConfig:
    sigma: float
    K: int
    m: int
    form: DriftForm = DriftForm.GRADIENT
    seed: int = 0
    record_path: bool = False

    def __post_init__(self):
        check_sigma(self.sigma)
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        check_seed(self.seed)
        object.__setattr__(self, "form", DriftForm.parse(self.form))

    @property
    def step(self) -> float:
        return 1.0 / self.K

    @property
    def gaussian_budget_per_dim(self) -> int:
        return self.K * (self.m + 1)


@dataclasses.dataclass(frozen=True)
class LangevinConfig:
    sigma: float
    step: float
    steps: int
    burn_in: int = 0
    init: tp.Optional[tp.Tuple[float, ...]] = None
    init_spread: float = 0.0
    seed: int = 0
    record_path: bool = False
    noise: bool = True

    def __post_init__(self):
        check_sigma(self.sigma)
        if self.step <= 0:
            raise ValueError(f"step must be > 0, got {self.step}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if not 0 <= self.burn_in < self.steps:
            raise ValueError(
                f"burn_in must satisfy 0 <= burn_in < steps={self.steps}, got {self.burn_in}"
            )
        if self.init_spread < 0:
            raise ValueError(f"init_spread must be >= 0, got {self.init_spread}")
        check_seed(self.seed)
        if self.init is not None:
            init = tuple(float(v) for v in np.atleast_1d(np.asarray(self.init, dtype=float)))
            object.__setattr__(self, "init", init)

    def initial_point(self, dim: int) -> np.ndarray:
        if self.init is None:
            return np.zeros(dim)
        if len(self.init) != dim:
            raise ValueError(f"init has {len(self.init)} coordinates, potential dim is {dim}")
        return np.array(self.init)


def run_sfs(p: Potential, cfg: SfsConfig) -> RunResult:
    d, K, m, sigma = p.dim, cfg.K, cfg.m, cfg.sigma
    s = cfg.step
    noise_scale = math.sqrt(sigma * s)
    stream = GaussianStream(cfg.seed)
    y = np.zeros(d)
    if cfg.record_path:
        points = np.empty((K + 1, d))
        points[0] = y
        drifts = np.empty((K, d))
        blocks = np.empty((K, m + 1, d))

    for k in range(K):
        block = stream.normal((m + 1, d))
        try:
            b = estimate_drift(p, sigma, y, k / K, m, cfg.form, block[1:])
        except DivergenceError as e:
            raise DivergenceError(f"drift diverged at step {k}: {e}", iteration=k) from e
        y = y + sigma * s * b + noise_scale * block[0]
        if not np.all(np.isfinite(y)):
            raise DivergenceError(f"non-finite iterate at step {k + 1}", iteration=k + 1)
        if cfg.record_path:
            points[k + 1] = y
            drifts[k] = b
            blocks[k] = block

    value = float(p.value(y))
    path = None
    if cfg.record_path:
        path = Trajectory(
            points=points, times=np.arange(K + 1) / K, drifts=drifts, noise=blocks
        )
    return RunResult(
        final_point=y,
        final_value=value,
        best_point=y,
        best_value=value,
        gaussians_consumed=stream.consumed,
        seed_used=cfg.seed,
        path=path,
    )


def replay_step(
    p: Potential, cfg: SfsConfig, path: Trajectory, k: int
) -> tp.Tuple[np.ndarray, np.ndarray]:
    """Recompute (b̃ at step k, Ỹ_{k+1}) from the recorded point and noise block of step k."""
    if path.noise is None:
        raise ValueError("trajectory carries no noise blocks, run with record_path=True")
    K = cfg.K
    if not 0 <= k < K:
        raise ValueError(f"step must satisfy 0 <= k < {K}, got {k}")
    block = path.noise[k]
    y = path.points[k]
    b = estimate_drift(p, cfg.sigma, y, k / K, cfg.m, cfg.form, block[1:])
    return b, y + cfg.sigma * cfg.step * b + math.sqrt(cfg.sigma * cfg.step) * block[0]


def run_langevin(p: Potential, cfg: LangevinConfig) -> RunResult:
    d, eta = p.dim, cfg.step
    stream = GaussianStream(cfg.seed)
    z = cfg.initial_point(d)
    if cfg.init_spread > 0:
        z = z + cfg.init_spread * stream.normal(d)
    noise_scale = math.sqrt(2.0 * cfg.sigma * eta)

    best_value, best_point = math.inf, z
    kept: tp.List[np.ndarray] = []
    for start in range(0, cfg.steps, LANGEVIN_BLOCK):
        n = min(LANGEVIN_BLOCK, cfg.steps - start)
        eps = stream.normal((n, d)) if cfg.noise else np.zeros((n, d))
        iterates = np.empty((n, d))
        for i in range(n):
            z = z - eta * p.gradient(z) + noise_scale * eps[i]
            if not np.all(np.isfinite(z)):
                raise DivergenceError(
                    f"non-finite iterate at step {start + i + 1}", iteration=start + i + 1
                )
            iterates[i] = z
        # iteration start + i + 1 is kept once past burn_in
        post = iterates[max(0, cfg.burn_in - start) :]
        if len(post):
            values = p.value(post)
            j = int(np.argmin(values))
            if values[j] < best_value:
                best_value, best_point = float(values[j]), post[j].copy()
            if cfg.record_path:
                kept.append(post)

    path = None
    if cfg.record_path:
        points = np.concatenate(kept)
        times = eta * np.arange(cfg.burn_in + 1, cfg.steps + 1)
        path = Trajectory(points=points, times=times)
    return RunResult(
        final_point=z,
        final_value=float(p.value(z)),
        best_point=best_point,
        best_value=best_value,
        gaussians_consumed=stream.consumed,
        seed_used=cfg.seed,
        path=path,
    )


class SchrodingerFollmer(Sampler[SfsConfig]):
    name = "sfs"

    def run(self, potential: Potential, cfg: SfsConfig) -> RunResult:
        return run_sfs(potential, cfg)


class Langevin(Sampler[LangevinConfig]):
    name = "langevin"

    def run(self, potential: Potential, cfg: LangevinConfig) -> RunResult:
        return run_langevin(potential, cfg)


def sampler_for(cfg: tp.Union[SfsConfig, LangevinConfig], timeout: float | None = None) -> Sampler:
    if isinstance(cfg, SfsConfig):
        return SchrodingerFollmer(timeout=timeout)
    if isinstance(cfg, LangevinConfig):
        return Langevin(timeout=timeout)
    raise TypeError(f"no sampler for config {cfg!r}")


def run_batch(
    p: Potential,
    cfg: tp.Union[SfsConfig, LangevinConfig],
    n_runs: int,
    master_seed: int,
    workers: int = 1,
    timeout: float | None = None,
) -> tp.List[RunResult]:
    """
    `n_runs` independent runs, run i seeded from (master_seed, i); the list is
    ordered by run index and identical for any number of workers.
    """
    return sampler_for(cfg, timeout).run_batch(p, cfg, n_runs, master_seed, workers)
