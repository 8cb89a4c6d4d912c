"""
Ground truth for the Gibbs measure μ_σ ∝ exp(-V/σ): one-dimensional quadrature
tables, inverse-CDF sampling, Laplace-limit weights, tail masses and the
theoretical constants of the drift bounds.

Every exponential-scale quantity is handled as a natural logarithm; nothing of
the size of exp(M/σ) is ever materialized.
"""
from __future__ import annotations

import dataclasses
import logging
import math
import typing as tp

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.special import log_ndtr, logsumexp

from .potentials import Potential
from .rng import make_generator

logger = logging.getLogger("sfsopt")

TAIL_TOLERANCE = 1e-12
AUTO_TAIL_TARGET = 1e-40
MIN_GRID_POINTS = 1000


def check_sigma(sigma: float) -> float:
    sigma = float(sigma)
    if not 0.0 < sigma <= 1.0:
        raise ValueError(f"sigma must satisfy 0 < sigma <= 1, got {sigma}")
    return sigma


@dataclasses.dataclass(frozen=True)
class GibbsSpec:
    potential: Potential
    sigma: float

    def __post_init__(self):
        check_sigma(self.sigma)


def log_gaussian_tail_bound(L: float, shift: float, sigma: float) -> float:
    """
    log of √(2πσ)·erfc((L - shift)/√(2σ)), which bounds ∫_{|x|>L} exp(-V/σ) dx
    whenever V(x) >= (|x| - shift)²/2 outside [-L, L].
    """
    z = (L - shift) / math.sqrt(2.0 * sigma)
    # log erfc(z) = log 2 + log Φ(-z√2)
    log_erfc = math.log(2.0) + float(log_ndtr(-z * math.sqrt(2.0)))
    return 0.5 * math.log(2.0 * math.pi * sigma) + log_erfc


@dataclasses.dataclass(frozen=True, eq=False)
class GibbsOracle1D:
    """
    Quadrature tables of μ_σ on a uniform grid over [-L, L].

    `log_density` is the normalized log pdf on the grid, `log_normalizer` is
    log C_σ with C_σ = ∫ exp(-V/σ) dx, and `log_tail_bound` bounds the relative
    mass outside [-L, L].
    """

    spec: GibbsSpec
    grid: np.ndarray
    values: np.ndarray
    log_density: np.ndarray
    log_normalizer: float
    cdf_table: np.ndarray
    L: float
    log_tail_bound: float

    @property
    def sigma(self) -> float:
        return self.spec.sigma

    @property
    def normalizer(self) -> float:
        return math.exp(self.log_normalizer)

    @property
    def density(self) -> np.ndarray:
        return np.exp(self.log_density)

    def pdf(self, x: tp.Any) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v = self.spec.potential.value(x[..., None])
        return np.exp(-v / self.sigma - self.log_normalizer)

    def cdf(self, x: tp.Any) -> np.ndarray:
        return np.interp(x, self.grid, self.cdf_table, left=0.0, right=1.0)

    def inverse_cdf(self, u: tp.Any) -> np.ndarray:
        levels, index = np.unique(self.cdf_table, return_index=True)
        return np.interp(u, levels, self.grid[index])

    def interval_mass(self, a: float, b: float) -> float:
        if b < a:
            raise ValueError(f"empty interval ({a}, {b})")
        return float(self.cdf(b) - self.cdf(a))

    def mean(self) -> float:
        return float(trapezoid(self.grid * self.density, self.grid))

    def variance(self) -> float:
        centered = self.grid - self.mean()
        return float(trapezoid(centered * centered * self.density, self.grid))


def _tabulate(spec: GibbsSpec, grid_points: int, L: float):
    grid = np.linspace(-L, L, grid_points)
    values = spec.potential.value(grid[:, None])
    exponent = -values / spec.sigma
    peak = float(np.max(exponent))
    scaled = np.exp(exponent - peak)
    mass = float(trapezoid(scaled, grid))
    log_normalizer = peak + math.log(mass)
    cdf = cumulative_trapezoid(scaled, grid, initial=0.0) / mass
    cdf = np.minimum(np.maximum.accumulate(cdf), 1.0)
    cdf[-1] = 1.0
    return grid, values, exponent - log_normalizer, log_normalizer, cdf


def build_oracle_1d(
    spec: GibbsSpec, grid_points: int = 20001, L: float | None = None
) -> GibbsOracle1D:
    """
    Tabulate μ_σ for a one-dimensional potential.

    Without `L` the domain starts from the potential's tail envelope and grows
    until the relative truncated mass is below 1e-40; an explicit `L` is
    rejected when the truncation bound exceeds 1e-12.
    """
    p = spec.potential
    if p.dim != 1:
        raise ValueError(f"quadrature oracle needs a 1-D potential, got dim {p.dim}")
    if grid_points < MIN_GRID_POINTS:
        raise ValueError(f"grid_points must be >= {MIN_GRID_POINTS}, got {grid_points}")
    envelope = p.tail_envelope()
    if envelope is None:
        raise ValueError(f"{p} has no quadratic tail envelope, truncation cannot be bounded")
    r0, shift = envelope
    sigma = spec.sigma

    if L is None:
        L = max(
            r0,
            shift + math.sqrt(2.0 * sigma * -math.log(AUTO_TAIL_TARGET)),
            1.0,
        )
        target = math.log(AUTO_TAIL_TARGET)
        for _ in range(64):
            table = _tabulate(spec, grid_points, L)
            log_bound = log_gaussian_tail_bound(L, shift, sigma) - table[3]
            if log_bound <= target:
                break
            L *= 1.25
        else:
            raise RuntimeError(f"could not bound the tail of {p} at sigma={sigma}")
    else:
        if L < r0:
            raise ValueError(f"L={L} is inside the tail envelope radius {r0} of {p}")
        table = _tabulate(spec, grid_points, L)
        log_bound = log_gaussian_tail_bound(L, shift, sigma) - table[3]
        if log_bound > math.log(TAIL_TOLERANCE):
            raise ValueError(
                f"truncated tail mass bound {math.exp(log_bound):.3g} exceeds {TAIL_TOLERANCE} at L={L}"
            )

    grid, values, log_density, log_normalizer, cdf = table
    logger.debug(
        f"Built oracle for {p} at sigma={sigma}: L={L:.6g}, log C={log_normalizer:.12g}"
    )
    return GibbsOracle1D(
        spec=spec,
        grid=grid,
        values=values,
        log_density=log_density,
        log_normalizer=log_normalizer,
        cdf_table=cdf,
        L=float(L),
        log_tail_bound=float(log_bound),
    )


def sample_oracle(o: GibbsOracle1D, n: int, seed: int) -> np.ndarray:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return o.inverse_cdf(make_generator(seed).random(n))


def tail_mass(o: GibbsOracle1D, tau: float) -> float:
    """μ_σ(V >= τ), integrating the density over the grid segments where V >= τ."""
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    v, g, density = o.values, o.grid, o.density
    above = v >= tau
    left, right = above[:-1], above[1:]
    step = np.diff(g)
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.clip((tau - v[:-1]) / (v[1:] - v[:-1]), 0.0, 1.0)
    frac = np.nan_to_num(frac)
    crossing = density[:-1] + frac * (density[1:] - density[:-1])
    full = 0.5 * (density[:-1] + density[1:]) * step
    head = 0.5 * (density[:-1] + crossing) * frac * step
    tail = 0.5 * (crossing + density[1:]) * (1.0 - frac) * step
    parts = np.where(
        left & right, full, np.where(left, head, np.where(right, tail, 0.0))
    )
    return float(min(max(np.sum(parts), 0.0), 1.0))


def laplace_weights(p: Potential) -> np.ndarray:
    """Limit masses det(∇²V(x_i*))^(-1/2), normalized, in the order of `p.minima`."""
    if not p.minima:
        raise ValueError(f"{p} lists no minima")
    dets = np.array([m.hessian_det for m in p.minima], dtype=float)
    if np.any(dets <= 0) or not np.all(np.isfinite(dets)):
        raise ValueError(f"hessian determinants must be positive, got {dets.tolist()}")
    log_w = -0.5 * np.log(dets)
    return np.exp(log_w - logsumexp(log_w))


def unit_directions(dim: int) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        angles = np.linspace(0.0, 2.0 * np.pi, 256, endpoint=False)
        return np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    if dim == 3:
        # Fibonacci sphere
        n = 512
        k = np.arange(n) + 0.5
        z = 1.0 - 2.0 * k / n
        rho = np.sqrt(1.0 - z * z)
        phi = np.pi * (3.0 - math.sqrt(5.0)) * k
        return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)
    raise ValueError(f"radial scans support dim <= 3, got {dim}")


@dataclasses.dataclass(frozen=True, eq=False)
class RadialProfile:
    """
    Shell extrema of V on a radius grid: `shell_min[i]` is the minimum over the
    sphere of radius `radii[i]` around the origin, `shell_max[i]` the maximum
    over the sphere of the same radius around `center` (a global minimizer).
    """

    radii: np.ndarray
    shell_min: np.ndarray
    shell_max: np.ndarray
    center: np.ndarray

    @classmethod
    def scan(
        cls, p: Potential, rho_max: float, points: int = 4001
    ) -> RadialProfile:
        if not p.minima:
            raise ValueError(f"{p} lists no minima")
        center = p.minima[0].point
        directions = unit_directions(p.dim)
        radii = np.linspace(0.0, rho_max, points)
        shells = radii[:, None, None] * directions[None, :, :]
        shell_min = np.min(p.value(shells), axis=-1)
        shell_max = np.max(p.value(center + shells), axis=-1)
        return cls(radii=radii, shell_min=shell_min, shell_max=shell_max, center=center)

    def outer_radius(self, tau: float) -> float:
        """Smallest scanned R* with V > τ on every scanned shell from R* outwards."""
        suffix = np.minimum.accumulate(self.shell_min[::-1])[::-1]
        index = np.flatnonzero(suffix > tau)
        if index.size == 0:
            return math.inf
        return float(max(self.radii[index[0]], self.radii[1]))

    def inner_radius(self, epsilon: float) -> float:
        """Largest scanned r with V < ε on the ball of radius r around the minimizer."""
        prefix = np.maximum.accumulate(self.shell_max)
        index = np.flatnonzero(prefix < epsilon)
        if index.size == 0:
            return 0.0
        return float(self.radii[index[-1]])

    def log_volume_ratio_constant(self, tau: float, epsilon: float) -> tp.Tuple[float, float, float]:
        """(R*, r, log C_{τ,ε,d}) with C_{τ,ε,d} = 2 Vol(B_{R*}) / Vol(B_r)."""
        R_star = self.outer_radius(tau)
        r = self.inner_radius(epsilon)
        d = self.center.size
        with np.errstate(divide="ignore"):
            log_c = math.log(2.0) + d * (math.log(R_star) - float(np.log(r)))
        return R_star, r, log_c


def radial_scan_limit(p: Potential, tau: float, radius: float) -> float:
    envelope = p.tail_envelope()
    if envelope is None:
        return radius + math.sqrt(2.0 * p.dim * tau) + 1.0
    r0, shift = envelope
    return max(r0, shift + math.sqrt(2.0 * tau), radius) + 1.0


def log_theorem35_bound(
    C_tau_eps_d_log: float,
    Csharp1_log: float,
    Csharp2_log: float,
    tau: float,
    epsilon: float,
    sigma: float,
    s: float,
    m: int,
    d: int,
) -> float:
    """log of C_{τ,ε,d} e^{-(τ-ε)/σ} + C♯1 √(d(2d+3)s) + C♯2 √(4d/m)."""
    if not 0 < epsilon < tau:
        raise ValueError(f"need 0 < epsilon < tau, got epsilon={epsilon}, tau={tau}")
    terms = [
        C_tau_eps_d_log - (tau - epsilon) / sigma,
        Csharp1_log + 0.5 * math.log(d * (2 * d + 3) * s),
        Csharp2_log + 0.5 * math.log(4.0 * d / m),
    ]
    return float(logsumexp(terms))


def log_theorem37_bound(
    Csharp_sigma_log: float,
    Csharp3_log: float,
    Csharp2_log: float,
    s: float,
    m: int,
    d: int,
) -> float:
    """log of C♯σ (C♯3 √s + C♯2 √(16d/m))."""
    inner = np.logaddexp(
        Csharp3_log + 0.5 * math.log(s), Csharp2_log + 0.5 * math.log(16.0 * d / m)
    )
    return float(Csharp_sigma_log + inner)


@dataclasses.dataclass(frozen=True, eq=False)
class ConstantsReport:
    """
    Grid extrema over the ball B_R and the constants built from them.

    Fields ending in `_log` are natural logarithms; `overflowed` names those
    whose logarithm itself is +inf. C2 uses the convention √d·C1.
    """

    dim: int
    sigma: float
    radius: float
    tolerance: float
    M1R: float
    M2R: float
    M3R: float
    m1R: float
    gamma_sigma_log: float
    xi_sigma_log: float
    zeta_sigma_log: float
    C0_log: float
    C1_log: float
    C2_log: float
    Csharp1_log: float
    Csharp2_log: float
    Cstar1_log: float
    Cstar2_log: float
    Csharp3_log: float
    Csharp_sigma_log: float
    tau: float
    epsilon: float
    K: int
    m: int
    R_star: float
    r_ball: float
    C_tau_eps_d_log: float
    bound_theorem35_log: float
    bound_theorem37_log: float
    overflowed: tp.Tuple[str, ...] = ()
    profile: RadialProfile | None = dataclasses.field(default=None, repr=False)

    @property
    def ratio_log(self) -> float:
        """log(γ_σ/ξ_σ)."""
        return self.gamma_sigma_log - self.xi_sigma_log

    def to_json_dict(self) -> tp.Dict[str, tp.Any]:
        content = {
            f.name: getattr(self, f.name)
            for f in dataclasses.fields(self)
            if f.name != "profile"
        }
        content["overflowed"] = list(self.overflowed)
        content["C2_convention"] = "sqrt(d) * C1"
        return content


CHUNK_SIZE = 1 << 16
REFINE_POINTS = 11


def _objectives(p: Potential) -> tp.Dict[str, tp.Tuple[tp.Callable[[np.ndarray], np.ndarray], int]]:
    eye = np.eye(p.dim)

    def residual(x: np.ndarray) -> np.ndarray:
        return p.tail_residual(x)

    def drift(x: np.ndarray) -> np.ndarray:
        return np.linalg.norm(p.drift_residual(x), axis=-1)

    def spectral(x: np.ndarray) -> np.ndarray:
        return np.max(np.abs(np.linalg.eigvalsh(eye - p.hessian(x))), axis=-1)

    # name -> (objective, +1 to maximize / -1 to minimize)
    return {"M1R": (residual, 1), "M2R": (drift, 1), "M3R": (spectral, 1), "m1R": (residual, -1)}


def _ball_grid(center: np.ndarray, half_width: float, points: int, radius: float) -> np.ndarray:
    axes = [np.linspace(c - half_width, c + half_width, points) for c in center]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, center.size)
    return mesh[np.sum(mesh * mesh, axis=-1) <= radius * radius]


def _best(fn: tp.Callable[[np.ndarray], np.ndarray], sign: int, points: np.ndarray):
    best_value, best_point = -math.inf, points[0]
    for start in range(0, len(points), CHUNK_SIZE):
        chunk = points[start : start + CHUNK_SIZE]
        values = sign * fn(chunk)
        i = int(np.argmax(values))
        if values[i] > best_value:
            best_value, best_point = float(values[i]), chunk[i]
    return best_value, best_point


def grid_extrema(
    p: Potential, radius: float, grid_points_per_dim: int, refine_rounds: int = 3
) -> tp.Tuple[tp.Dict[str, float], float]:
    """Extrema of the (P1)/(P2) objectives over ‖x‖ <= radius, and the final grid spacing."""
    if grid_points_per_dim < 3:
        raise ValueError(f"grid_points_per_dim must be >= 3, got {grid_points_per_dim}")
    coarse = _ball_grid(np.zeros(p.dim), radius, grid_points_per_dim, radius)
    spacing = 2.0 * radius / (grid_points_per_dim - 1)
    extrema: tp.Dict[str, float] = {}
    tolerance = spacing
    for name, (fn, sign) in _objectives(p).items():
        value, point = _best(fn, sign, coarse)
        half_width = spacing
        for _ in range(refine_rounds):
            local = _ball_grid(point, half_width, REFINE_POINTS, radius)
            if len(local):
                candidate, candidate_point = _best(fn, sign, local)
                if candidate > value:
                    value, point = candidate, candidate_point
            tolerance = 2.0 * half_width / (REFINE_POINTS - 1)
            half_width = tolerance
        extrema[name] = sign * value
    return extrema, tolerance


def compute_constants(
    p: Potential,
    sigma: float,
    grid_points_per_dim: int = 101,
    *,
    radius: float | None = None,
    tau: float = 0.5,
    epsilon: float = 0.25,
    K: int = 200,
    m: int = 1000,
    refine_rounds: int = 3,
) -> ConstantsReport:
    """
    Grid-search the (P1)/(P2) extrema over B_R and evaluate every derived
    constant in log scale, with both bounds at (τ, ε, s=1/K, m).

    R defaults to the outer edge R + Δ of the smoothing blend.
    """
    if p.dim > 3:
        raise ValueError(f"constants grid search supports dim <= 3, got {p.dim}")
    sigma = check_sigma(sigma)
    if radius is None:
        if p.smoothing_radius is not None:
            radius = p.smoothing_radius + (p.blend_width or 0.0)
        else:
            radius = p.default_smoothing_radius()
    if radius is None or radius <= 0:
        raise ValueError(f"{p} needs an explicit positive radius")
    d = p.dim

    extrema, tolerance = grid_extrema(p, radius, grid_points_per_dim, refine_rounds)
    M1R, M2R, M3R, m1R = extrema["M1R"], extrema["M2R"], extrema["M3R"], extrema["m1R"]

    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        gamma_log = float(np.log((M2R / sigma) ** 2 + M3R / sigma)) + M1R / sigma
        xi_log = m1R / sigma
        zeta_log = M1R / sigma
        r = gamma_log - xi_log
        C1 = float(np.logaddexp(r, 2 * r))
        C0 = C1
        C2 = C1 + 0.5 * math.log(d)
        Csharp1 = float(np.logaddexp(r, 3 * r))
        Csharp2 = float(np.logaddexp(2 * r, gamma_log + zeta_log - 2 * xi_log))
        Cstar1 = float(logsumexp([2 * r, 4 * r, 6 * r]))
        Cstar2 = float(np.logaddexp(4 * r, 2 * gamma_log + 2 * zeta_log - 4 * xi_log))
        sqrt_C0 = float(np.exp(0.5 * C0))
        inner = float(np.logaddexp(0.0, C0 + 2.0 * sqrt_C0 + 1.0))
        Csharp3 = float(
            np.logaddexp(math.log(2.0) + C1, math.log(4.0) + 2 * C1 + 0.5 * inner)
        )
        Csharp_sigma = 0.5 + 8.0 * float(np.exp(2 * C2))

    scan_limit = radial_scan_limit(p, tau, radius)
    profile = RadialProfile.scan(p, scan_limit)
    R_star, r_ball, C_ted = profile.log_volume_ratio_constant(tau, epsilon)
    s = 1.0 / K
    with np.errstate(over="ignore", invalid="ignore"):
        bound35 = log_theorem35_bound(C_ted, Csharp1, Csharp2, tau, epsilon, sigma, s, m, d)
        bound37 = log_theorem37_bound(Csharp_sigma, Csharp3, Csharp2, s, m, d)

    logs = {
        "gamma_sigma_log": gamma_log,
        "xi_sigma_log": xi_log,
        "zeta_sigma_log": zeta_log,
        "C0_log": C0,
        "C1_log": C1,
        "C2_log": C2,
        "Csharp1_log": Csharp1,
        "Csharp2_log": Csharp2,
        "Cstar1_log": Cstar1,
        "Cstar2_log": Cstar2,
        "Csharp3_log": Csharp3,
        "Csharp_sigma_log": Csharp_sigma,
        "C_tau_eps_d_log": C_ted,
        "bound_theorem35_log": bound35,
        "bound_theorem37_log": bound37,
    }
    overflowed = tuple(name for name, value in logs.items() if value == math.inf)
    if overflowed:
        logger.warning(f"Constants overflow even in log scale: {', '.join(overflowed)}")
    logger.info(
        f"Computed constants of {p} at sigma={sigma}: log(gamma/xi)={r:.6g}, tolerance={tolerance:.3g}"
    )
    return ConstantsReport(
        dim=d,
        sigma=sigma,
        radius=float(radius),
        tolerance=tolerance,
        M1R=M1R,
        M2R=M2R,
        M3R=M3R,
        m1R=m1R,
        tau=tau,
        epsilon=epsilon,
        K=K,
        m=m,
        R_star=R_star,
        r_ball=r_ball,
        overflowed=overflowed,
        profile=profile,
        **logs,
    )
