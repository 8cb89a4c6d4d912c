from __future__ import annotations

import abc
import dataclasses
import logging
import math
import typing as tp

import numpy as np

logger = logging.getLogger("sfsopt")


class Minimum(tp.NamedTuple):
    point: np.ndarray
    hessian_det: float


def smoothstep(u: np.ndarray) -> tp.Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quintic smoothstep S(u) = 6u^5 - 15u^4 + 10u^3 on [0, 1] with S' and S''."""
    u = np.clip(u, 0.0, 1.0)
    value = u**3 * (10.0 - 15.0 * u + 6.0 * u**2)
    first = 30.0 * u**2 * (1.0 - u) ** 2
    second = 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u)
    return value, first, second


class Potential(abc.ABC):
    """
    Objective V: R^d -> R, normalized so that its global minimum value is 0.

    Every method is vectorized over leading axes: `x` has shape (..., d),
    `value` returns (...), `gradient` (..., d) and `hessian` (..., d, d).
    """

    name: tp.ClassVar[str] = ""
    min_value: tp.ClassVar[float] = 0.0

    def __init__(self, dim: int, minima: tp.Sequence[Minimum] = (), offset: float = 0.0):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.dim = int(dim)
        self.offset = float(offset)
        self.minima: tp.List[Minimum] = [
            Minimum(np.asarray(m.point, dtype=float).reshape(self.dim), float(m.hessian_det))
            for m in minima
        ]

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__}(dim={self.dim})>"

    @property
    def known_minima(self) -> tp.List[np.ndarray]:
        return [m.point for m in self.minima]

    @property
    def smoothing_radius(self) -> float | None:
        """Radius beyond which the potential is ‖x‖²/2 (after the blend), None if unsmoothed."""
        return None

    @property
    def blend_width(self) -> float | None:
        return None

    @property
    def has_hessian(self) -> bool:
        return True

    def check_point(self, x: tp.Any) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.dim:
            raise ValueError(
                f"point of shape {x.shape} does not match potential dim {self.dim}"
            )
        return x

    def value(self, x: tp.Any) -> np.ndarray:
        x = self.check_point(x)
        return self._value(x) - self.offset

    def gradient(self, x: tp.Any) -> np.ndarray:
        return self._gradient(self.check_point(x))

    def hessian(self, x: tp.Any) -> np.ndarray:
        if not self.has_hessian:
            raise NotImplementedError(f"{self} has no analytic hessian")
        return self._hessian(self.check_point(x))

    def tail_residual(self, x: tp.Any) -> np.ndarray:
        """‖x‖²/2 - V(x), the exponent of the density ratio against N(0, σI) times σ."""
        x = self.check_point(x)
        return 0.5 * np.sum(x * x, axis=-1) - self.value(x)

    def drift_residual(self, x: tp.Any) -> np.ndarray:
        """x - ∇V(x)."""
        x = self.check_point(x)
        return x - self.gradient(x)

    def tail_envelope(self) -> tp.Optional[tp.Tuple[float, float]]:
        """
        (r0, shift) such that V(x) >= (‖x‖ - shift)²/2 whenever ‖x‖ >= r0, or None
        when no such bound is known.
        """
        return None

    def default_smoothing_radius(self) -> float | None:
        return None

    @abc.abstractmethod
    def _value(self, x: np.ndarray) -> np.ndarray:
        pass

    @abc.abstractmethod
    def _gradient(self, x: np.ndarray) -> np.ndarray:
        pass

    def _hessian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Quadratic(Potential):
    """V(x) = ‖x - a‖²/2, whose Gibbs measure is N(a, σI)."""

    name = "quadratic"

    def __init__(self, shift: tp.Any):
        self.shift = np.atleast_1d(np.asarray(shift, dtype=float))
        if self.shift.ndim != 1:
            raise ValueError(f"shift must be a vector, got shape {self.shift.shape}")
        super().__init__(self.shift.size, [Minimum(self.shift, 1.0)])

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__}(shift={self.shift.tolist()})>"

    def _value(self, x: np.ndarray) -> np.ndarray:
        z = x - self.shift
        return 0.5 * np.sum(z * z, axis=-1)

    def _gradient(self, x: np.ndarray) -> np.ndarray:
        return x - self.shift

    def _hessian(self, x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.eye(self.dim), x.shape + (self.dim,)).copy()

    def tail_residual(self, x: tp.Any) -> np.ndarray:
        x = self.check_point(x)
        return x @ self.shift - 0.5 * float(self.shift @ self.shift)

    def drift_residual(self, x: tp.Any) -> np.ndarray:
        x = self.check_point(x)
        return np.broadcast_to(self.shift, x.shape).copy()

    def tail_envelope(self) -> tp.Tuple[float, float]:
        norm = float(np.linalg.norm(self.shift))
        return norm, norm


@dataclasses.dataclass(frozen=True)
class RastriginParams:
    B: float = 0.0
    C: float = 0.0
    dim: int = 2


class Rastrigin(Potential):
    """V(x) = (1/d) Σ [(x_i - B)² - 10 cos(2π(x_i - B)) + 10] + C, with C removed."""

    name = "rastrigin"

    def __init__(self, params: RastriginParams):
        self.params = params
        d = params.dim
        point = np.full(d, float(params.B))
        hessian_det = ((2.0 + 40.0 * math.pi**2) / d) ** d
        super().__init__(d, [Minimum(point, hessian_det)], offset=params.C)

    def __repr__(self) -> str:
        p = self.params
        return f"<{self.__class__.__name__}(dim={p.dim}, B={p.B}, C={p.C})>"

    def _value(self, x: np.ndarray) -> np.ndarray:
        z = x - self.params.B
        terms = z * z - 10.0 * np.cos(2.0 * np.pi * z) + 10.0
        return np.sum(terms, axis=-1) / self.dim + self.params.C

    def _gradient(self, x: np.ndarray) -> np.ndarray:
        z = x - self.params.B
        return (2.0 * z + 20.0 * np.pi * np.sin(2.0 * np.pi * z)) / self.dim

    def _hessian(self, x: np.ndarray) -> np.ndarray:
        z = x - self.params.B
        diagonal = (2.0 + 40.0 * np.pi**2 * np.cos(2.0 * np.pi * z)) / self.dim
        return diagonal[..., :, None] * np.eye(self.dim)

    def tail_envelope(self) -> tp.Optional[tp.Tuple[float, float]]:
        # (1/d)‖x - B‖² only dominates ‖x - B‖²/2 for d <= 2
        if self.dim > 2:
            return None
        shift = abs(self.params.B) * math.sqrt(self.dim)
        return shift, shift

    def default_smoothing_radius(self) -> float:
        return 5.0 * (1.0 + abs(self.params.B))


class DoubleWell1D(Potential):
    """
    V(x) = c(x)(x² - 1)²/8 with c blending from c1 to c2 over [-h, h].

    Minima at -1 and +1, both of value 0, with V''(-1) = c1 and V''(+1) = c2.
    """

    name = "double_well"
    HALF_WIDTH: tp.ClassVar[float] = 0.5

    def __init__(self, c1: float, c2: float):
        if c1 <= 0 or c2 <= 0:
            raise ValueError(f"curvatures must be > 0, got c1={c1}, c2={c2}")
        self.c1 = float(c1)
        self.c2 = float(c2)
        super().__init__(1, [Minimum(np.array([-1.0]), self.c1), Minimum(np.array([1.0]), self.c2)])

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__}(c1={self.c1}, c2={self.c2})>"

    def _curvature(self, x: np.ndarray) -> tp.Tuple[np.ndarray, np.ndarray, np.ndarray]:
        h = self.HALF_WIDTH
        s, s1, s2 = smoothstep((x + h) / (2.0 * h))
        jump = self.c2 - self.c1
        return self.c1 + jump * s, jump * s1 / (2.0 * h), jump * s2 / (2.0 * h) ** 2

    def _value(self, x: np.ndarray) -> np.ndarray:
        x = x[..., 0]
        c, _, _ = self._curvature(x)
        return c * (x * x - 1.0) ** 2 / 8.0

    def _gradient(self, x: np.ndarray) -> np.ndarray:
        x = x[..., 0]
        c, c1, _ = self._curvature(x)
        q = (x * x - 1.0) ** 2 / 8.0
        q1 = x * (x * x - 1.0) / 2.0
        return (c1 * q + c * q1)[..., None]

    def _hessian(self, x: np.ndarray) -> np.ndarray:
        x = x[..., 0]
        c, c1, c2 = self._curvature(x)
        q = (x * x - 1.0) ** 2 / 8.0
        q1 = x * (x * x - 1.0) / 2.0
        q2 = (3.0 * x * x - 1.0) / 2.0
        return (c2 * q + 2.0 * c1 * q1 + c * q2)[..., None, None]

    def tail_envelope(self) -> tp.Tuple[float, float]:
        inv = 1.0 / min(self.c1, self.c2)
        return math.sqrt(inv) + math.sqrt(inv + 1.0), 0.0

    def default_smoothing_radius(self) -> float:
        return 2.0 + self.tail_envelope()[0]


class QuadraticTail(Potential):
    """
    W(x) = (1 - w(r)) V(x) + w(r) ‖x‖²/2 with r = ‖x‖ and w the quintic smoothstep of
    (r - R)/Δ: W equals V on the ball of radius R and ‖x‖²/2 exactly beyond R + Δ.
    """

    def __init__(self, inner: Potential, radius: float, delta: float | None = None):
        delta = radius / 5.0 if delta is None else delta
        if radius <= 0:
            raise ValueError(f"smoothing radius must be > 0, got {radius}")
        if delta <= 0:
            raise ValueError(f"blend width must be > 0, got {delta}")
        for minimum in inner.minima:
            norm = float(np.linalg.norm(minimum.point))
            if norm >= radius:
                raise ValueError(
                    f"minimizer {minimum.point.tolist()} (norm {norm}) is not inside the smoothing radius {radius}"
                )
        self.inner = inner
        self.radius = float(radius)
        self.delta = float(delta)
        super().__init__(inner.dim, inner.minima)

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__}({self.inner!r}, R={self.radius}, delta={self.delta})>"

    @property
    def smoothing_radius(self) -> float:
        return self.radius

    @property
    def blend_width(self) -> float:
        return self.delta

    @property
    def has_hessian(self) -> bool:
        return self.inner.has_hessian

    def default_smoothing_radius(self) -> float:
        return self.radius

    def tail_envelope(self) -> tp.Tuple[float, float]:
        return self.radius + self.delta, 0.0

    def _blend(self, x: np.ndarray):
        r = np.sqrt(np.sum(x * x, axis=-1))
        u = (r - self.radius) / self.delta
        w, w1, w2 = smoothstep(u)
        safe_r = np.where(r > 0.0, r, 1.0)
        return r, safe_r, u, w, w1 / self.delta, w2 / self.delta**2

    def _value(self, x: np.ndarray) -> np.ndarray:
        _, _, u, w, _, _ = self._blend(x)
        q = 0.5 * np.sum(x * x, axis=-1)
        v = self.inner.value(x)
        return np.where(u >= 1.0, q, np.where(u <= 0.0, v, (1.0 - w) * v + w * q))

    def _gradient(self, x: np.ndarray) -> np.ndarray:
        _, safe_r, u, w, w1, _ = self._blend(x)
        residual = self.inner.tail_residual(x)
        g = self.inner.gradient(x)
        blended = (
            (1.0 - w)[..., None] * g
            + w[..., None] * x
            + (residual * w1 / safe_r)[..., None] * x
        )
        return np.where(
            (u >= 1.0)[..., None], x, np.where((u <= 0.0)[..., None], g, blended)
        )

    def _hessian(self, x: np.ndarray) -> np.ndarray:
        _, safe_r, u, w, w1, w2 = self._blend(x)
        eye = np.eye(self.dim)
        h = self.inner.hessian(x)
        residual = self.inner.tail_residual(x)
        drift = self.inner.drift_residual(x)
        unit = x / safe_r[..., None]
        outer_unit = unit[..., :, None] * unit[..., None, :]
        cross = x[..., :, None] * drift[..., None, :]
        ww = w[..., None, None]
        blended = (
            (1.0 - ww) * h
            + ww * eye
            + (w1 / safe_r)[..., None, None] * (cross + np.swapaxes(cross, -1, -2))
            + residual[..., None, None]
            * (
                w2[..., None, None] * outer_unit
                + (w1 / safe_r)[..., None, None] * (eye - outer_unit)
            )
        )
        tail = np.broadcast_to(eye, blended.shape)
        return np.where(
            (u >= 1.0)[..., None, None], tail, np.where((u <= 0.0)[..., None, None], h, blended)
        )

    def tail_residual(self, x: tp.Any) -> np.ndarray:
        x = self.check_point(x)
        _, _, u, w, _, _ = self._blend(x)
        inner = self.inner.tail_residual(x)
        return np.where(u >= 1.0, 0.0, np.where(u <= 0.0, inner, (1.0 - w) * inner))

    def drift_residual(self, x: tp.Any) -> np.ndarray:
        x = self.check_point(x)
        _, safe_r, u, w, w1, _ = self._blend(x)
        residual = self.inner.tail_residual(x)
        drift = self.inner.drift_residual(x)
        blended = (1.0 - w)[..., None] * drift - (residual * w1 / safe_r)[..., None] * x
        return np.where(
            (u >= 1.0)[..., None], 0.0, np.where((u <= 0.0)[..., None], drift, blended)
        )


def make_quadratic(dim: int, shift: tp.Any = None) -> Quadratic:
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    shift = np.zeros(dim) if shift is None else np.atleast_1d(np.asarray(shift, dtype=float))
    if shift.shape != (dim,):
        raise ValueError(f"shift of shape {shift.shape} does not match dim {dim}")
    return Quadratic(shift)


def make_rastrigin(params: RastriginParams) -> Rastrigin:
    if params.dim < 1:
        raise ValueError(f"dim must be >= 1, got {params.dim}")
    return Rastrigin(params)


def make_double_well_1d(c1: float, c2: float) -> DoubleWell1D:
    return DoubleWell1D(c1, c2)


def smooth_to_quadratic_tail(
    p: Potential, R: float | None = None, delta: float | None = None
) -> QuadraticTail:
    """Blend `p` into ‖x‖²/2 between radii R and R + delta (delta defaults to R/5)."""
    R = p.default_smoothing_radius() if R is None else R
    if R is None:
        raise ValueError(f"{p} has no default smoothing radius, give R explicitly")
    return QuadraticTail(p, R, delta)


BUILDER = tp.Callable[..., Potential]


class PotentialRegistry:
    def __init__(self) -> None:
        self.builders: tp.Dict[str, BUILDER] = {}

    def __contains__(self, name: str) -> bool:
        return name in self.builders

    def register_builder(self, name: str, builder: BUILDER):
        if name in self.builders:
            raise ValueError("double potential, check potential name")
        self.builders[name] = builder

    def register(self, name: str) -> tp.Callable[[BUILDER], BUILDER]:
        def wrapped(builder: BUILDER) -> BUILDER:
            self.register_builder(name, builder)
            return builder

        return wrapped

    def build(
        self,
        name: str,
        params: tp.Mapping[str, tp.Any] | None = None,
        smoothing: tp.Mapping[str, tp.Any] | None = None,
    ) -> Potential:
        """
        Build potential `name` from `params`; a `smoothing` mapping with optional
        keys "R" and "delta" wraps it in a quadratic tail.
        """
        if name not in self.builders:
            raise ValueError(
                f"unknown potential {name!r}, expected one of {sorted(self.builders)}"
            )
        try:
            potential = self.builders[name](**(params or {}))
        except TypeError as e:
            raise ValueError(f"invalid parameters for potential {name!r}: {e}") from e
        if smoothing is not None:
            potential = smooth_to_quadratic_tail(
                potential, smoothing.get("R"), smoothing.get("delta")
            )
        logger.debug(f"Built potential {potential}")
        return potential


registry = PotentialRegistry()


@registry.register("quadratic")
def _build_quadratic(dim: int = 1, shift: tp.Sequence[float] | None = None) -> Potential:
    return make_quadratic(dim, shift)


@registry.register("rastrigin")
def _build_rastrigin(dim: int = 2, B: float = 0.0, C: float = 0.0) -> Potential:
    return make_rastrigin(RastriginParams(B=B, C=C, dim=dim))


@registry.register("double_well")
def _build_double_well(c1: float = 1.0, c2: float = 1.0) -> Potential:
    return make_double_well_1d(c1, c2)
