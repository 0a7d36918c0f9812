"""Additive and twisted cocycles over a map, periodic obstructions and Livshits checks."""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy import linalg

from models.errors import ConfigError
from models.responses import ErrorCode
from services.expressions import Expression
from services.geometry import ManifoldKind
from services.maps import MapService, MapSpec
from services.normalform import ChartFamily, NormalFormService
from services.periodic import PeriodicOrbit
from services.splitting import DEFAULT_ITERATIONS, SplittingService

logger = logging.getLogger(__name__)

WELL_DEFINED_TOLERANCE = 1e-8
ORBIT_RESIDUAL_LIMIT = 1e-10
LIVSHITS_TOLERANCE = 1e-10
FOURIER_MODES = 3
FOURIER_MODES_3D = 2

VERDICT_ZERO = "all_zero"
VERDICT_NONNEGATIVE = "all_nonnegative"
VERDICT_MIXED = "mixed"

Generator = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class AdditiveCocycle:
    """Real function on the manifold, evaluated on arrays of points (..., 3)."""
    generator: Generator = field(compare=False)
    label: str = ""

    def __call__(self, points) -> np.ndarray:
        return np.asarray(self.generator(np.asarray(points, dtype=float)), dtype=float)

    @classmethod
    def from_expression(cls, text: str, params=None) -> "AdditiveCocycle":
        expr = Expression.parse(text)
        return cls(lambda pts: expr.evaluate(pts, params or {}), label=text)

    @classmethod
    def constant(cls, value: float) -> "AdditiveCocycle":
        return cls(lambda pts: np.full(pts.shape[:-1], float(value)), label=repr(float(value)))

    @classmethod
    def log_det(cls, spec: MapSpec) -> "AdditiveCocycle":
        return cls(lambda pts: np.log(np.abs(np.linalg.det(MapService.jacobian(spec, pts)))), label=f"log|det D{spec.name}|")

    @classmethod
    def coboundary(cls, spec: MapSpec, potential: str) -> "AdditiveCocycle":
        """Phi o f - Phi for a potential that is well defined on the quotient."""
        phi = Expression.parse(potential)

        def generator(pts):
            return phi.evaluate(MapService.apply(spec, pts), spec.params) - phi.evaluate(pts, spec.params)

        return cls(generator, label=f"{potential} o f - {potential}")


@dataclass(frozen=True)
class TwistedCocycle:
    """alpha with twist lambda; alpha_x(n) = sum_l lambda_x(l) alpha(f^l x)."""
    generator: Generator = field(compare=False)
    twist: Generator = field(compare=False)
    label: str = ""

    @classmethod
    def untwisted(cls, cocycle: AdditiveCocycle) -> "TwistedCocycle":
        return cls(cocycle.generator, lambda pts: np.ones(np.asarray(pts).shape[:-1]), label=cocycle.label)

    @classmethod
    def twisted_coboundary(cls, spec: MapSpec, twist: Generator, beta: str) -> "TwistedCocycle":
        """lambda * beta o f - beta."""
        b = Expression.parse(beta)

        def generator(pts):
            return twist(pts) * b.evaluate(MapService.apply(spec, pts), spec.params) - b.evaluate(pts, spec.params)

        return cls(generator, twist, label=f"twisted coboundary of {beta}")

    @classmethod
    def foulon_hasselblatt(cls, spec: MapSpec, family: Optional[ChartFamily] = None) -> "TwistedCocycle":
        return cls(
            lambda pts: NormalFormService.fh_coefficient(spec, np.atleast_2d(pts), family).reshape(np.shape(pts)[:-1]),
            lambda pts: CocycleService.fh_twist(spec, pts),
            label=f"FH cocycle of {spec.name} ({(family or ChartFamily()).surface})",
        )


@dataclass(frozen=True)
class PeriodicObstruction:
    orbit: PeriodicOrbit
    value: float
    twist_product: float
    well_defined: bool
    spread: float
    sums: np.ndarray


@dataclass(frozen=True)
class LivshitsVerdict:
    verdict: str
    worst_period: Optional[int]
    worst_value: Optional[float]
    sums: List[float]


@dataclass(frozen=True)
class BetaFit:
    coefficients: np.ndarray
    modes: np.ndarray
    beta: np.ndarray
    residual: float
    generator_sup: float

    def evaluate(self, points) -> np.ndarray:
        return _fourier_basis(np.asarray(points, dtype=float), self.modes) @ self.coefficients


def _twisted_accumulate(values: np.ndarray, twists: np.ndarray) -> float:
    """sum_l (prod_{j<l} twists[j]) values[l], accumulated in orbit order."""
    total = 0.0
    weight = 1.0
    for value, twist in zip(values, twists):
        total += weight * value
        weight *= twist
    return total


def _fourier_modes(dim: int) -> np.ndarray:
    top = FOURIER_MODES if dim == 2 else FOURIER_MODES_3D
    grids = np.meshgrid(*[np.arange(-top, top + 1)] * dim, indexing="ij")
    modes = np.stack([g.ravel() for g in grids], axis=-1)
    # one representative per +-k pair, constant mode first
    keep = [k for k in modes if tuple(k) >= tuple(-k)]
    return np.array(sorted(keep, key=lambda k: (np.abs(k).sum(), tuple(k))))


def _fourier_basis(points: np.ndarray, modes: np.ndarray) -> np.ndarray:
    coords = points[..., : modes.shape[1]]
    phase = 2 * np.pi * coords @ modes.T
    columns = [np.ones(points.shape[:-1])]
    for i, k in enumerate(modes):
        if not np.any(k):
            continue
        columns.append(np.cos(phase[..., i]))
        columns.append(np.sin(phase[..., i]))
    return np.stack(columns, axis=-1)


class CocycleService:
    """Sums of cocycles along orbits and the tests built on them."""

    @staticmethod
    def _signed_orbit(spec: MapSpec, x, n: int) -> np.ndarray:
        """f^k x for k = 0..n-1 when n >= 0, f^{-k} x for k = 1..|n| otherwise."""
        points = MapService.orbit_points(spec, np.asarray(x, dtype=float), n)
        return points[:-1] if n >= 0 else points[1:]

    @staticmethod
    def birkhoff_sum(cocycle: AdditiveCocycle, spec: MapSpec, x, n: int) -> float:
        if n == 0:
            return 0.0
        values = cocycle(CocycleService._signed_orbit(spec, x, n))
        total = 0.0
        for value in values:
            total += value
        return total if n > 0 else -total

    @staticmethod
    def twisted_sum(cocycle: TwistedCocycle, spec: MapSpec, x, n: int) -> float:
        """alpha_x(n); for n < 0, -sum_{l=1}^{|n|} lambda_x(-l) alpha(f^{-l} x) with lambda_x(-l) = prod 1/lambda(f^{-j} x)."""
        if n == 0:
            return 0.0
        points = CocycleService._signed_orbit(spec, x, n)
        values = cocycle.generator(points)
        twists = cocycle.twist(points)
        if n > 0:
            return _twisted_accumulate(values, twists)
        return -_twisted_accumulate(values / twists, 1.0 / twists)

    @staticmethod
    def twist_weight(cocycle: TwistedCocycle, spec: MapSpec, x, n: int) -> float:
        """lambda_x(n)."""
        if n == 0:
            return 1.0
        twists = cocycle.twist(CocycleService._signed_orbit(spec, x, n))
        return float(np.prod(twists)) if n > 0 else float(np.prod(1.0 / twists))

    @staticmethod
    def fh_twist(spec: MapSpec, points, iterations: int = DEFAULT_ITERATIONS) -> np.ndarray:
        """lambda^s_x lambda^u_x / lambda^c_{f x} in the declared metric frame."""
        points = np.asarray(points, dtype=float)
        flat = points.reshape(-1, 3)
        frames = SplittingService.orbit_frames(spec, flat, ahead=2, n=iterations)
        m = SplittingService.step_multipliers(spec, frames)
        return (m[0, :, 0] * m[0, :, 2] / m[1, :, 1]).reshape(points.shape[:-1])

    @staticmethod
    def fh_twist_product(spec: MapSpec, x, n: int, iterations: int = DEFAULT_ITERATIONS) -> dict:
        """prod of the twist over n steps next to lambda^s_x(n) lambda^u_x(n) / lambda^c_{f x}(n)."""
        x = np.asarray(x, dtype=float)
        orbit = MapService.orbit_points(spec, x, n)
        product = float(np.prod(CocycleService.fh_twist(spec, orbit[:-1], iterations)))
        here = SplittingService.finite_time_exponents(spec, x, n, iterations)
        there = SplittingService.finite_time_exponents(spec, orbit[1], n, iterations)
        ratio = float(here.lambda_s[0] * here.lambda_u[0] / there.lambda_c[0])
        return {"product": product, "ratio": ratio}

    @staticmethod
    def periodic_obstruction(
        cocycle: TwistedCocycle,
        orbit: PeriodicOrbit,
        tolerance: float = WELL_DEFINED_TOLERANCE,
    ) -> PeriodicObstruction:
        """Twisted sum over one period from every orbit point."""
        if orbit.residual > ORBIT_RESIDUAL_LIMIT:
            logger.warning(f"periodic orbit residual {orbit.residual:.2e} above {ORBIT_RESIDUAL_LIMIT:.0e}")
        points = orbit.points
        values = cocycle.generator(points)
        twists = cocycle.twist(points)
        n = len(points)
        sums = np.array([
            _twisted_accumulate(np.roll(values, -i), np.roll(twists, -i)) for i in range(n)
        ])
        product = float(np.prod(twists))
        well_defined = abs(product - 1.0) <= tolerance
        spread = float(np.ptp(sums))
        if well_defined and spread > tolerance * (1.0 + abs(sums[0])):
            logger.warning(f"obstruction spread {spread:.2e} across starting points of a period-{n} orbit")
        return PeriodicObstruction(orbit, float(sums[0]), product, well_defined, spread, sums)

    @staticmethod
    def livshits_sign_test(
        cocycle: AdditiveCocycle,
        orbits: Sequence[PeriodicOrbit],
        tolerance: float = LIVSHITS_TOLERANCE,
    ) -> LivshitsVerdict:
        if not orbits:
            raise ConfigError(
                "Livshits test needs at least one periodic orbit",
                code=ErrorCode.COC_NO_ORBITS,
                field="cocycles.orbits",
            )
        sums = []
        for orbit in orbits:
            total = 0.0
            for value in cocycle(orbit.points):
                total += value
            sums.append(total)
        periods = [o.period for o in orbits]
        scaled = [s / p for s, p in zip(sums, periods)]
        worst = int(np.argmin(scaled))
        if all(abs(v) <= tolerance for v in scaled):
            verdict = VERDICT_ZERO
            worst = int(np.argmax(np.abs(scaled)))
        elif all(v >= -tolerance for v in scaled):
            verdict = VERDICT_NONNEGATIVE
        else:
            verdict = VERDICT_MIXED
        logger.info(f"Livshits test over {len(orbits)} orbits: {verdict}")
        return LivshitsVerdict(verdict, periods[worst], float(sums[worst]), [float(s) for s in sums])

    @staticmethod
    def coboundary_residual(cocycle: TwistedCocycle, segment, beta) -> float:
        """max |alpha(x) - (lambda(x) beta(f x) - beta(x))| over an orbit segment; beta sampled at every segment point."""
        segment = np.asarray(segment, dtype=float)
        beta = np.asarray(beta, dtype=float)
        here = segment[:-1]
        target = cocycle.twist(here) * beta[1:] - beta[:-1]
        return float(np.max(np.abs(cocycle.generator(here) - target)))

    @staticmethod
    def fit_twisted_coboundary(
        cocycle: TwistedCocycle, spec: MapSpec, x, n: int = 1000
    ) -> BetaFit:
        """Least-squares trigonometric beta with alpha ~ lambda beta o f - beta along an orbit segment."""
        segment = MapService.orbit_points(spec, np.asarray(x, dtype=float), n)
        dim = 2 if spec.manifold.kind == ManifoldKind.HEISENBERG or spec.base is not None else 3
        modes = _fourier_modes(dim)
        basis = _fourier_basis(segment, modes)
        here = segment[:-1]
        alpha = cocycle.generator(here)
        twist = cocycle.twist(here)
        design = twist[:, None] * basis[1:] - basis[:-1]
        coefficients, *_ = linalg.lstsq(design, alpha)
        beta = basis @ coefficients
        residual = CocycleService.coboundary_residual(cocycle, segment, beta)
        logger.info(f"{spec.name}: twisted coboundary fit over {n} steps, residual {residual:.3e}")
        return BetaFit(coefficients, modes, beta, residual, float(np.max(np.abs(alpha))))
