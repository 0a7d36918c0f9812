"""Periodic-orbit search and parameter continuation.

Maps that declare a base (skew products over the 2-torus) are searched on
the base and their orbits are lifted to the fiber z = 0, recording the
fiber displacement that closes the orbit. Torus maps without a base are
searched on the full 3-torus.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from models.errors import ConfigError, ContinuationError
from models.responses import ErrorCode
from services.geometry import TORUS2, Manifold
from services.jets import Jet1D
from services.maps import NEWTON_MAX_ITERATIONS, NEWTON_TOLERANCE, MapService, MapSpec, base_expressions

logger = logging.getLogger(__name__)

DEFAULT_GRID = 64  # seeds per axis on the base
DEFAULT_GRID_3D = 16  # seeds per axis when searching the full 3-torus
NEAREST_SEEDS = 4  # k-d tree neighbours tried per deck word
DEDUP_DISTANCE = 1e-6
ORBIT_MATCH_DISTANCE = 1e-8
SINGULAR_DETERMINANT = 1e-12
INITIAL_STEP = 1e-2
MAX_HALVINGS = 3


def _embed(points) -> np.ndarray:
    """(..., 2) base points as (..., 3) points on the fiber z = 0."""
    points = np.asarray(points, dtype=float)
    return np.concatenate([points, np.zeros(points.shape[:-1] + (1,))], axis=-1)


def _snap(points: np.ndarray) -> np.ndarray:
    """Reduced coordinates with values rounding to an integer set to 0."""
    return np.where(np.abs(points - np.rint(points)) < 1e-13, 0.0, points)


@dataclass(frozen=True)
class BaseMap:
    """The factor map g on the 2-torus of a skew product."""
    spec: MapSpec

    @classmethod
    def of(cls, spec: MapSpec) -> "BaseMap":
        base_expressions(spec)
        return cls(spec)

    @property
    def dim(self) -> int:
        return 2

    @property
    def manifold(self) -> Manifold:
        return TORUS2

    def lift(self, points) -> np.ndarray:
        embedded = _embed(points)
        return np.stack([e.evaluate(embedded, self.spec.params) for e in self.spec.base], axis=-1)

    def jacobian(self, points) -> np.ndarray:
        embedded = _embed(points)
        jets = [e.jet2(embedded, self.spec.params) for e in self.spec.base]
        return np.stack([j.grad[..., :2] for j in jets], axis=-2)

    def parameter_derivative(self, points, n: int) -> np.ndarray:
        """d/d(eps) of the n-th iterate lift at fixed points, eps the family parameter."""
        points = np.asarray(points, dtype=float)
        name = self.spec.family_parameter
        if name is None:
            return np.zeros_like(points)
        eps = float(self.spec.params[name])
        params = dict(self.spec.params)
        params[name] = Jet1D.variable(eps, order=1)
        x = Jet1D.constant(points[..., 0], order=1, base=eps)
        y = Jet1D.constant(points[..., 1], order=1, base=eps)
        for _ in range(n):
            x, y = [e.bind(x, y, 0.0, params) for e in self.spec.base]
        return np.stack([_first_order(x, points.shape[:-1]), _first_order(y, points.shape[:-1])], axis=-1)


def _first_order(value, shape) -> np.ndarray:
    if isinstance(value, Jet1D):
        return np.broadcast_to(value.coeffs[1], shape).copy()
    return np.zeros(shape)


@dataclass(frozen=True)
class _CoverMap:
    """A 3-torus map seen as its own closing system."""
    spec: MapSpec

    @property
    def dim(self) -> int:
        return 3

    @property
    def manifold(self) -> Manifold:
        return self.spec.manifold

    def lift(self, points) -> np.ndarray:
        return MapService.lift(self.spec, points)

    def jacobian(self, points) -> np.ndarray:
        return MapService.jacobian(self.spec, points)


def _lift_n(system, points, n: int) -> np.ndarray:
    for _ in range(n):
        points = system.lift(points)
    return points


def _jacobian_n(system, points, n: int) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    jac = np.broadcast_to(np.eye(system.dim), points.shape[:-1] + (system.dim, system.dim)).copy()
    for _ in range(n):
        jac = system.jacobian(points) @ jac
        points = system.lift(points)
    return jac


@dataclass(frozen=True)
class PeriodicOrbit:
    """A periodic orbit on the quotient.

    points are reduced 3D representatives; decks[i] is the deck word used to
    reduce f(points[i]). For orbits found on a base, fiber_shift is the fiber
    displacement after one full period, so points[0] is periodic for f itself
    only when it vanishes.
    """
    points: np.ndarray
    period: int
    decks: np.ndarray
    residual: float
    fiber_shift: float = 0.0
    on_base: bool = False

    def __repr__(self):
        head = ", ".join(f"{c:.6f}" for c in self.points[0])
        return f"<PeriodicOrbit(period={self.period}, p0=({head}), residual={self.residual:.2e})>"


@dataclass(frozen=True)
class ContinuationCurve:
    """p0(eps) of a continued orbit with the predictor tangents and a finite-difference derivative."""
    parameter: str
    values: np.ndarray
    points: np.ndarray  # (m, 2) continuous lift of p0
    orbits: np.ndarray  # (m, period, 2) reduced orbit points
    residuals: np.ndarray
    tangents: np.ndarray
    derivative: np.ndarray


class PeriodicService:
    """Periodic orbits and their continuation in a family parameter."""

    @staticmethod
    def closing_system(spec: MapSpec):
        if spec.base is not None or spec.manifold.is_heisenberg:
            return BaseMap.of(spec)
        return _CoverMap(spec)

    @staticmethod
    def find_periodic_orbits(
        spec: MapSpec,
        period: int,
        resolution: Optional[int] = None,
        tol: float = 1e-10,
    ) -> List[PeriodicOrbit]:
        """All orbits whose minimal period divides `period`, sorted by their first point."""
        if period < 1:
            raise ConfigError("period must be at least 1", field="periodic.period")
        system = PeriodicService.closing_system(spec)
        if resolution is None:
            resolution = DEFAULT_GRID if system.dim == 2 else DEFAULT_GRID_3D
        roots = _closing_roots(system, period, resolution)
        orbits = _group_orbits(spec, system, roots, period, tol)
        logger.info(
            f"{spec.name}: {len(orbits)} orbits ({sum(o.period for o in orbits)} points) "
            f"dividing period {period}"
        )
        return orbits

    @staticmethod
    def predictor_tangent(base: BaseMap, point, period: int) -> np.ndarray:
        """-(Dg^n - I)^{-1} d_eps g^n at a periodic point of the base."""
        point = np.asarray(point, dtype=float)
        jac = _jacobian_n(base, point, period) - np.eye(2)
        return -np.linalg.solve(jac, base.parameter_derivative(point, period))

    @staticmethod
    def continue_periodic_orbit(
        spec: MapSpec,
        orbit: PeriodicOrbit,
        path: Sequence[float],
        initial_step: float = INITIAL_STEP,
    ) -> ContinuationCurve:
        """Predictor-corrector continuation of orbit.points[0] along the eps values in path."""
        name = spec.family_parameter
        if name is None:
            raise ConfigError(
                f"map {spec.name} declares no family parameter",
                code=ErrorCode.CONFIG_MISSING_FIELD,
                field="map.family_parameter",
            )
        n = orbit.period
        current = float(spec.params[name])
        base = BaseMap.of(spec)
        p = np.asarray(orbit.points[0, :2], dtype=float)
        deck = np.rint(_lift_n(base, p, n) - p)
        tangent = PeriodicService.predictor_tangent(base, p, n)

        values, points, residuals, tangents = [current], [p], [_closing_residual(base, p, n, deck)], [tangent]
        for target in path:
            target = float(target)
            if target == current:
                continue
            while current != target:
                step = float(np.clip(target - current, -initial_step, initial_step))
                for halving in range(MAX_HALVINGS + 1):
                    trial = target if abs(step) >= abs(target - current) else current + step
                    moved = BaseMap(spec.with_params(**{name: trial}))
                    corrected = _newton_closing(moved, p + tangent * (trial - current), n, deck)
                    if corrected is not None:
                        break
                    logger.debug(f"continuation step {step:.3e} at {name}={current:.6g} failed, halving")
                    step /= 2.0
                else:
                    raise ContinuationError(
                        f"continuation stalled at {name}={current:.6g} after {MAX_HALVINGS} halvings",
                        details={"parameter": name, "value": current},
                    )
                current, p, base = trial, corrected, moved
                tangent = PeriodicService.predictor_tangent(base, p, n)
            values.append(current)
            points.append(p)
            residuals.append(_closing_residual(base, p, n, deck))
            tangents.append(tangent)

        values = np.array(values)
        points = np.array(points)
        orbits = np.stack([_base_orbit(BaseMap(spec.with_params(**{name: v})), q, n) for v, q in zip(values, points)])
        derivative = np.gradient(points, values, axis=0) if len(values) > 1 else np.zeros_like(points)
        return ContinuationCurve(
            parameter=name,
            values=values,
            points=points,
            orbits=orbits,
            residuals=np.array(residuals),
            tangents=np.array(tangents),
            derivative=derivative,
        )


def _closing_residual(system, point, n: int, deck) -> float:
    return float(np.max(np.abs(_lift_n(system, point, n) - point - deck)))


def _newton_closing(system, guess, n: int, deck) -> Optional[np.ndarray]:
    """Root of lift(g^n)(p) - p - deck near guess, or None."""
    p = np.asarray(guess, dtype=float).copy()
    for _ in range(NEWTON_MAX_ITERATIONS):
        r = _lift_n(system, p, n) - p - deck
        if not np.all(np.isfinite(r)):
            return None
        if np.max(np.abs(r)) <= NEWTON_TOLERANCE:
            return p
        jac = _jacobian_n(system, p, n) - np.eye(system.dim)
        if abs(np.linalg.det(jac)) < SINGULAR_DETERMINANT:
            return None
        p = p - np.linalg.solve(jac, r)
    return None


def _base_orbit(base: BaseMap, point, n: int) -> np.ndarray:
    orbit = [TORUS2.reduce(point)[0]]
    for _ in range(n - 1):
        orbit.append(TORUS2.reduce(base.lift(orbit[-1]))[0])
    return np.array(orbit)


def _seed_grid(dim: int, resolution: int) -> np.ndarray:
    axis = (np.arange(resolution) + 0.5) / resolution
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _closing_roots(system, n: int, resolution: int) -> np.ndarray:
    """Newton-refined reduced solutions of g^n(p) = p + deck over all deck words."""
    seeds = _seed_grid(system.dim, resolution)
    displacement = _lift_n(system, seeds, n) - seeds
    jac = _jacobian_n(system, seeds, n) - np.eye(system.dim)
    lipschitz = float(np.max(np.linalg.norm(jac, ord=2, axis=(-2, -1))))
    spacing = np.sqrt(system.dim) / resolution

    ranges = [
        np.arange(np.floor(displacement[:, i].min()), np.ceil(displacement[:, i].max()) + 1)
        for i in range(system.dim)
    ]
    mesh = np.meshgrid(*ranges, indexing="ij")
    decks = np.stack([m.ravel() for m in mesh], axis=-1)

    k = min(NEAREST_SEEDS, len(seeds))
    distances, indices = cKDTree(displacement).query(decks, k=k)
    distances = distances.reshape(len(decks), k)
    indices = indices.reshape(len(decks), k)
    accepted = distances <= lipschitz * spacing
    deck_rows, _ = np.nonzero(accepted)
    starts = seeds[indices[accepted]]
    words = decks[deck_rows]
    logger.debug(f"periodic search: {len(decks)} deck words, {len(starts)} Newton starts")

    p = starts.copy()
    converged = np.zeros(len(p), dtype=bool)
    active = np.ones(len(p), dtype=bool)
    for _ in range(NEWTON_MAX_ITERATIONS):
        if not np.any(active):
            break
        r = _lift_n(system, p[active], n) - p[active] - words[active]
        finite = np.all(np.isfinite(r), axis=-1)
        done = finite & (np.max(np.abs(np.where(np.isfinite(r), r, 0.0)), axis=-1) <= NEWTON_TOLERANCE)
        idx = np.flatnonzero(active)
        converged[idx[done]] = True
        step_mask = finite & ~done
        active[idx] = False
        if not np.any(step_mask):
            continue
        jac = _jacobian_n(system, p[idx[step_mask]], n) - np.eye(system.dim)
        regular = np.abs(np.linalg.det(jac)) >= SINGULAR_DETERMINANT
        update = idx[step_mask][regular]
        if len(update):
            p[update] = p[update] - np.linalg.solve(jac[regular], r[step_mask][regular][..., None])[..., 0]
            active[update] = True
    dropped = int(np.sum(~converged))
    if dropped:
        logger.debug(f"periodic search: {dropped} Newton starts did not converge")

    roots = _snap(system.manifold.reduce(p[converged])[0]) if np.any(converged) else np.empty((0, system.dim))
    roots = roots[np.lexsort(roots.T[::-1])] if len(roots) else roots
    kept: List[np.ndarray] = []
    for root in roots:
        if not kept or np.min(system.manifold.distance(np.array(kept), root)) >= DEDUP_DISTANCE:
            kept.append(root)
    return np.array(kept).reshape(-1, system.dim)


def _group_orbits(spec: MapSpec, system, roots: np.ndarray, n: int, tol: float) -> List[PeriodicOrbit]:
    manifold = system.manifold
    assigned = np.zeros(len(roots), dtype=bool)
    orbits = []
    for start in range(len(roots)):
        if assigned[start]:
            continue
        members = [start]
        current = roots[start]
        while len(members) <= n:
            current = _snap(manifold.reduce(system.lift(current))[0])
            if float(manifold.distance(current, roots[start])) < ORBIT_MATCH_DISTANCE:
                break
            match = int(np.argmin(manifold.distance(roots, current)))
            if float(manifold.distance(roots[match], current)) >= DEDUP_DISTANCE:
                break
            members.append(match)
        else:
            continue
        assigned[members] = True
        if n % len(members) != 0:
            continue
        orbit = _build_orbit(spec, system, roots[members])
        if orbit.residual <= tol:
            orbits.append(orbit)
        else:
            logger.warning(f"{spec.name}: discarded orbit with residual {orbit.residual:.2e} > {tol:.1e}")
    return orbits


def _build_orbit(spec: MapSpec, system, members: np.ndarray) -> PeriodicOrbit:
    manifold = system.manifold
    images = manifold.reduce(system.lift(members))[0]
    residual = float(np.max(manifold.distance(images, np.roll(members, -1, axis=0))))
    on_base = system.dim == 2
    points = _embed(members) if on_base else members
    _, decks = spec.manifold.reduce(MapService.lift(spec, points))
    shift = 0.0
    if on_base:
        closed = MapService.iterate(spec, points[0], len(members))
        lifted = spec.manifold.lift_near(closed, points[0])
        shift = float(lifted[2] - points[0][2])
    return PeriodicOrbit(
        points=points,
        period=len(members),
        decks=decks,
        residual=residual,
        fiber_shift=shift,
        on_base=on_base,
    )


