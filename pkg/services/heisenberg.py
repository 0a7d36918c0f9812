"""Fiber rotation of a skew product over a continued period-2 base orbit.

For F(x, y, z) = (g(x, y), z + tau(x, y)) the return of F^2 over a period-2
base point p is a translation of the fiber by tau(p) + tau(g p).
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from models.errors import ConfigError
from services.maps import MapService, MapSpec, builtin_map
from services.periodic import BaseMap, ContinuationCurve, PeriodicOrbit, PeriodicService

logger = logging.getLogger(__name__)

P0 = np.array([0.2, 0.4])
PERIOD = 2
MIN_STEP, MAX_STEP = 1e-6, 1e-3
DEFAULT_STEP = 1e-4
RICHARDSON_STEPS = (1e-4, 2e-4, 4e-4)
FIBER_SAMPLES = 10
ORBIT_MATCH = 1e-8


def closed_form_derivative() -> float:
    """R'(0) = -(4/5) sin(2 pi / 5) + (cos(2 pi / 5) - 1) / pi."""
    angle = 2 * np.pi / 5
    return float(-0.8 * np.sin(angle) + (np.cos(angle) - 1.0) / np.pi)


def closed_form_point_derivative() -> np.ndarray:
    """d p_eps / d eps at eps = 0."""
    s = np.sin(2 * np.pi / 5)
    return np.array([-0.2 * s, -0.4 * s])


@dataclass(frozen=True)
class RotationSample:
    eps: float
    p: np.ndarray
    q: np.ndarray
    tau_p: float
    tau_q: float
    lift: float

    @property
    def value(self) -> float:
        return float(self.lift % 1.0)


@dataclass(frozen=True)
class DerivativeEstimate:
    step: float
    estimate: float
    closed_form: float

    @property
    def error(self) -> float:
        return abs(self.estimate - self.closed_form)


def _tau(spec: MapSpec, points) -> np.ndarray:
    """Fiber displacement of the cover lift over base points (..., 2)."""
    points = np.asarray(points, dtype=float)
    embedded = np.concatenate([points, np.zeros(points.shape[:-1] + (1,))], axis=-1)
    return MapService.lift(spec, embedded)[..., 2]


class HeisenbergService:
    """Rotation number R(eps) of the fiber return over p_eps."""

    @staticmethod
    def family(eps: float = 0.0) -> MapSpec:
        return builtin_map("F", {"eps": eps})

    @staticmethod
    def base_orbit(spec: Optional[MapSpec] = None) -> PeriodicOrbit:
        """The period-2 base orbit through (1/5, 2/5) at eps = 0, starting at that point."""
        spec = (spec or HeisenbergService.family()).with_params(eps=0.0)
        for orbit in PeriodicService.find_periodic_orbits(spec, PERIOD):
            if orbit.period != PERIOD:
                continue
            hits = np.flatnonzero(np.linalg.norm(orbit.points[:, :2] - P0, axis=-1) < ORBIT_MATCH)
            if len(hits):
                shift = int(hits[0])
                return PeriodicOrbit(
                    points=np.roll(orbit.points, -shift, axis=0),
                    period=orbit.period,
                    decks=np.roll(orbit.decks, -shift, axis=0),
                    residual=orbit.residual,
                    fiber_shift=orbit.fiber_shift,
                    on_base=orbit.on_base,
                )
        raise ConfigError(f"{spec.name} has no period-2 base orbit through {P0.tolist()}", field="heisenberg.map")

    @staticmethod
    def periodicity_defect(spec: Optional[MapSpec] = None) -> float:
        """|g_0^2(p0) - p0| up to the integer deck word."""
        base = BaseMap.of((spec or HeisenbergService.family()).with_params(eps=0.0))
        image = base.lift(base.lift(P0))
        return float(np.max(np.abs(image - P0 - np.rint(image - P0))))

    @staticmethod
    def continue_to(eps_values: Sequence[float], spec: Optional[MapSpec] = None) -> ContinuationCurve:
        """Continuation of p_eps from eps = 0 through eps_values in order."""
        spec = (spec or HeisenbergService.family()).with_params(eps=0.0)
        return PeriodicService.continue_periodic_orbit(spec, HeisenbergService.base_orbit(spec), eps_values)

    @staticmethod
    def sample_at(spec: MapSpec, eps: float, p) -> RotationSample:
        moved = spec.with_params(eps=eps)
        p = np.asarray(p, dtype=float)
        q = BaseMap.of(moved).lift(p)
        tau_p, tau_q = float(_tau(moved, p)), float(_tau(moved, q))
        return RotationSample(float(eps), p, q, tau_p, tau_q, tau_p + tau_q)

    @staticmethod
    def rotation_number(eps: float, spec: Optional[MapSpec] = None) -> RotationSample:
        """R(eps) = tau(p_eps) + tau(q_eps), q_eps = g(p_eps) on the cover; value mod 1 and the lift."""
        spec = spec or HeisenbergService.family()
        if eps == 0.0:
            return HeisenbergService.sample_at(spec, 0.0, HeisenbergService.base_orbit(spec).points[0, :2])
        curve = HeisenbergService.continue_to([eps], spec)
        return HeisenbergService.sample_at(spec, eps, curve.points[-1])

    @staticmethod
    def rotation_curve(eps_values: Sequence[float], spec: Optional[MapSpec] = None) -> List[RotationSample]:
        """R(eps) along a grid, continuing separately on each side of zero."""
        spec = spec or HeisenbergService.family()
        values = np.asarray(sorted(set(float(e) for e in eps_values)))
        out: Dict[float, RotationSample] = {}
        if np.any(values == 0.0):
            out[0.0] = HeisenbergService.rotation_number(0.0, spec)
        for side in (values[values > 0], values[values < 0][::-1]):
            if len(side) == 0:
                continue
            curve = HeisenbergService.continue_to(side, spec)
            for eps, p in zip(curve.values[1:], curve.points[1:]):
                out[float(eps)] = HeisenbergService.sample_at(spec, float(eps), p)
        return [out[float(e)] for e in values]

    @staticmethod
    def rotation_derivative_at_zero(step: float = DEFAULT_STEP, spec: Optional[MapSpec] = None) -> DerivativeEstimate:
        """Central difference (R(h) - R(-h)) / 2h of the lift."""
        if not MIN_STEP <= step <= MAX_STEP:
            raise ConfigError(f"difference step must lie in [{MIN_STEP}, {MAX_STEP}], got {step}", field="heisenberg.step")
        plus = HeisenbergService.rotation_number(step, spec)
        minus = HeisenbergService.rotation_number(-step, spec)
        estimate = (plus.lift - minus.lift) / (2 * step)
        result = DerivativeEstimate(step, float(estimate), closed_form_derivative())
        logger.info(f"R'(0) ~ {result.estimate:.12f} at h={step:g}, closed form {result.closed_form:.12f}, error {result.error:.2e}")
        return result

    @staticmethod
    def richardson_diagnostic(steps: Sequence[float] = RICHARDSON_STEPS, spec: Optional[MapSpec] = None) -> Dict[str, object]:
        """error(h) / h^2 across steps; roughly constant when the difference is second order."""
        estimates = [HeisenbergService.rotation_derivative_at_zero(h, spec) for h in steps]
        ratios = np.array([e.error / e.step ** 2 for e in estimates])
        spread = float(np.ptp(ratios) / np.max(ratios)) if np.max(ratios) > 0 else 0.0
        return {"steps": list(steps), "errors": [e.error for e in estimates], "ratios": ratios.tolist(), "spread": spread}

    @staticmethod
    def fiber_return(eps: float, samples: int = FIBER_SAMPLES, spec: Optional[MapSpec] = None) -> Dict[str, float]:
        """Apply F^2 to fiber points over p_eps; the z displacement is the same for all of them."""
        spec = spec or HeisenbergService.family()
        p = HeisenbergService.rotation_number(eps, spec).p
        moved = spec.with_params(eps=eps)
        z = np.linspace(0.0, 1.0, samples, endpoint=False)
        points = np.column_stack([np.full(samples, p[0]), np.full(samples, p[1]), z])
        image = MapService.lift(moved, MapService.lift(moved, points))
        manifold = moved.manifold
        back = manifold.deck_apply(image, manifold.deck_between(image[0], points[0]))
        shifts = back[:, 2] - z
        return {"eps": float(eps), "translation": float(np.mean(shifts)), "spread": float(np.ptp(shifts))}

    @staticmethod
    def continuation_defect(eps_values: Sequence[float], spec: Optional[MapSpec] = None) -> Dict[str, object]:
        """|p_eps - (p0 + eps p0')| against the closed-form derivative, with its log-log slope."""
        values = np.asarray(sorted(float(e) for e in eps_values))
        curve = HeisenbergService.continue_to(values, spec)
        predicted = P0 + values[:, None] * closed_form_point_derivative()
        defects = np.linalg.norm(curve.points[1:] - predicted, axis=-1)
        slope = float(stats.linregress(np.log(values), np.log(defects)).slope)
        return {"eps": values.tolist(), "defects": defects.tolist(), "slope": slope}
