"""Diffeomorphisms of the quotient manifolds.

A map is three component expressions on the universal cover. Images are
reduced to the fundamental domain after every step; tangent vectors are
carried along by the deck differential so Jacobians of consecutive steps
compose on reduced representatives.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from models.errors import ConfigError, NewtonError
from models.responses import ErrorCode
from services.expressions import Expression
from services.geometry import HEISENBERG, TORUS3, Manifold, OneForm, heisenberg_contact_form
from services.jets import Jet2Map3, symmetrize

logger = logging.getLogger(__name__)

NEWTON_TOLERANCE = 1e-12
NEWTON_MAX_ITERATIONS = 50


@dataclass(frozen=True)
class MapSpec:
    name: str
    manifold: Manifold
    components: Tuple[Expression, Expression, Expression]
    params: Mapping[str, float] = field(default_factory=dict, compare=False)
    inverse: Optional[Tuple[Expression, Expression, Expression]] = None
    base: Optional[Tuple[Expression, Expression]] = None
    volume_preserving: bool = False
    contact_form: Optional[OneForm] = None
    family_parameter: Optional[str] = None

    @classmethod
    def from_strings(
        cls,
        name: str,
        manifold: Manifold,
        components,
        params: Optional[Mapping[str, float]] = None,
        inverse=None,
        base=None,
        **kwargs,
    ) -> "MapSpec":
        def parse(texts):
            return None if texts is None else tuple(Expression.parse(t) for t in texts)

        return cls(
            name=name,
            manifold=manifold,
            components=parse(components),
            params=dict(params or {}),
            inverse=parse(inverse),
            base=parse(base),
            **kwargs,
        )

    def with_params(self, **updates: float) -> "MapSpec":
        params = dict(self.params)
        params.update(updates)
        return replace(self, params=params)

    def __repr__(self):
        return f"<MapSpec(name={self.name}, manifold={self.manifold.kind.value}, params={dict(self.params)})>"


# Built-in registry

def _U(arg: str) -> str:
    return f"eps*({arg})*sin(2*pi*({arg})) + eps/(2*pi)*(cos(2*pi*({arg})) - 1)"


_U_X = _U("x")
_SHEAR_X = "eps*sin(2*pi*x)"
_TAU_INV = "((x - y)^2 + (x - y)*(2*y - x) + (2*y - x)^2/2)"


def _cat3(params) -> MapSpec:
    return MapSpec.from_strings(
        "cat3", TORUS3, ("2*x + y", "x + y", "z"), params,
        inverse=("x - y", "2*y - x", "z"),
        base=("2*x + y", "x + y"),
        volume_preserving=True,
    )


def _identity(params) -> MapSpec:
    return MapSpec.from_strings(
        "identity", TORUS3, ("x", "y", "z"), params,
        inverse=("x", "y", "z"), volume_preserving=True,
    )


def _skew(params) -> MapSpec:
    return MapSpec.from_strings(
        "skew", TORUS3, ("2*x + y", "x + y", "z + c*sin(2*pi*(x + 2*y))"), {"c": 0.1, **params},
        inverse=("x - y", "2*y - x", "z - c*sin(2*pi*(3*y - x))"),
        base=("2*x + y", "x + y"),
        volume_preserving=True,
        family_parameter="c",
    )


def _heisenberg_L(params) -> MapSpec:
    return MapSpec.from_strings(
        "L", HEISENBERG, ("2*x + y", "x + y", "z + x^2 + x*y + y^2/2"), params,
        inverse=("x - y", "2*y - x", f"z - {_TAU_INV}"),
        base=("2*x + y", "x + y"),
        volume_preserving=True,
        contact_form=heisenberg_contact_form(),
    )


def _heisenberg_H(params) -> MapSpec:
    return MapSpec.from_strings(
        "H", HEISENBERG, ("x", f"y + {_SHEAR_X}", f"z + {_U_X}"), {"eps": 0.01, **params},
        inverse=("x", f"y - {_SHEAR_X}", f"z - ({_U_X})"),
        base=("x", f"y + {_SHEAR_X}"),
        volume_preserving=True,
        contact_form=heisenberg_contact_form(),
        family_parameter="eps",
    )


def _heisenberg_F(params) -> MapSpec:
    shifted_y = f"(y + {_SHEAR_X})"
    return MapSpec.from_strings(
        "F", HEISENBERG,
        (
            f"2*x + y + {_SHEAR_X}",
            f"x + y + {_SHEAR_X}",
            f"z + {_U_X} + x^2 + x*{shifted_y} + {shifted_y}^2/2",
        ),
        {"eps": 0.01, **params},
        inverse=(
            "x - y",
            "2*y - x - eps*sin(2*pi*(x - y))",
            f"z - {_TAU_INV} - ({_U('x - y')})",
        ),
        base=(f"2*x + y + {_SHEAR_X}", f"x + y + {_SHEAR_X}"),
        volume_preserving=True,
        contact_form=heisenberg_contact_form(),
        family_parameter="eps",
    )


BUILTINS = {
    "cat3": _cat3,
    "identity": _identity,
    "skew": _skew,
    "L": _heisenberg_L,
    "H": _heisenberg_H,
    "F": _heisenberg_F,
}


def builtin_map(name: str, params: Optional[Mapping[str, float]] = None) -> MapSpec:
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise ConfigError(
            f"unknown built-in map {name!r}; expected one of {sorted(BUILTINS)}",
            code=ErrorCode.CONFIG_UNKNOWN_NAME,
            field="map.name",
        ) from None
    return factory(dict(params or {}))


@dataclass(frozen=True)
class Orbit:
    """Reduced orbit points p_0..p_n (forward) or p_0..p_{-n} (backward)."""
    points: np.ndarray
    decks: np.ndarray
    direction: int


class MapService:
    """Evaluation, jets, inverses and orbits of a MapSpec."""

    @staticmethod
    def lift(spec: MapSpec, points) -> np.ndarray:
        """Image on the cover, no reduction."""
        points = np.asarray(points, dtype=float)
        return np.stack([e.evaluate(points, spec.params) for e in spec.components], axis=-1)

    @staticmethod
    def apply(spec: MapSpec, points) -> np.ndarray:
        return spec.manifold.reduce(MapService.lift(spec, points))[0]

    @staticmethod
    def component_jets(spec: MapSpec, points, inverse: bool = False):
        exprs = spec.inverse if inverse else spec.components
        return [e.jet2(points, spec.params) for e in exprs]

    @staticmethod
    def jacobian(spec: MapSpec, points) -> np.ndarray:
        """Df on the cover, shape (..., 3, 3)."""
        jets = MapService.component_jets(spec, np.asarray(points, dtype=float))
        return np.stack([j.grad for j in jets], axis=-2)

    @staticmethod
    def step(spec: MapSpec, points) -> Tuple[np.ndarray, np.ndarray]:
        """Reduced images and the effective differential Dg . Df between reduced representatives."""
        points = np.asarray(points, dtype=float)
        jets = MapService.component_jets(spec, points)
        image = np.stack([j.value for j in jets], axis=-1)
        jac = np.stack([j.grad for j in jets], axis=-2)
        reduced, deck = spec.manifold.reduce(image)
        return reduced, spec.manifold.deck_jacobian(deck) @ jac

    @staticmethod
    def jet2(spec: MapSpec, point) -> Jet2Map3:
        """Order-2 jet on the cover at a single point."""
        point = np.asarray(point, dtype=float)
        return Jet2Map3.from_components(point, MapService.component_jets(spec, point))

    @staticmethod
    def step_jet2(spec: MapSpec, point) -> Jet2Map3:
        """Jet of reduce . f; the deck is affine, so only the first order part picks up its shear."""
        jet = MapService.jet2(spec, point)
        reduced, deck = spec.manifold.reduce(jet.value)
        D = spec.manifold.deck_jacobian(deck)
        return Jet2Map3(
            base=jet.base,
            value=reduced,
            jacobian=D @ jet.jacobian,
            hessians=symmetrize(np.einsum("ik,kab->iab", D, jet.hessians)),
        )

    @staticmethod
    def inverse_apply(spec: MapSpec, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if spec.inverse is not None:
            pre = np.stack([e.evaluate(points, spec.params) for e in spec.inverse], axis=-1)
            return spec.manifold.reduce(pre)[0]
        return MapService._newton_inverse(spec, points)

    @staticmethod
    def _newton_inverse(spec: MapSpec, targets: np.ndarray) -> np.ndarray:
        guess = targets.copy()
        residual = np.inf
        for iteration in range(NEWTON_MAX_ITERATIONS):
            image = MapService.lift(spec, guess)
            goal = spec.manifold.lift_near(targets, image)
            r = image - goal
            residual = float(np.max(np.abs(r)))
            if residual <= NEWTON_TOLERANCE:
                logger.debug(f"inverse Newton for {spec.name} converged in {iteration} iterations")
                return spec.manifold.reduce(guess)[0]
            jac = MapService.jacobian(spec, guess)
            guess = guess - np.linalg.solve(jac, r[..., None])[..., 0]
        raise NewtonError(
            f"inverse of {spec.name} did not converge after {NEWTON_MAX_ITERATIONS} iterations",
            details={"residual": residual},
        )

    @staticmethod
    def inverse_step(spec: MapSpec, points) -> Tuple[np.ndarray, np.ndarray]:
        """Reduced preimages and the effective differential of f^-1 at points."""
        pre = MapService.inverse_apply(spec, points)
        _, jac = MapService.step(spec, pre)
        return pre, np.linalg.inv(jac)

    @staticmethod
    def iterate(spec: MapSpec, points, n: int) -> np.ndarray:
        points = spec.manifold.reduce(np.asarray(points, dtype=float))[0]
        for _ in range(abs(n)):
            points = MapService.apply(spec, points) if n > 0 else MapService.inverse_apply(spec, points)
        return points

    @staticmethod
    def orbit(spec: MapSpec, point, n: int) -> Orbit:
        """Iterate |n| steps forward (n >= 0) or backward (n < 0) on the quotient."""
        current, _ = spec.manifold.reduce(np.asarray(point, dtype=float))
        points = [current]
        decks = []
        for _ in range(abs(n)):
            if n > 0:
                image = MapService.lift(spec, current)
                current, deck = spec.manifold.reduce(image)
            else:
                current = MapService.inverse_apply(spec, current)
                deck = np.zeros(3)
            points.append(current)
            decks.append(deck)
        return Orbit(np.array(points), np.array(decks).reshape(-1, 3), 1 if n >= 0 else -1)

    @staticmethod
    def orbit_points(spec: MapSpec, points, n: int) -> np.ndarray:
        """Batched orbit, shape (|n| + 1, ..., 3); index j holds f^{+-j} of the reduced points."""
        current, _ = spec.manifold.reduce(np.asarray(points, dtype=float))
        out = [current]
        for _ in range(abs(n)):
            current = MapService.apply(spec, current) if n > 0 else MapService.inverse_apply(spec, current)
            out.append(current)
        return np.stack(out)

    @staticmethod
    def transition_jacobians(spec: MapSpec, points, images) -> np.ndarray:
        """Differentials taking tangent vectors at points to the given reduced image representatives."""
        points = np.asarray(points, dtype=float)
        lifted = MapService.lift(spec, points)
        deck = spec.manifold.deck_between(lifted, np.asarray(images, dtype=float))
        return spec.manifold.deck_jacobian(deck) @ MapService.jacobian(spec, points)

    @staticmethod
    def orbit_jacobians(spec: MapSpec, orbit_points: np.ndarray) -> np.ndarray:
        """Step differentials along an orbit array; entry j maps T_{p_j} to T_{p_{j+1}}."""
        return MapService.transition_jacobians(spec, orbit_points[:-1], orbit_points[1:])

    @staticmethod
    def conformal_factor(spec: MapSpec, points) -> np.ndarray:
        """rho with f*alpha = rho * alpha, alpha the declared contact form (least squares in the coefficients)."""
        if spec.contact_form is None:
            raise ConfigError(
                f"map {spec.name} declares no contact form",
                code=ErrorCode.CONFIG_MISSING_FIELD,
                field="form",
            )
        points = np.asarray(points, dtype=float)
        image, jac = MapService.step(spec, points)
        alpha = spec.contact_form.coefficients(points)
        pulled = np.einsum("...i,...ij->...j", spec.contact_form.coefficients(image), jac)
        return np.sum(pulled * alpha, axis=-1) / np.sum(alpha * alpha, axis=-1)

    # Structural checks

    @staticmethod
    def deck_commutation_residual(spec: MapSpec, rng: np.random.Generator, samples: int = 100) -> float:
        """f(g p) must be a deck image of f(p) for each generator g."""
        points = spec.manifold.random_points(rng, samples)
        image = MapService.lift(spec, points)
        worst = 0.0
        for generator in np.eye(3):
            moved = MapService.lift(spec, spec.manifold.deck_apply(points, generator))
            closest = spec.manifold.lift_near(image, moved)
            worst = max(worst, float(np.max(np.abs(closest - moved))))
        return worst

    @staticmethod
    def volume_residual(spec: MapSpec, rng: np.random.Generator, samples: int = 1000) -> float:
        points = spec.manifold.random_points(rng, samples)
        return float(np.max(np.abs(np.linalg.det(MapService.jacobian(spec, points)) - 1.0)))

    @staticmethod
    def round_trip_residual(spec: MapSpec, rng: np.random.Generator, samples: int = 100) -> float:
        points = spec.manifold.random_points(rng, samples)
        back = MapService.inverse_apply(spec, MapService.apply(spec, points))
        return float(np.max(spec.manifold.distance(points, back)))


def base_expressions(spec: MapSpec) -> Tuple[Expression, Expression]:
    if spec.base is None:
        raise ConfigError(
            f"map {spec.name} declares no base map on the 2-torus",
            code=ErrorCode.MAP_NO_BASE,
            field="map.base_x",
        )
    return spec.base


def describe(spec: MapSpec) -> Dict[str, object]:
    return {
        "name": spec.name,
        "manifold": spec.manifold.kind.value,
        "components": [e.text for e in spec.components],
        "params": dict(spec.params),
        "volume_preserving": spec.volume_preserving,
        "contact_form": spec.contact_form.label if spec.contact_form else None,
    }
