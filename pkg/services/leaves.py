"""Non-stationary linearizations of stable and unstable leaves.

The unstable leaf at x is the limit of f^N applied to the line through
f^{-N}(x) along e_u, rescaled so the derivative at 0 is the frame vector.
Its Taylor jet is propagated forward with Jet1D arithmetic, resetting the
constant term to the stored orbit point after every step. Finite parameters
are evaluated on the jet at a depth M where the rescaled parameter is tiny,
then pushed forward M times on the cover. Stable leaves are the same
construction for f^{-1}.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from models.errors import ConfigError, LeafError
from models.responses import ErrorCode
from services.jets import DEFAULT_LEAF_ORDER, Jet1D
from services.maps import MapService, MapSpec
from services.splitting import DEFAULT_ITERATIONS, _sweep, orient
from services.worker_pool import keyed_rng

logger = logging.getLogger(__name__)

DEFAULT_LEAF_DEPTH = 30
LOCAL_SCALE = 1e-3  # rescaled parameter size at which the jet polynomial is evaluated
LEAF_TOLERANCE = 1e-8
LEAF_RADIUS = 0.3

FLAVORS = ("s", "u")


def _check_flavor(flavor: str) -> None:
    if flavor not in FLAVORS:
        raise ConfigError(f"leaf flavor must be 's' or 'u', got {flavor!r}", field="normalform.flavor")


def _require_inverse(spec: MapSpec) -> None:
    if spec.inverse is None:
        raise ConfigError(
            f"map {spec.name} needs declared inverse components for leaf constructions",
            code=ErrorCode.CONFIG_MISSING_FIELD,
            field="map.inverse_x",
        )


def _coefficients(value, order: int, count: int) -> np.ndarray:
    if isinstance(value, Jet1D):
        return np.broadcast_to(value.coeffs, (order + 1, count)).copy()
    out = np.zeros((order + 1, count))
    out[0] = value
    return out


def _push_jet(spec: MapSpec, coeffs: np.ndarray, inverse: bool) -> np.ndarray:
    """Image jet (K+1, B, 3) of a jet under f (or f^-1) on the cover."""
    order, count = coeffs.shape[0] - 1, coeffs.shape[1]
    x, y, z = (Jet1D(coeffs[..., i]) for i in range(3))
    exprs = spec.inverse if inverse else spec.components
    return np.stack([_coefficients(e.bind(x, y, z, spec.params), order, count) for e in exprs], axis=-1)


def _cover_step(spec: MapSpec, points: np.ndarray, inverse: bool) -> np.ndarray:
    exprs = spec.inverse if inverse else spec.components
    return np.stack([e.evaluate(points, spec.params) for e in exprs], axis=-1)


@dataclass(frozen=True)
class LeafParam:
    """Leaf parametrizations Phi_x for a batch of base points.

    jets[j] is the Taylor jet (K+1, B, 3) of the leaf map at f^{-j}(x)
    (f^{+j}(x) for stable leaves), in the parameter of the leaf at x.
    """
    spec: MapSpec
    flavor: str
    depth: int
    bases: np.ndarray  # cover representatives asked for
    reduced: np.ndarray
    lift_decks: np.ndarray  # deck taking reduced to bases
    orbit: np.ndarray  # (depth + 1, B, 3)
    jets: np.ndarray  # (depth + 1, K + 1, B, 3)
    directions: np.ndarray  # unit leaf directions at the bases, cover coordinates
    scale: np.ndarray

    @property
    def inverse(self) -> bool:
        return self.flavor == "s"

    def derivative_jet(self) -> np.ndarray:
        """Jet at the bases in cover coordinates, (K+1, B, 3)."""
        manifold = self.spec.manifold
        D = manifold.deck_jacobian(self.lift_decks)
        out = np.einsum("bij,kbj->kbi", D, self.jets[0])
        out[0] = self.bases
        return out

    def _depth_for(self, xi: np.ndarray) -> int:
        size = np.max(np.abs(xi).reshape(len(self.bases), -1), axis=1)
        slopes = np.linalg.norm(self.jets[:, 1], axis=-1)  # (depth + 1, B)
        fits = np.flatnonzero(np.all(slopes * size <= LOCAL_SCALE, axis=1))
        if len(fits) == 0 or fits[0] >= self.depth:
            raise LeafError(
                f"leaf parameter {float(size.max()):.3g} beyond the reach of depth {self.depth}",
                details={"flavor": self.flavor, "depth": self.depth},
            )
        return int(fits[0])

    def _evaluate_at(self, xi: np.ndarray, depth: int) -> np.ndarray:
        manifold = self.spec.manifold
        coeffs = self.jets[depth]
        extra = (1,) * (xi.ndim - 1)
        t = xi[..., None]
        points = np.zeros(xi.shape + (3,))
        for c in coeffs[::-1]:
            points = points * t + c.reshape(c.shape[:1] + extra + (3,))
        ref = self.orbit[depth]
        for _ in range(depth):
            points = _cover_step(self.spec, points, self.inverse)
            ref = _cover_step(self.spec, ref, self.inverse)
        to_base = manifold.deck_between(ref, self.reduced)
        shape = to_base.shape[:1] + extra + (3,)
        points = manifold.deck_apply(points, to_base.reshape(shape))
        ref = manifold.deck_apply(ref, to_base)
        points = points - (ref - self.reduced).reshape(shape)
        return manifold.deck_apply(points, self.lift_decks.reshape(shape))

    def evaluate_with_accuracy(self, xi):
        """Leaf points near the bases for parameters xi of shape (B,) or (B, G), plus the accuracy estimate."""
        xi = np.asarray(xi, dtype=float)
        if xi.ndim == 0 or xi.shape[0] != len(self.bases):
            xi = np.broadcast_to(xi, (len(self.bases),) + np.shape(xi)).astype(float)
        depth = self._depth_for(xi)
        points = self._evaluate_at(xi, depth)
        check = self._evaluate_at(xi, depth + 1)
        accuracy = float(np.max(np.abs(points - check))) if points.size else 0.0
        at_zero = (xi == 0.0)[..., None]
        extra = (1,) * (xi.ndim - 1)
        points = np.where(at_zero, self.bases.reshape(self.bases.shape[:1] + extra + (3,)), points)
        if accuracy > LEAF_TOLERANCE:
            raise LeafError(
                f"{self.flavor}-leaf evaluation did not settle: successive depths differ by {accuracy:.2e}",
                details={"accuracy": accuracy, "depth": depth},
            )
        return points, accuracy

    def evaluate(self, xi) -> np.ndarray:
        return self.evaluate_with_accuracy(xi)[0]


class LeafService:
    """Builds and evaluates leaf parametrizations."""

    @staticmethod
    def build(
        spec: MapSpec,
        bases,
        flavor: str,
        depth: int = DEFAULT_LEAF_DEPTH,
        scale=None,
        reference=None,
        order: int = DEFAULT_LEAF_ORDER,
        rng: Optional[np.random.Generator] = None,
        padding: int = DEFAULT_ITERATIONS,
    ) -> LeafParam:
        """Leaf jets at cover points `bases` (B, 3).

        scale multiplies the unit leaf direction at each base; reference
        (B, 3) fixes its orientation, otherwise the first significant
        coordinate is positive.
        """
        _check_flavor(flavor)
        _require_inverse(spec)
        manifold = spec.manifold
        bases = np.atleast_2d(np.asarray(bases, dtype=float))
        count = len(bases)
        reduced, _ = manifold.reduce(bases)
        lift_decks = manifold.deck_between(reduced, bases)
        rng = rng if rng is not None else keyed_rng(0, 1)
        inverse = flavor == "s"

        total = depth + padding
        orbit = MapService.orbit_points(spec, reduced, total if inverse else -total)  # orbit[j] = f^{-+j}(x)
        toward = orbit[::-1]  # ends at x
        if inverse:
            steps = np.linalg.inv(MapService.orbit_jacobians(spec, orbit))[::-1]
        else:
            steps = MapService.orbit_jacobians(spec, toward)
        units = _sweep(steps, rng.standard_normal((count, 3)))[::-1]  # units[j] at orbit[j]

        at_base = orient(units[0]) if reference is None else None
        if reference is not None:
            D_ref = np.linalg.inv(manifold.deck_jacobian(lift_decks))
            at_base = orient(units[0], np.einsum("bij,bj->bi", D_ref, np.atleast_2d(reference)))
        sign = np.where(np.sum(at_base * units[0], axis=-1) < 0, -1.0, 1.0)
        units = units * sign[None, :, None]

        # growth toward x of the unit vectors: units[j-1] * mu_j = step applied to units[j]
        step_back = steps[::-1]  # step_back[j - 1] maps orbit[j] -> orbit[j - 1]
        mu = np.linalg.norm(np.einsum("jbik,jbk->jbi", step_back[:depth], units[1: depth + 1]), axis=-1)
        growth = np.concatenate([np.ones((1, count)), np.cumprod(mu, axis=0)])
        scale = np.ones(count) if scale is None else np.broadcast_to(np.asarray(scale, dtype=float), (count,))

        jets = np.zeros((depth + 1, order + 1, count, 3))
        current = np.zeros((order + 1, count, 3))
        current[0] = orbit[depth]
        if order >= 1:
            current[1] = units[depth] * (scale / growth[depth])[:, None]
        jets[depth] = current
        for j in range(depth, 0, -1):
            image = _push_jet(spec, current, inverse)
            deck = manifold.deck_between(image[0], orbit[j - 1])
            D = manifold.deck_jacobian(deck)
            image[1:] = np.einsum("bij,kbj->kbi", D, image[1:])
            image[0] = orbit[j - 1]
            jets[j - 1] = current = image

        D_lift = manifold.deck_jacobian(lift_decks)
        directions = np.einsum("bij,bj->bi", D_lift, units[0])
        directions /= np.linalg.norm(directions, axis=-1, keepdims=True)
        logger.debug(f"{spec.name}: built {count} {flavor}-leaves at depth {depth}")
        return LeafParam(
            spec=spec,
            flavor=flavor,
            depth=depth,
            bases=bases,
            reduced=reduced,
            lift_decks=lift_decks,
            orbit=orbit[: depth + 1],
            jets=jets,
            directions=directions,
            scale=scale,
        )

    @staticmethod
    def leaf_point(spec: MapSpec, x, xi: float, flavor: str, depth: int = DEFAULT_LEAF_DEPTH) -> np.ndarray:
        """Phi^s_x(xi) or Phi^u_x(xi) with unit leaf speed at 0."""
        leaf = LeafService.build(spec, np.asarray(x, dtype=float)[None, :], flavor, depth)
        return leaf.evaluate(np.array([xi]))[0]

    @staticmethod
    def signed_multiplier(spec: MapSpec, leaf: LeafParam, image_leaf: LeafParam) -> np.ndarray:
        """lambda with f(Phi_x(xi)) = Phi_{f x}(lambda xi), from the leaf derivatives at x and f(x)."""
        D_x = leaf.derivative_jet()[1]
        D_fx = image_leaf.derivative_jet()[1]
        pushed = np.einsum("bij,bj->bi", MapService.transition_jacobians(spec, leaf.bases, image_leaf.bases), D_x)
        return np.sum(pushed * D_fx, axis=-1) / np.sum(D_fx * D_fx, axis=-1)

    @staticmethod
    def conjugacy_residual(spec: MapSpec, x, xi, flavor: str, depth: int = DEFAULT_LEAF_DEPTH) -> float:
        """max |f(Phi_x(xi)) - Phi_{f x}(lambda_x xi)| in quotient distance over the given parameters."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        leaf = LeafService.build(spec, x, flavor, depth)
        image_leaf = LeafService.build(spec, MapService.apply(spec, leaf.reduced), flavor, depth)
        lam = LeafService.signed_multiplier(spec, leaf, image_leaf)
        xi = np.broadcast_to(np.asarray(xi, dtype=float), (len(x),) + np.shape(xi))
        lam_shaped = lam.reshape(lam.shape + (1,) * (xi.ndim - 1))
        lhs = MapService.lift(spec, leaf.evaluate(xi))
        rhs = image_leaf.evaluate(lam_shaped * xi)
        return float(np.max(spec.manifold.distance(lhs, rhs)))
