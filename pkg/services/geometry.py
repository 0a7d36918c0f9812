"""Quotient manifolds, fundamental-domain reduction and differential forms.

Points are carried as representatives on the universal cover R^3. The
Heisenberg deck group acts by (x, y, z) -> (x+m, y+n, z+k+m*y+m*n/2); the
torus acts by integer translations.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Optional, Tuple

import numpy as np

from models.errors import LabError
from models.responses import ErrorCode
from services.expressions import Expression
from services.jets import Jet2Map3

logger = logging.getLogger(__name__)

DECK_SEARCH_RADIUS = 2
DECK_COMPATIBILITY_TOLERANCE = 1e-9


class ManifoldKind(str, Enum):
    TORUS3 = "torus3"
    HEISENBERG = "heisenberg"
    TORUS2 = "torus2"


@dataclass(frozen=True)
class Manifold:
    kind: ManifoldKind

    @property
    def dim(self) -> int:
        return 2 if self.kind == ManifoldKind.TORUS2 else 3

    @property
    def is_heisenberg(self) -> bool:
        return self.kind == ManifoldKind.HEISENBERG

    def deck_apply(self, points, deck) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        deck = np.asarray(deck, dtype=float)
        if not self.is_heisenberg:
            return points + deck
        m, n, k = deck[..., 0], deck[..., 1], deck[..., 2]
        out = np.empty(np.broadcast(points, deck).shape)
        out[..., 0] = points[..., 0] + m
        out[..., 1] = points[..., 1] + n
        out[..., 2] = points[..., 2] + k + m * points[..., 1] + 0.5 * m * n
        return out

    def deck_jacobian(self, deck) -> np.ndarray:
        """Differential of the deck transformation (constant in the point)."""
        deck = np.asarray(deck, dtype=float)
        jac = np.broadcast_to(np.eye(self.dim), deck.shape[:-1] + (self.dim, self.dim)).copy()
        if self.is_heisenberg:
            jac[..., 2, 1] = deck[..., 0]
        return jac

    def deck_between(self, points, targets) -> np.ndarray:
        """Integer deck g with g(points) closest to targets."""
        points = np.asarray(points, dtype=float)
        targets = np.asarray(targets, dtype=float)
        if not self.is_heisenberg:
            return np.rint(targets - points)
        m = np.rint(targets[..., 0] - points[..., 0])
        n = np.rint(targets[..., 1] - points[..., 1])
        k = np.rint(targets[..., 2] - points[..., 2] - m * points[..., 1] - 0.5 * m * n)
        return np.stack([m, n, k], axis=-1)

    def lift_near(self, points, targets) -> np.ndarray:
        """Deck image of points closest to targets on the cover."""
        return self.deck_apply(points, self.deck_between(points, targets))

    def _reduce_once(self, points: np.ndarray) -> np.ndarray:
        if not self.is_heisenberg:
            return points - np.floor(points)
        x, y, z = points[..., 0], points[..., 1], points[..., 2]
        m = -np.floor(x)
        n = -np.floor(y)
        z1 = z + m * y + 0.5 * m * n
        out = np.empty_like(points)
        out[..., 0] = x + m
        out[..., 1] = y + n
        out[..., 2] = z1 - np.floor(z1)
        return out

    def reduce(self, points) -> Tuple[np.ndarray, np.ndarray]:
        """Representatives in [0,1)^d and the deck that produced them."""
        points = np.asarray(points, dtype=float)
        reduced = self._reduce_once(self._reduce_once(points))
        return reduced, self.deck_between(points, reduced)

    def distance(self, p, q) -> np.ndarray:
        p_red, _ = self.reduce(p)
        q_red, _ = self.reduce(q)
        decks = _deck_candidates(self.dim)
        images = self.deck_apply(q_red[..., None, :], decks)
        dist = np.linalg.norm(images - p_red[..., None, :], axis=-1)
        return dist.min(axis=-1)

    def random_points(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.random((count, self.dim))


def _deck_candidates(dim: int) -> np.ndarray:
    r = range(-DECK_SEARCH_RADIUS, DECK_SEARCH_RADIUS + 1)
    return np.array(list(itertools.product(r, repeat=dim)), dtype=float)


TORUS3 = Manifold(ManifoldKind.TORUS3)
HEISENBERG = Manifold(ManifoldKind.HEISENBERG)
TORUS2 = Manifold(ManifoldKind.TORUS2)


def manifold_for(kind: str) -> Manifold:
    return Manifold(ManifoldKind(kind))


@dataclass(frozen=True)
class Point:
    coords: Tuple[float, float, float]
    manifold: Manifold

    @classmethod
    def of(cls, coords, manifold: Manifold) -> "Point":
        return cls(tuple(float(c) for c in coords), manifold)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.coords, dtype=float)


# Differential forms on the universal cover


@dataclass(frozen=True)
class OneForm:
    """a dx + b dy + c dz, from coefficient expressions or as d(potential)."""
    components: Optional[Tuple[Expression, Expression, Expression]] = None
    potential: Optional[Expression] = None
    scale: float = 1.0
    params: Mapping[str, float] = field(default_factory=dict, compare=False)
    label: str = ""

    @classmethod
    def from_strings(cls, a: str, b: str, c: str, params: Optional[Mapping[str, float]] = None, label: str = "") -> "OneForm":
        return cls(
            components=(Expression.parse(a), Expression.parse(b), Expression.parse(c)),
            params=dict(params or {}),
            label=label or f"({a}) dx + ({b}) dy + ({c}) dz",
        )

    @classmethod
    def exact(cls, potential: str, params: Optional[Mapping[str, float]] = None) -> "OneForm":
        return cls(potential=Expression.parse(potential), params=dict(params or {}), label=f"d({potential})")

    def scaled(self, factor: float) -> "OneForm":
        return OneForm(self.components, self.potential, self.scale * factor, self.params, f"{factor}*{self.label}")

    def coefficients(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if self.components is not None:
            values = np.stack([e.evaluate(points, self.params) for e in self.components], axis=-1)
            return self.scale * values
        return self.jet(points)[0]

    def jet(self, points) -> Tuple[np.ndarray, np.ndarray]:
        """Coefficients (..., 3) and their gradients (..., 3, 3), [i, j] = d_j coeff_i."""
        points = np.asarray(points, dtype=float)
        if self.components is not None:
            jets = [e.jet2(points, self.params) for e in self.components]
            values = np.stack([j.value for j in jets], axis=-1)
            grads = np.stack([j.grad for j in jets], axis=-2)
        else:
            j = self.potential.jet2(points, self.params)
            values, grads = j.grad, j.hess
        return self.scale * values, self.scale * grads


@dataclass(frozen=True)
class TwoForm:
    """P dx^dy + Q dx^dz + S dy^dz with coefficients from an evaluator."""
    evaluator: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    label: str = ""

    def coefficients(self, points) -> np.ndarray:
        return self.evaluator(np.asarray(points, dtype=float))

    def matrix(self, points) -> np.ndarray:
        """Antisymmetric matrix W with form(u, v) = u^T W v."""
        c = self.coefficients(points)
        P, Q, S = c[..., 0], c[..., 1], c[..., 2]
        W = np.zeros(c.shape[:-1] + (3, 3))
        W[..., 0, 1], W[..., 1, 0] = P, -P
        W[..., 0, 2], W[..., 2, 0] = Q, -Q
        W[..., 1, 2], W[..., 2, 1] = S, -S
        return W

    def apply(self, points, u, v) -> np.ndarray:
        c = self.coefficients(points)
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        return (
            c[..., 0] * (u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0])
            + c[..., 1] * (u[..., 0] * v[..., 2] - u[..., 2] * v[..., 0])
            + c[..., 2] * (u[..., 1] * v[..., 2] - u[..., 2] * v[..., 1])
        )


@dataclass(frozen=True)
class VolumeForm:
    """f dx^dy^dz."""
    evaluator: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    label: str = ""

    @classmethod
    def standard(cls) -> "VolumeForm":
        return cls(lambda pts: np.ones(np.asarray(pts).shape[:-1]), "dx^dy^dz")

    def coefficient(self, points) -> np.ndarray:
        return self.evaluator(np.asarray(points, dtype=float))


def heisenberg_contact_form() -> OneForm:
    """dz - x dy, invariant under the Heisenberg deck group."""
    return OneForm.from_strings("0", "-x", "1", label="dz - x dy")


class GeometryService:
    """Operations of the geometry layer."""

    @staticmethod
    def reduce_to_fundamental_domain(point: Point) -> Point:
        reduced, _ = point.manifold.reduce(point.array)
        return Point.of(reduced, point.manifold)

    @staticmethod
    def quotient_distance(p: Point, q: Point) -> float:
        if p.manifold != q.manifold:
            raise LabError("points live on different manifolds", code=ErrorCode.GEO_MANIFOLD_MISMATCH)
        return float(p.manifold.distance(p.array, q.array))

    @staticmethod
    def exterior_derivative(form: OneForm) -> TwoForm:
        def evaluator(points):
            _, G = form.jet(points)
            return np.stack([
                G[..., 1, 0] - G[..., 0, 1],
                G[..., 2, 0] - G[..., 0, 2],
                G[..., 2, 1] - G[..., 1, 2],
            ], axis=-1)

        return TwoForm(evaluator, f"d({form.label})")

    @staticmethod
    def wedge(form: OneForm, two_form: TwoForm) -> VolumeForm:
        def evaluator(points):
            a = form.coefficients(points)
            c = two_form.coefficients(points)
            return a[..., 0] * c[..., 2] - a[..., 1] * c[..., 1] + a[..., 2] * c[..., 0]

        return VolumeForm(evaluator, f"({form.label})^({two_form.label})")

    @staticmethod
    def pullback_oneform(map_jet: Jet2Map3, form: OneForm) -> np.ndarray:
        """Coefficients of f*form at map_jet.base."""
        image_coeffs = form.coefficients(map_jet.value)
        return map_jet.jacobian.T @ image_coeffs

    @staticmethod
    def deck_compatibility_residual(form: OneForm, manifold: Manifold, rng: np.random.Generator, samples: int = 100) -> float:
        """max |g*form - form| over random points and decks with entries in [-2, 2]."""
        points = manifold.random_points(rng, samples)
        decks = rng.integers(-DECK_SEARCH_RADIUS, DECK_SEARCH_RADIUS + 1, size=(samples, 3)).astype(float)
        images = manifold.deck_apply(points, decks)
        pulled = np.einsum("...i,...ij->...j", form.coefficients(images), manifold.deck_jacobian(decks))
        residual = float(np.max(np.abs(pulled - form.coefficients(points))))
        logger.debug(f"deck compatibility residual for {form.label}: {residual:.3e}")
        return residual
