"""Truncated Taylor arithmetic.

Jet1D     one-variable jets of arbitrary order, stored as normalized
          Taylor coefficients c_k = f^(k)(base)/k!, batched over trailing axes.
Jet2      scalar 2-jets in three variables (value, gradient, Hessian),
          batched over leading axes.
Jet2Map3  order-2 jet of a map R^3 -> R^3 at a single base point.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from models.errors import ExpressionError, JetError
from models.responses import ErrorCode

logger = logging.getLogger(__name__)

DEFAULT_LEAF_ORDER = 4
BASE_TOLERANCE = 1e-9


def _check_denominator(value) -> None:
    if np.any(np.asarray(value) == 0.0):
        raise ExpressionError("division by zero at evaluation point", code=ErrorCode.EXPR_DIVISION_BY_ZERO)


def _with_batch_rank(coeffs: np.ndarray, rank: int) -> np.ndarray:
    """Pad batch axes (after the order axis) so numpy broadcasting lines up on the right."""
    missing = rank - (coeffs.ndim - 1)
    if missing <= 0:
        return coeffs
    return coeffs.reshape(coeffs.shape[:1] + (1,) * missing + coeffs.shape[1:])


def _aligned(a: np.ndarray, b: np.ndarray):
    rank = max(a.ndim, b.ndim) - 1
    return _with_batch_rank(a, rank), _with_batch_rank(b, rank)


class Jet1D:
    """Normalized Taylor coefficients; axis 0 is the order axis."""

    __slots__ = ("coeffs", "base")
    __array_ufunc__ = None

    def __init__(self, coeffs, base: float = 0.0):
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.base = float(base)

    # construction

    @classmethod
    def constant(cls, value, order: int = DEFAULT_LEAF_ORDER, base: float = 0.0) -> "Jet1D":
        value = np.asarray(value, dtype=float)
        coeffs = np.zeros((order + 1,) + value.shape)
        coeffs[0] = value
        return cls(coeffs, base)

    @classmethod
    def variable(cls, base: float = 0.0, order: int = DEFAULT_LEAF_ORDER) -> "Jet1D":
        coeffs = np.zeros(order + 1)
        coeffs[0] = base
        if order >= 1:
            coeffs[1] = 1.0
        return cls(coeffs, base)

    @classmethod
    def line(cls, start, direction, order: int = DEFAULT_LEAF_ORDER) -> "Jet1D":
        """Jet of t -> start + t * direction at t = 0 (batched)."""
        start = np.asarray(start, dtype=float)
        coeffs = np.zeros((order + 1,) + start.shape)
        coeffs[0] = start
        if order >= 1:
            coeffs[1] = direction
        return cls(coeffs, 0.0)

    # accessors

    @property
    def order(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def value(self):
        return self.coeffs[0]

    def derivative(self, k: int):
        """k-th derivative at the base point."""
        if k > self.order:
            return np.zeros_like(self.coeffs[0])
        return self.coeffs[k] * math.factorial(k)

    def evaluate(self, t):
        """Evaluate the truncated polynomial at parameter t (broadcast against the batch)."""
        offset = np.asarray(t, dtype=float) - self.base
        result = np.zeros(np.broadcast(offset, self.coeffs[0]).shape)
        for c in self.coeffs[::-1]:
            result = result * offset + c
        return result

    def with_value(self, value) -> "Jet1D":
        coeffs = self.coeffs.copy()
        coeffs[0] = value
        return Jet1D(coeffs, self.base)

    # arithmetic

    def _coerce(self, other) -> "Jet1D":
        if isinstance(other, Jet1D):
            if other.order != self.order:
                raise JetError(
                    f"jet order mismatch: {self.order} vs {other.order}",
                    code=ErrorCode.JET_ORDER_MISMATCH,
                )
            return other
        return Jet1D.constant(other, self.order, self.base)

    def __neg__(self):
        return Jet1D(-self.coeffs, self.base)

    def __add__(self, other):
        a, b = _aligned(self.coeffs, self._coerce(other).coeffs)
        return Jet1D(a + b, self.base)

    __radd__ = __add__

    def __sub__(self, other):
        a, b = _aligned(self.coeffs, self._coerce(other).coeffs)
        return Jet1D(a - b, self.base)

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet1D):
            other = np.asarray(other, dtype=float)
            a = _with_batch_rank(self.coeffs, other.ndim)
            return Jet1D(a * other, self.base)
        a, b = _aligned(self.coeffs, self._coerce(other).coeffs)
        out = np.zeros(np.broadcast(a, b).shape)
        for k in range(self.order + 1):
            for j in range(k + 1):
                out[k] = out[k] + a[j] * b[k - j]
        return Jet1D(out, self.base)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet1D):
            _check_denominator(other)
            other = np.asarray(other, dtype=float)
            a = _with_batch_rank(self.coeffs, other.ndim)
            return Jet1D(a / other, self.base)
        a, b = _aligned(self.coeffs, self._coerce(other).coeffs)
        _check_denominator(b[0])
        q = np.zeros(np.broadcast(a, b).shape)
        for k in range(self.order + 1):
            acc = a[k]
            for j in range(1, k + 1):
                acc = acc - b[j] * q[k - j]
            q[k] = acc / b[0]
        return Jet1D(q, self.base)

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __pow__(self, n: int):
        if int(n) != n or n < 0:
            raise JetError(f"only non-negative integer powers are supported, got {n}")
        result = Jet1D.constant(np.ones_like(self.coeffs[0]), self.order, self.base)
        for _ in range(int(n)):
            result = result * self
        return result

    # elementary functions via the standard recurrences

    def _sin_cos(self):
        u = self.coeffs
        s = np.zeros_like(u)
        c = np.zeros_like(u)
        s[0] = np.sin(u[0])
        c[0] = np.cos(u[0])
        for k in range(1, self.order + 1):
            acc_s = np.zeros_like(u[0])
            acc_c = np.zeros_like(u[0])
            for j in range(1, k + 1):
                acc_s = acc_s + j * u[j] * c[k - j]
                acc_c = acc_c + j * u[j] * s[k - j]
            s[k] = acc_s / k
            c[k] = -acc_c / k
        return Jet1D(s, self.base), Jet1D(c, self.base)

    def sin(self):
        return self._sin_cos()[0]

    def cos(self):
        return self._sin_cos()[1]

    def exp(self):
        u = self.coeffs
        e = np.zeros_like(u)
        e[0] = np.exp(u[0])
        for k in range(1, self.order + 1):
            acc = np.zeros_like(u[0])
            for j in range(1, k + 1):
                acc = acc + j * u[j] * e[k - j]
            e[k] = acc / k
        return Jet1D(e, self.base)

    def __repr__(self):
        return f"Jet1D(base={self.base}, coeffs={self.coeffs.tolist()})"


def jet1d_compose(outer: Jet1D, inner: Jet1D, tol: float = BASE_TOLERANCE) -> Jet1D:
    """Truncated composition outer(inner(t)); outer is expanded at inner's value."""
    if outer.order != inner.order:
        raise JetError(
            f"jet order mismatch: {outer.order} vs {inner.order}",
            code=ErrorCode.JET_ORDER_MISMATCH,
        )
    if np.max(np.abs(inner.coeffs[0] - outer.base)) > tol:
        raise JetError("composition base mismatch", details={"outer_base": outer.base})
    shift = inner - inner.coeffs[0]
    result = Jet1D.constant(outer.coeffs[outer.order] * np.ones_like(inner.coeffs[0]), inner.order, inner.base)
    for k in range(outer.order - 1, -1, -1):
        result = result * shift + outer.coeffs[k]
    return result


class Jet2:
    """Batched scalar 2-jet in three variables."""

    __slots__ = ("value", "grad", "hess")
    __array_ufunc__ = None

    def __init__(self, value, grad, hess):
        self.value = np.asarray(value, dtype=float)
        self.grad = np.asarray(grad, dtype=float)
        self.hess = np.asarray(hess, dtype=float)

    @classmethod
    def constant(cls, value, shape=()) -> "Jet2":
        value = np.broadcast_to(np.asarray(value, dtype=float), shape).copy()
        return cls(value, np.zeros(shape + (3,)), np.zeros(shape + (3, 3)))

    @classmethod
    def variables(cls, points) -> tuple["Jet2", "Jet2", "Jet2"]:
        """Coordinate jets x, y, z at points of shape (..., 3)."""
        points = np.asarray(points, dtype=float)
        shape = points.shape[:-1]
        out = []
        for i in range(3):
            grad = np.zeros(shape + (3,))
            grad[..., i] = 1.0
            out.append(cls(points[..., i].copy(), grad, np.zeros(shape + (3, 3))))
        return tuple(out)

    def _coerce(self, other) -> "Jet2":
        if isinstance(other, Jet2):
            return other
        return Jet2.constant(other, self.value.shape)

    def _apply(self, f0, f1, f2) -> "Jet2":
        g = self.grad
        outer = g[..., :, None] * g[..., None, :]
        return Jet2(
            f0,
            f1[..., None] * g,
            f1[..., None, None] * self.hess + f2[..., None, None] * outer,
        )

    def __neg__(self):
        return Jet2(-self.value, -self.grad, -self.hess)

    def __add__(self, other):
        other = self._coerce(other)
        return Jet2(self.value + other.value, self.grad + other.grad, self.hess + other.hess)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._coerce(other)
        return Jet2(self.value - other.value, self.grad - other.grad, self.hess - other.hess)

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet2):
            k = np.asarray(other, dtype=float)
            return Jet2(self.value * k, self.grad * k[..., None], self.hess * k[..., None, None])
        a, b = self, other
        cross = a.grad[..., :, None] * b.grad[..., None, :]
        return Jet2(
            a.value * b.value,
            a.value[..., None] * b.grad + b.value[..., None] * a.grad,
            a.value[..., None, None] * b.hess + b.value[..., None, None] * a.hess
            + cross + np.swapaxes(cross, -1, -2),
        )

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet2":
        _check_denominator(self.value)
        v = self.value
        return self._apply(1.0 / v, -1.0 / v**2, 2.0 / v**3)

    def __truediv__(self, other):
        if not isinstance(other, Jet2):
            _check_denominator(other)
            return self * (1.0 / np.asarray(other, dtype=float))
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, n: int):
        if int(n) != n or n < 0:
            raise JetError(f"only non-negative integer powers are supported, got {n}")
        n = int(n)
        v = self.value
        if n == 0:
            return Jet2.constant(1.0, v.shape)
        f1 = n * v ** (n - 1)
        f2 = n * (n - 1) * v ** (n - 2) if n >= 2 else np.zeros_like(v)
        return self._apply(v**n, f1, f2)

    def sin(self):
        v = self.value
        return self._apply(np.sin(v), np.cos(v), -np.sin(v))

    def cos(self):
        v = self.value
        return self._apply(np.cos(v), -np.sin(v), -np.cos(v))

    def exp(self):
        e = np.exp(self.value)
        return self._apply(e, e, e)


@dataclass(frozen=True)
class Jet2Map3:
    """Order-2 jet of a map of three variables at one base point."""
    base: np.ndarray
    value: np.ndarray
    jacobian: np.ndarray
    hessians: np.ndarray  # hessians[i] is the Hessian of output component i

    @classmethod
    def from_components(cls, base, components: Sequence[Jet2]) -> "Jet2Map3":
        hess = np.stack([np.asarray(c.hess, dtype=float) for c in components])
        return cls(
            base=np.asarray(base, dtype=float),
            value=np.array([float(c.value) for c in components]),
            jacobian=np.stack([np.asarray(c.grad, dtype=float) for c in components]),
            hessians=symmetrize(hess),
        )

    @classmethod
    def identity(cls, base) -> "Jet2Map3":
        base = np.asarray(base, dtype=float)
        return cls(base, base.copy(), np.eye(3), np.zeros((3, 3, 3)))

    @classmethod
    def affine(cls, base, value, jacobian) -> "Jet2Map3":
        return cls(np.asarray(base, float), np.asarray(value, float), np.asarray(jacobian, float), np.zeros((3, 3, 3)))

    def evaluate(self, point) -> np.ndarray:
        """Second-order Taylor polynomial at a nearby point."""
        d = np.asarray(point, dtype=float) - self.base
        return self.value + self.jacobian @ d + 0.5 * np.einsum("ijk,j,k->i", self.hessians, d, d)


def symmetrize(hessians: np.ndarray) -> np.ndarray:
    return 0.5 * (hessians + np.swapaxes(hessians, -1, -2))


def compose_jet2(outer: Jet2Map3, inner: Jet2Map3, tol: float = BASE_TOLERANCE) -> Jet2Map3:
    """Order-2 chain rule for outer(inner(.))."""
    mismatch = float(np.max(np.abs(inner.value - outer.base)))
    if mismatch > tol:
        raise JetError(
            f"composition base mismatch {mismatch:.3e} exceeds {tol:.1e}",
            details={"mismatch": mismatch},
        )
    J_in = inner.jacobian
    hess = np.einsum("ab,kac,cd->kbd", J_in, outer.hessians, J_in)
    hess = hess + np.einsum("ki,ibd->kbd", outer.jacobian, inner.hessians)
    return Jet2Map3(
        base=inner.base.copy(),
        value=outer.value.copy(),
        jacobian=outer.jacobian @ J_in,
        hessians=symmetrize(hess),
    )


def invert_jet2(jet: Jet2Map3) -> Jet2Map3:
    """Order-2 jet of the local inverse, based at jet.value."""
    det = np.linalg.det(jet.jacobian)
    if abs(det) < 1e-14:
        raise JetError("jacobian is singular, jet cannot be inverted", code=ErrorCode.JET_SINGULAR)
    K = np.linalg.inv(jet.jacobian)
    pulled = np.einsum("ab,kac,cd->kbd", K, jet.hessians, K)
    hess = -np.einsum("ik,kbd->ibd", K, pulled)
    return Jet2Map3(
        base=jet.value.copy(),
        value=jet.base.copy(),
        jacobian=K,
        hessians=symmetrize(hess),
    )
