import math

import numpy as np
import pytest

from models.errors import ExpressionError, JetError
from models.responses import ErrorCode
from services.expressions import Expression
from services.jets import Jet1D, Jet2, Jet2Map3, compose_jet2, invert_jet2, jet1d_compose


def test_jet1d_elementary_functions_match_taylor_series():
    t = Jet1D.variable(0.0, order=6)
    np.testing.assert_allclose(t.exp().coeffs, [1 / math.factorial(k) for k in range(7)], atol=1e-15)
    np.testing.assert_allclose(t.sin().coeffs, [0, 1, 0, -1 / 6, 0, 1 / 120, 0], atol=1e-15)
    np.testing.assert_allclose(t.cos().coeffs, [1, 0, -1 / 2, 0, 1 / 24, 0, -1 / 720], atol=1e-15)


def test_jet1d_product_and_quotient_invert_each_other():
    t = Jet1D.variable(0.3, order=5)
    f = t.sin() * t + 2.0
    g = t.exp() + t ** 2
    np.testing.assert_allclose(((f * g) / g).coeffs, f.coeffs, atol=1e-13)


def test_jet1d_derivatives_against_closed_form():
    t = Jet1D.variable(0.7, order=4)
    f = (t * 3.0).sin()
    for k in range(5):
        expected = 3.0 ** k * math.sin(3 * 0.7 + k * math.pi / 2)
        assert f.derivative(k) == pytest.approx(expected, rel=1e-12)
    assert np.all(f.derivative(9) == 0.0)


def test_jet1d_evaluate_is_the_taylor_polynomial():
    t = Jet1D.variable(0.0, order=8)
    assert float(t.exp().evaluate(0.1)) == pytest.approx(math.exp(0.1), rel=1e-12)


def test_jet1d_batched_line():
    start = np.array([[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]])
    direction = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    line = Jet1D.line(start, direction, order=3)
    np.testing.assert_allclose(line.evaluate(0.5), start + 0.5 * direction)


def test_jet1d_composition():
    outer = Jet1D.variable(0.0, order=5).exp()
    inner = Jet1D.variable(0.0, order=5).sin()
    composed = jet1d_compose(outer, inner)
    # exp(sin t) = 1 + t + t^2/2 - t^4/8 - t^5/15 + ...
    np.testing.assert_allclose(composed.coeffs, [1, 1, 0.5, 0, -1 / 8, -1 / 15], atol=1e-14)


def test_jet1d_order_mismatch():
    with pytest.raises(JetError) as info:
        Jet1D.variable(order=3) + Jet1D.variable(order=4)
    assert info.value.code == ErrorCode.JET_ORDER_MISMATCH


def test_jet1d_negative_power_rejected():
    with pytest.raises(JetError):
        Jet1D.variable(order=2) ** -1


def test_jet1d_division_by_zero_value():
    with pytest.raises(ExpressionError):
        Jet1D.variable(0.0, order=3) / Jet1D.variable(0.0, order=3)


def test_jet2_product_rule():
    x, y, z = Jet2.variables(np.array([0.5, -0.25, 2.0]))
    f = x * y * z
    assert float(f.value) == pytest.approx(-0.25)
    np.testing.assert_allclose(f.grad, [-0.5, 1.0, -0.125])
    np.testing.assert_allclose(f.hess, [[0, 2.0, -0.25], [2.0, 0, 0.5], [-0.25, 0.5, 0]])


def test_jet2_reciprocal():
    x, _, _ = Jet2.variables(np.array([2.0, 0.0, 0.0]))
    r = 1.0 / x
    assert float(r.value) == 0.5
    assert r.grad[0] == pytest.approx(-0.25)
    assert r.hess[0, 0] == pytest.approx(0.25)


def _map_jet(texts, point):
    point = np.asarray(point, dtype=float)
    return Jet2Map3.from_components(point, [Expression.parse(t).jet2(point) for t in texts])


def test_compose_matches_jet_of_composition():
    f_texts = ("x + y^2", "y + sin(z)", "z + x*y")
    point = np.array([0.1, 0.2, 0.3])
    inner = _map_jet(f_texts, point)
    outer = _map_jet(("x*z", "y + x^2", "exp(z)"), inner.value)
    composed = compose_jet2(outer, inner)
    direct = _map_jet(
        ("(x + y^2)*(z + x*y)", "(y + sin(z)) + (x + y^2)^2", "exp(z + x*y)"), point
    )
    np.testing.assert_allclose(composed.value, direct.value, atol=1e-14)
    np.testing.assert_allclose(composed.jacobian, direct.jacobian, atol=1e-13)
    np.testing.assert_allclose(composed.hessians, direct.hessians, atol=1e-12)


def test_composition_is_associative_on_random_triples():
    rng = np.random.default_rng(11)
    first = ("x + y^2", "y + sin(z)", "z + x*y")
    second = ("2*x + y + 0.1*sin(2*pi*x)", "x + y + z^2", "z + 0.5*x^2")
    third = ("x*z + y", "y + x^2", "exp(z) - x")
    for base in rng.uniform(-0.5, 0.5, (8, 3)):
        c = _map_jet(first, base)
        b = _map_jet(second, c.value)
        a = _map_jet(third, b.value)
        left = compose_jet2(compose_jet2(a, b), c)
        right = compose_jet2(a, compose_jet2(b, c))
        np.testing.assert_array_equal(left.base, right.base)
        np.testing.assert_allclose(left.value, right.value, atol=1e-10)
        np.testing.assert_allclose(left.jacobian, right.jacobian, atol=1e-10)
        np.testing.assert_allclose(left.hessians, right.hessians, atol=1e-10)


def test_inverse_composes_to_identity():
    jet = _map_jet(("2*x + y + 0.1*sin(2*pi*x)", "x + y + z^2", "z + x*y"), [0.2, 0.4, 0.1])
    inverse = invert_jet2(jet)
    round_trip = compose_jet2(inverse, jet)
    np.testing.assert_allclose(round_trip.jacobian, np.eye(3), atol=1e-13)
    np.testing.assert_allclose(round_trip.hessians, 0.0, atol=1e-12)
    np.testing.assert_allclose(round_trip.value, jet.base, atol=1e-15)


def test_compose_base_mismatch():
    a = Jet2Map3.identity(np.zeros(3))
    b = Jet2Map3.identity(np.ones(3))
    with pytest.raises(JetError) as info:
        compose_jet2(a, b)
    assert info.value.code == ErrorCode.JET_BASE_MISMATCH


def test_singular_jet_cannot_be_inverted():
    jet = Jet2Map3.affine(np.zeros(3), np.zeros(3), np.diag([1.0, 1.0, 0.0]))
    with pytest.raises(JetError) as info:
        invert_jet2(jet)
    assert info.value.code == ErrorCode.JET_SINGULAR
