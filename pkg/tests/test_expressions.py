import numpy as np
import pytest

from models.errors import ExpressionError
from models.responses import ErrorCode
from services.expressions import Expression, ExpressionService
from tests.conftest import finite_difference_jacobian

POINT = np.array([0.3, 0.4, 0.7])


def value(text, point=POINT, params=None):
    return float(Expression.parse(text).evaluate(point, params))


def test_arithmetic_and_precedence():
    assert value("2*x + y") == pytest.approx(1.0)
    assert value("2 + 3*4") == 14.0
    assert value("(2 + 3)*4") == 20.0
    assert value("8/2/2") == 2.0
    assert value("2^3^2") == 512.0


def test_unary_minus_binds_looser_than_power():
    assert value("-x^2", np.array([3.0, 0.0, 0.0])) == -9.0
    assert value("--x", POINT) == pytest.approx(0.3)


def test_functions_and_pi():
    assert value("sin(pi/2)") == pytest.approx(1.0)
    assert value("cos(2*pi*x)", np.array([0.5, 0, 0])) == pytest.approx(-1.0)
    assert value("exp(0)") == 1.0


def test_parameters_bind_at_evaluation():
    expr = Expression.parse("eps*sin(2*pi*x)")
    assert expr.parameters == frozenset({"eps"})
    assert float(expr.evaluate(np.array([0.25, 0, 0]), {"eps": 0.01})) == pytest.approx(0.01)


def test_vectorized_evaluation_keeps_batch_shape():
    points = np.random.default_rng(0).random((4, 5, 3))
    out = Expression.parse("x + 2*y - z").evaluate(points)
    assert out.shape == (4, 5)
    np.testing.assert_allclose(out, points[..., 0] + 2 * points[..., 1] - points[..., 2])


def test_constant_expression_broadcasts():
    out = Expression.parse("3").evaluate(np.zeros((6, 3)))
    assert out.shape == (6,)
    assert np.all(out == 3.0)


def test_canonical_text_reparses_to_the_same_tree():
    expr = Expression.parse("z + eps*(x)*sin(2*pi*(x)) - x^2/2")
    again = Expression.parse(expr.canonical)
    assert again.canonical == expr.canonical
    assert float(again.evaluate(POINT, {"eps": 0.3})) == pytest.approx(float(expr.evaluate(POINT, {"eps": 0.3})))


def test_syntax_error_reports_byte_offset():
    with pytest.raises(ExpressionError) as info:
        Expression.parse("2*(x+1")
    assert info.value.code == ErrorCode.EXPR_SYNTAX
    assert info.value.offset == 6


def test_bad_character_offset():
    with pytest.raises(ExpressionError) as info:
        Expression.parse("x $ y")
    assert info.value.offset == 2


def test_non_integer_exponent_rejected():
    with pytest.raises(ExpressionError):
        Expression.parse("x^0.5")


def test_unknown_function():
    with pytest.raises(ExpressionError) as info:
        Expression.parse("tan(x)")
    assert info.value.code == ErrorCode.EXPR_UNKNOWN_IDENTIFIER


def test_unknown_identifier_with_declared_parameters():
    with pytest.raises(ExpressionError) as info:
        Expression.parse("eps*x + c", parameters=["eps"])
    assert info.value.code == ErrorCode.EXPR_UNKNOWN_IDENTIFIER


def test_unbound_parameter():
    with pytest.raises(ExpressionError) as info:
        Expression.parse("eps*x").evaluate(POINT)
    assert info.value.code == ErrorCode.EXPR_UNBOUND_PARAMETER


def test_division_by_zero():
    with pytest.raises(ExpressionError) as info:
        Expression.parse("1/x").evaluate(np.zeros(3))
    assert info.value.code == ErrorCode.EXPR_DIVISION_BY_ZERO


def test_overflow_is_non_finite():
    with pytest.raises(ExpressionError) as info:
        Expression.parse("exp(x)").evaluate(np.array([1000.0, 0, 0]))
    assert info.value.code == ErrorCode.EXPR_NONFINITE


def test_jet2_matches_finite_differences():
    expr = Expression.parse("sin(2*pi*x)*y + x^2*z + exp(y*z)/(1 + x^2)")
    jet = expr.jet2(POINT)
    grad_fd = finite_difference_jacobian(lambda p: expr.evaluate(p), POINT)
    np.testing.assert_allclose(jet.grad, grad_fd, atol=1e-7)
    hess_fd = finite_difference_jacobian(lambda p: expr.jet2(p).grad, POINT)
    np.testing.assert_allclose(jet.hess, hess_fd, atol=1e-6)
    np.testing.assert_allclose(jet.hess, jet.hess.T, atol=1e-14)


def test_eval_jet2_of_a_quadratic_is_exact():
    value_, grad, hess = ExpressionService.eval_jet2(Expression.parse("x^2 + x*y + y^2/2"), [0.2, 0.4, 0.0])
    assert value_ == pytest.approx(0.04 + 0.08 + 0.08)
    np.testing.assert_allclose(grad, [0.8, 0.6, 0.0], atol=1e-15)
    np.testing.assert_allclose(hess, [[2, 1, 0], [1, 1, 0], [0, 0, 0]], atol=1e-15)


def test_parse_expr_declares_parameters():
    expr = ExpressionService.parse_expr("a*x + y", ["a"])
    assert float(expr.evaluate(np.array([1.0, 2.0, 3.0]), {"a": 2.0})) == pytest.approx(4.0)
