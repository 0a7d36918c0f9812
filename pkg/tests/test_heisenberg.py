import numpy as np
import pytest

from models.errors import ConfigError
from services.heisenberg import (
    P0,
    HeisenbergService,
    closed_form_derivative,
    closed_form_point_derivative,
)


def test_closed_forms():
    assert closed_form_derivative() == pytest.approx(-0.98079, abs=1e-5)
    s = np.sin(2 * np.pi / 5)
    np.testing.assert_allclose(closed_form_point_derivative(), [-0.2 * s, -0.4 * s])


def test_base_orbit_starts_at_p0():
    orbit = HeisenbergService.base_orbit()
    np.testing.assert_allclose(orbit.points[0, :2], P0, atol=1e-12)
    np.testing.assert_allclose(orbit.points[1, :2], [0.8, 0.6], atol=1e-12)
    assert HeisenbergService.periodicity_defect() <= 1e-14


def test_rotation_number_at_zero():
    sample = HeisenbergService.rotation_number(0.0)
    assert sample.tau_p == pytest.approx(0.2, abs=1e-14)
    assert sample.tau_q == pytest.approx(1.3, abs=1e-14)
    assert sample.lift == pytest.approx(1.5, abs=1e-12)
    assert sample.value == pytest.approx(0.5, abs=1e-12)


def test_derivative_matches_closed_form():
    estimate = HeisenbergService.rotation_derivative_at_zero(1e-4)
    assert estimate.error <= 1e-6


def test_step_outside_the_allowed_range():
    with pytest.raises(ConfigError) as info:
        HeisenbergService.rotation_derivative_at_zero(1e-2)
    assert info.value.field == "heisenberg.step"


def test_rotation_curve_is_ordered_and_continuous():
    eps = [1e-3, -1e-3, 0.0, 5e-4, -5e-4]
    curve = HeisenbergService.rotation_curve(eps)
    assert [s.eps for s in curve] == sorted(eps)
    lifts = np.array([s.lift for s in curve])
    slopes = np.diff(lifts) / np.diff(sorted(eps))
    np.testing.assert_allclose(slopes, closed_form_derivative(), atol=1e-2)


def test_continuation_defect_is_quadratic():
    result = HeisenbergService.continuation_defect([1e-3, 3e-3, 1e-2, 3e-2, 1e-1])
    assert 1.8 <= result["slope"] <= 2.2
    assert len(result["defects"]) == 5


def test_fiber_return_is_a_rigid_translation():
    result = HeisenbergService.fiber_return(1e-3)
    assert result["spread"] <= 1e-12
    assert result["eps"] == 1e-3
