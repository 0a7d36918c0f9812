import math

import numpy as np
import pytest

from models.errors import ConfigError
from services.maps import MapService, builtin_map
from services.periodic import PeriodicOrbit, PeriodicService

SIN = math.sin(2 * math.pi / 5)


def _contains(orbit, xy, tol=1e-9):
    return bool(np.any(np.linalg.norm(orbit.points[:, :2] - np.asarray(xy), axis=-1) < tol))


def test_cat_map_fixed_point_is_unique(cat3):
    orbits = PeriodicService.find_periodic_orbits(cat3, 1)
    assert len(orbits) == 1
    np.testing.assert_allclose(orbits[0].points[0, :2], [0.0, 0.0], atol=1e-12)
    assert orbits[0].on_base


def test_cat_map_period_two_count(cat3):
    # |det(A^2 - I)| = 5 points: the fixed point and two 2-cycles.
    orbits = PeriodicService.find_periodic_orbits(cat3, 2)
    assert sorted(o.period for o in orbits) == [1, 2, 2]
    assert sum(o.period for o in orbits) == 5
    assert any(_contains(o, [0.2, 0.4]) and _contains(o, [0.8, 0.6]) for o in orbits)
    assert any(_contains(o, [0.4, 0.8]) and _contains(o, [0.6, 0.2]) for o in orbits)
    assert all(o.residual <= 1e-10 for o in orbits)


def test_base_orbits_of_the_cat_map_close_in_the_fiber(cat3):
    for orbit in PeriodicService.find_periodic_orbits(cat3, 2):
        assert orbit.fiber_shift == pytest.approx(0.0, abs=1e-12)
        closed = MapService.iterate(cat3, orbit.points[0], orbit.period)
        assert float(cat3.manifold.distance(closed, orbit.points[0])) < 1e-10


def test_perturbed_map_keeps_a_period_two_orbit():
    spec = builtin_map("F", {"eps": 0.01})
    orbits = PeriodicService.find_periodic_orbits(spec, 2)
    assert sum(o.period for o in orbits) == 5
    assert any(_contains(o, [0.2, 0.4], tol=0.02) for o in orbits)


def test_period_must_be_positive(cat3):
    with pytest.raises(ConfigError):
        PeriodicService.find_periodic_orbits(cat3, 0)


def _p0_orbit():
    points = np.array([[0.2, 0.4, 0.0], [0.8, 0.6, 0.0]])
    return PeriodicOrbit(points=points, period=2, decks=np.zeros((2, 3)), residual=0.0, on_base=True)


def test_predictor_tangent_matches_closed_form():
    spec = builtin_map("F", {"eps": 0.0})
    curve = PeriodicService.continue_periodic_orbit(spec, _p0_orbit(), [1e-3])
    np.testing.assert_allclose(curve.tangents[0], [-0.2 * SIN, -0.4 * SIN], atol=1e-12)


def test_continuation_follows_the_tangent():
    spec = builtin_map("F", {"eps": 0.0})
    curve = PeriodicService.continue_periodic_orbit(spec, _p0_orbit(), [5e-4, 1e-3])
    np.testing.assert_allclose(curve.values, [0.0, 5e-4, 1e-3])
    assert np.max(curve.residuals) <= 1e-12
    np.testing.assert_allclose(curve.points[-1], [0.2 - 2e-4 * SIN, 0.4 - 4e-4 * SIN], atol=5e-5)
    np.testing.assert_allclose(curve.derivative[0], curve.tangents[0], atol=5e-3)
    assert curve.orbits.shape == (3, 2, 2)


def test_continuation_needs_a_family_parameter(cat3):
    with pytest.raises(ConfigError) as info:
        PeriodicService.continue_periodic_orbit(cat3, _p0_orbit(), [0.1])
    assert info.value.field == "map.family_parameter"
