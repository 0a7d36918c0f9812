import numpy as np
import pytest

from models.errors import ConfigError
from models.responses import ErrorCode
from services.cocycles import (
    VERDICT_MIXED,
    VERDICT_NONNEGATIVE,
    VERDICT_ZERO,
    AdditiveCocycle,
    CocycleService,
    TwistedCocycle,
)
from services.maps import MapService
from services.periodic import PeriodicService

X = np.array([0.31, 0.52, 0.77])
BETA = "0.1*sin(2*pi*x)*cos(2*pi*y)"


def _twist(pts):
    return 0.8 + 0.3 * np.cos(2 * np.pi * np.asarray(pts)[..., 0])


@pytest.fixture
def phi():
    return AdditiveCocycle.from_expression("sin(2*pi*x) + y*cos(2*pi*z)")


def test_birkhoff_sums_are_additive(cat3, phi):
    later = MapService.iterate(cat3, X, 4)
    whole = CocycleService.birkhoff_sum(phi, cat3, X, 7)
    assert whole == pytest.approx(CocycleService.birkhoff_sum(phi, cat3, X, 4) + CocycleService.birkhoff_sum(phi, cat3, later, 3), abs=1e-9)


def test_backward_birkhoff_sum(cat3, phi):
    earlier = MapService.iterate(cat3, X, -3)
    assert CocycleService.birkhoff_sum(phi, cat3, X, -3) == pytest.approx(-CocycleService.birkhoff_sum(phi, cat3, earlier, 3), abs=1e-9)
    assert CocycleService.birkhoff_sum(phi, cat3, X, 0) == 0.0


def test_twisted_sums_follow_the_cocycle_identity(heis_F, phi):
    cocycle = TwistedCocycle(phi.generator, _twist)
    later = MapService.iterate(heis_F, X, 3)
    whole = CocycleService.twisted_sum(cocycle, heis_F, X, 5)
    head = CocycleService.twisted_sum(cocycle, heis_F, X, 3)
    tail = CocycleService.twisted_sum(cocycle, heis_F, later, 2)
    weight = CocycleService.twist_weight(cocycle, heis_F, X, 3)
    assert whole == pytest.approx(head + weight * tail, abs=1e-9)


def test_negative_twisted_sum_inverts_the_positive_one(heis_F, phi):
    cocycle = TwistedCocycle(phi.generator, _twist)
    earlier = MapService.iterate(heis_F, X, -3)
    forward = CocycleService.twisted_sum(cocycle, heis_F, earlier, 3)
    weight = CocycleService.twist_weight(cocycle, heis_F, X, -3)
    assert CocycleService.twisted_sum(cocycle, heis_F, X, -3) == pytest.approx(-weight * forward, abs=1e-9)


def test_coboundaries_telescope(cat3):
    potential = "sin(2*pi*x)*cos(2*pi*z)"
    cocycle = AdditiveCocycle.coboundary(cat3, potential)
    end = MapService.iterate(cat3, X, 6)

    def phi(p):
        return np.sin(2 * np.pi * p[0]) * np.cos(2 * np.pi * p[2])

    assert CocycleService.birkhoff_sum(cocycle, cat3, X, 6) == pytest.approx(phi(end) - phi(X), abs=1e-9)


def test_twisted_coboundaries_telescope(heis_F):
    cocycle = TwistedCocycle.twisted_coboundary(heis_F, _twist, BETA)
    end = MapService.iterate(heis_F, X, 4)

    def beta(p):
        return 0.1 * np.sin(2 * np.pi * p[0]) * np.cos(2 * np.pi * p[1])

    weight = CocycleService.twist_weight(cocycle, heis_F, X, 4)
    assert CocycleService.twisted_sum(cocycle, heis_F, X, 4) == pytest.approx(weight * beta(end) - beta(X), abs=1e-9)


def test_fit_recovers_a_trigonometric_coboundary(heis_F):
    cocycle = TwistedCocycle.twisted_coboundary(heis_F, _twist, BETA)
    fit = CocycleService.fit_twisted_coboundary(cocycle, heis_F, X, 300)
    assert fit.residual < 1e-9
    assert fit.generator_sup > 0.01


@pytest.fixture
def cat_orbits(cat3):
    return PeriodicService.find_periodic_orbits(cat3, 2)


def test_livshits_on_a_volume_preserving_map(cat3, cat_orbits):
    verdict = CocycleService.livshits_sign_test(AdditiveCocycle.log_det(cat3), cat_orbits)
    assert verdict.verdict == VERDICT_ZERO
    assert len(verdict.sums) == 3


def test_livshits_verdicts(cat_orbits):
    assert CocycleService.livshits_sign_test(AdditiveCocycle.constant(1.0), cat_orbits).verdict == VERDICT_NONNEGATIVE
    mixed = CocycleService.livshits_sign_test(AdditiveCocycle.from_expression("cos(2*pi*x)"), cat_orbits)
    assert mixed.verdict == VERDICT_MIXED
    assert mixed.worst_period == 2
    assert mixed.worst_value == pytest.approx(2 * np.cos(0.8 * np.pi), abs=1e-9)


def test_livshits_needs_orbits():
    with pytest.raises(ConfigError) as info:
        CocycleService.livshits_sign_test(AdditiveCocycle.constant(0.0), [])
    assert info.value.code == ErrorCode.COC_NO_ORBITS


def test_periodic_obstruction_of_an_untwisted_cocycle(cat_orbits, phi):
    orbit = next(o for o in cat_orbits if o.period == 2)
    obstruction = CocycleService.periodic_obstruction(TwistedCocycle.untwisted(phi), orbit)
    assert obstruction.well_defined
    assert obstruction.twist_product == 1.0
    assert obstruction.spread < 1e-12
    assert obstruction.value == pytest.approx(float(np.sum(phi(orbit.points))))


@pytest.mark.parametrize("n", [1, 6, -4])
def test_untwisted_sum_is_the_birkhoff_sum(cat3, phi, points, n):
    untwisted = TwistedCocycle.untwisted(phi)
    for x in points[:5]:
        np.testing.assert_array_equal(
            CocycleService.twisted_sum(untwisted, cat3, x, n),
            CocycleService.birkhoff_sum(phi, cat3, x, n),
        )


def test_fh_twist_of_a_strict_contact_map(heis_L, points):
    np.testing.assert_allclose(CocycleService.fh_twist(heis_L, points[:10]), 1.0, rtol=1e-8)


def test_fh_twist_product_matches_finite_time_exponents(heis_F):
    result = CocycleService.fh_twist_product(heis_F, X, 3)
    assert result["product"] == pytest.approx(result["ratio"], rel=1e-8)


@pytest.mark.slow
def test_fh_obstruction_vanishes_on_periodic_orbits(heis_F):
    orbit = next(o for o in PeriodicService.find_periodic_orbits(heis_F, 2) if o.period == 2)
    obstruction = CocycleService.periodic_obstruction(TwistedCocycle.foulon_hasselblatt(heis_F), orbit)
    assert abs(obstruction.value) <= 1e-6


def test_coboundary_residual_of_the_sampled_transfer_function(heis_F):
    cocycle = TwistedCocycle.twisted_coboundary(heis_F, _twist, BETA)
    segment = MapService.orbit_points(heis_F, X, 20)
    beta = 0.1 * np.sin(2 * np.pi * segment[:, 0]) * np.cos(2 * np.pi * segment[:, 1])
    assert CocycleService.coboundary_residual(cocycle, segment, beta) < 1e-12
    assert CocycleService.coboundary_residual(cocycle, segment, beta + 0.01) > 1e-4
