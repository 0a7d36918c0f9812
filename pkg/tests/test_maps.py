import numpy as np
import pytest

from models.errors import ConfigError
from models.responses import ErrorCode
from services.geometry import TORUS3
from services.maps import BUILTINS, MapService, MapSpec, base_expressions, builtin_map, describe
from tests.conftest import finite_difference_jacobian


@pytest.fixture(params=sorted(BUILTINS))
def any_builtin(request):
    return builtin_map(request.param)


def test_unknown_builtin_is_a_config_error():
    with pytest.raises(ConfigError) as info:
        builtin_map("baker")
    assert info.value.code == ErrorCode.CONFIG_UNKNOWN_NAME
    assert info.value.field == "map.name"


def test_builtins_commute_with_decks(any_builtin, rng):
    assert MapService.deck_commutation_residual(any_builtin, rng) < 1e-9


def test_builtins_preserve_volume(any_builtin, rng):
    assert any_builtin.volume_preserving
    assert MapService.volume_residual(any_builtin, rng) < 1e-12


def test_declared_inverses_round_trip(any_builtin, rng):
    assert MapService.round_trip_residual(any_builtin, rng) < 1e-10


def test_newton_inverse_without_declared_inverse(rng):
    spec = MapSpec.from_strings(
        "custom", TORUS3, ("2*x + y + 0.02*sin(2*pi*z)", "x + y", "z + 0.03*sin(2*pi*x)"),
    )
    assert spec.inverse is None
    assert MapService.round_trip_residual(spec, rng) < 1e-10


def test_jacobian_matches_finite_differences(heis_F):
    point = np.array([0.31, 0.62, 0.17])
    numeric = finite_difference_jacobian(lambda p: MapService.lift(heis_F, p), point)
    np.testing.assert_allclose(MapService.jacobian(heis_F, point), numeric, atol=1e-8)


def test_step_differential_agrees_with_transition_jacobian(heis_F, points):
    images, jac = MapService.step(heis_F, points)
    np.testing.assert_allclose(MapService.transition_jacobians(heis_F, points, images), jac, atol=1e-14)


def test_step_jet_carries_the_deck_shear(heis_L):
    point = np.array([0.9, 0.8, 0.5])
    jet = MapService.step_jet2(heis_L, point)
    _, jac = MapService.step(heis_L, point)
    np.testing.assert_allclose(jet.jacobian, jac, atol=1e-14)
    assert np.all(jet.value >= 0) and np.all(jet.value < 1)


def test_iterate_backwards_undoes_forwards(heis_F, points):
    forward = MapService.iterate(heis_F, points, 5)
    back = MapService.iterate(heis_F, forward, -5)
    assert np.max(heis_F.manifold.distance(points, back)) < 1e-9


def test_orbit_records_decks(cat3):
    orbit = MapService.orbit(cat3, [0.45, 0.7, 0.3], 3)
    assert orbit.points.shape == (4, 3)
    assert orbit.decks.shape == (3, 3)
    np.testing.assert_allclose(orbit.points[1], [0.6, 0.15, 0.3], atol=1e-14)


def test_contact_maps_are_strict(heis_L, heis_H, heis_F, points):
    for spec in (heis_L, heis_H, heis_F):
        np.testing.assert_allclose(MapService.conformal_factor(spec, points), 1.0, atol=1e-10)


def test_conformal_factor_needs_a_form(cat3, points):
    with pytest.raises(ConfigError) as info:
        MapService.conformal_factor(cat3, points)
    assert info.value.field == "form"


def test_with_params_leaves_the_original_alone(heis_F):
    wider = heis_F.with_params(eps=0.05)
    assert wider.params["eps"] == 0.05
    assert heis_F.params["eps"] == 0.01


def test_base_is_required_for_torus_projection(identity_map, skew):
    assert len(base_expressions(skew)) == 2
    with pytest.raises(ConfigError) as info:
        base_expressions(identity_map)
    assert info.value.code == ErrorCode.MAP_NO_BASE


def test_describe(heis_F):
    info = describe(heis_F)
    assert info["manifold"] == "heisenberg"
    assert info["contact_form"] == "dz - x dy"
    assert info["params"] == {"eps": 0.01}


def test_inverse_apply_undoes_apply(cat3, heis_F, points):
    for spec in (cat3, heis_F):
        back = MapService.inverse_apply(spec, MapService.apply(spec, points))
        assert np.max(spec.manifold.distance(points, back)) < 1e-10
