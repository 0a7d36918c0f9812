import numpy as np
import pytest

from models.errors import ConfigError, DegenerateFormError, NewtonError, PreconditionError, TransversalityError
from models.responses import ErrorCode
from services.contact import CONTACT, INTEGRABLE, MIXED, ContactService
from services.geometry import TORUS3, OneForm, VolumeForm
from services.maps import MapSpec

SIZES = [0.003, 0.006, 0.012, 0.024, 0.03]


def test_reeb_field_of_the_standard_form(alpha, points):
    reeb = ContactService.reeb_field(alpha, points)
    np.testing.assert_allclose(reeb.vectors, np.tile([0.0, 0.0, 1.0], (len(points), 1)), atol=1e-12)
    assert reeb.normalization_residual < 1e-12
    assert reeb.kernel_residual < 1e-12


def test_contact_density(alpha, points):
    np.testing.assert_allclose(ContactService.contact_density(alpha, VolumeForm.standard(), points), -1.0)


def test_frobenius_verdicts(alpha, points):
    assert ContactService.frobenius_test(alpha, points)["verdict"] == CONTACT
    assert ContactService.frobenius_test(OneForm.from_strings("0", "0", "1"), points)["verdict"] == INTEGRABLE
    quadratic = OneForm.from_strings("0", "-x^2", "1")
    assert ContactService.frobenius_test(quadratic, [[0.0, 0.2, 0.3], [0.5, 0.2, 0.3]])["verdict"] == MIXED


def test_reeb_field_needs_a_contact_form(points):
    with pytest.raises(DegenerateFormError) as info:
        ContactService.reeb_field(OneForm.from_strings("0", "0", "1"), points)
    assert info.value.code == ErrorCode.CON_DEGENERATE_FORM


def test_strict_contact_map_report(heis_F, points):
    report = ContactService.contact_report(heis_F, points[:20])
    np.testing.assert_allclose(report.rho, 1.0, atol=1e-10)
    assert report.rho_residual <= 1e-10
    assert report.hrho_residual <= 1e-10
    assert report.volume_identity_residual <= 1e-10
    assert report.reeb_residual <= 1e-6
    assert np.max(report.center_angles) <= 1e-6
    assert report.frobenius == CONTACT
    assert report.summary()["samples"] == 20


def test_contact_automorphism_preserves_the_form(heis_L, alpha, points):
    assert ContactService.invariance_defect(heis_L, alpha, points) < 1e-12
    ratio = ContactService.pullback_ratio(heis_L, alpha, points, n=3)
    np.testing.assert_allclose(ratio.rho, 1.0, atol=1e-10)


def test_report_needs_a_form(cat3, points):
    with pytest.raises(ConfigError) as info:
        ContactService.contact_report(cat3, points)
    assert info.value.field == "form"


def test_hrho_needs_volume_preservation(alpha, points):
    spec = MapSpec.from_strings("double", TORUS3, ("2*x + y", "x + y", "2*z"))
    with pytest.raises(PreconditionError) as info:
        ContactService.check_hrho(spec, alpha, VolumeForm.standard(), points)
    assert info.value.code == ErrorCode.CON_PRECONDITION


def test_transversal_disk_sees_d_alpha(alpha):
    value = ContactService.transversal_nondegeneracy(alpha, [0.3, 0.6, 0.2], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0])
    assert value == pytest.approx(1.0)


def test_disk_containing_the_reeb_direction_is_refused(alpha):
    with pytest.raises(TransversalityError):
        ContactService.transversal_nondegeneracy(alpha, [0.3, 0.6, 0.2], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0])


def test_integrable_plane_field_closes_su_loops(cat3):
    gap = ContactService.su_gap(cat3, [0.3, 0.6, 0.2], 0.01)
    assert gap.gap <= 1e-8
    assert gap.loop_integral is None


def test_su_gap_size_range(cat3):
    with pytest.raises(ConfigError) as info:
        ContactService.su_gap(cat3, [0.3, 0.6, 0.2], 0.2)
    assert info.value.field == "contact.size"


@pytest.mark.slow
def test_contact_su_gap_scales_quadratically(heis_F):
    sweep = ContactService.su_gap_sweep(heis_F, [0.3, 0.6, 0.2], SIZES)
    assert 1.8 <= sweep["slope"] <= 2.2
    assert all(g.gap > 0 for g in sweep["gaps"])


def test_reeb_field_is_the_center_of_the_linear_contact_map(heis_L, points):
    angles = ContactService.check_reeb_center(heis_L, heis_L.contact_form, points[:20])
    assert angles.shape == (20,)
    assert float(np.max(angles)) < 1e-8


def test_stable_corner_solver_finds_the_root():
    assert ContactService._solve_stable_corner(lambda s: 2.0 * (s - 0.02), 0.01, 0.01) == pytest.approx(0.02, abs=1e-10)


def test_stable_corner_solver_rejects_a_flat_offset():
    with pytest.raises(NewtonError) as err:
        ContactService._solve_stable_corner(lambda s: 0.3, 0.015, 0.01)
    assert err.value.code == ErrorCode.MAP_NEWTON_FAILED
    assert err.value.details["size"] == 0.01
