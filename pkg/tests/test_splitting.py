import math

import numpy as np
import pytest

from models.errors import CertificationRefused, ConfigError, SplittingError
from models.responses import ErrorCode
from services.maps import MapService
from services.splitting import FiniteTimeExponents, SplittingService, line_angle

GOLDEN = (3 + math.sqrt(5)) / 2


def test_cat_map_splitting_is_the_eigenbasis(cat3, points, rng):
    split = SplittingService.compute_splitting(cat3, points, rng=rng)
    n = len(points)
    assert np.max(line_angle(split.e_u, np.tile([1.0, GOLDEN - 2, 0.0], (n, 1)))) < 1e-10
    assert np.max(line_angle(split.e_s, np.tile([1.0, 1 / GOLDEN - 2, 0.0], (n, 1)))) < 1e-10
    assert np.max(line_angle(split.e_c, np.tile([0.0, 0.0, 1.0], (n, 1)))) < 1e-10
    assert np.max(line_angle(split.plane_normal, split.e_c)) < 1e-10


def test_single_point_splitting_shapes(cat3):
    split = SplittingService.compute_splitting(cat3, np.array([0.1, 0.2, 0.3]))
    assert split.e_s.shape == (3,)
    assert len(split) == 1


def test_identity_has_no_splitting(identity_map, points):
    with pytest.raises(SplittingError) as info:
        SplittingService.compute_splitting(identity_map, points)
    assert info.value.code == ErrorCode.SPLIT_NOT_CONVERGED


def test_invariance_of_the_lines(heis_F, points):
    residual = SplittingService.invariance_residual(heis_F, points[:20])
    assert residual["s"] < 1e-8
    assert residual["u"] < 1e-8
    assert residual["c"] < 1e-6


def test_finite_time_exponents_of_the_cat_map(cat3, points):
    exps = SplittingService.finite_time_exponents(cat3, points, 3)
    np.testing.assert_allclose(exps.lambda_u, GOLDEN ** 3, rtol=1e-10)
    np.testing.assert_allclose(exps.lambda_s, GOLDEN ** -3, rtol=1e-8)
    np.testing.assert_allclose(exps.lambda_c, 1.0, atol=1e-12)


def test_zero_steps_gives_ones(heis_F, points):
    exps = SplittingService.finite_time_exponents(heis_F, points, 0)
    assert exps.n == 0
    assert np.all(exps.lambda_s == 1.0) and np.all(exps.lambda_c == 1.0) and np.all(exps.lambda_u == 1.0)


def test_finite_time_exponents_are_multiplicative_along_orbits(heis_F, points):
    sample = points[:10]
    later = MapService.iterate(heis_F, sample, 3)
    whole = SplittingService.finite_time_exponents(heis_F, sample, 5)
    head = SplittingService.finite_time_exponents(heis_F, sample, 3)
    tail = SplittingService.finite_time_exponents(heis_F, later, 2)
    for name in ("lambda_s", "lambda_c", "lambda_u"):
        np.testing.assert_allclose(getattr(whole, name), getattr(head, name) * getattr(tail, name), rtol=1e-7)


def test_volume_distortion_of_the_cat_map_vanishes(cat3, points):
    np.testing.assert_allclose(SplittingService.volume_distortion(cat3, points[:10], 4), 0.0, atol=1e-8)


def test_exponent_sum_matches_frame_distortion(heis_F, points):
    sample = points[:10]
    exps = SplittingService.finite_time_exponents(heis_F, sample, 6)
    log_sum = np.log(exps.lambda_s) + np.log(exps.lambda_c) + np.log(exps.lambda_u)
    np.testing.assert_allclose(log_sum, SplittingService.volume_distortion(heis_F, sample, 6), atol=1e-5)
    np.testing.assert_array_equal(SplittingService.volume_distortion(heis_F, sample, 0), 0.0)


def test_contact_map_center_is_isometric(heis_L, points):
    exps = SplittingService.finite_time_exponents(heis_L, points[:10], 4)
    np.testing.assert_allclose(exps.lambda_c, 1.0, atol=1e-9)
    np.testing.assert_allclose(exps.lambda_s * exps.lambda_u, 1.0, rtol=1e-8)


def test_lyapunov_exponents_of_the_cat_map(cat3):
    report = SplittingService.lyapunov_exponents(cat3, np.array([0.1, 0.3, 0.5]), N=1000)
    chi_s, chi_c, chi_u = report.chi
    assert chi_u == pytest.approx(math.log(GOLDEN), abs=1e-6)
    assert chi_s == pytest.approx(-math.log(GOLDEN), abs=1e-6)
    assert chi_c == pytest.approx(0.0, abs=1e-6)
    assert abs(sum(report.chi) - report.mean_log_det) < 2e-6
    assert set(report.finite_time) == {1, 10}


def test_lyapunov_exponents_of_a_contact_map(heis_F):
    report = SplittingService.lyapunov_exponents(heis_F, np.array([0.3, 0.6, 0.2]), N=2000, renorm_every=2)
    chi_s, chi_c, chi_u = report.chi
    assert chi_s < 0 < chi_u
    assert abs(chi_c) < 1e-10
    assert abs(chi_s + chi_u) < 1e-6
    assert report.window_inf["u"] <= chi_u <= report.window_sup["u"]


def test_lyapunov_argument_checks(cat3):
    with pytest.raises(ConfigError) as info:
        SplittingService.lyapunov_exponents(cat3, np.zeros(3), N=500)
    assert info.value.field == "splitting.lyapunov_steps"
    with pytest.raises(ConfigError) as info:
        SplittingService.lyapunov_exponents(cat3, np.zeros(3), N=1000, renorm_every=3)
    assert info.value.field == "splitting.renorm_every"


def test_cat_map_certified_at_first_step(cat3, points):
    cert = SplittingService.certify_partial_hyperbolicity(cat3, points)
    assert cert.k == 1
    assert cert.margin_s == pytest.approx(math.log(GOLDEN), rel=1e-8)
    assert cert.margin_u == pytest.approx(math.log(GOLDEN), rel=1e-8)
    assert cert.sample_size == len(points)
    assert cert.bunching.bunched


def test_identity_certification_is_refused(identity_map, points):
    with pytest.raises(CertificationRefused) as info:
        SplittingService.certify_partial_hyperbolicity(identity_map, points)
    assert info.value.code == ErrorCode.SPLIT_CERTIFICATION_REFUSED


def test_bunching_margins():
    exps = FiniteTimeExponents(1, np.array([0.5]), np.array([1.2]), np.array([2.0]))
    report = SplittingService.check_bunching(exps, 1.0)
    assert report.bunched and report.strongly_bunched
    assert report.margin == pytest.approx(math.log(2.0) - math.log(1.2))
    assert not SplittingService.check_bunching(exps, 4.0).bunched
