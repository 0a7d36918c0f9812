import numpy as np
import pytest

from models.errors import DegenerateFitError
from models.responses import ErrorCode
from services.regularity import PairSample, RegularityService, sample_pairs
from services.worker_pool import WorkerPool, keyed_rng


def test_cat_map_plane_is_constant(cat3):
    report = RegularityService.estimate_plane_regularity(cat3, seed=1, count=100)
    assert report.lipschitz_constant <= 1e-8
    assert report.pairs == 100


def test_fit_recovers_a_power_law():
    d = np.geomspace(1e-4, 1e-1, 50)
    report = RegularityService.fit(d, 0.3 * d ** 0.7)
    assert report.holder_exponent == pytest.approx(0.7, abs=1e-10)
    assert report.fit_r2 == pytest.approx(1.0)
    assert report.lipschitz_constant == pytest.approx(0.3 * 1e-4 ** -0.3)
    low, high = report.confidence
    assert low == pytest.approx(0.7, abs=1e-8) and high == pytest.approx(0.7, abs=1e-8)


def test_steep_fits_are_clamped_to_lipschitz():
    d = np.geomspace(1e-4, 1e-1, 20)
    report = RegularityService.fit(d, d ** 2)
    assert report.holder_exponent == 1.0
    assert report.slope == pytest.approx(2.0)


def test_rounding_level_angles_give_no_exponent():
    d = np.geomspace(1e-4, 1e-1, 20)
    report = RegularityService.fit(d, np.full(20, 1e-16))
    assert report.holder_exponent is None
    assert report.fitted_pairs == 0


def test_equal_distances_cannot_be_fitted(cat3):
    pairs = PairSample(p=np.zeros((5, 3)), q=np.full((5, 3), 0.01), distance=np.full(5, 0.01))
    with pytest.raises(DegenerateFitError) as info:
        RegularityService.estimate_plane_regularity(cat3, pairs=pairs)
    assert info.value.code == ErrorCode.SPLIT_DEGENERATE_FIT


def test_sampled_pairs_respect_the_distance_range(cat3):
    pairs = sample_pairs(cat3, keyed_rng(2, 0), 64, 1e-3, 1e-2)
    assert np.all((pairs.distance >= 1e-3) & (pairs.distance <= 1e-2))
    np.testing.assert_allclose(np.linalg.norm(pairs.q - pairs.p, axis=-1), pairs.distance)


def test_kernel_normal_turning_rate(alpha):
    assert RegularityService.kernel_normal_lipschitz(alpha, [[0.0, 0.3, 0.3], [1.0, 0.3, 0.3]]) == pytest.approx(1.0)
    assert RegularityService.kernel_normal_lipschitz(alpha, [[1.0, 0.0, 0.0]]) == pytest.approx(0.5)


def test_contact_map_plane_matches_the_kernel_of_alpha(heis_F, alpha):
    pairs = sample_pairs(heis_F, keyed_rng(5, 0), 200)
    report = RegularityService.estimate_plane_regularity(heis_F, seed=5, pairs=pairs)
    analytic = RegularityService.kernel_normal_lipschitz(alpha, pairs.p)
    assert analytic / 2 <= report.lipschitz_constant <= 2 * analytic


def test_worker_count_does_not_change_angles(heis_F):
    pairs = sample_pairs(heis_F, keyed_rng(9, 0), 130)
    serial = RegularityService.plane_angles(heis_F, pairs, seed=3)
    threaded = RegularityService.plane_angles(heis_F, pairs, seed=3, pool=WorkerPool(4))
    np.testing.assert_array_equal(serial, threaded)
