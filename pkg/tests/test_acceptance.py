"""End-to-end pipeline runs with default settings against their published bounds."""
import math

import numpy as np
import pytest

from models.config import load_config
from services.experiments import ExperimentService
from services.maps import MapService, builtin_map

GOLDEN_LOG = math.log((3 + math.sqrt(5)) / 2)
CONSERVATIVE_HYPERBOLIC = ["cat3", "skew", "L", "F"]

pytestmark = pytest.mark.slow


def run(output_dir, pipeline, map_name, **experiment):
    config = load_config(overrides={
        "experiment": {"pipeline": pipeline, "seed": 11, "output_dir": str(output_dir), **experiment},
        "map": {"name": map_name},
    })
    return ExperimentService.run_experiment(config, persist=False).report


def checks(report):
    return {c.name: c for c in report.checks}


def assert_passed(report, *names):
    by_name = checks(report)
    for name in names:
        assert name in by_name, f"{name} not run"
        assert by_name[name].passed, by_name[name]


def test_contact_invariance_and_volume(output_dir):
    report = run(output_dir, "verify", "F", samples=1000)
    assert_passed(report, "contact.invariance", "maps.volume", "geometry.form_deck")


@pytest.mark.parametrize("name", ["cat3", "identity", "skew", "L", "H", "F"])
def test_conservative_builtins_preserve_volume(name):
    spec = builtin_map(name)
    assert spec.volume_preserving
    points = spec.manifold.random_points(np.random.default_rng(5), 1000)
    assert float(np.max(np.abs(np.linalg.det(MapService.jacobian(spec, points)) - 1.0))) <= 1e-12


def test_periodic_data_and_rotation_derivative(output_dir):
    report = run(output_dir, "heisenberg", "F")
    assert_passed(
        report,
        "heisenberg.periodicity",
        "heisenberg.continuation_slope",
        "heisenberg.derivative",
        "heisenberg.rotation_zero",
    )
    assert report.summary["rotation"]["closed_form"] == pytest.approx(-0.980787, abs=1e-6)


def test_cat_map_lyapunov_exponents(output_dir):
    report = run(output_dir, "exponents", "cat3")
    assert_passed(report, "exponents.unstable", "exponents.sum", "exponents.ordering")
    assert report.summary["lyapunov"]["chi"][2] == pytest.approx(GOLDEN_LOG, abs=1e-6)


@pytest.mark.parametrize("name", CONSERVATIVE_HYPERBOLIC)
def test_exponents_sum_to_zero(output_dir, name):
    assert_passed(run(output_dir, "exponents", name), "exponents.sum")


@pytest.mark.parametrize("name", ["cat3", "F"])
def test_exponent_sum_stays_within_the_volume_bound(output_dir, name):
    report = run(output_dir, "exponents", name)
    assert_passed(report, "exponents.volume_bound")
    assert report.summary["volume_bound"] < 10.0


def test_fh_obstruction(output_dir):
    report = run(output_dir, "fh", "F")
    assert_passed(report, "fh.class_invariance", "fh.obstruction", "fh.chart_change")


def test_templates_of_the_contact_family(output_dir):
    report = run(output_dir, "templates", "F")
    assert_passed(report, "templates.s_residual", "templates.u_residual", "templates.series")


def test_templates_of_the_cat_map_vanish(output_dir):
    by_name = checks(run(output_dir, "templates", "cat3"))
    for name in ("templates.s_residual", "templates.u_residual"):
        assert by_name[name].measured <= 1e-10
    assert by_name["templates.series"].measured <= 1e-10


def test_contact_identities(output_dir):
    report = run(output_dir, "contact", "F")
    assert_passed(
        report,
        "contact.pullback",
        "contact.rho_unit",
        "contact.hrho",
        "contact.reeb_solver",
        "contact.reeb_center",
        "contact.frobenius",
    )



def test_su_gap_grows_quadratically(output_dir):
    assert_passed(run(output_dir, "sugap", "F"), "sugap.slope")


def test_su_gap_of_the_product_vanishes(output_dir):
    assert_passed(run(output_dir, "sugap", "cat3"), "sugap.integrable")


@pytest.mark.parametrize("name", CONSERVATIVE_HYPERBOLIC)
def test_livshits_sums_vanish(output_dir, name):
    report = run(output_dir, "verify", name, samples=100)
    assert_passed(report, "cocycles.livshits")
    assert report.summary["livshits"]["orbits"] > 0
