"""Shared fixtures: built-in maps, the standard contact form and keyed random streams."""
import numpy as np
import pytest

from services.geometry import heisenberg_contact_form
from services.maps import builtin_map
from services.worker_pool import keyed_rng


@pytest.fixture
def cat3():
    return builtin_map("cat3")


@pytest.fixture
def identity_map():
    return builtin_map("identity")


@pytest.fixture
def skew():
    return builtin_map("skew")


@pytest.fixture
def heis_L():
    return builtin_map("L")


@pytest.fixture
def heis_H():
    return builtin_map("H", {"eps": 0.01})


@pytest.fixture
def heis_F():
    return builtin_map("F", {"eps": 0.01})


@pytest.fixture
def alpha():
    return heisenberg_contact_form()


@pytest.fixture
def rng():
    return keyed_rng(7, 0)


@pytest.fixture
def points(rng):
    return rng.random((50, 3))


@pytest.fixture
def output_dir(tmp_path, monkeypatch):
    monkeypatch.delenv("PHLAB_OUTPUT_DIR", raising=False)
    return tmp_path / "results"


def finite_difference_jacobian(func, point, h=1e-6):
    """Central differences of a map R^3 -> R^k at one point, shape (k, 3)."""
    point = np.asarray(point, dtype=float)
    columns = []
    for j in range(3):
        step = np.zeros(3)
        step[j] = h
        columns.append((np.asarray(func(point + step)) - np.asarray(func(point - step))) / (2 * h))
    return np.stack(columns, axis=-1)
