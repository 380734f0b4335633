from __future__ import annotations

import os

import numpy as np
import pytest

from dm.global_dm import build_global_dm
from kernels.operators import parse_operator
from kernels.profiles import inverse_multiquadric, surface_spline
from sphere.points import generate_fibonacci


def pytest_collection_modifyitems(config, items):
    if os.getenv("KDM_FAST"):
        mark = pytest.mark.skip(reason="KDM_FAST set: slow experiments skipped")
        for item in items:
            if "slow" in item.keywords:
                item.add_marker(mark)


@pytest.fixture(scope="session")
def fib101():
    return generate_fibonacci(101)


@pytest.fixture(scope="session")
def fib401():
    return generate_fibonacci(401)


@pytest.fixture(scope="session")
def ss3():
    return surface_spline(3)


@pytest.fixture(scope="session")
def imq2():
    return inverse_multiquadric(2.0)


@pytest.fixture(scope="session")
def minus_lap():
    return parse_operator("p=0,-1")


@pytest.fixture(scope="session")
def lap():
    return parse_operator("p=0,1")


@pytest.fixture(scope="session")
def dm_ss3_101(ss3, minus_lap, fib101):
    return build_global_dm(ss3, minus_lap, fib101, 3)


@pytest.fixture(scope="session")
def dm_ss3_401(ss3, minus_lap, fib401):
    return build_global_dm(ss3, minus_lap, fib401, 3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
