"""Shared fixtures for the planefold tests."""
import os
import sys
from types import SimpleNamespace

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.fieldspec import VectorField, parse_field  # noqa: E402
from core.testfields import builtin  # noqa: E402
from utils.logger import get_logger  # noqa: E402

CIRCLE_SEED = (1.05, 0.0, 0.0)
CIRCLE_HEADING = (0.0, 1.0, 0.0)
TORUS_SEED = (2.5, 0.0, 0.0)


def example_moduli(lam, a, eps):
    """Closed-form return-map eigenvalues of the unit circle, smaller first."""
    return sorted([
        float(np.exp(-4.0 * np.pi * lam)),
        float(np.exp(2.0 * np.pi * a * eps * (lam - a) / (a * eps + 1.0))),
    ])


@pytest.fixture(autouse=True)
def fresh_log():
    get_logger().clear()
    yield


@pytest.fixture
def constant_field():
    return builtin("constant")


@pytest.fixture
def radial_field():
    return builtin("radial")


@pytest.fixture
def twisted_field():
    return builtin("twisted")


@pytest.fixture
def tori_field():
    return builtin("tori")


@pytest.fixture
def example_field():
    return builtin("example", {"lambda": 0.1, "a": 0.2, "eps": 0.5})


@pytest.fixture
def raw_twisted():
    return VectorField(parse_field("(-y, x, 1)"), normalize=False, name="raw")


def cycle_pipeline(field, seed, heading=None, foliation=1):
    """Cycle, chart, frame profile, variational system and return-map report."""
    from core.chart import build_chart, frame_profile
    from core.returnmap import poincare_derivative, variational_system
    from core.tracing import find_cycle

    cycle = find_cycle(field, seed, foliation=foliation, heading=heading)
    chart = build_chart(field, cycle)
    profile = frame_profile(chart)
    system = variational_system(field, chart, profile)
    report = poincare_derivative(system)
    return SimpleNamespace(field=field, cycle=cycle, chart=chart, profile=profile,
                           system=system, report=report)


@pytest.fixture(scope="session")
def example_pipeline():
    field = builtin("example", {"lambda": 0.1, "a": 0.2, "eps": 0.5})
    return cycle_pipeline(field, CIRCLE_SEED, CIRCLE_HEADING)


@pytest.fixture(scope="session")
def torus_pipeline():
    return cycle_pipeline(builtin("tori"), TORUS_SEED)
