import numpy as np
import pytest

from core.chart import (
    build_chart,
    chart_coeffs,
    chart_from_samples,
    frame_coeffs,
    integrability_function,
    plane_partials,
)
from core.errors import ChartDomainError, ChartError, UmbilicError


def _segment(n=33, length=1.0):
    s = np.linspace(0.0, length, n)
    points = np.stack([s, np.zeros(n), np.zeros(n)], axis=1)
    tangents = np.tile([1.0, 0.0, 0.0], (n, 1))
    return points, tangents


def test_straight_segment_in_flat_field(constant_field):
    points, tangents = _segment()
    chart = chart_from_samples(constant_field, points, tangents, 1.0)
    assert not chart.periodic
    np.testing.assert_allclose(chart.k, 0.0, atol=1e-12)
    np.testing.assert_allclose(chart.X2, np.tile([0.0, 1.0, 0.0], (len(points), 1)))
    c = chart_coeffs(constant_field, chart, 0.4, 0.01, -0.02)
    np.testing.assert_allclose(c.L, 0.0, atol=1e-12)
    np.testing.assert_allclose(c.M, [0.0, 0.0, 1.0], atol=1e-12)
    assert c.det_a == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(chart.alpha(0.5, 0.01, 0.02), [0.5, 0.01, 0.02], atol=1e-12)


def test_chart_domain_is_enforced(constant_field):
    points, tangents = _segment()
    chart = chart_from_samples(constant_field, points, tangents, 1.0)
    with pytest.raises(ChartDomainError):
        chart.alpha(0.5, 2.0 * chart.delta, 0.0)
    with pytest.raises(ChartDomainError):
        chart_coeffs(constant_field, chart, 0.5, 0.0, chart.delta)


def test_plane_partials_of_flat_field(constant_field):
    points, tangents = _segment()
    chart = chart_from_samples(constant_field, points, tangents, 1.0)
    values, partials = plane_partials(chart, 0.3, 0.01, 0.01)
    np.testing.assert_allclose(values, [0.0, 0.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(partials, 0.0, atol=1e-10)
    assert integrability_function(constant_field, chart, 0.3) == pytest.approx(0.0, abs=1e-10)


def test_frame_coeffs_refuse_umbilic_points(constant_field):
    points, tangents = _segment()
    chart = chart_from_samples(constant_field, points, tangents, 1.0)
    with pytest.raises(UmbilicError):
        frame_coeffs(constant_field, chart, 0.5)
    with pytest.raises(ValueError):
        frame_coeffs(constant_field, chart, 0.5, order=3)


def test_too_few_samples_rejected(tori_field):
    with pytest.raises(ChartError):
        build_chart(tori_field, None, samples=8)


@pytest.mark.slow
def test_torus_meridian_chart(torus_pipeline):
    chart = torus_pipeline.chart
    assert chart.multiplicity == 1
    assert chart.period == pytest.approx(np.pi, abs=1e-6)
    np.testing.assert_allclose(chart.k[:, 0], 0.0, atol=1e-7)
    np.testing.assert_allclose(chart.k[:, 1], -2.0, atol=1e-7)
    np.testing.assert_allclose(chart.k[:, 2], 0.0, atol=1e-8)
    assert chart.orthonormality_residual() < 1e-9
    assert chart.darboux_residual() < 1e-6


@pytest.mark.slow
def test_torus_chart_coefficients(torus_pipeline):
    field, chart = torus_pipeline.field, torus_pipeline.chart
    for s in np.linspace(0.0, chart.period, 5, endpoint=False):
        c = chart_coeffs(field, chart, float(s))
        assert c.L1 == pytest.approx(0.0, abs=1e-7)
        assert c.L4 == pytest.approx(0.0, abs=1e-7)
        assert c.M1 == pytest.approx(0.0, abs=1e-7)
        assert c.dL1 is not None and c.dM1 is not None
    d = 0.25 * chart.delta
    for s in np.linspace(0.1, chart.period, 4, endpoint=False):
        for v, w in ((0.0, 0.0), (d, 0.0), (0.0, -d), (d, d)):
            assert integrability_function(field, chart, float(s), v, w) == pytest.approx(0.0, abs=1e-6)


@pytest.mark.slow
def test_integrability_function_on_cycle_is_minus_twice_torsion(example_pipeline):
    field, chart = example_pipeline.field, example_pipeline.chart
    for s in np.linspace(0.0, chart.period, 8, endpoint=False):
        k3 = float(chart.curvatures(s)[2])
        assert integrability_function(field, chart, float(s)) == pytest.approx(-2.0 * k3, abs=1e-6)


@pytest.mark.slow
def test_unit_circle_darboux_coefficients(example_pipeline):
    chart = example_pipeline.chart
    assert chart.length == pytest.approx(2 * np.pi, abs=1e-6)
    np.testing.assert_allclose(chart.k[:, 0], 0.0, atol=1e-7)
    np.testing.assert_allclose(chart.k[:, 1], -1.0, atol=1e-7)
    np.testing.assert_allclose(chart.k[:, 2], 0.0, atol=1e-7)
    profile = example_pipeline.profile
    np.testing.assert_allclose(profile["F1"], 0.2 * 0.5, atol=1e-6)
    assert profile.integral("k2") == pytest.approx(-2 * np.pi, abs=1e-5)


@pytest.mark.slow
def test_frame_coeffs_agree_with_profile(example_pipeline):
    field, chart, profile = example_pipeline.field, example_pipeline.chart, example_pipeline.profile
    s = float(chart.s[100])
    fc = frame_coeffs(field, chart, s)
    for name in ("A1", "A2", "B1", "B2", "F1", "F2"):
        assert getattr(fc, name) == pytest.approx(profile[name][100], abs=1e-8)
    second = frame_coeffs(field, chart, s, order=2)
    assert {"b01", "f01", "f11", "f10"} <= set(second.second)
    assert second.b01 == second.second["b01"]
    assert set(second.to_dict()) >= {"k1", "k2", "k3", "A1", "F2", "b01"}


@pytest.mark.slow
def test_chart_export(example_pipeline):
    chart = example_pipeline.chart
    data = chart.to_dict(stride=256)
    assert data["multiplicity"] == 1
    assert len(data["samples"]) == len(range(0, len(chart.s), 256))
    assert set(data["samples"][0]) == {"s", "gamma", "X1", "X2", "N", "k1", "k2", "k3"}


@pytest.mark.slow
@pytest.mark.parametrize("name", ["example_pipeline", "torus_pipeline"])
def test_frame_returns_to_itself(name, request):
    chart = request.getfixturevalue(name).chart
    assert chart.multiplicity == 1
    np.testing.assert_allclose(chart.X2, np.cross(chart.N, chart.X1), atol=1e-10)
    np.testing.assert_allclose(chart.X2[-1], chart.X2[0], atol=1e-6)


@pytest.mark.slow
def test_unit_circle_chart_satisfies_the_darboux_system(example_pipeline):
    assert example_pipeline.chart.darboux_residual() < 1e-8
