import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from core.errors import FieldDomainError, FieldSingularityError, ReducedFormError
from core.fieldspec import FieldExpr, VectorField, call, var
from core.pointwise import (
    angle_quotient,
    geodesic_torsion,
    implicit_coeffs,
    integrability_scalar,
    is_partially_umbilic,
    mixed_product,
    normal_curvature,
    plane_basis,
    principal_data,
    principal_derivative,
    projected_operator,
    reduced_form,
    rotation_residual,
)
from core.testfields import builtin


def test_constant_field_is_flat(constant_field):
    data = principal_data(constant_field.jet([0.4, 0.1, -2.0]))
    assert data.k1 == 0.0
    assert data.k2 == 0.0
    assert data.umbilic


def test_sphere_leaves_are_umbilic(radial_field):
    jet = radial_field.jet([2.0, 0.0, 0.0])
    data = principal_data(jet)
    assert data.k1 == pytest.approx(-0.5, abs=1e-14)
    assert data.k2 == pytest.approx(-0.5, abs=1e-14)
    assert data.umbilic
    assert is_partially_umbilic(jet, 1e-6)
    assert normal_curvature(jet, [0.0, 3.0, 4.0]) == pytest.approx(-0.5)


def test_example_on_unit_circle(example_field):
    data = principal_data(example_field.jet([1.0, 0.0, 0.0]))
    assert data.k1 == pytest.approx(-1.0, abs=1e-12)
    assert data.k2 == pytest.approx(0.2 * 0.5, abs=1e-12)
    assert abs(data.e1[1]) == pytest.approx(1.0, abs=1e-12)
    assert abs(data.e2[2]) == pytest.approx(1.0, abs=1e-12)
    assert not data.umbilic
    np.testing.assert_allclose(np.cross(data.e1, data.e2), data.normal, atol=1e-12)


def test_twisted_integrability_at_origin(twisted_field, raw_twisted):
    assert integrability_scalar(twisted_field.jet([0.0, 0.0, 0.0])) == pytest.approx(2.0)
    assert integrability_scalar(raw_twisted.jet([0.0, 0.0, 0.0])) == pytest.approx(2.0)
    # raw field: <curl, eta> / |eta|^2 = 2 / (1 + r^2)
    assert integrability_scalar(raw_twisted.jet([1.0, 1.0, 0.0])) == pytest.approx(2.0 / 3.0)


def test_tori_are_integrable(tori_field):
    for p in ([2.5, 0.0, 0.0], [1.0, 1.0, 0.3], [-0.5, 2.2, -0.4]):
        assert integrability_scalar(tori_field.jet(p)) == pytest.approx(0.0, abs=1e-12)


def test_plane_basis_is_orthonormal():
    for normal in ([0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.6, 0.0, 0.8]):
        n = np.array(normal)
        b = plane_basis(n)
        np.testing.assert_allclose(b @ b.T, np.eye(2), atol=1e-15)
        np.testing.assert_allclose(b @ n, np.zeros(2), atol=1e-15)
        np.testing.assert_allclose(np.cross(b[0], b[1]), n, atol=1e-15)


def test_projected_operator_lands_in_plane():
    field = builtin("wavy")
    op = projected_operator(field.jet([0.2, 0.3, -0.1]))
    v = np.array([0.3, -1.0, 2.0])
    assert op.apply(v) @ op.normal == pytest.approx(0.0, abs=1e-14)


def test_zero_direction_rejected(example_field):
    with pytest.raises(ValueError):
        normal_curvature(example_field.jet([1.0, 0.0, 0.0]), [0.0, 0.0, 0.0])


def test_implicit_forms_agree_with_mixed_product():
    field = builtin("wavy")
    jet = field.jet([0.3, -0.2, 0.1])
    coeffs = implicit_coeffs(jet)
    basis = plane_basis(jet.value)
    for angle in np.linspace(0.0, np.pi, 9):
        dr = np.cos(angle) * basis[0] + np.sin(angle) * basis[1]
        expected = mixed_product(jet, dr)
        assert coeffs.form(dr) == pytest.approx(expected, abs=1e-12)
        assert coeffs.form(dr, "mixed") == pytest.approx(expected, abs=1e-12)


def test_implicit_form_vanishes_on_principal_directions():
    field = builtin("wavy")
    jet = field.jet([0.3, -0.2, 0.1])
    data = principal_data(jet)
    coeffs = implicit_coeffs(jet, reduced=True)
    for e in (data.e1, data.e2):
        assert coeffs.form(e) == pytest.approx(0.0, abs=1e-12)
        r = coeffs.reduced
        assert r.L * e[2] ** 2 + r.M * e[1] * e[2] + r.N * e[1] ** 2 == pytest.approx(0.0, abs=1e-12)


def test_reduced_form_needs_eta1(constant_field):
    coeffs = implicit_coeffs(constant_field.jet([0.0, 0.0, 0.0]))
    with pytest.raises(ReducedFormError):
        reduced_form(coeffs)


def test_angle_quotient_converges_to_normal_curvature():
    field = builtin("wavy")
    p = np.array([0.1, 0.4, -0.3])
    jet = field.jet(p)
    dr = plane_basis(jet.value)[0] + 0.5 * plane_basis(jet.value)[1]
    k = normal_curvature(jet, dr)
    errors = [abs(angle_quotient(field, p, dr, t) - k) for t in (1e-2, 1e-3, 1e-4)]
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] < 1e-3


def test_principal_derivative_matches_finite_differences():
    field = builtin("wavy")
    p = np.array([0.3, -0.2, 0.1])
    t = np.array([0.2, 0.7, -0.4])
    data = principal_data(field.jet(p))
    dx, dy = principal_derivative(field.jet(p, order=2), data.e1, t)

    def aligned(q):
        e = principal_data(field.jet(q))
        s = 1.0 if e.e1 @ data.e1 > 0 else -1.0
        return s * e.e1, s * e.e2

    h = 1e-5
    plus, minus = aligned(p + h * t), aligned(p - h * t)
    np.testing.assert_allclose(dx, (plus[0] - minus[0]) / (2 * h), atol=1e-6)
    np.testing.assert_allclose(dy, (plus[1] - minus[1]) / (2 * h), atol=1e-6)


def test_principal_derivative_needs_second_order(example_field):
    jet = example_field.jet([1.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        principal_derivative(jet, np.array([0.0, 1.0, 0.0]), np.array([0.0, 1.0, 0.0]))


_FIELDS = {name: builtin(name) for name in ("example", "twisted", "wavy", "tori")}
_RAW = {name: VectorField(field.expr, normalize=False) for name, field in _FIELDS.items()}
_WEIGHT = 1.0 + 0.5 * call("sin", var("x")) ** 2 + var("z") ** 2
_SCALED = {name: VectorField(FieldExpr(tuple(c * _WEIGHT for c in field.expr.components)), normalize=False)
           for name, field in _FIELDS.items()}
_coord = st.floats(min_value=-1.5, max_value=1.5, allow_nan=False)


def _jet_or_skip(field, p):
    try:
        return field.jet(p)
    except (FieldSingularityError, FieldDomainError):
        assume(False)


@settings(max_examples=1000, deadline=None)
@given(st.sampled_from(sorted(_FIELDS)), _coord, _coord, _coord)
def test_principal_frame_properties(name, x, y, z):
    p = np.array([x, y, z])
    jet = _jet_or_skip(_FIELDS[name], p)
    data = principal_data(jet)
    assume(data.gap > 1e-3)

    frame = np.array([data.e1, data.e2, data.normal])
    np.testing.assert_allclose(frame @ frame.T, np.eye(3), atol=1e-10)
    assert np.linalg.det(frame) == pytest.approx(1.0, abs=1e-10)

    raw = principal_data(_jet_or_skip(_RAW[name], p))
    scale = 1.0 + abs(data.k1) + abs(data.k2)
    assert raw.k1 == pytest.approx(data.k1, abs=1e-8 * scale)
    assert raw.k2 == pytest.approx(data.k2, abs=1e-8 * scale)

    angles = np.linspace(0.0, np.pi, 3600, endpoint=False)
    basis = plane_basis(data.normal)
    dirs = np.outer(np.cos(angles), basis[0]) + np.outer(np.sin(angles), basis[1])
    samples = -np.einsum("ij,jk,ik->i", dirs, jet.jacobian, dirs) / jet.norm
    assert samples[0] == pytest.approx(normal_curvature(jet, dirs[0]), abs=1e-12 * scale)
    assert min(samples) == pytest.approx(data.k1, abs=1e-5 * scale)
    assert max(samples) == pytest.approx(data.k2, abs=1e-5 * scale)

    for e in (data.e1, data.e2):
        assert rotation_residual(jet, e) == pytest.approx(0.0, abs=1e-9 * scale)
    assert geodesic_torsion(jet, data.e1) == pytest.approx(geodesic_torsion(jet, data.e2), abs=1e-9 * scale)


@settings(max_examples=300, deadline=None)
@given(st.sampled_from(sorted(_FIELDS)), _coord, _coord, _coord)
def test_principal_directions_ignore_positive_rescaling(name, x, y, z):
    p = np.array([x, y, z])
    data = principal_data(_jet_or_skip(_FIELDS[name], p))
    assume(data.gap > 1e-3)
    scaled = principal_data(_jet_or_skip(_SCALED[name], p))

    for a, b in ((data.e1, scaled.e1), (data.e2, scaled.e2), (data.normal, scaled.normal)):
        assert np.linalg.norm(np.cross(a, b)) < 1e-8
    scale = 1.0 + abs(data.k1) + abs(data.k2)
    assert scaled.k1 == pytest.approx(data.k1, abs=1e-8 * scale)
    assert scaled.k2 == pytest.approx(data.k2, abs=1e-8 * scale)
