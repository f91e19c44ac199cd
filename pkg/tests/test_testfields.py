import numpy as np
import pytest

from core.testfields import BUILTINS, builtin


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_builtins_are_unit_fields(name):
    field = builtin(name)
    assert field.name == f"builtin:{name}"
    assert np.linalg.norm(field.value([0.9, 0.3, 0.2])) == pytest.approx(1.0)


def test_unknown_builtin():
    with pytest.raises(KeyError):
        builtin("helix")


def test_parameter_aliases_and_unused_names():
    by_alias = builtin("example", {"lambda": 0.3, "epsilon": 0.7, "major": 5.0})
    by_name = builtin("example", {"lam": 0.3, "eps": 0.7})
    point = [0.8, 0.4, 0.1]
    np.testing.assert_allclose(by_alias.value(point), by_name.value(point))
    assert not np.allclose(by_alias.value(point), builtin("example").value(point))


def test_perturbation_vanishes_on_the_circle():
    example, perturbed = builtin("example"), builtin("perturbed", {"strength": 0.2})
    for t in np.linspace(0.0, 2.0 * np.pi, 7):
        on = [np.cos(t), np.sin(t), 0.0]
        np.testing.assert_allclose(perturbed.value(on), example.value(on), atol=1e-12)
    off = [1.2, 0.1, 0.05]
    assert not np.allclose(perturbed.value(off), example.value(off))


def test_torsion_circle_is_a_principal_line_with_torsion():
    from core.pointwise import geodesic_torsion, integrability_scalar, principal_data

    field = builtin("torsion")
    for t in np.linspace(0.0, 2.0 * np.pi, 9):
        point = [np.cos(t), np.sin(t), 0.0]
        tangent = np.array([-np.sin(t), np.cos(t), 0.0])
        jet = field.jet(point)
        data = principal_data(jet)
        assert abs(data.e2 @ tangent) == pytest.approx(1.0, abs=1e-12)
        assert data.k1 == pytest.approx(-3.0, abs=1e-12)
        assert data.k2 == pytest.approx(-np.cos(t), abs=1e-12)
        assert abs(geodesic_torsion(jet, tangent)) == pytest.approx(1.0, abs=1e-12)
        assert abs(integrability_scalar(jet)) == pytest.approx(2.0, abs=1e-12)
