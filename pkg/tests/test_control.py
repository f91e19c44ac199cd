import numpy as np
import pytest

from core.chart import FrameProfile
from core.control import (
    E1,
    E2,
    E3,
    PerturbationSpec,
    bracket_sequence,
    commutator,
    controllability_at_peak,
    hyperbolize,
    perturbed_system,
    span_rank,
)
from core.errors import SearchExhaustedError
from core.returnmap import CycleClass, VariationalSystem, poincare_derivative


def _system(m, period=1.0, n=129):
    s = np.linspace(0.0, period, n)
    M = np.tile(np.asarray(m, dtype=float), (n, 1, 1))
    zeros = np.zeros_like(M)
    return VariationalSystem(s=s, A=zeros, B=zeros, M=M, period=period)


def _profile(system, F1=0.0, F2=0.0, k1=0.0, k2=-1.0, k3=0.0):
    n = len(system.s)
    values = {name: np.full(n, float(v)) for name, v in
              (("F1", F1), ("F2", F2), ("k1", k1), ("k2", k2), ("k3", k3))}
    return FrameProfile(s=system.s.copy(), values=values)


def test_commutator():
    assert np.array_equal(commutator(E1, E2), E2)
    assert np.array_equal(commutator(E2, E1), -E2)
    np.testing.assert_array_equal(commutator(E1, E3), np.zeros((2, 2)))


def test_depth_zero_spans_the_upper_triangle():
    seq = bracket_sequence(_system([[0.1, 0.2], [0.3, 0.4]]), depth=0, samples=64)
    mats = seq.at(0)
    assert len(mats) == 3
    for got, expected in zip(mats, (E1, E2, E3)):
        np.testing.assert_array_equal(got, expected)
    rank = span_rank(seq, 0.0)
    assert rank.rank == 3
    assert not rank.controllable


def test_first_bracket_of_channel_one():
    k3, m11, m12, b2 = 0.25, 0.1, -0.3, 0.7
    seq = bracket_sequence(_system([[m11, m12], [-2.0 * k3, b2]]), depth=1, samples=64)
    b1 = seq.matrices[1][1][10]
    np.testing.assert_allclose(b1, [[0.0, -m12], [-2.0 * k3, 0.0]], atol=1e-12)
    assert b1[1, 0] == pytest.approx(-2.0 * k3)
    rank = span_rank(seq, 0.3)
    assert rank.rank == 4
    assert rank.controllable


def test_diagonal_system_is_not_controllable():
    seq = bracket_sequence(_system(np.diag([0.0, -0.4])), depth=3, samples=64)
    assert span_rank(seq, 0.5).rank == 3


def test_rank_grows_with_depth():
    system = _system([[0.0, 0.3], [-0.2, -0.4]])
    ranks = [span_rank(bracket_sequence(system, d, samples=64), 0.2).rank for d in range(3)]
    assert ranks == sorted(ranks)
    assert ranks[-1] == 4


def test_negative_depth_rejected():
    with pytest.raises(ValueError):
        bracket_sequence(_system(np.eye(2)), depth=-1)


def test_controllability_at_torsion_peak():
    system = _system([[0.0, 0.0], [-0.5, -0.4]])
    profile = _profile(system, k3=0.25)
    rank = controllability_at_peak(system, profile, depth=1)
    assert rank.controllable
    assert rank.to_dict()["rank"] == 4


def test_spec_from_vector_and_fourier_modes():
    spec = PerturbationSpec.from_vector(0.1, [1, 2, 3, 4, 5, 6, 7, 8, 9])
    assert spec.phi1 == [1, 4, 5]
    assert spec.phi2 == [2, 6, 7]
    assert spec.phi3 == [3, 8, 9]
    s = np.array([0.0, 0.25, 0.5])
    p1, _, _ = spec.phi(s, 1.0)
    np.testing.assert_allclose(p1, [1 + 4, 1 + 5, 1 - 4], atol=1e-12)
    data = spec.to_dict()
    assert data["epsilon"] == 0.1
    assert data["certified_eigenvalues"] is None


def test_controls_formula():
    system = _system(np.diag([0.0, -0.4]))
    profile = _profile(system, F1=0.3, F2=0.2, k1=0.5, k2=-1.0)
    spec = PerturbationSpec(epsilon=1.0, phi1=[1.0], phi2=[2.0], phi3=[3.0])
    u1, u2, u3 = spec.controls(profile, system.s, system.period)
    denom = 2.0 * (-1.0 - 0.3)
    np.testing.assert_allclose(u1, (0.3 + 4.0) / denom)
    np.testing.assert_allclose(u2, ((0.4 + 0.5) + 3.0) / denom)
    np.testing.assert_allclose(u3, 1.0)


def test_zero_epsilon_leaves_system_unchanged():
    system = _system([[0.1, 0.2], [0.0, -0.4]])
    same = perturbed_system(system, PerturbationSpec(phi1=[5.0]), _profile(system))
    np.testing.assert_array_equal(same.M, system.M)
    assert same.M is not system.M


def test_constant_phi1_scales_the_w_eigenvalue():
    system = _system(np.diag([0.0, -0.4]), period=2.0)
    profile = _profile(system)
    eps, c = 0.05, 0.8
    base = poincare_derivative(system).U
    moved = poincare_derivative(perturbed_system(system, PerturbationSpec(eps, phi1=[c]), profile)).U
    assert moved[1, 1] == pytest.approx(base[1, 1] * np.exp(eps * c * 2.0), rel=1e-9)
    assert moved[0, 0] == pytest.approx(base[0, 0], rel=1e-12)


def test_moduli_are_continuous_in_epsilon():
    system = _system([[0.0, 0.3], [0.0, -0.4]])
    profile = _profile(system, F1=0.1, F2=0.05)
    spec = PerturbationSpec(1e-6, phi1=[1.0, 0.5, -0.5], phi2=[0.3], phi3=[-1.0])
    base = poincare_derivative(system).moduli
    near = poincare_derivative(perturbed_system(system, spec, profile)).moduli
    assert near == pytest.approx(base, abs=1e-5)


def test_semi_hyperbolic_cycle_is_hyperbolized():
    system = _system(np.diag([0.0, -0.4]))
    result = hyperbolize(system, _profile(system), budget=0.05)
    assert result.baseline.classification is CycleClass.SEMI_HYPERBOLIC
    assert result.report.hyperbolic
    assert 0.0 < result.spec.epsilon <= 0.05
    assert result.spec.epsilon == pytest.approx(0.05 / 32)
    assert all(abs(m - 1.0) > 1e-4 for m in result.report.moduli)
    assert result.spec.certified_eigenvalues is not None
    assert result.evaluations > 0
    assert set(result.to_dict()) >= {"spec", "report", "baseline", "controllability"}


def test_hyperbolic_cycle_needs_no_perturbation():
    system = _system(np.diag([-0.4, -0.3]))
    result = hyperbolize(system, _profile(system))
    assert result.spec.epsilon == 0.0
    assert result.evaluations == 0
    assert result.report is result.baseline


@pytest.mark.slow
def test_tiny_budget_exhausts_the_search():
    system = _system(np.diag([0.0, -0.4]))
    with pytest.raises(SearchExhaustedError) as info:
        hyperbolize(system, _profile(system), budget=1e-12)
    assert isinstance(info.value.best, PerturbationSpec)
    assert info.value.best.epsilon <= 1e-12
    assert info.value.exit_code == 4


@pytest.mark.slow
def test_perturbed_field_matches_the_perturbation_family(example_pipeline):
    # X1 + eps phi1 w N keeps the circle and adds eps phi1 to the w-w entry of M
    from conftest import CIRCLE_HEADING, CIRCLE_SEED, cycle_pipeline
    from core.testfields import builtin

    strength = 0.02
    field = builtin("perturbed", {"lambda": 0.1, "a": 0.2, "eps": 0.5, "strength": strength, "phi": 1.0})
    moved = cycle_pipeline(field, CIRCLE_SEED, CIRCLE_HEADING)
    assert moved.chart.length == pytest.approx(2 * np.pi, abs=1e-6)

    base = example_pipeline
    predicted = poincare_derivative(perturbed_system(
        base.system, PerturbationSpec(strength, phi1=[1.0]), base.profile)).U
    assert moved.report.U[1, 1] == pytest.approx(predicted[1, 1], rel=1e-4)
    assert predicted[1, 1] == pytest.approx(base.report.U[1, 1] * np.exp(2 * np.pi * strength), rel=1e-6)


@pytest.mark.slow
def test_torsion_cycle_reaches_full_rank_at_first_bracket():
    from conftest import cycle_pipeline
    from core.testfields import builtin

    p = cycle_pipeline(builtin("torsion"), (1.0, 0.0, 0.0), heading=(0.0, 1.0, 0.0), foliation=2)
    assert p.cycle.length == pytest.approx(2 * np.pi, abs=1e-6)
    assert p.chart.multiplicity == 1
    assert np.abs(p.profile["k3"]).max() == pytest.approx(1.0, abs=1e-4)

    shallow = controllability_at_peak(p.system, p.profile, depth=0)
    assert shallow.rank == 3
    assert not shallow.controllable
    rank = controllability_at_peak(p.system, p.profile, depth=1)
    assert rank.rank == 4
    assert rank.controllable


@pytest.mark.slow
def test_semi_hyperbolic_circle_is_hyperbolized():
    from conftest import CIRCLE_HEADING, cycle_pipeline, example_moduli
    from core.testfields import builtin

    field = builtin("example", {"lambda": 0.0, "a": 0.2, "eps": 0.5})
    p = cycle_pipeline(field, (1.0, 0.0, 0.0), CIRCLE_HEADING)
    assert p.report.moduli == pytest.approx(example_moduli(0.0, 0.2, 0.5), rel=1e-5)

    result = hyperbolize(p.system, p.profile, budget=0.05)
    assert result.baseline.classification is CycleClass.SEMI_HYPERBOLIC
    assert result.report.hyperbolic
    assert 0.0 < result.spec.epsilon <= 0.05
    assert all(abs(m - 1.0) > 1e-6 for m in result.report.moduli)

    again = poincare_derivative(perturbed_system(p.system, result.spec, p.profile))
    assert again.moduli == pytest.approx(result.report.moduli, rel=1e-9)
