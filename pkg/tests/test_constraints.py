from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings

from framekit import linalg as la
from framekit.algebra import PhaseSpace
from framekit.constraints import (ClassificationError, ConstrainedSystem, InconsistentDynamicsError,
                                  MissingMultiplierError, Outcome, SecondClassGeneratorError, classify,
                                  differs_by_constraint_squares, dirac_bracket, dirac_matrix, equations_of_motion,
                                  gauge_transform, normal_form, run_consistency, total_hamiltonian)
from framekit.model import MassConfig, build_relative_model, relative_space

from conftest import mass_triples, observables

SPACE = relative_space()


def test_contradiction_raises_with_trace():
    s = PhaseSpace.standard(["1"])
    # {p1, q1 + p1^2/2} = -1: the primary constraint cannot be preserved
    with pytest.raises(InconsistentDynamicsError) as exc:
        run_consistency(s["q1"] + s["p1"] ** 2 / 2, [s["p1"]])
    assert exc.value.trace.outcomes()[-1] is Outcome.STOP2_CONTRADICTION


def test_consistent_stop_leaves_multiplier_free():
    s = PhaseSpace.standard(["1", "2"])
    system, trace = run_consistency(s["p2"] ** 2 / 2, [s["p1"]], discard_fixed_pairs=False)
    assert trace.outcomes() == [Outcome.STOP2_CONSISTENT]
    assert [m.status for m in system.multipliers] == ["free"]
    with pytest.raises(MissingMultiplierError) as exc:
        total_hamiltonian(system)
    assert exc.value.names == ("y",)
    field = equations_of_motion(system, {"y": 3})
    # q1' = y
    assert field.rate(s["q1"], [0, 0, 0, 0]) == 3


def test_nonlinear_primary_rejected():
    s = PhaseSpace.standard(["1"])
    with pytest.raises(ValueError):
        run_consistency(s["p1"] ** 2, [s["p1"] ** 2])


def test_fixed_multiplier_is_solved():
    # the chain p2 -> q1 -> p1 -> q2 ends when {q2, p2} = 1 pins y
    s = PhaseSpace.standard(["1", "2"])
    system, trace = run_consistency(s["p1"] ** 2 / 2 + s["q2"] * s["q1"], [s["p2"]], discard_fixed_pairs=False)
    assert trace.outcomes() == [Outcome.CYCLE] * 3 + [Outcome.STOP1] * 2
    assert system.multipliers[0].status == "zero"
    assert len(system.constraints) == 4


def test_build_drops_dependent_constraints():
    phi = SPACE["q1"] + SPACE["q2"]
    system = ConstrainedSystem.build(SPACE["p1"] ** 2, [phi, phi * 2, SPACE["p3"]])
    assert system.constraints == (phi, SPACE["p3"])


def test_quadratic_constraint_rejected():
    with pytest.raises(ValueError):
        ConstrainedSystem(SPACE, SPACE.zero(), (SPACE["q1"] ** 2,))


def test_relative_model_is_second_class(generic_masses, generic_system):
    cls = generic_system.classification
    assert not cls.first_class and len(cls.second_class) == 2
    mu = generic_masses.mu
    assert la.equal(cls.c_matrix, la.qarray([[0, mu], [-mu, 0]]))
    assert cls.c_regular


def test_dirac_bracket_unit_masses(unit_system):
    d = dirac_matrix(unit_system)
    for i in range(3):
        for j in range(3):
            assert d[i, 3 + j] == (Fraction(2, 3) if i == j else Fraction(-1, 3))
            assert d[i, j] == 0 and d[3 + i, 3 + j] == 0


def test_dirac_matrix_matches_general_formula(generic_system):
    cls = generic_system.classification
    d = dirac_matrix(generic_system)
    for i in range(6):
        for j in range(6):
            got = dirac_bracket(SPACE.coordinate(i), SPACE.coordinate(j), cls)
            assert got.is_linear() and la.is_zero(got.linear) and got.constant == d[i, j]


@settings(max_examples=15, deadline=None)
@given(mass_triples)
def test_constraints_are_casimirs(masses):
    system = build_relative_model(masses)
    d = dirac_matrix(system)
    for phi in system.constraints:
        assert la.is_zero(la.matmul(d, np.array(phi.linear, dtype=object)))


@settings(max_examples=15, deadline=None)
@given(observables(SPACE, 1), observables(SPACE, 1), observables(SPACE, 1))
def test_dirac_bracket_unambiguous(f, g, k):
    # adding constraint multiples in the linear span changes nothing
    system = build_relative_model(MassConfig.of(2, Fraction(3, 7), 5))
    cls = system.classification
    phi1, phi2 = system.constraints
    shifted = f + phi1 * k.constant + phi2 * 3
    assert dirac_bracket(shifted, g, cls) == dirac_bracket(f, g, cls)


@settings(max_examples=15, deadline=None)
@given(observables(SPACE), observables(SPACE), observables(SPACE))
def test_dirac_bracket_jacobi(f, g, h):
    cls = build_relative_model(MassConfig.of(1, 2, 3)).classification

    def db(a, b):
        return dirac_bracket(a, b, cls)
    assert (db(f, db(g, h)) + db(g, db(h, f)) + db(h, db(f, g))).is_zero()


def test_singular_c_is_reported():
    # constraints q1 and q2 commute, so a forced "second class" reading has a singular C
    system = ConstrainedSystem(SPACE, SPACE.zero(), (SPACE["q1"], SPACE["q2"]))
    cls = classify(system)
    assert len(cls.first_class) == 2
    bad = type(cls)(cls.delta, (), tuple(la.identity(2)), cls.constraints, la.zeros(2, 2), la.zeros(2, 2))
    with pytest.raises(ClassificationError):
        dirac_bracket(SPACE["p1"], SPACE["p2"], bad)


def test_gauge_transform_first_class_only():
    system = ConstrainedSystem(SPACE, SPACE["p2"] ** 2 / 2, (SPACE["p1"],))
    f = SPACE["q1"] + SPACE["q2"]
    assert gauge_transform(f, SPACE["p1"], Fraction(1, 2), system) == f + Fraction(1, 2)
    second = build_relative_model(MassConfig.of(1, 1, 1))
    with pytest.raises(SecondClassGeneratorError):
        gauge_transform(f, second.constraints[0], 1, second)


def test_normal_form_and_square_test(generic_system):
    phi1, phi2 = generic_system.constraints
    h = generic_system.hamiltonian
    other = h + phi1 * phi2 * 5 - phi1 * phi1
    assert differs_by_constraint_squares(h, other, generic_system.constraints)
    assert normal_form(h, generic_system.constraints) == normal_form(other, generic_system.constraints)
    assert not differs_by_constraint_squares(h, h + SPACE["q1"] * SPACE["q1"], generic_system.constraints)


def test_surface_basis_dimension(generic_system):
    basis = generic_system.surface_basis()
    assert len(basis) == 4
    assert all(generic_system.on_surface(v) for v in basis)
