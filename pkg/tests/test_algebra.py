import math
from fractions import Fraction

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from framekit import linalg as la
from framekit.algebra import (DegreeError, DimensionError, LogParameter, PhaseSpace, QuadraticObservable,
                              SymplecticMap, bracket_value, conjugation_map, flow_matrix, is_symplectic, linear_flow,
                              poisson_bracket, substitute)

from conftest import observables, small_rationals

SPACE = PhaseSpace.standard(["1", "2"])


def test_canonical_brackets(space3):
    for i in "123":
        for j in "123":
            assert bracket_value(space3[f"q{i}"], space3[f"p{j}"]) == (1 if i == j else 0)
            assert bracket_value(space3[f"q{i}"], space3[f"q{j}"]) == 0
            assert bracket_value(space3[f"p{i}"], space3[f"p{j}"]) == 0


def test_bracket_of_quadratics_is_quadratic(space3):
    q1, p1, q2 = space3["q1"], space3["p1"], space3["q2"]
    # {q1 p1, q1} = -q1 ; {q1 p1, q2^2} = 0
    assert poisson_bracket(q1 * p1, q1) == -q1
    assert poisson_bracket(q1 * p1, q2 * q2).is_zero()
    assert poisson_bracket(p1 * p1 / 2, q1 * q1 / 2) == -(q1 * p1)


def test_product_degree_guard(space3):
    q = space3["q1"]
    with pytest.raises(DegreeError):
        _ = (q * q) * q
    with pytest.raises(DegreeError):
        _ = q ** 3


def test_mismatched_spaces_rejected(space3):
    with pytest.raises(DimensionError):
        _ = space3["q1"] + SPACE["q1"]


def test_terms_and_coefficients(space3):
    f = space3["q1"] * space3["p2"] * 3 + space3["p3"] ** 2 / 2 - 4
    assert f.coefficient("q1", "p2") == 3
    assert f.coefficient("p3", "p3") == Fraction(1, 2)
    assert f.constant == -4
    assert str(space3["q1"] - space3["p1"] * Fraction(2, 3)) == "q1 - 2/3*p1"


def test_observable_is_immutable(space3):
    f = space3["q1"]
    with pytest.raises(AttributeError):
        f.constant = 3
    with pytest.raises(ValueError):
        f.linear[0] = 5


def test_asymmetric_quadratic_rejected():
    q = la.zeros(4, 4)
    q[0, 1] = Fraction(1)
    with pytest.raises(ValueError):
        QuadraticObservable(SPACE, 0, la.zeros(4), q)


@settings(max_examples=40, deadline=None)
@given(observables(SPACE), observables(SPACE))
def test_antisymmetry(f, g):
    assert poisson_bracket(f, g) == -poisson_bracket(g, f)


@settings(max_examples=40, deadline=None)
@given(observables(SPACE), observables(SPACE), observables(SPACE))
def test_jacobi(f, g, h):
    pb = poisson_bracket
    assert (pb(f, pb(g, h)) + pb(g, pb(h, f)) + pb(h, pb(f, g))).is_zero()


@settings(max_examples=40, deadline=None)
@given(observables(SPACE), observables(SPACE, 1), observables(SPACE, 1))
def test_leibniz(f, a, b):
    pb = poisson_bracket
    assert pb(f, a * b) == pb(f, a) * b + a * pb(f, b)


@settings(max_examples=30, deadline=None)
@given(observables(SPACE), observables(SPACE), small_rationals)
def test_bracket_bilinear(f, g, c):
    assert poisson_bracket(f * c + g, g) == poisson_bracket(f, g) * c


def test_symplectic_check_reports_offending_entry():
    m = la.identity(4)
    m[0, 0] = Fraction(2)
    chk = is_symplectic(m)
    assert not chk
    assert chk.witness is not None and chk.value != 0
    with pytest.raises(ValueError):
        SymplecticMap(m, SPACE)


def test_float_symplectic_tolerance():
    r = SPACE["q1"] * SPACE["p2"] - SPACE["q2"] * SPACE["p1"]
    m = np.asarray(linear_flow(r * 1.0, 0.3).matrix, dtype=float)
    assert is_symplectic(m, 1e-12)
    assert not is_symplectic(m + 1e-6, 1e-12)


@settings(max_examples=25, deadline=None)
@given(observables(SPACE), st.fractions(-2, 2, max_denominator=5), st.fractions(-2, 2, max_denominator=5))
def test_nilpotent_flow_composition_exact(gen, t1, t2):
    # linear generators have nilpotent flows, so everything stays rational
    g = QuadraticObservable(SPACE, 0, gen.linear, la.zeros(4, 4)) + SPACE["q1"] * SPACE["q2"]
    a = linear_flow(g, t1) @ linear_flow(g, t2)
    assert a.equals(linear_flow(g, t1 + t2))
    assert a.is_exact


def test_float_flow_composition_and_expm():
    g = SPACE["q1"] ** 2 / 2 + SPACE["p1"] ** 2 + SPACE["q1"] * SPACE["p2"]
    a = linear_flow(g, 0.4) @ linear_flow(g, 0.7)
    assert a.equals(linear_flow(g, 1.1), tol=1e-10)
    k = la.to_float(SPACE.omega()) @ la.to_float(g.quadratic)
    assert np.allclose(np.asarray(linear_flow(g, 0.9).matrix, dtype=float), scipy.linalg.expm(0.9 * k), atol=1e-12)


def test_flow_solves_hamilton_equations():
    # harmonic oscillator: q(t) = cos t, p(t) = -sin t
    g = SPACE["q1"] ** 2 / 2 + SPACE["p1"] ** 2 / 2
    z = linear_flow(g, 0.5).apply(np.array([1.0, 0.0, 0.0, 0.0]))
    assert z[0] == pytest.approx(math.cos(0.5))
    assert z[2] == pytest.approx(-math.sin(0.5))


def test_exact_exponential_of_log_parameter():
    # squeeze generator q p: flow scales q by exp(t) and p by exp(-t)
    g = SPACE["q1"] * SPACE["p1"]
    m, off = flow_matrix(g, LogParameter(Fraction(1), Fraction(3)))
    assert m[0, 0] == 3 and m[2, 2] == Fraction(1, 3)
    assert la.is_zero(off)


def test_conjugation_is_flow_backwards():
    g = SPACE["q1"] * SPACE["p2"]
    assert conjugation_map(g, 2).equals(linear_flow(g, -2))


def test_affine_flow_offset():
    # H = p1 moves q1 at unit speed
    m = linear_flow(SPACE["p1"], Fraction(5, 2))
    assert m.apply(la.zeros(4))[0] == Fraction(5, 2)


@settings(max_examples=30, deadline=None)
@given(observables(SPACE), observables(SPACE), st.fractions(-1, 1, max_denominator=4))
def test_substitute_is_bracket_homomorphism(f, g, t):
    m = linear_flow(SPACE["q1"] * SPACE["q2"] + SPACE["p1"] * SPACE["q1"] * 0 + SPACE["p2"], t)
    lhs = poisson_bracket(substitute(f, m), substitute(g, m))
    assert lhs == substitute(poisson_bracket(f, g), m)


def test_substitute_rejects_wrong_space(space3):
    with pytest.raises(DimensionError):
        substitute(space3["q1"], SymplecticMap.identity(SPACE))


def test_inverse_and_identity():
    m = linear_flow(SPACE["q1"] * SPACE["q2"] + SPACE["p1"], 3)
    assert (m @ m.inverse()).equals(SymplecticMap.identity(SPACE))


def test_matmul_matches_numpy():
    rng = np.random.default_rng(0)
    a = rng.integers(-3, 4, size=(4, 5))
    b = rng.integers(-3, 4, size=(5, 3))
    got = la.matmul(la.qarray(a), la.qarray(b))
    assert la.equal(got, la.qarray(a @ b))
    v = la.qarray(b[:, 0])
    assert la.equal(la.matmul(la.qarray(a), v), la.qarray(a @ b[:, 0]))
