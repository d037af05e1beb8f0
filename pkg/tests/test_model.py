import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from framekit.constraints import Outcome
from framekit.model import (IdentityViolationError, MassConfig, MassDomainError, auxiliary_hamiltonian,
                            build_n_particle_model, build_relative_model, derive_relative_model, parse_rational,
                            relative_lagrangian_identity)
from framekit.constraints import run_consistency

from conftest import mass_triples

velocities = st.tuples(*[st.fractions(-20, 20, max_denominator=9)] * 3)


def test_parse_rational():
    assert parse_rational("3/7") == Fraction(3, 7)
    assert parse_rational(4) == 4
    with pytest.raises(MassDomainError):
        parse_rational(0.5)
    with pytest.raises(MassDomainError):
        parse_rational("2/0")
    with pytest.raises(MassDomainError):
        parse_rational("abc")


def test_mass_domain():
    with pytest.raises(MassDomainError):
        MassConfig.of(1, 0, 2)
    with pytest.raises(MassDomainError):
        MassConfig.of(1)
    with pytest.raises(MassDomainError):
        MassConfig.of(1, 2, 3, 4).reduced


def test_reduced_masses_unit(unit_masses):
    assert unit_masses.total == 3
    assert set(unit_masses.reduced) == {unit_masses.reduced[0]}


@settings(max_examples=50, deadline=None)
@given(mass_triples, velocities)
def test_relative_lagrangian_identity(masses, v):
    assert relative_lagrangian_identity(masses, v)


def test_identity_violation_is_raised(monkeypatch):
    import framekit.model as model
    monkeypatch.setattr(model, "relative_lagrangian", lambda m, v: Fraction(1))
    with pytest.raises(IdentityViolationError):
        relative_lagrangian_identity(MassConfig.of(1, 1, 1), (1, 2, 4))
    assert not relative_lagrangian_identity(MassConfig.of(1, 1, 1), (1, 2, 4), strict=False)


@settings(max_examples=10, deadline=None)
@given(mass_triples)
def test_derived_model_matches_built(masses):
    system, trace = derive_relative_model(masses)
    assert system.same_structure(build_relative_model(masses))
    assert trace.outcomes() == [Outcome.CYCLE] * 3 + [Outcome.STOP1, Outcome.STOP1, Outcome.DISCARD_PAIR]


def test_keeping_auxiliary_pair(generic_masses):
    h, p4 = auxiliary_hamiltonian(generic_masses)
    system, trace = run_consistency(h, [p4], discard_fixed_pairs=False)
    assert len(system.constraints) == 4
    assert system.multipliers[0].status == "zero"
    assert Outcome.DISCARD_PAIR not in trace.outcomes()


def test_random_masses_are_reproducible():
    a = MassConfig.random(random.Random(5))
    b = MassConfig.random(random.Random(5))
    assert a == b and a.n == 3


def test_n_particle_model_is_flagged():
    model = build_n_particle_model(MassConfig.of(1, 2, 3, 4))
    assert model.experimental
    assert len(model.system.space.q_labels) == 6
    with pytest.raises(MassDomainError):
        build_relative_model(MassConfig.of(1, 2, 3, 4))
