import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import strategies as st

from framekit.algebra import PhaseSpace, QuadraticObservable
from framekit.model import MassConfig, build_relative_model

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


# -- strategies ---------------------------------------------------------------

small_rationals = st.fractions(min_value=-5, max_value=5, max_denominator=7)
positive_rationals = st.builds(Fraction, st.integers(1, 10 ** 6), st.integers(1, 10 ** 6))
mass_triples = st.tuples(positive_rationals, positive_rationals, positive_rationals).map(lambda t: MassConfig(t))


@st.composite
def observables(draw, space: PhaseSpace, degree: int = 2):
    n = space.dim
    lin = [draw(small_rationals) for _ in range(n)]
    quad = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(i, n):
            quad[i, j] = quad[j, i] = draw(small_rationals) if degree == 2 else Fraction(0)
    return QuadraticObservable(space, draw(small_rationals), lin, quad)


# -- fixtures -----------------------------------------------------------------

@pytest.fixture
def space3():
    return PhaseSpace.standard(["1", "2", "3"])


@pytest.fixture
def unit_masses():
    return MassConfig.of(1, 1, 1)


@pytest.fixture
def generic_masses():
    return MassConfig.of(2, Fraction(3, 7), 5)


@pytest.fixture
def unit_system(unit_masses):
    return build_relative_model(unit_masses)


@pytest.fixture
def generic_system(generic_masses):
    return build_relative_model(generic_masses)


@pytest.fixture
def rng():
    return random.Random(1234)
