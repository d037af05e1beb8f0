"""Translation-invariant N-particle model in relative coordinates.

For three particles the relative coordinates are ``q1 = x2 - x3``,
``q2 = x3 - x1``, ``q3 = x1 - x2`` with reduced masses
``mu_i = m_j m_k / M`` and ``mu = sum_i 1/mu_i``.
"""

from __future__ import annotations

import itertools
from random import Random
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import linalg as la
from .algebra import PhaseSpace, QuadraticObservable
from .constraints import ConsistencyTrace, ConstrainedSystem, run_consistency


class MassDomainError(ValueError):
    pass


class IdentityViolationError(ArithmeticError):
    def __init__(self, residual):
        super().__init__(f"Lagrangian identity violated, residual {residual}")
        self.residual = residual


def parse_rational(text) -> Fraction:
    """Parse ``"p/q"``, an integer, or a Fraction; floats are refused."""
    if isinstance(text, float):
        raise MassDomainError(f"masses must be exact rationals, got float {text!r}")
    try:
        return la.to_fraction(text)
    except (ValueError, ZeroDivisionError, TypeError) as exc:
        raise MassDomainError(f"malformed rational {text!r}") from exc


@dataclass(frozen=True)
class MassConfig:
    masses: tuple[Fraction, ...]

    def __post_init__(self):
        ms = tuple(parse_rational(m) for m in self.masses)
        if len(ms) < 2:
            raise MassDomainError("need at least two particles")
        bad = [m for m in ms if m <= 0]
        if bad:
            raise MassDomainError(f"masses must be positive, got {la.ratstr(bad[0])}")
        object.__setattr__(self, "masses", ms)

    @classmethod
    def of(cls, *masses) -> "MassConfig":
        return cls(tuple(masses))

    @classmethod
    def random(cls, rng: Random, n: int = 3, bound: int = 10 ** 6) -> "MassConfig":
        """Masses with numerators and denominators drawn uniformly from ``[1, bound]``."""
        return cls(tuple(Fraction(rng.randint(1, bound), rng.randint(1, bound)) for _ in range(n)))

    @property
    def n(self) -> int:
        return len(self.masses)

    @property
    def total(self) -> Fraction:
        return sum(self.masses, Fraction(0))

    def pair_reduced(self, i: int, j: int) -> Fraction:
        """``m_i m_j / M`` with 0-based indices."""
        return self.masses[i] * self.masses[j] / self.total

    @property
    def reduced(self) -> tuple[Fraction, ...]:
        """``mu_i = m_j m_k / M`` (three particles only)."""
        if self.n != 3:
            raise MassDomainError("reduced masses mu_i are defined for three particles")
        m1, m2, m3 = self.masses
        return (m2 * m3 / self.total, m1 * m3 / self.total, m1 * m2 / self.total)

    @property
    def mu(self) -> Fraction:
        return sum((1 / r for r in self.reduced), Fraction(0))

    def heavy_fraction(self, i: int) -> Fraction:
        """``1/(mu mu_i) = m_i / M`` (0-based index)."""
        return self.masses[i] / self.total

    def as_strings(self) -> list[str]:
        return [la.ratstr(m) for m in self.masses]


# -- Lagrangian identities ----------------------------------------------------

def absolute_lagrangian(masses: MassConfig, xdot) -> Fraction:
    """``1/2 sum m_i xdot_i^2 - M/2 xdot_cm^2``."""
    xdot = [la.to_fraction(v) for v in xdot]
    m = masses.masses
    vcm = sum((mi * v for mi, v in zip(m, xdot)), Fraction(0)) / masses.total
    return sum((mi * v * v for mi, v in zip(m, xdot)), Fraction(0)) / 2 - masses.total * vcm * vcm / 2


def pairwise_lagrangian(masses: MassConfig, xdot) -> Fraction:
    """``1/(2M) sum_{i<j} m_i m_j (xdot_i - xdot_j)^2``."""
    xdot = [la.to_fraction(v) for v in xdot]
    m = masses.masses
    s = sum((m[i] * m[j] * (xdot[i] - xdot[j]) ** 2 for i, j in itertools.combinations(range(masses.n), 2)),
            Fraction(0))
    return s / (2 * masses.total)


def relative_velocities(xdot) -> tuple[Fraction, Fraction, Fraction]:
    x1, x2, x3 = (la.to_fraction(v) for v in xdot)
    return (x2 - x3, x3 - x1, x1 - x2)


def relative_lagrangian(masses: MassConfig, xdot) -> Fraction:
    """``1/2 sum mu_i qdot_i^2`` with the relative velocities of ``xdot``."""
    q = relative_velocities(xdot)
    return sum((mu * v * v for mu, v in zip(masses.reduced, q)), Fraction(0)) / 2


@dataclass(frozen=True)
class IdentityCheck:
    ok: bool
    residual: Fraction
    values: tuple[Fraction, Fraction, Fraction]

    def __bool__(self):
        return self.ok


def relative_lagrangian_identity(masses: MassConfig, xdot, strict: bool = True) -> IdentityCheck:
    """Compare the absolute, pairwise and relative forms of the kinetic Lagrangian exactly."""
    vals = (absolute_lagrangian(masses, xdot), pairwise_lagrangian(masses, xdot), relative_lagrangian(masses, xdot))
    residual = max(abs(vals[0] - vals[1]), abs(vals[0] - vals[2]))
    if residual != 0 and strict:
        raise IdentityViolationError(residual)
    return IdentityCheck(residual == 0, residual, vals)


# -- Legendre transform ---------------------------------------------------------

@dataclass(frozen=True)
class LagrangianQF:
    """``L = 1/2 qdot.J.qdot + qdot.K.q + 1/2 q.W.q`` on ``n`` coordinates."""

    J: np.ndarray
    K: np.ndarray
    W: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        n = len(self.names)
        for name, m in (("J", self.J), ("K", self.K), ("W", self.W)):
            if m.shape != (n, n):
                raise ValueError(f"{name} must be {n}x{n}")
        if not la.equal(self.J, self.J.T) or not la.equal(self.W, self.W.T):
            raise ValueError("J and W must be symmetric")

    @classmethod
    def kinetic(cls, J, names: Sequence[str] | None = None) -> "LagrangianQF":
        J = la.qarray(J)
        n = J.shape[0]
        names = tuple(names) if names else tuple(str(i + 1) for i in range(n))
        return cls(J, la.zeros(n, n), la.zeros(n, n), names)

    def space(self) -> PhaseSpace:
        return PhaseSpace.standard(self.names)


def legendre_rank(lag: LagrangianQF) -> tuple[int, list[np.ndarray]]:
    """Rank of the velocity Hessian ``J`` and a basis of its kernel."""
    return la.rank(lag.J), la.nullspace(lag.J)


def legendre_transform(lag: LagrangianQF) -> tuple[QuadraticObservable, list[QuadraticObservable]]:
    """Canonical Hamiltonian and primary constraints of a quadratic Lagrangian.

    With ``p = J qdot + K q`` the kernel of ``J`` gives primaries
    ``v.(p - K q) = 0`` and, for the symmetric generalized inverse
    ``J+ = V (V^T J V)^-1 V^T`` built on the column space of ``J``,
    ``H = 1/2 (p - Kq).J+.(p - Kq) - 1/2 q.W.q``.
    """
    n = len(lag.names)
    space = lag.space()
    cols = la.independent_subset(lag.J[:, j] for j in range(n))
    if cols:
        v = lag.J[:, cols]
        jplus = v @ la.inverse(v.T @ lag.J @ v) @ v.T
    else:
        jplus = la.zeros(n, n)
    # p - K q written as a linear map on z = (q, p)
    pk = np.concatenate([-lag.K, la.identity(n)], axis=1)
    quad = pk.T @ jplus @ pk
    quad[:n, :n] = quad[:n, :n] - lag.W
    h = QuadraticObservable(space, Fraction(0), la.zeros(2 * n), quad)
    primaries = [QuadraticObservable(space, Fraction(0), v @ pk, la.zeros(2 * n, 2 * n))
                 for v in la.nullspace(lag.J)]
    return h, primaries


# -- the three-particle model ------------------------------------------------------

def relative_space() -> PhaseSpace:
    return PhaseSpace.standard(["1", "2", "3"])


def relative_constraints(masses: MassConfig, space: PhaseSpace | None = None) -> tuple[QuadraticObservable, QuadraticObservable]:
    """``Phi1 = sum q_i`` and ``Phi2 = sum p_i / mu_i``."""
    space = relative_space() if space is None else space
    mus = masses.reduced
    phi1 = space.linear_form([1, 1, 1, 0, 0, 0])
    phi2 = space.linear_form([0, 0, 0] + [1 / m for m in mus])
    return phi1, phi2


def relative_hamiltonian(masses: MassConfig, space: PhaseSpace | None = None) -> QuadraticObservable:
    space = relative_space() if space is None else space
    q = la.zeros(6, 6)
    for i, m in enumerate(masses.reduced):
        q[3 + i, 3 + i] = 1 / m
    return space.quadratic_form(q)


def build_relative_model(masses: MassConfig) -> ConstrainedSystem:
    """Free three-particle system ``H = 1/2 sum p_i^2/mu_i`` with constraints Phi1, Phi2."""
    if masses.n != 3:
        raise MassDomainError("the verified relative model needs exactly three masses")
    space = relative_space()
    return ConstrainedSystem(space, relative_hamiltonian(masses, space), relative_constraints(masses, space),
                             names=("Phi1", "Phi2"))


def multiplier_lagrangian(masses: MassConfig) -> LagrangianQF:
    """``1/2 sum mu_i qdot_i^2 + q4 (q1 + q2 + q3)`` on coordinates q1..q4."""
    j = la.zeros(4, 4)
    for i, m in enumerate(masses.reduced):
        j[i, i] = m
    w = la.zeros(4, 4)
    for i in range(3):
        w[i, 3] = w[3, i] = Fraction(1)
    return LagrangianQF(j, la.zeros(4, 4), w, ("1", "2", "3", "4"))


def derive_relative_model(masses: MassConfig) -> tuple[ConstrainedSystem, ConsistencyTrace]:
    """Run the Legendre transform and Dirac's algorithm from the multiplier Lagrangian.

    The auxiliary pair (q4, p4) is discarded once both members are
    constrained, leaving the system returned by :func:`build_relative_model`.
    """
    h, primaries = legendre_transform(multiplier_lagrangian(masses))
    system, trace = run_consistency(h, primaries, multiplier_names=["y"])
    return ConstrainedSystem(system.space, system.hamiltonian, system.constraints, system.multipliers,
                             names=("Phi1", "Phi2")), trace


def auxiliary_hamiltonian(masses: MassConfig, q4_weight=Fraction(1)) -> tuple[QuadraticObservable, QuadraticObservable]:
    """``1/2 sum p_i^2/mu_i - w q4 sum q_i`` on q1..q4 and the primary ``p4``.

    ``w = 1`` is the Legendre transform of the multiplier Lagrangian.
    """
    space = PhaseSpace.standard(["1", "2", "3", "4"])
    q = la.zeros(8, 8)
    for i, m in enumerate(masses.reduced):
        q[4 + i, 4 + i] = 1 / m
        q[i, 3] = q[3, i] = -la.to_fraction(q4_weight)
    return space.quadratic_form(q), space["p4"]


# -- experimental N-particle generalization --------------------------------------------

@dataclass(frozen=True)
class ExperimentalModel:
    system: ConstrainedSystem
    trace: ConsistencyTrace
    pairs: tuple[tuple[int, int], ...]
    experimental: bool = True


def build_n_particle_model(masses: MassConfig) -> ExperimentalModel:
    """Unverified N-particle analogue on the complete graph of relative coordinates.

    Coordinates ``q_ij = x_i - x_j`` (``i < j``) with weights ``m_i m_j / M``;
    every triangle ``q_1j + q_jk - q_1k`` through particle 1 contributes a
    cycle constraint with its own multiplier.  For three particles this is a
    relabelled, reoriented version of the verified model.
    """
    n = masses.n
    pairs = tuple(itertools.combinations(range(n), 2))
    cycles = []
    for j, k in itertools.combinations(range(1, n), 2):
        c = [0] * len(pairs)
        c[pairs.index((0, j))] = 1
        c[pairs.index((j, k))] = 1
        c[pairs.index((0, k))] = -1
        cycles.append(c)
    nq = len(pairs) + len(cycles)
    names = tuple(f"{i + 1}{j + 1}" for i, j in pairs) + tuple(f"l{c + 1}" for c in range(len(cycles)))
    jm = la.zeros(nq, nq)
    for a, (i, j) in enumerate(pairs):
        jm[a, a] = masses.pair_reduced(i, j)
    w = la.zeros(nq, nq)
    for c, row in enumerate(cycles):
        for a, v in enumerate(row):
            w[a, len(pairs) + c] = w[len(pairs) + c, a] = Fraction(v)
    h, primaries = legendre_transform(LagrangianQF(jm, la.zeros(nq, nq), w, names))
    system, trace = run_consistency(h, primaries)
    return ExperimentalModel(system, trace, pairs)
