"""Abelian conversion of the second-class pair on a phase space extended by one pair.

The extra pair ``psi = (q, p)`` is appended to the relative coordinates, so
the extended coordinates are ``(q1, q2, q3, q, p1, p2, p3, p)``.  Converted
constraints are ``Phi~ = Phi + X psi`` with ``X omega X^T = -C``; Dirac
observables are ``y~ = y - psi.B`` with ``B = omega^-1 X^-1 {Phi, y}``.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from . import linalg as la
from .algebra import LinearMap, PhaseSpace, QuadraticObservable, poisson_bracket, substitute
from .constraints import ConstrainedSystem, classify, dirac_matrix, normal_form
from .model import MassConfig

OMEGA2 = la.omega(1)


class DegenerateCError(ValueError):
    """The constraint pair does not have an invertible bracket matrix."""


class ConversionError(ValueError):
    pass


class GaugeFixError(ValueError):
    pass


def _c_of(system: ConstrainedSystem) -> np.ndarray:
    if len(system.constraints) != 2:
        raise ConversionError("conversion expects exactly one second-class pair")
    return system.delta()


@dataclass(frozen=True)
class XFamily:
    """All ``X = [[a, b], [c, d]]`` with ``X omega X^T = -C``, i.e. ``c b - d a = mu``."""

    mu: Fraction

    @property
    def c_matrix(self) -> np.ndarray:
        return la.qarray([[0, self.mu], [-self.mu, 0]])

    def canonical(self) -> np.ndarray:
        return la.qarray([[1, 0], [0, -self.mu]])

    def is_valid(self, x) -> bool:
        x = la.qarray(x)
        return x.shape == (2, 2) and la.equal(la.matmul(la.matmul(x, OMEGA2), x.T), -self.c_matrix)

    def relation(self, x) -> Fraction:
        """``c b - d a`` for the given matrix."""
        (a, b), (c, d) = la.qarray(x)
        return c * b - d * a

    def random(self, rng: random.Random, bound: int = 50) -> np.ndarray:
        """A random valid ``X``: draw ``a != 0``, ``b``, ``c`` and solve for ``d``."""

        def r():
            return Fraction(rng.randint(-bound, bound), rng.randint(1, bound))

        a = Fraction(0)
        while a == 0:
            a = r()
        b, c = r(), r()
        d = (c * b - self.mu) / a
        return la.qarray([[a, b], [c, d]])


def solve_X(c) -> XFamily:
    c = la.qarray(c)
    if c.shape != (2, 2) or c[0, 0] != 0 or c[1, 1] != 0 or c[0, 1] != -c[1, 0]:
        raise DegenerateCError("C must be antisymmetric 2x2")
    if c[0, 1] == 0:
        raise DegenerateCError("C is singular: the constraints are not second class")
    return XFamily(c[0, 1])


def random_valid_X(mu, rng: random.Random) -> np.ndarray:
    return XFamily(la.to_fraction(mu)).random(rng)


def extended_space(space: PhaseSpace, names: tuple[str, str] = ("q", "p")) -> PhaseSpace:
    if names[0] in space.labels or names[1] in space.labels:
        raise ConversionError("extension labels clash with existing coordinates")
    return PhaseSpace(space.q_labels + (names[0],), space.p_labels + (names[1],))


def _lift_matrix(space: PhaseSpace, ext: PhaseSpace) -> np.ndarray:
    """Embedding ``y -> (y, psi = 0)`` as an ``ext.dim x space.dim`` matrix."""
    e = la.zeros(ext.dim, space.dim)
    for i, lab in enumerate(space.labels):
        e[ext.index(lab), i] = Fraction(1)
    return e


def lift(f: QuadraticObservable, ext: PhaseSpace) -> QuadraticObservable:
    """Extend ``f`` to the extended space, independent of ``psi``."""
    proj = la.zeros(f.space.dim, ext.dim)
    for i, lab in enumerate(f.space.labels):
        proj[i, ext.index(lab)] = Fraction(1)
    return substitute(f, LinearMap(proj, ext, f.space))


@dataclass(frozen=True, eq=False)
class ExtendedSystem:
    base: ConstrainedSystem
    space: PhaseSpace
    x: np.ndarray
    constraints: tuple[QuadraticObservable, QuadraticObservable]
    dirac_observables: Mapping[str, QuadraticObservable]
    hamiltonian: QuadraticObservable
    b_matrix: np.ndarray
    multipliers: tuple[str, str] = ("lambda1", "lambda2")

    def restrict(self, f: QuadraticObservable) -> QuadraticObservable:
        """Set ``psi = 0``."""
        return substitute(f, LinearMap(_lift_matrix(self.base.space, self.space), self.base.space, self.space))

    def total_hamiltonian(self, lambdas: Sequence[object]) -> QuadraticObservable:
        """``H~ + lambda1 Phi~1 + lambda2 Phi~2`` for numeric multipliers."""
        h = self.hamiltonian
        for lam, c in zip(lambdas, self.constraints):
            h = h + c * lam
        return h

    def as_system(self) -> ConstrainedSystem:
        return ConstrainedSystem(self.space, self.hamiltonian, self.constraints, names=("Phi1~", "Phi2~"))

    def dressed(self, f: QuadraticObservable) -> QuadraticObservable:
        """``f(y~)`` for any observable on the original space."""
        return substitute(f, self._dressing_map())

    def _dressing_map(self) -> LinearMap:
        rows = [self.dirac_observables[lab].linear for lab in self.base.space.labels]
        return LinearMap(np.array(rows, dtype=object), self.space, self.base.space)


def convert(system: ConstrainedSystem, x=None) -> ExtendedSystem:
    """Abelian conversion of a system whose constraints form one second-class pair."""
    c = _c_of(system)
    fam = solve_X(c)
    x = fam.canonical() if x is None else la.qarray(x)
    if not fam.is_valid(x):
        raise ConversionError(f"X violates c b - d a = mu (got {la.ratstr(fam.relation(x))}, need {la.ratstr(fam.mu)})")
    base = system.space
    ext = extended_space(base)
    psi = [ext[ext.q_labels[-1]], ext[ext.p_labels[-1]]]
    phis = [lift(phi, ext) for phi in system.constraints]
    converted = tuple(phi + psi[0] * x[k, 0] + psi[1] * x[k, 1] for k, phi in enumerate(phis))
    # B^c = omega^-1 X^-1 ({Phi_alpha, y^c})_alpha, one column per original coordinate
    k = la.zeros(2, base.dim)
    for a, phi in enumerate(system.constraints):
        for j, y in enumerate(base.coordinates()):
            k[a, j] = poisson_bracket(phi, y).constant
    b = la.matmul(la.matmul(la.inverse(OMEGA2), la.inverse(x)), k)
    observables = {}
    for j, lab in enumerate(base.labels):
        observables[lab] = lift(base.coordinate(j), ext) - psi[0] * b[0, j] - psi[1] * b[1, j]
    ext_sys = ExtendedSystem(system, ext, x, converted, observables, ext.zero(), b)
    h = ext_sys.dressed(system.hamiltonian)
    return ExtendedSystem(system, ext, x, converted, observables, h, b)


def check_abelian(ext: ExtendedSystem) -> dict[str, bool]:
    """Exact checks of the first-class structure."""
    c1, c2 = ext.constraints
    obs = list(ext.dirac_observables.values())
    return {
        "constraints_commute": poisson_bracket(c1, c2).is_zero(),
        "observables_invariant": all(poisson_bracket(c, o).is_zero() for c in ext.constraints for o in obs),
        "hamiltonian_invariant": all(poisson_bracket(c, ext.hamiltonian).is_zero() for c in ext.constraints),
        "restricts_to_original": all(ext.restrict(ct) == c for ct, c in zip(ext.constraints, ext.base.constraints)),
        "observables_restrict": all(ext.restrict(o) == ext.base.space.coordinate(lab)
                                    for lab, o in ext.dirac_observables.items()),
    }


# -- partial gauge fixing ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class IntermediateSystem:
    space: PhaseSpace
    constraint: QuadraticObservable
    observables: Mapping[str, QuadraticObservable]
    hamiltonian: QuadraticObservable
    condition: str

    def as_system(self) -> ConstrainedSystem:
        return ConstrainedSystem(self.space, self.hamiltonian, (self.constraint,))

    def add_gauge(self, gauge: QuadraticObservable, normalize: bool = False) -> ConstrainedSystem:
        """Fix the remaining gauge freedom; the result has one second-class pair.

        Position constraints are listed before momentum constraints.  With
        ``normalize`` the Hamiltonian is brought to :func:`normal_form`, which
        drops terms quadratic in the constraints; they no longer contribute
        to the dynamics once every constraint is second class.
        """
        b = poisson_bracket(gauge, self.constraint)
        if b.degree != 0 or b.is_zero():
            raise GaugeFixError("gauge condition must have a nonzero constant bracket with the constraint")
        n = self.space.n_pairs
        cons = tuple(sorted([self.constraint, gauge], key=lambda c: 0 if la.is_zero(c.linear[n:]) else 1))
        h = normal_form(self.hamiltonian, cons) if normalize else self.hamiltonian
        return ConstrainedSystem(self.space, h, cons, names=("Phi1", "Phi2"))


def gauge_fix(ext: ExtendedSystem, condition: str) -> IntermediateSystem:
    """Impose ``p = 0`` or ``q = 0`` on the extra pair and eliminate it.

    The gauge condition and the converted constraint it fails to commute
    with form a second-class pair; the other converted constraint survives as
    the single first-class constraint.  The pair is solved for ``psi`` in
    terms of the original coordinates, which serve as Darboux coordinates of
    the resulting Dirac bracket.
    """
    if condition not in ("p", "q"):
        raise GaugeFixError(f"unsupported gauge condition {condition!r}; use 'p' or 'q'")
    space = ext.space
    cond = space[ext.space.p_labels[-1] if condition == "p" else ext.space.q_labels[-1]]
    mixed = ConstrainedSystem(space, ext.hamiltonian, ext.constraints + (cond,))
    cls = classify(mixed)
    if len(cls.first_class) != 1 or len(cls.second_class) != 2:
        raise GaugeFixError("gauge condition does not produce a first/second-class split of 1 + 2")
    second = cls.second_class_constraints
    first = cls.first_class_constraints[0]
    # solve the second-class pair for psi = (q, p): rows of the psi-block must be invertible
    iq, ip = space.index(space.q_labels[-1]), space.index(space.p_labels[-1])
    base = ext.base.space
    keep = [space.index(lab) for lab in base.labels]
    a_psi = la.qarray([[s.linear[iq], s.linear[ip]] for s in second])
    a_y = np.array([[s.linear[k] for k in keep] for s in second], dtype=object)
    const = la.qarray([s.constant for s in second])
    try:
        inv = la.inverse(a_psi)
    except la.SingularMatrixError:
        raise GaugeFixError("second-class pair cannot be solved for the extra pair") from None
    psi_of_y = -la.matmul(inv, a_y)
    psi_off = -la.matmul(inv, const)
    emb = la.zeros(space.dim, base.dim)
    off = la.zeros(space.dim)
    for j, k in enumerate(keep):
        emb[k, j] = Fraction(1)
    emb[iq], emb[ip] = psi_of_y[0], psi_of_y[1]
    off[iq], off[ip] = psi_off
    chart = LinearMap(emb, base, space, off)
    # the original coordinates must be Darboux for the Dirac bracket of the pair
    d = dirac_matrix(ConstrainedSystem(space, ext.hamiltonian, tuple(second)))
    if not la.equal(d[np.ix_(keep, keep)], base.omega()):
        raise GaugeFixError("original coordinates are not Darboux on the gauge-fixed surface")
    constraint = _primitive(substitute(first, chart), ext.base.constraints)
    observables = {lab: substitute(o, chart) for lab, o in ext.dirac_observables.items()}
    return IntermediateSystem(base, constraint, observables, substitute(ext.hamiltonian, chart), condition)


def _primitive(c: QuadraticObservable, originals: Sequence[QuadraticObservable]) -> QuadraticObservable:
    """Rescale to an original constraint when proportional to one."""
    for o in originals:
        for k, v in enumerate(o.linear):
            if v != 0:
                if c.linear[k] != 0 and c * (v / c.linear[k]) == o:
                    return o
                break
    return c


# -- the map between the two intermediate spaces ---------------------------------

@dataclass(frozen=True, eq=False)
class IntermediateMap:
    """Linear substitution ``z_p = M z_q`` from the position to the momentum intermediate space.

    ``M = blockdiag(I, A)`` with ``A = I - 1 v^T`` and ``v_j = 1/(mu mu_j)``.
    ``A`` is singular, so ``M`` is symplectic only on gauge-invariant linear
    observables, which is the relevant notion on these spaces.
    """

    masses: MassConfig
    matrix: np.ndarray
    source: PhaseSpace
    target: PhaseSpace
    a: np.ndarray
    b: np.ndarray

    @property
    def offset(self) -> np.ndarray:
        return la.zeros(self.target.dim)

    def canonicity(self) -> dict[str, bool]:
        """The derivative identities, exactly."""
        v = [self.masses.heavy_fraction(j) for j in range(3)]
        expected = la.qarray([[(1 if i == j else 0) - v[j] for j in range(3)] for i in range(3)])
        return {
            "dpbar_dp": la.equal(self.a, expected),
            "dq_dqbar_is_transpose": la.equal(self.b, self.a.T),
            "entrywise_equal": la.equal(self.b, self.a),
        }

    def image_on_surface(self, z) -> bool:
        """``sum pbar_i / mu_i = 0`` for the image of any point."""
        zp = self.matrix @ la.qarray(z)
        return sum(zp[3 + i] / m for i, m in enumerate(self.masses.reduced)) == 0

    def preserves_brackets(self, f: QuadraticObservable, g: QuadraticObservable) -> bool:
        """``{f o M, g o M} = {f, g} o M`` for linear ``f, g`` on the target."""
        lhs = poisson_bracket(substitute(f, self), substitute(g, self))
        return lhs == substitute(poisson_bracket(f, g), self)


def intermediate_symplectomorphism(masses: MassConfig) -> IntermediateMap:
    v = [masses.heavy_fraction(j) for j in range(3)]
    a = la.qarray([[(1 if i == j else 0) - v[j] for j in range(3)] for i in range(3)])
    b = la.qarray([[(1 if i == j else 0) - v[i] for j in range(3)] for i in range(3)])
    m = la.block_diag(la.identity(3), a)
    space = PhaseSpace.standard(["1", "2", "3"])
    return IntermediateMap(masses, m, space, space, a, b)


def gauge_invariant_linear(constraint: QuadraticObservable) -> list[QuadraticObservable]:
    """Basis of linear observables commuting with ``constraint``."""
    space = constraint.space
    om = space.omega()
    row = (om @ np.array(constraint.linear, dtype=object)).reshape(1, -1)
    return [space.linear_form(v) for v in la.nullspace(row)]
