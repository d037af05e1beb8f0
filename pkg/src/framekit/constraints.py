"""Dirac's constraint algorithm for quadratic Hamiltonians with linear constraints.

The total Hamiltonian is ``H_T = H + sum_m y_m phi_m`` over the primary
constraints.  :func:`run_consistency` closes the constraint set, fixes the
multipliers it can and records every decision in a :class:`ConsistencyTrace`.
"""

from __future__ import annotations

import enum
import functools
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from . import linalg as la
from .algebra import (DimensionError, PhaseSpace, QuadraticObservable, poisson_bracket, substitute,
                      SymplecticMap)

log = logging.getLogger(__name__)


class InconsistentDynamicsError(RuntimeError):
    """Consistency produced ``1 = 0``: the equations of motion contradict themselves."""

    def __init__(self, message: str, trace: "ConsistencyTrace"):
        super().__init__(message)
        self.trace = trace


class ClassificationError(ValueError):
    pass


class SecondClassGeneratorError(ValueError):
    """Second-class constraints do not generate gauge transformations."""


class MissingMultiplierError(ValueError):
    def __init__(self, names: Sequence[str]):
        super().__init__(f"free multipliers need values: {', '.join(names)}")
        self.names = tuple(names)


class Outcome(str, enum.Enum):
    CYCLE = "cycle"
    STOP1 = "stop1"
    STOP2_CONSISTENT = "stop2-consistent"
    STOP2_CONTRADICTION = "stop2-contradiction"
    DISCARD_PAIR = "discard-fixed-pair"


@dataclass(frozen=True)
class ConsistencyStep:
    examined: str
    outcome: Outcome
    detail: str

    def to_dict(self) -> dict:
        return {"examined": self.examined, "outcome": self.outcome.value, "detail": self.detail}


@dataclass(frozen=True)
class ConsistencyTrace:
    steps: tuple[ConsistencyStep, ...] = ()

    def __len__(self):
        return len(self.steps)

    def outcomes(self) -> list[Outcome]:
        return [s.outcome for s in self.steps]

    def to_dict(self) -> list[dict]:
        return [s.to_dict() for s in self.steps]


@dataclass(frozen=True)
class Multiplier:
    """A Lagrange multiplier ``y`` attached to a primary constraint.

    ``status`` is ``"free"``, ``"fixed"`` (``value`` holds a linear
    observable) or ``"zero"``.
    """

    name: str
    constraint: QuadraticObservable
    status: str = "free"
    value: QuadraticObservable | None = None


def _affine_vector(f: QuadraticObservable) -> np.ndarray:
    return np.concatenate([np.array(f.linear, dtype=object), np.array([f.constant], dtype=object)])


def _linear_vector(f: QuadraticObservable) -> np.ndarray:
    return np.array(f.linear, dtype=object)


@dataclass(frozen=True, eq=False)
class ConstrainedSystem:
    space: PhaseSpace
    hamiltonian: QuadraticObservable
    constraints: tuple[QuadraticObservable, ...]
    multipliers: tuple[Multiplier, ...] = ()
    names: tuple[str, ...] = ()

    def __post_init__(self):
        for c in self.constraints:
            if c.space != self.space:
                raise DimensionError("constraint lives on another space")
            if not c.is_linear():
                raise ValueError(f"constraint {c} is not linear")
        if self.hamiltonian.space != self.space:
            raise DimensionError("hamiltonian lives on another space")
        if not self.names:
            object.__setattr__(self, "names", tuple(f"phi{i + 1}" for i in range(len(self.constraints))))

    @classmethod
    def build(cls, hamiltonian: QuadraticObservable, constraints: Sequence[QuadraticObservable],
              names: Sequence[str] = ()) -> "ConstrainedSystem":
        """Drop linearly dependent constraints (with a log entry) and build a system."""
        keep = la.independent_subset(_affine_vector(c) for c in constraints)
        for i, c in enumerate(constraints):
            if i not in keep:
                log.info("dropping dependent constraint %s", c)
        names = tuple(names) if names else tuple(f"phi{i + 1}" for i in range(len(constraints)))
        return cls(hamiltonian.space, hamiltonian, tuple(constraints[i] for i in keep),
                   names=tuple(names[i] for i in keep))

    def delta(self) -> np.ndarray:
        """Matrix of constraint brackets ``Delta_jk = {phi_j, phi_k}``."""
        n = len(self.constraints)
        out = la.zeros(n, n)
        for i, a in enumerate(self.constraints):
            for j, b in enumerate(self.constraints):
                out[i, j] = poisson_bracket(a, b).constant
        return out

    @functools.cached_property
    def classification(self) -> "Classification":
        return classify(self)

    def same_structure(self, other: "ConstrainedSystem") -> bool:
        """Exact equality of space, Hamiltonian and ordered constraint list."""
        return (self.space == other.space and self.hamiltonian == other.hamiltonian
                and self.constraints == other.constraints)

    def normalized(self) -> "ConstrainedSystem":
        """Same system with the Hamiltonian in :func:`normal_form`."""
        return ConstrainedSystem(self.space, normal_form(self.hamiltonian, self.constraints), self.constraints,
                                 self.multipliers, self.names)

    def constraint_matrix(self) -> np.ndarray:
        """Rows are the linear coefficient vectors of the constraints."""
        if not self.constraints:
            return la.zeros(0, self.space.dim)
        return np.array([_linear_vector(c) for c in self.constraints], dtype=object)

    def on_surface(self, z) -> bool:
        return all(c.evaluate(z) == 0 for c in self.constraints)

    def surface_basis(self) -> list[np.ndarray]:
        """Basis of the tangent space of the constraint surface."""
        return la.nullspace(self.constraint_matrix())

    def equivalent_to(self, other: "ConstrainedSystem") -> bool:
        """Same space, same constraint span, Hamiltonians equal up to constraint products."""
        if self.space != other.space or len(self.constraints) != len(other.constraints):
            return False
        a = [_affine_vector(c) for c in self.constraints]
        b = [_affine_vector(c) for c in other.constraints]
        if not all(la.in_span(a, v) for v in b) or not all(la.in_span(b, v) for v in a):
            return False
        return differs_by_constraint_squares(self.hamiltonian, other.hamiltonian, self.constraints)


def differs_by_constraint_squares(h1: QuadraticObservable, h2: QuadraticObservable,
                                  constraints: Sequence[QuadraticObservable]) -> bool:
    """True iff ``h1 - h2`` lies in the span of products ``phi_a phi_b`` (strongly zero terms)."""
    diff = h1 - h2
    if diff.is_zero():
        return True
    if not all(c.homogeneous_linear() for c in constraints):
        raise ValueError("square test needs homogeneous constraints")
    gens = []
    for i, a in enumerate(constraints):
        for b in constraints[i:]:
            gens.append((a * b).quadratic.reshape(-1))
    if diff.constant != 0 or not la.is_zero(diff.linear):
        return False
    return la.in_span(gens, diff.quadratic.reshape(-1)) if gens else False


def normal_form(h: QuadraticObservable, constraints: Sequence[QuadraticObservable]) -> QuadraticObservable:
    """Canonical representative of ``h`` modulo products ``phi_a phi_b`` of homogeneous constraints.

    Such products have vanishing brackets with everything on the surface, so
    two Hamiltonians with equal normal forms generate the same dynamics.
    """
    cons = [c for c in constraints if c.homogeneous_linear()]
    if not cons:
        return h
    gens = [(a * b).quadratic.reshape(-1) for i, a in enumerate(cons) for b in cons[i:]]
    r, piv = la.rref(np.array(gens, dtype=object))
    v = h.quadratic.reshape(-1).copy()
    for row, p in zip(r, piv):
        if v[p] != 0:
            v = v - v[p] * row
    n = h.space.dim
    return QuadraticObservable(h.space, h.constant, h.linear, v.reshape(n, n))


@dataclass(frozen=True)
class Classification:
    delta: np.ndarray
    first_class: tuple[np.ndarray, ...]
    second_class: tuple[np.ndarray, ...]
    constraints: tuple[QuadraticObservable, ...]
    c_matrix: np.ndarray
    c_inverse: np.ndarray

    def combination(self, coeffs: np.ndarray) -> QuadraticObservable:
        out = self.constraints[0] * 0
        for c, phi in zip(coeffs, self.constraints):
            if c != 0:
                out = out + phi * c
        return out

    @functools.cached_property
    def first_class_constraints(self) -> list[QuadraticObservable]:
        return [self.combination(v) for v in self.first_class]

    @functools.cached_property
    def second_class_constraints(self) -> list[QuadraticObservable]:
        return [self.combination(v) for v in self.second_class]

    @functools.cached_property
    def c_regular(self) -> bool:
        return la.rank(self.c_matrix) == len(self.second_class)


def classify(system: ConstrainedSystem) -> Classification:
    """Split constraints into first class (null space of Delta) and second class.

    The first-class combinations are the canonical RREF null-space basis; the
    second-class set is the greedy completion by original constraints, which
    makes ``C`` invertible.
    """
    n = len(system.constraints)
    if n == 0:
        empty = la.zeros(0, 0)
        return Classification(empty, (), (), (), empty, empty)
    delta = system.delta()
    null = la.nullspace(delta)
    basis = list(null)
    second = []
    for j in range(n):
        e = la.zeros(n)
        e[j] = Fraction(1)
        if not la.in_span(basis, e):
            basis.append(e)
            second.append(e)
    if second:
        s = np.array(second, dtype=object)
        c = la.matmul(la.matmul(s, delta), s.T)
        c_inv = la.inverse(c)
    else:
        c = c_inv = la.zeros(0, 0)
    return Classification(delta, tuple(null), tuple(second), system.constraints, c, c_inv)


def dirac_bracket(f: QuadraticObservable, g: QuadraticObservable, cls: Classification) -> QuadraticObservable:
    """``{f, g}_D = {f, g} - {f, Phi_a} C^{ab} {Phi_b, g}``."""
    out = poisson_bracket(f, g)
    phis = cls.second_class_constraints
    if not phis:
        return out
    if not cls.c_regular:
        raise ClassificationError("second-class bracket matrix is singular")
    left = [poisson_bracket(f, phi) for phi in phis]
    right = [poisson_bracket(phi, g) for phi in phis]
    for a, la_ in enumerate(left):
        for b, rb in enumerate(right):
            c = cls.c_inverse[a, b]
            if c != 0:
                out = out - (la_ * rb) * c
    return out


def dirac_matrix(system: ConstrainedSystem, cls: Classification | None = None) -> np.ndarray:
    """``D_ab = {z_a, z_b}_D`` for all coordinate pairs."""
    cls = system.classification if cls is None else cls
    phis = cls.second_class_constraints
    if all(p.is_linear() for p in phis):
        # D = Omega - Omega G^T C^-1 G Omega with G the constraint gradients
        om = system.space.omega()
        if not phis:
            return om
        if not cls.c_regular:
            raise ClassificationError("second-class bracket matrix is singular")
        g = np.array([list(p.linear) for p in phis], dtype=object)
        go = la.matmul(g, om)
        return om - la.matmul(la.matmul(-go.T, cls.c_inverse), go)
    coords = system.space.coordinates()
    n = system.space.dim
    out = la.zeros(n, n)
    for i in range(n):
        for j in range(i + 1, n):
            v = dirac_bracket(coords[i], coords[j], cls).constant
            out[i, j] = v
            out[j, i] = -v
    return out


def gauge_transform(f: QuadraticObservable, gamma: QuadraticObservable, eps,
                    system: ConstrainedSystem) -> QuadraticObservable:
    """Infinitesimal gauge transformation ``f + eps {f, gamma}`` by a first-class ``gamma``."""
    for phi in system.constraints:
        b = poisson_bracket(gamma, phi)
        if not b.is_zero():
            raise SecondClassGeneratorError(f"{gamma} does not commute with constraint {phi}")
    return f + poisson_bracket(f, gamma) * eps


@dataclass(frozen=True)
class LinearVectorField:
    """``dz/dt = A z + b``."""

    space: PhaseSpace
    matrix: np.ndarray
    offset: np.ndarray

    def rate(self, f: QuadraticObservable, z) -> Fraction:
        """Time derivative of ``f`` at point ``z`` along the field."""
        z = np.asarray(z, dtype=object)
        grad = np.array(f.linear, dtype=object) + f.quadratic @ z
        return grad @ (self.matrix @ z + self.offset)


def total_hamiltonian(system: ConstrainedSystem, values: Mapping[str, object] | None = None) -> QuadraticObservable:
    values = dict(values or {})
    free = [m.name for m in system.multipliers if m.status == "free" and m.name not in values]
    if free:
        raise MissingMultiplierError(free)
    h = system.hamiltonian
    for m in system.multipliers:
        if m.status == "zero":
            continue
        y = m.value if m.status == "fixed" else values[m.name]
        if not isinstance(y, QuadraticObservable):
            y = system.space.constant(y)
        h = h + y * m.constraint
    return h


def equations_of_motion(system: ConstrainedSystem, multiplier_values: Mapping[str, object] | None = None
                        ) -> LinearVectorField:
    """Linear field ``z' = Omega grad(H_T)``, i.e. ``q' = dH_T/dp``, ``p' = -dH_T/dq``."""
    h = total_hamiltonian(system, multiplier_values)
    om = system.space.omega()
    return LinearVectorField(system.space, om @ h.quadratic, om @ np.array(h.linear, dtype=object))


# --- the consistency algorithm ------------------------------------------------

def _reduce(f: QuadraticObservable, constraints: Sequence[QuadraticObservable]) -> tuple[str, QuadraticObservable]:
    """Classify an affine function against the current constraint span.

    Returns ``("zero", f)`` if it vanishes weakly, ``("constant", f)`` if it is
    weakly a nonzero constant, ``("new", f)`` if it is a new constraint.
    """
    lin = [_linear_vector(c) for c in constraints]
    aff = [_affine_vector(c) for c in constraints]
    if la.in_span(aff, _affine_vector(f)):
        return "zero", f
    if la.in_span(lin, _linear_vector(f)):
        return "constant", f
    return "new", f


def run_consistency(hamiltonian: QuadraticObservable, primary: Sequence[QuadraticObservable],
                    multiplier_names: Sequence[str] | None = None, discard_fixed_pairs: bool = True,
                    max_rounds: int = 64) -> tuple[ConstrainedSystem, ConsistencyTrace]:
    """Close the constraint set under time evolution generated by ``H_T``.

    Each constraint is examined once: when its bracket with every primary
    vanishes the condition is a new constraint (Cycle) or ``0 = 0`` / ``1 = 0``
    (Stop 2); otherwise it is a relation for the multipliers (Stop 1).  The
    collected relations are then solved exactly; combinations that eliminate
    every multiplier feed back as further constraints.
    """
    space = hamiltonian.space
    if any(not p.is_linear() for p in primary):
        raise ValueError("primary constraints must be linear")
    names = list(multiplier_names) if multiplier_names else (
        ["y"] if len(primary) == 1 else [f"y{i + 1}" for i in range(len(primary))])
    steps: list[ConsistencyStep] = []
    constraints: list[QuadraticObservable] = []
    for p in primary:
        if _reduce(p, constraints)[0] == "new":
            constraints.append(p)
    queue = list(range(len(constraints)))
    relations: dict[int, tuple[np.ndarray, QuadraticObservable]] = {}

    def examine(j: int):
        phi = constraints[j]
        drift = poisson_bracket(phi, hamiltonian)
        coeffs = la.qarray([poisson_bracket(phi, p).constant for p in primary])
        if not la.is_zero(coeffs):
            relations[j] = (coeffs, drift)
            rel = " + ".join(f"{la.ratstr(c)}*{n}" for c, n in zip(coeffs, names) if c != 0)
            steps.append(ConsistencyStep(str(phi), Outcome.STOP1, f"{rel} + ({drift}) = 0"))
            return
        admit(str(phi), drift)

    def admit(label: str, cand: QuadraticObservable):
        kind, _ = _reduce(cand, constraints)
        if kind == "zero":
            steps.append(ConsistencyStep(label, Outcome.STOP2_CONSISTENT, "0 = 0"))
        elif kind == "constant":
            steps.append(ConsistencyStep(label, Outcome.STOP2_CONTRADICTION, f"{cand} = 0"))
            raise InconsistentDynamicsError(f"consistency of {label} requires {cand} = 0",
                                            ConsistencyTrace(tuple(steps)))
        else:
            constraints.append(cand)
            queue.append(len(constraints) - 1)
            steps.append(ConsistencyStep(label, Outcome.CYCLE, f"new constraint {cand}"))

    rounds = 0
    while True:
        while queue:
            examine(queue.pop(0))
        rounds += 1
        if rounds > max_rounds:
            raise RuntimeError("consistency algorithm did not terminate")
        # combinations of multiplier relations that eliminate every y
        idx = sorted(relations)
        if not idx:
            break
        a = np.array([relations[j][0] for j in idx], dtype=object)
        grew = False
        for w in la.nullspace(a.T):
            combo = space.zero()
            for wj, j in zip(w, idx):
                if wj != 0:
                    combo = combo + relations[j][1] * wj
            before = len(constraints)
            if _reduce(combo, constraints)[0] != "zero":
                admit("multiplier relations", combo)
            grew = grew or len(constraints) > before
        if not grew:
            break
    multipliers = _solve_multipliers(space, primary, names, relations, constraints)
    for m in multipliers:
        if m.status != "free":
            steps.append(ConsistencyStep("multiplier relations", Outcome.STOP1,
                                         f"{m.name} = {m.value if m.value is not None else 0}"))
    system = ConstrainedSystem(space, hamiltonian, tuple(constraints), tuple(multipliers))
    if discard_fixed_pairs:
        system, extra = discard_fixed_pairs_step(system)
        steps.extend(extra)
    return system, ConsistencyTrace(tuple(steps))


def _solve_multipliers(space, primary, names, relations, constraints) -> list[Multiplier]:
    if not relations:
        return [Multiplier(n, p) for n, p in zip(names, primary)]
    idx = sorted(relations)
    a = np.array([relations[j][0] for j in idx], dtype=object)
    # a y = -drift, solved coefficient-wise for the affine right-hand sides
    rhs = np.array([-_affine_vector(relations[j][1]) for j in idx], dtype=object)
    sol, null = la.solve_general(a, rhs)
    determined = [all(v[i] == 0 for v in null) for i in range(len(primary))]
    out = []
    for i, (n, p) in enumerate(zip(names, primary)):
        if not determined[i]:
            out.append(Multiplier(n, p))
            continue
        row = sol[i]
        val = QuadraticObservable(space, row[-1], row[:-1], la.zeros(space.dim, space.dim))
        # reduce the value modulo constraints: drop it entirely when it vanishes weakly
        if _reduce(val, constraints)[0] == "zero":
            out.append(Multiplier(n, p, "zero", None))
        else:
            out.append(Multiplier(n, p, "fixed", val))
    return out


def discard_fixed_pairs_step(system: ConstrainedSystem) -> tuple[ConstrainedSystem, list[ConsistencyStep]]:
    """Remove conjugate pairs whose members are both constrained to zero."""
    steps = []
    space = system.space
    lin = [_affine_vector(c) for c in system.constraints]
    pairs = []
    for k in range(space.n_pairs):
        qk = _affine_vector(space.coordinate(k))
        pk = _affine_vector(space.coordinate(k + space.n_pairs))
        if la.in_span(lin, qk) and la.in_span(lin, pk):
            pairs.append(k)
    if not pairs:
        return system, steps
    keep = [k for k in range(space.n_pairs) if k not in pairs]
    if not keep:
        raise ValueError("every pair is fixed; nothing physical remains")
    reduced = PhaseSpace(tuple(space.q_labels[k] for k in keep), tuple(space.p_labels[k] for k in keep))
    emb = la.zeros(space.dim, reduced.dim)
    for j, k in enumerate(keep):
        emb[k, j] = Fraction(1)
        emb[k + space.n_pairs, j + reduced.n_pairs] = Fraction(1)
    mapping = SymplecticMap(emb, reduced, space, check=False)
    new_cons = []
    for c in system.constraints:
        r = substitute(c, mapping)
        if not r.is_zero() and _reduce(r, new_cons)[0] == "new":
            new_cons.append(r)
    pair_set = {space.q_labels[k] for k in pairs} | {space.p_labels[k] for k in pairs}
    mults = tuple(m for m in system.multipliers
                  if not {space.labels[i] for i, v in enumerate(m.constraint.linear) if v != 0} <= pair_set)
    h = substitute(system.hamiltonian, mapping)
    for k in pairs:
        steps.append(ConsistencyStep(f"({space.q_labels[k]}, {space.p_labels[k]})", Outcome.DISCARD_PAIR,
                                     "both members vanish on the constraint surface"))
    return ConstrainedSystem(reduced, h, tuple(new_cons), mults), steps
