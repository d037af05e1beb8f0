"""Darboux coordinatizations of the three-particle constraint surface.

An :class:`Embedding` writes the six relative coordinates as ``z = E w`` in
terms of four intrinsic coordinates ``w``.  Positions and momenta are not
mixed, so ``E = blockdiag(M, N)`` with ``3x2`` blocks whose columns are the
slots ``A`` and ``B``.  It is a Darboux chart iff the induced Dirac brackets of
``w`` are canonical, which for this block form reads ``M N^T = D_qp``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from . import linalg as la
from .algebra import PhaseSpace, QuadraticObservable, SymplecticMap, is_symplectic, substitute
from .constraints import ConstrainedSystem, dirac_matrix
from .model import MassConfig, build_relative_model


class EmbeddingError(ValueError):
    """The embedding does not lie in the constraint surface or is not injective."""


class DarbouxError(ValueError):
    """The pinned Darboux system has no solution."""

    def __init__(self, message: str, condition: str | None = None):
        super().__init__(message)
        self.condition = condition


class FrameMismatchError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Embedding:
    """Linear chart ``z_ambient = E w_reduced`` of the constraint surface."""

    ambient: PhaseSpace
    reduced: PhaseSpace
    matrix: np.ndarray
    label: str = ""

    def __post_init__(self):
        m = la.qarray(self.matrix)
        if m.shape != (self.ambient.dim, self.reduced.dim):
            raise EmbeddingError(f"embedding matrix has shape {m.shape}")
        if la.rank(m) != self.reduced.dim:
            raise EmbeddingError("embedding is not injective")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    # the attributes substitute() expects
    @property
    def source(self) -> PhaseSpace:
        return self.reduced

    @property
    def target(self) -> PhaseSpace:
        return self.ambient

    @property
    def offset(self) -> np.ndarray:
        return la.zeros(self.ambient.dim)

    def left_inverse(self) -> np.ndarray:
        return la.left_inverse(self.matrix)

    def pull(self, f: QuadraticObservable) -> QuadraticObservable:
        return substitute(f, self)

    def check_on_surface(self, system: ConstrainedSystem):
        for name, c in zip(system.names, system.constraints):
            if not substitute(c, self).is_zero():
                raise EmbeddingError(f"embedding {self.label or '?'} leaves the constraint surface of {name}")

    def expressions(self) -> dict[str, QuadraticObservable]:
        """Ambient coordinates as linear forms in the intrinsic ones."""
        return {lab: self.reduced.linear_form(row) for lab, row in zip(self.ambient.labels, self.matrix)}


def induced_brackets(e: Embedding, d: np.ndarray, system: ConstrainedSystem | None = None) -> np.ndarray:
    """Dirac brackets of the intrinsic coordinates, ``B = L D L^T`` with ``L`` a left inverse of ``E``.

    Any two left inverses differ by multiples of constraint gradients, which
    the Dirac bracket annihilates, so ``B`` does not depend on the choice.
    """
    if system is not None:
        e.check_on_surface(system)
    else:
        # range(E) must lie in range(D), the annihilator of the constraint gradients
        for v in la.nullspace(np.array(d.T, dtype=object)):
            if not la.is_zero(la.matmul(v, e.matrix)):
                raise EmbeddingError(f"embedding {e.label or '?'} leaves the constraint surface")
    ell = e.left_inverse()
    return la.matmul(la.matmul(ell, d), ell.T)


def is_darboux(e: Embedding, d: np.ndarray, system: ConstrainedSystem | None = None) -> bool:
    return la.equal(induced_brackets(e, d, system), e.reduced.omega())


# -- anchors and labels ----------------------------------------------------------

def _cyc(i: int) -> int:
    """Cyclic particle index in 1..3."""
    return (i - 1) % 3 + 1


def reduced_space(anchor: int) -> PhaseSpace:
    """Intrinsic labels ``u_j, u_k, pi_j, pi_k`` for the two non-anchor particles."""
    j, k = sorted(i for i in (1, 2, 3) if i != anchor)
    return PhaseSpace((f"u{j}", f"u{k}"), (f"pi{j}", f"pi{k}"))


def anchor_slots(anchor: int) -> tuple[str, str]:
    """Slot names ``(A, B)``; for anchor 1 these are ``("3", "2")``."""
    return str(_cyc(anchor + 2)), str(_cyc(anchor + 1))


def position_pins(anchor: int) -> dict[str, Fraction]:
    a1, a2 = _cyc(anchor + 1), _cyc(anchor + 2)
    return {f"m{a1}A": Fraction(1), f"m{a2}B": Fraction(-1), f"m{a1}B": Fraction(0), f"m{a2}A": Fraction(0)}


def momentum_pins(anchor: int) -> dict[str, Fraction]:
    a1, a2 = _cyc(anchor + 1), _cyc(anchor + 2)
    return {f"n{a1}A": Fraction(1), f"n{a2}B": Fraction(-1), f"n{a1}B": Fraction(0), f"n{a2}A": Fraction(0)}


# -- the Darboux system -------------------------------------------------------------

_PIN = re.compile(r"^([mn])([123])([AB])$")
_UNKNOWNS = tuple(f"{s}{i}{x}" for s in "mn" for x in "AB" for i in (1, 2, 3))


@dataclass(frozen=True)
class DarbouxData:
    """Ingredients of the coefficient conditions extracted from a system."""

    q_constraints: tuple[np.ndarray, ...]
    p_constraints: tuple[np.ndarray, ...]
    d_qp: np.ndarray


def darboux_data(system: ConstrainedSystem) -> DarbouxData:
    n = system.space.n_pairs
    if n != 3:
        raise ValueError("the Darboux ansatz is implemented for three relative coordinates")
    d = dirac_matrix(system)
    if not (la.is_zero(d[:n, :n]) and la.is_zero(d[n:, n:])):
        raise ValueError("non-mixing ansatz needs vanishing position-position and momentum-momentum brackets")
    qc, pc = [], []
    for c in system.constraints:
        v = np.array(c.linear, dtype=object)
        if la.is_zero(v[n:]):
            qc.append(v[:n])
        elif la.is_zero(v[:n]):
            pc.append(v[n:])
        else:
            raise ValueError("constraints mixing positions and momenta are not supported")
    return DarbouxData(tuple(qc), tuple(pc), d[:n, n:].copy())


def _conditions(data: DarbouxData):
    """Symbolic conditions as (name, sympy expression) with unknowns named m1A, ..."""
    import sympy

    sym = {u: sympy.Symbol(u) for u in _UNKNOWNS}
    out = []

    def r(x):
        x = la.to_fraction(x)
        return sympy.Rational(x.numerator, x.denominator)

    for s, cons in (("m", data.q_constraints), ("n", data.p_constraints)):
        for ci, c in enumerate(cons):
            for x in "AB":
                expr = sum(r(c[i]) * sym[f"{s}{i + 1}{x}"] for i in range(3))
                out.append((f"constraint[{s},{x},{ci + 1}]", expr))
    for i in range(3):
        for j in range(3):
            expr = sym[f"m{i + 1}A"] * sym[f"n{j + 1}A"] + sym[f"m{i + 1}B"] * sym[f"n{j + 1}B"] - r(data.d_qp[i, j])
            out.append((f"darboux[{i + 1},{j + 1}]", expr))
    return sym, out


def darboux_condition_rank(system: ConstrainedSystem, point: Embedding | None = None) -> tuple[int, int]:
    """(number of conditions, rank of their Jacobian) at a solution.

    The solution set has dimension ``12 - rank``; generically 13 conditions
    of rank 8, so 4 coefficients stay free.
    """
    import sympy

    data = darboux_data(system)
    sym, conds = _conditions(data)
    frame = point if point is not None else relative_position_frame(system, 1).embedding
    values = _coefficients(frame)
    subs = {sym[k]: sympy.Rational(v.numerator, v.denominator) for k, v in values.items()}
    jac = sympy.Matrix([[sympy.diff(e, sym[u]) for u in _UNKNOWNS] for _, e in conds]).subs(subs)
    for name, e in conds:
        if e.subs(subs) != 0:
            raise DarbouxError(f"reference point violates {name}", name)
    return len(conds), int(jac.rank())


def _coefficients(e: Embedding) -> dict[str, Fraction]:
    """Read m_iX, n_iX back from an embedding built with slots in label order."""
    slots = getattr(e, "_slots", None)
    m = e.matrix
    out = {}
    a_col, b_col = slots if slots else (1, 0)
    for i in range(3):
        out[f"m{i + 1}A"] = m[i, a_col]
        out[f"m{i + 1}B"] = m[i, b_col]
        out[f"n{i + 1}A"] = m[3 + i, 2 + a_col]
        out[f"n{i + 1}B"] = m[3 + i, 2 + b_col]
    return out


@dataclass(frozen=True)
class DarbouxFamily:
    """Under-pinned solution set: coefficients as expressions in free parameters."""

    parameters: tuple[str, ...]
    solution: Mapping[str, object]
    slots: tuple[str, str]
    data: DarbouxData

    def instantiate(self, values: Mapping[str, object], label: str = "custom") -> Embedding:
        import sympy

        subs = {sympy.Symbol(k): sympy.Rational(str(la.ratstr(v))) for k, v in values.items()}
        coeffs = {}
        for u in _UNKNOWNS:
            v = sympy.nsimplify(sympy.sympify(self.solution[u]).subs(subs))
            if not v.is_rational:
                raise DarbouxError(f"parameters leave {u} undetermined")
            coeffs[u] = Fraction(int(v.p), int(v.q))
        return _build_embedding(coeffs, self.slots, label, self.data)


def _build_embedding(coeffs: Mapping[str, Fraction], slots: tuple[str, str], label: str,
                     data: DarbouxData) -> Embedding:
    a, b = slots
    names = sorted((a, b), key=int)
    reduced = PhaseSpace(tuple(f"u{x}" for x in names), tuple(f"pi{x}" for x in names))
    col = {a: names.index(a), b: names.index(b)}
    mat = la.zeros(6, 4)
    for i in range(3):
        mat[i, col[a]] = coeffs[f"m{i + 1}A"]
        mat[i, col[b]] = coeffs[f"m{i + 1}B"]
        mat[3 + i, 2 + col[a]] = coeffs[f"n{i + 1}A"]
        mat[3 + i, 2 + col[b]] = coeffs[f"n{i + 1}B"]
    ambient = PhaseSpace.standard(["1", "2", "3"])
    e = Embedding(ambient, reduced, mat, label)
    object.__setattr__(e, "_slots", (col[a], col[b]))
    if not la.equal(la.matmul(mat[:3, :2], mat[3:, 2:].T), data.d_qp):
        raise DarbouxError("solution fails the Darboux conditions", "darboux")
    return e


def _linear_stage(fixed: Mapping[str, Fraction], side: str, data: DarbouxData, pins: Mapping[str, Fraction]):
    """Solve the conditions that are linear in the ``side`` coefficients once the other side is known.

    Returns (coefficients, null basis) or raises DarbouxError naming the
    first condition that cannot be met.
    """
    unknowns = [f"{side}{i}{x}" for x in "AB" for i in (1, 2, 3)]
    rows, rhs, names = [], [], []

    def add(coeffs: dict[str, Fraction], value, name):
        rows.append([la.to_fraction(coeffs.get(u, 0)) for u in unknowns])
        rhs.append(la.to_fraction(value))
        names.append(name)

    cons = data.q_constraints if side == "m" else data.p_constraints
    for ci, c in enumerate(cons):
        for x in "AB":
            add({f"{side}{i + 1}{x}": c[i] for i in range(3)}, 0, f"constraint[{side},{x},{ci + 1}]")
    for k, v in pins.items():
        if k[0] == side:
            add({k: 1}, v, f"pin {k}")
    if fixed:
        for i in range(3):
            for j in range(3):
                if side == "n":
                    coeffs = {f"n{j + 1}A": fixed[f"m{i + 1}A"], f"n{j + 1}B": fixed[f"m{i + 1}B"]}
                else:
                    coeffs = {f"m{i + 1}A": fixed[f"n{j + 1}A"], f"m{i + 1}B": fixed[f"n{j + 1}B"]}
                add(coeffs, data.d_qp[i, j], f"darboux[{i + 1},{j + 1}]")
    a = la.qarray(rows)
    b = la.qarray(rhs)
    try:
        x, null = la.solve_general(a, b)
    except la.InconsistentSystemError:
        for k in range(1, len(rows) + 1):
            try:
                la.solve_general(a[:k], b[:k])
            except la.InconsistentSystemError:
                raise DarbouxError(f"no Darboux embedding: condition {names[k - 1]} is violated",
                                   names[k - 1]) from None
        raise
    return dict(zip(unknowns, x)), null, unknowns


def solve_darboux(system: ConstrainedSystem, pins: Mapping[str, object], slots: Sequence[str] = ("3", "2"),
                  label: str = "custom") -> "Embedding | DarbouxFamily":
    """Solve the constraint and Darboux conditions after pinning some coefficients.

    Pins are keyed ``m<i><A|B>`` / ``n<i><A|B>``.  When the pins and the
    linear constraint conditions fix one side completely, the Darboux
    conditions become linear in the other side and are solved exactly.
    Otherwise the polynomial system is handed to sympy; a unique solution
    gives an :class:`Embedding`, a positive-dimensional one a
    :class:`DarbouxFamily`.
    """
    for k in pins:
        if not _PIN.match(k):
            raise ValueError(f"unknown coefficient {k!r}")
    pins = {k: la.to_fraction(v) for k, v in pins.items()}
    slots = (str(slots[0]), str(slots[1]))
    data = darboux_data(system)
    for side, other in (("m", "n"), ("n", "m")):
        sol, null, _ = _linear_stage({}, side, data, pins)
        if null:
            continue
        sol2, null2, unknowns = _linear_stage(sol, other, data, pins)
        coeffs = {**sol, **sol2}
        if not null2:
            return _build_embedding(coeffs, slots, label, data)
        return _family_from_linear(coeffs, null2, unknowns, slots, data)
    return _sympy_stage(data, pins, slots, label)


def _family_from_linear(coeffs, null, unknowns, slots, data) -> DarbouxFamily:
    import sympy

    params = tuple(f"t{i + 1}" for i in range(len(null)))
    sol = {k: sympy.Rational(v.numerator, v.denominator) for k, v in coeffs.items()}
    for t, vec in zip(params, null):
        for u, c in zip(unknowns, vec):
            if c != 0:
                sol[u] = sol[u] + sympy.Rational(c.numerator, c.denominator) * sympy.Symbol(t)
    return DarbouxFamily(params, sol, slots, data)


def _sympy_stage(data: DarbouxData, pins, slots, label):
    import sympy

    sym, conds = _conditions(data)
    pinsub = {sym[k]: sympy.Rational(v.numerator, v.denominator) for k, v in pins.items()}
    eqs = []
    for name, e in conds:
        e = sympy.expand(e.subs(pinsub))
        if e.is_number and e != 0:
            raise DarbouxError(f"no Darboux embedding: condition {name} is violated", name)
        if e != 0:
            eqs.append(e)
    free = [sym[u] for u in _UNKNOWNS if u not in pins]
    sols = sympy.solve(eqs, free, dict=True)
    if not sols:
        raise DarbouxError("no Darboux embedding satisfies the pins")
    first = sols[0]
    values = {u: sympy.Rational(pins[u].numerator, pins[u].denominator) if u in pins else first.get(sym[u], sym[u])
              for u in _UNKNOWNS}
    params = sorted({s.name for v in values.values() for s in sympy.sympify(v).free_symbols})
    if not params and len(sols) == 1:
        coeffs = {u: Fraction(int(sympy.fraction(v)[0]), int(sympy.fraction(v)[1])) for u, v in values.items()}
        return _build_embedding(coeffs, slots, label, data)
    return DarbouxFamily(tuple(params), values, slots, data)


# -- frames -------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Frame:
    embedding: Embedding
    reduced_hamiltonian: QuadraticObservable
    kind: str
    anchor: int
    system: ConstrainedSystem

    @property
    def space(self) -> PhaseSpace:
        return self.embedding.reduced

    @property
    def name(self) -> str:
        return f"{'q' if self.kind == 'relative-position' else 'p' if self.kind == 'relative-momentum' else 'x'}{self.anchor}"


def _check_anchor(anchor: int):
    if anchor not in (1, 2, 3):
        raise ValueError(f"anchor must be 1, 2 or 3, got {anchor}")


def _frame(system: ConstrainedSystem, pins, anchor: int, kind: str) -> Frame:
    _check_anchor(anchor)
    e = solve_darboux(system, pins, anchor_slots(anchor), label=f"{kind}:{anchor}")
    if isinstance(e, DarbouxFamily):
        raise DarbouxError("frame pins left free coefficients")
    e.check_on_surface(system)
    return Frame(e, substitute(system.hamiltonian, e), kind, anchor, system)


def relative_position_frame(system: ConstrainedSystem, anchor: int = 1) -> Frame:
    """Chart in which the two positions relative to ``anchor`` are intrinsic coordinates."""
    return _frame(system, position_pins(anchor), anchor, "relative-position")


def relative_momentum_frame(system: ConstrainedSystem, anchor: int = 1) -> Frame:
    """Chart in which two relative momenta are intrinsic coordinates."""
    return _frame(system, momentum_pins(anchor), anchor, "relative-momentum")


def frame(system: ConstrainedSystem, name: str) -> Frame:
    """``frame(system, "q1")`` or ``frame(system, "p2")``."""
    kind, anchor = name[0], int(name[1:])
    if kind == "q":
        return relative_position_frame(system, anchor)
    if kind == "p":
        return relative_momentum_frame(system, anchor)
    raise ValueError(f"unknown frame {name!r}")


def naive_embedding(masses: MassConfig, anchor: int = 1) -> Embedding:
    """Position rows of the position frame together with momentum rows of the momentum frame.

    The anchor momentum is fixed by ``sum p_i/mu_i = 0``.
    """
    _check_anchor(anchor)
    mus = masses.reduced
    a, a1, a2 = anchor, _cyc(anchor + 1), _cyc(anchor + 2)
    space = reduced_space(anchor)
    u = {lab[1:]: i for i, lab in enumerate(space.q_labels)}
    mat = la.zeros(6, 4)
    # q_k = u_{k+1} - u_{k+2} with u_anchor = 0
    for k in (1, 2, 3):
        for sgn, j in ((1, _cyc(k + 1)), (-1, _cyc(k + 2))):
            if j != a:
                mat[k - 1, u[str(j)]] += sgn
    # p_{a+1} = pi_{a+2}, p_{a+2} = -pi_{a+1}
    mat[3 + a1 - 1, 2 + u[str(a2)]] = Fraction(1)
    mat[3 + a2 - 1, 2 + u[str(a1)]] = Fraction(-1)
    mat[3 + a - 1] = -mus[a - 1] * (mat[3 + a1 - 1] / mus[a1 - 1] + mat[3 + a2 - 1] / mus[a2 - 1])
    return Embedding(PhaseSpace.standard(["1", "2", "3"]), space, mat, f"naive:{anchor}")


# -- frame changes ------------------------------------------------------------------

def frame_transformation(a: Frame, b: Frame) -> SymplecticMap:
    """Map ``w_a = T w_b`` expressing frame-``a`` coordinates through frame-``b`` ones.

    Both charts cover the same surface, so ``E_a T = E_b`` has the unique
    solution ``T = L_a E_b``.
    """
    if a.system is not b.system and not a.system.same_structure(b.system):
        raise FrameMismatchError("frames belong to different systems")
    t = la.matmul(a.embedding.left_inverse(), b.embedding.matrix)
    if not la.equal(la.matmul(a.embedding.matrix, t), b.embedding.matrix):
        raise FrameMismatchError("charts do not cover the same surface")
    return SymplecticMap(t, b.space, a.space)


# -- heavy-mass limit --------------------------------------------------------------------

@dataclass(frozen=True)
class LimitRow:
    k: int
    m_heavy: Fraction
    bracket_deviation: Fraction
    hamiltonian_deviation: Fraction
    reduced_masses: tuple[Fraction, Fraction, Fraction]


@dataclass(frozen=True)
class LimitTable:
    rows: tuple[LimitRow, ...]
    kind: str
    heavy: int

    @property
    def bracket_monotone(self) -> bool:
        d = [r.bracket_deviation for r in self.rows]
        return all(x > y for x, y in zip(d, d[1:]))

    @property
    def hamiltonian_monotone(self) -> bool:
        d = [r.hamiltonian_deviation for r in self.rows]
        return all(x > y for x, y in zip(d, d[1:]))

    def bracket_bound_ok(self, c=2) -> bool:
        return all(r.bracket_deviation <= c / r.m_heavy for r in self.rows)

    def hamiltonian_rate(self) -> list[float]:
        """``deviation * m_heavy``; bounded for O(1/m) convergence."""
        return [float(r.hamiltonian_deviation * r.m_heavy) for r in self.rows]


def standard_two_particle(masses: MassConfig, anchor: int, space: PhaseSpace) -> QuadraticObservable:
    """``1/2 sum_j pi_j^2 / m_j`` over the non-anchor particles."""
    out = space.zero()
    for lab in space.p_labels:
        j = int(lab[2:])
        out = out + space[lab] ** 2 / (2 * masses.masses[j - 1])
    return out


def _max_abs(a: np.ndarray) -> Fraction:
    return max((abs(v) for v in a.flat), default=Fraction(0))


def mass_limit_check(heavy: int = 1, kind: str = "relative-position", ks: Sequence[int] = range(1, 13),
                     light: Sequence[object] = (1, 1)) -> LimitTable:
    """Deviation from the infinite-mass description as ``m_heavy = 10**k`` grows.

    Records the largest entry of ``B_naive - Omega`` for the naive chart and
    the largest coefficient difference between the frame Hamiltonian and the
    standard two-particle kinetic energy.  Everything is exact; callers float
    the results only for display.
    """
    _check_anchor(heavy)
    rows = []
    for k in ks:
        ms = list(light)
        ms.insert(heavy - 1, Fraction(10) ** k)
        masses = MassConfig(tuple(ms))
        system = build_relative_model(masses)
        d = dirac_matrix(system)
        e = naive_embedding(masses, heavy)
        dev_b = _max_abs(induced_brackets(e, d, system) - e.reduced.omega())
        fr = relative_position_frame(system, heavy) if kind == "relative-position" else relative_momentum_frame(system, heavy)
        diff = fr.reduced_hamiltonian - standard_two_particle(masses, heavy, fr.space)
        dev_h = max((abs(v) for v in diff.terms().values()), default=Fraction(0))
        rows.append(LimitRow(k, Fraction(10) ** k, dev_b, dev_h, masses.reduced))
    return LimitTable(tuple(rows), kind, heavy)


def all_frames(system: ConstrainedSystem) -> dict[str, Frame]:
    return {f"{k}{a}": frame(system, f"{k}{a}") for k in "qp" for a in (1, 2, 3)}


def emitted_maps_symplectic(system: ConstrainedSystem) -> bool:
    frames = all_frames(system)
    return all(is_symplectic(frame_transformation(a, b).matrix).ok for a in frames.values() for b in frames.values())
