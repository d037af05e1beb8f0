"""Phase spaces, quadratic observables, Poisson brackets and linear flows.

Coordinates are ordered ``z = (q_1..q_N, p_1..p_N)`` and the symplectic
matrix is ``Omega = [[0, I], [-I, 0]]``, so ``{q_i, p_j} = delta_ij``.
An observable is ``c + a.z + 1/2 z.Q.z`` with exact rational coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

import numpy as np
import scipy.linalg

from . import linalg as la


class DimensionError(ValueError):
    """Objects live on incompatible phase spaces."""


class DegreeError(ValueError):
    """A product or operation would leave the degree <= 2 class."""


class NotSymplecticError(ValueError):
    pass


@dataclass(frozen=True)
class PhaseSpace:
    q_labels: tuple[str, ...]
    p_labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.q_labels) != len(self.p_labels) or not self.q_labels:
            raise DimensionError("a phase space needs N >= 1 conjugate pairs")
        if len(set(self.labels)) != len(self.labels):
            raise DimensionError(f"duplicate coordinate labels in {self.labels}")

    @classmethod
    def standard(cls, names: Sequence[str], q: str = "q", p: str = "p") -> "PhaseSpace":
        """``PhaseSpace.standard(["1", "2"])`` gives coordinates q1, q2, p1, p2."""
        return cls(tuple(q + n for n in names), tuple(p + n for n in names))

    @property
    def n_pairs(self) -> int:
        return len(self.q_labels)

    @property
    def dim(self) -> int:
        return 2 * self.n_pairs

    @property
    def labels(self) -> tuple[str, ...]:
        return self.q_labels + self.p_labels

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"no coordinate {label!r} in {self.labels}") from None

    def partner(self, i: int) -> int:
        """Index of the conjugate coordinate."""
        return i + self.n_pairs if i < self.n_pairs else i - self.n_pairs

    def omega(self) -> np.ndarray:
        return la.omega(self.n_pairs)

    def coordinate(self, label_or_index: Union[str, int]) -> "QuadraticObservable":
        i = self.index(label_or_index) if isinstance(label_or_index, str) else label_or_index
        lin = la.zeros(self.dim)
        lin[i] = Fraction(1)
        return QuadraticObservable._make(self, Fraction(0), lin, la.zeros(self.dim, self.dim))

    def __getitem__(self, label: str) -> "QuadraticObservable":
        return self.coordinate(label)

    def coordinates(self) -> list["QuadraticObservable"]:
        return [self.coordinate(i) for i in range(self.dim)]

    def zero(self) -> "QuadraticObservable":
        return self.constant(0)

    def constant(self, c) -> "QuadraticObservable":
        return QuadraticObservable._make(self, la.to_fraction(c), la.zeros(self.dim), la.zeros(self.dim, self.dim))

    def linear_form(self, coeffs) -> "QuadraticObservable":
        return QuadraticObservable(self, Fraction(0), la.qarray(coeffs), la.zeros(self.dim, self.dim))

    def quadratic_form(self, matrix) -> "QuadraticObservable":
        """Observable ``1/2 z.Q.z`` for a symmetric ``Q``."""
        return QuadraticObservable(self, Fraction(0), la.zeros(self.dim), la.qarray(matrix))

    def rename(self, q_labels: Sequence[str], p_labels: Sequence[str]) -> "PhaseSpace":
        return PhaseSpace(tuple(q_labels), tuple(p_labels))


def _num(x):
    t = type(x)
    if t is Fraction or t is float:
        return x
    if isinstance(x, (float, np.floating)):
        return float(x)
    return la.to_fraction(x)


class QuadraticObservable:
    """Phase-space function ``c + a.z + 1/2 z.Q.z``; immutable."""

    __slots__ = ("space", "constant", "linear", "quadratic")

    def __init__(self, space: PhaseSpace, constant, linear, quadratic):
        lin = np.array(linear, dtype=object).reshape(space.dim)
        quad = np.array(quadratic, dtype=object).reshape(space.dim, space.dim)
        lin = np.array([_num(v) for v in lin.flat] + [None], dtype=object)[:-1].reshape(lin.shape)
        quad = np.array([_num(v) for v in quad.flat] + [None], dtype=object)[:-1].reshape(quad.shape)
        if not la.equal(quad, quad.T):
            raise ValueError("quadratic part must be symmetric")
        lin.flags.writeable = False
        quad.flags.writeable = False
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "constant", _num(constant))
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "quadratic", quad)

    @classmethod
    def _make(cls, space: PhaseSpace, constant, linear, quadratic) -> "QuadraticObservable":
        # trusted path: entries already normalized and the quadratic part symmetric
        obj = object.__new__(cls)
        linear.flags.writeable = False
        quadratic.flags.writeable = False
        object.__setattr__(obj, "space", space)
        object.__setattr__(obj, "constant", constant)
        object.__setattr__(obj, "linear", linear)
        object.__setattr__(obj, "quadratic", quadratic)
        return obj

    def __setattr__(self, name, value):
        raise AttributeError("QuadraticObservable is immutable")

    # -- structure -----------------------------------------------------
    @property
    def degree(self) -> int:
        if not la.is_zero(self.quadratic):
            return 2
        if not la.is_zero(self.linear):
            return 1
        return 0

    @property
    def is_exact(self) -> bool:
        return isinstance(self.constant, Fraction) and la.is_exact(self.linear) and la.is_exact(self.quadratic)

    def is_zero(self) -> bool:
        return self.degree == 0 and self.constant == 0

    def is_linear(self) -> bool:
        """True when the quadratic part vanishes (affine functions included)."""
        return la.is_zero(self.quadratic)

    def homogeneous_linear(self) -> bool:
        return la.is_zero(self.quadratic) and self.constant == 0

    def evaluate(self, z) -> Fraction:
        z = np.asarray(z, dtype=object)
        return self.constant + self.linear @ z + (z @ self.quadratic @ z) / 2

    def terms(self) -> dict[tuple[int, ...], object]:
        """Monomial coefficients: ``()``, ``(i,)`` and ``(i, j)`` with ``i <= j``."""
        out: dict[tuple[int, ...], object] = {}
        if self.constant != 0:
            out[()] = self.constant
        for i, a in enumerate(self.linear):
            if a != 0:
                out[(i,)] = a
        n = self.space.dim
        for i in range(n):
            if self.quadratic[i, i] != 0:
                out[(i, i)] = self.quadratic[i, i] / 2
            for j in range(i + 1, n):
                if self.quadratic[i, j] != 0:
                    out[(i, j)] = self.quadratic[i, j]
        return out

    def coefficient(self, *labels: str):
        """Coefficient of the monomial named by ``labels`` (e.g. ``"p1", "p2"``)."""
        idx = tuple(sorted(self.space.index(l) for l in labels))
        return self.terms().get(idx, Fraction(0))

    def on(self, space: PhaseSpace) -> "QuadraticObservable":
        """Same coefficients, relabelled onto an equally sized space."""
        if space.dim != self.space.dim:
            raise DimensionError("relabelling needs equal dimensions")
        return QuadraticObservable._make(space, self.constant, self.linear, self.quadratic)

    # -- arithmetic ----------------------------------------------------
    def _check(self, other: "QuadraticObservable"):
        if other.space != self.space:
            raise DimensionError(f"observables on different spaces: {self.space.labels} vs {other.space.labels}")

    def __add__(self, other):
        if not isinstance(other, QuadraticObservable):
            return QuadraticObservable(self.space, self.constant + _num(other), self.linear, self.quadratic)
        self._check(other)
        return QuadraticObservable._make(self.space, self.constant + other.constant,
                                         la.add(self.linear, other.linear), la.add(self.quadratic, other.quadratic))

    __radd__ = __add__

    def __neg__(self):
        return QuadraticObservable._make(self.space, -self.constant, la.scale(self.linear, -1),
                                         la.scale(self.quadratic, -1))

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, QuadraticObservable):
            c = _num(other)
            return QuadraticObservable._make(self.space, self.constant * c, la.scale(self.linear, c),
                                             la.scale(self.quadratic, c))
        self._check(other)
        if self.degree == 0:
            return other * self.constant
        if other.degree == 0:
            return self * other.constant
        if self.degree + other.degree > 2:
            raise DegreeError("product would exceed degree 2")
        a, b = self.linear, other.linear
        quad = np.outer(a, b) + np.outer(b, a)
        lin = self.constant * b + other.constant * a
        return QuadraticObservable._make(self.space, self.constant * other.constant, lin, quad)

    __rmul__ = __mul__

    def __truediv__(self, c):
        c = _num(c)
        return self * (1.0 / c if isinstance(c, float) else 1 / c)

    def __pow__(self, n: int):
        if n == 0:
            return self.space.constant(1)
        if n == 1:
            return self
        if n == 2:
            return self * self
        raise DegreeError("only powers up to 2 are representable")

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.degree == 0 and self.constant == other
        if not isinstance(other, QuadraticObservable):
            return NotImplemented
        return (self.space == other.space and self.constant == other.constant
                and la.equal(self.linear, other.linear) and la.equal(self.quadratic, other.quadratic))

    def __hash__(self):
        return hash((self.space, self.constant, tuple(self.linear), tuple(self.quadratic.flat)))

    def __repr__(self):
        return f"QuadraticObservable({self})"

    def __str__(self):
        labels = self.space.labels
        parts = []
        for key, c in self.terms().items():
            mono = "*".join(labels[i] for i in key) if key and (len(key) == 1 or key[0] != key[1]) else (
                f"{labels[key[0]]}^2" if key else "")
            coef = la.ratstr(c) if isinstance(c, Fraction) else f"{c:.12g}"
            parts.append(coef if not mono else (mono if coef == "1" else f"-{mono}" if coef == "-1" else f"{coef}*{mono}"))
        return " + ".join(parts).replace("+ -", "- ") if parts else "0"

    def to_dict(self) -> dict:
        """Monomial -> coefficient string, for reports."""
        labels = self.space.labels
        out = {}
        for key, c in self.terms().items():
            name = "*".join(labels[i] for i in key) or "1"
            out[name] = la.ratstr(c) if isinstance(c, Fraction) else float(f"{c:.12g}")
        return out


Observable = QuadraticObservable


def _omega_vec(v: np.ndarray) -> np.ndarray:
    """``Omega v = (v_p, -v_q)``."""
    n = v.shape[0] // 2
    return np.concatenate([v[n:], la.scale(v[:n], -1)])


def _dot(a: np.ndarray, b: np.ndarray):
    acc = Fraction(0)
    for x, y in zip(a, b):
        if x and y:
            acc = acc + x * y
    return acc


def poisson_bracket(f: QuadraticObservable, g: QuadraticObservable) -> QuadraticObservable:
    """``{f, g} = grad(f) . Omega . grad(g)``, exact and again of degree <= 2."""
    f._check(g)
    n = f.space.dim
    mm = la.matmul
    qf, qg, af, ag = f.quadratic, g.quadratic, f.linear, g.linear
    f_quad, g_quad = not la.is_zero(qf), not la.is_zero(qg)
    om_ag = _omega_vec(ag)
    const = _dot(af, om_ag)
    lin = la.zeros(n)
    if f_quad:
        lin = la.add(lin, mm(qf, om_ag))
    if g_quad:
        lin = la.add(lin, la.scale(mm(qg, _omega_vec(af)), -1))
    quad = la.zeros(n, n)
    if f_quad and g_quad:
        # Q_f Omega: columns (-Q_f[:, p], Q_f[:, q])
        h = n // 2
        qf_om = np.concatenate([la.scale(qf[:, h:], -1), qf[:, :h]], axis=1)
        a = mm(qf_om, qg)
        quad = la.add(a, a.T)
    return QuadraticObservable._make(f.space, _num(const), lin, quad)


def bracket_value(f: QuadraticObservable, g: QuadraticObservable):
    """Bracket of two linear observables, which is a constant."""
    b = poisson_bracket(f, g)
    if b.degree != 0:
        raise DegreeError("bracket is not constant")
    return b.constant


@dataclass(frozen=True)
class LogParameter:
    """Flow time ``coeff * ln(base)``, kept symbolic so rational flows stay exact."""

    coeff: Fraction
    base: Fraction

    def __float__(self):
        return float(self.coeff) * math.log(self.base)


@dataclass(frozen=True)
class SymplecticCheck:
    ok: bool
    witness: tuple[int, int] | None = None  # 1-based (row, column) of the first failing entry
    value: object = None

    def __bool__(self):
        return self.ok


def is_symplectic(m: np.ndarray, tol: float | None = None) -> SymplecticCheck:
    """Check ``M^T Omega M == Omega`` exactly, or to ``tol`` for float input."""
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("symplectic test needs a square matrix")
    if m.shape[0] % 2:
        raise ValueError(f"odd dimension {m.shape[0]} cannot carry a symplectic form")
    n = m.shape[0] // 2
    exact = m.dtype == object and la.is_exact(m)
    if exact:
        om = la.omega(n)
        lhs = la.matmul(la.matmul(m.T, om), m)
        for (i, j), v in np.ndenumerate(lhs):
            if v != om[i, j]:
                return SymplecticCheck(False, (i + 1, j + 1), v)
        return SymplecticCheck(True)
    tol = 1e-12 if tol is None else tol
    mf = np.asarray(m, dtype=float)
    om = la.to_float(la.omega(n))
    diff = mf.T @ om @ mf - om
    scale = max(1.0, float(np.max(np.abs(mf))) ** 2)
    bad = np.argwhere(np.abs(diff) > tol * scale)
    if bad.size:
        i, j = bad[0]
        return SymplecticCheck(False, (int(i) + 1, int(j) + 1), float(diff[i, j] + om[i, j]))
    return SymplecticCheck(True)


class SymplecticMap:
    """Affine canonical map ``z_target = M z_source + b``.

    Used both to move points (``apply``) and to pull observables back
    (:func:`substitute`), so ``f`` on the target becomes ``f(M w + b)``.
    """

    __slots__ = ("matrix", "offset", "source", "target")

    def __init__(self, matrix, source: PhaseSpace, target: PhaseSpace | None = None, offset=None,
                 check: bool = True, tol: float | None = None):
        target = source if target is None else target
        mat = np.array(matrix, dtype=object)
        if mat.shape != (target.dim, source.dim):
            raise DimensionError(f"matrix shape {mat.shape} does not match spaces")
        exact = la.is_exact(mat)
        if not exact:
            mat = np.asarray(matrix, dtype=float)
        off = la.zeros(target.dim) if offset is None else np.array(offset, dtype=object if exact else float)
        if check:
            res = is_symplectic(mat, tol)
            if not res:
                raise NotSymplecticError(f"matrix is not symplectic (entry {res.witness})")
        mat.flags.writeable = False
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "offset", off)
        object.__setattr__(self, "source", source)
        object.__setattr__(self, "target", target)

    def __setattr__(self, name, value):
        raise AttributeError("SymplecticMap is immutable")

    @classmethod
    def identity(cls, space: PhaseSpace) -> "SymplecticMap":
        return cls(la.identity(space.dim), space, check=False)

    @property
    def is_exact(self) -> bool:
        return self.matrix.dtype == object

    def apply(self, z):
        return self.matrix @ np.asarray(z, dtype=self.matrix.dtype) + self.offset

    def compose(self, inner: "SymplecticMap") -> "SymplecticMap":
        """``self o inner``: apply ``inner`` first."""
        if inner.target.dim != self.source.dim:
            raise DimensionError("cannot compose maps of mismatched dimension")
        m = la.matmul(self.matrix, inner.matrix)
        b = la.matmul(self.matrix, inner.offset) + self.offset
        return SymplecticMap(m, inner.source, self.target, b, check=False)

    def __matmul__(self, inner: "SymplecticMap") -> "SymplecticMap":
        return self.compose(inner)

    def inverse(self) -> "SymplecticMap":
        if self.is_exact:
            inv = la.inverse(self.matrix)
        else:
            inv = np.linalg.inv(np.asarray(self.matrix, dtype=float))
        return SymplecticMap(inv, self.target, self.source, -la.matmul(inv, self.offset), check=False)

    def equals(self, other: "SymplecticMap", tol: float = 0.0) -> bool:
        if self.matrix.shape != other.matrix.shape:
            return False
        if self.is_exact and other.is_exact and tol == 0:
            return la.equal(self.matrix, other.matrix) and la.equal(self.offset, other.offset)
        a = np.asarray(self.matrix, dtype=float)
        b = np.asarray(other.matrix, dtype=float)
        return bool(np.max(np.abs(a - b)) <= tol and np.max(np.abs(
            np.asarray(self.offset, dtype=float) - np.asarray(other.offset, dtype=float))) <= tol)

    def __repr__(self):
        return f"SymplecticMap({self.source.labels} -> {self.target.labels})"


@dataclass(frozen=True, eq=False)
class LinearMap:
    """Affine map ``z_target = E w_source + b`` with no structural requirements."""

    matrix: np.ndarray
    source: PhaseSpace
    target: PhaseSpace
    offset: np.ndarray | None = None

    def __post_init__(self):
        m = np.array(self.matrix, dtype=object)
        if m.shape != (self.target.dim, self.source.dim):
            raise DimensionError(f"matrix shape {m.shape} does not match spaces")
        object.__setattr__(self, "matrix", m)
        if self.offset is None:
            object.__setattr__(self, "offset", la.zeros(self.target.dim))

    def apply(self, w):
        return self.matrix @ np.asarray(w, dtype=object) + self.offset


def substitute(f: QuadraticObservable, mapping) -> QuadraticObservable:
    """Pull ``f`` back along a linear map ``z = E w + b`` (``f o mapping``).

    ``mapping`` is any object with ``matrix``, ``offset``, ``source`` and
    ``target`` attributes: a :class:`SymplecticMap` or an embedding.
    """
    if mapping.target.dim != f.space.dim or mapping.target.labels != f.space.labels:
        raise DimensionError(f"map target {mapping.target.labels} is not the space of f {f.space.labels}")
    e = np.asarray(mapping.matrix, dtype=object)
    b = np.asarray(mapping.offset, dtype=object)
    mm = la.matmul
    if la.is_zero(b):
        const, lin = f.constant, mm(e.T, f.linear)
    else:
        qb = mm(f.quadratic, b)
        const = f.constant + mm(f.linear, b) + mm(b, qb) / 2
        lin = mm(e.T, f.linear + qb)
    quad = mm(mm(e.T, f.quadratic), e) if not la.is_zero(f.quadratic) else la.zeros(e.shape[1], e.shape[1])
    if any(type(v) is float for v in quad.flat):
        quad = (quad + quad.T) / 2
    # matmul yields Fractions or floats only, so the trusted constructor applies
    return QuadraticObservable._make(mapping.source, _num(const), lin, quad)


def _is_nilpotent(k: np.ndarray) -> int | None:
    """Nilpotency index of an exact matrix, or None."""
    n = k.shape[0]
    power = la.identity(n)
    for j in range(1, n + 1):
        power = la.matmul(power, k)
        if la.is_zero(power):
            return j
    return None


def _exact_exp_log(k: np.ndarray, t: LogParameter) -> np.ndarray | None:
    """exp(t K) for t = c ln b when K is rationally diagonalizable and every b^(c lambda) is rational."""
    import sympy

    mk = sympy.Matrix(k.shape[0], k.shape[1], lambda i, j: sympy.Rational(k[i, j].numerator, k[i, j].denominator))
    if not mk.is_diagonalizable(reals_only=True):
        return None
    p, d = mk.diagonalize()
    c = sympy.Rational(t.coeff.numerator, t.coeff.denominator)
    b = sympy.Rational(t.base.numerator, t.base.denominator)
    diag = []
    for i in range(d.shape[0]):
        lam = d[i, i]
        if not lam.is_rational:
            return None
        v = sympy.nsimplify(b ** (c * lam))
        if not v.is_rational:
            return None
        diag.append(v)
    res = p * sympy.diag(*diag) * p.inv()
    return la.qarray([[Fraction(int(sympy.fraction(x)[0]), int(sympy.fraction(x)[1])) for x in row]
                      for row in res.tolist()])


def flow_matrix(generator: QuadraticObservable, t) -> tuple[np.ndarray, np.ndarray]:
    """Matrix and offset of the time-``t`` Hamiltonian flow of ``generator``.

    The flow solves ``dz/dt = Omega grad(g) = K z + Omega a`` with ``K = Omega Q``.
    """
    space = generator.space
    n = space.dim
    om = space.omega()
    k = la.matmul(om, generator.quadratic)
    drift = la.matmul(om, generator.linear)
    if la.is_zero(k) and la.is_zero(drift):
        return la.identity(n), la.zeros(n)
    exact_t = isinstance(t, (int, Fraction))
    if generator.is_exact:
        # augmented matrix [[K, drift], [0, 0]] turns the affine flow into a linear one
        aug = la.zeros(n + 1, n + 1)
        aug[:n, :n] = k
        aug[:n, n] = drift
        nil = _is_nilpotent(aug)
        if nil is not None and exact_t:
            tt = Fraction(t)
            term = la.identity(n + 1)
            total = la.identity(n + 1)
            for j in range(1, nil):
                term = la.matmul(term, aug) * (tt / j)
                total = total + term
            return total[:n, :n].copy(), total[:n, n].copy()
        if isinstance(t, LogParameter) and la.is_zero(drift):
            m = _exact_exp_log(k, t)
            if m is not None:
                return m, la.zeros(n)
    tf = float(t)
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = np.asarray(k, dtype=float)
    aug[:n, n] = np.asarray(drift, dtype=float)
    e = scipy.linalg.expm(tf * aug)
    return e[:n, :n], e[:n, n]


def linear_flow(generator: QuadraticObservable, t) -> SymplecticMap:
    """Time-``t`` flow of a generator of degree <= 2 as a symplectic map.

    Exact when ``Omega Q`` (with any linear drift) is nilpotent and ``t`` is
    rational, or when ``t`` is a :class:`LogParameter` and the eigenstructure
    is rational; otherwise evaluated in floating point and re-checked to 1e-12.
    """
    m, b = flow_matrix(generator, t)
    return SymplecticMap(m, generator.space, offset=b)


def conjugation_map(generator: QuadraticObservable, s) -> SymplecticMap:
    """Classical action of ``U = exp(-i s G)`` on observables: ``U A U^dagger = A o map``."""
    if isinstance(s, LogParameter):
        return linear_flow(generator, LogParameter(-s.coeff, s.base))
    return linear_flow(generator, -s)


def flow_generator_matrix(generator: QuadraticObservable) -> np.ndarray:
    """Hamiltonian matrix ``K = Omega Q`` of a homogeneous quadratic generator."""
    return generator.space.omega() @ generator.quadratic
