"""Exact linear algebra over the rationals.

Matrices are numpy object arrays holding :class:`fractions.Fraction` entries,
so ``@``, transposes and slicing work as usual while arithmetic stays exact.
"""

from __future__ import annotations

from fractions import Fraction
from numbers import Rational
from typing import Iterable, Sequence

import numpy as np


class SingularMatrixError(ArithmeticError):
    pass


class InconsistentSystemError(ArithmeticError):
    pass


def to_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, Rational):
        return Fraction(x.numerator, x.denominator)
    if isinstance(x, str):
        return Fraction(x.strip())
    raise TypeError(f"cannot convert {x!r} to an exact rational")


def qarray(data) -> np.ndarray:
    """Return an object array of Fractions built from nested sequences."""
    arr = np.array(data, dtype=object)
    out = np.empty(arr.shape, dtype=object)
    for idx, v in np.ndenumerate(arr):
        out[idx] = to_fraction(v)
    return out


def identity(n: int) -> np.ndarray:
    out = zeros(n, n)
    for i in range(n):
        out[i, i] = Fraction(1)
    return out


def zeros(*shape: int) -> np.ndarray:
    out = np.empty(shape, dtype=object)
    out.fill(Fraction(0))
    return out


def omega(n_pairs: int) -> np.ndarray:
    """Canonical symplectic matrix [[0, I], [-I, 0]] for (q..., p...) ordering."""
    out = zeros(2 * n_pairs, 2 * n_pairs)
    for i in range(n_pairs):
        out[i, n_pairs + i] = Fraction(1)
        out[n_pairs + i, i] = Fraction(-1)
    return out


def is_exact(a: np.ndarray) -> bool:
    return a.dtype == object and all(isinstance(v, Fraction) for v in a.flat)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact product that skips zero entries; ``a @ b`` for 1-D or 2-D object arrays."""
    a = np.asarray(a, dtype=object)
    b = np.asarray(b, dtype=object)
    a2 = a.reshape(1, -1) if a.ndim == 1 else a
    b2 = b.reshape(-1, 1) if b.ndim == 1 else b
    if a2.shape[1] != b2.shape[0]:
        raise ValueError(f"shapes {a.shape} and {b.shape} do not align")
    rows = [[(k, v) for k, v in enumerate(r) if v] for r in a2]
    cols = [{k: v for k, v in enumerate(c) if v} for c in b2.T]
    out = np.empty((a2.shape[0], b2.shape[1]), dtype=object)
    zero = Fraction(0)
    for i, r in enumerate(rows):
        for j, cd in enumerate(cols):
            if not r or not cd:
                out[i, j] = zero
                continue
            acc = zero
            for k, v in r:
                w = cd.get(k)
                if w is not None:
                    acc = acc + v * w
            out[i, j] = acc
    if a.ndim == 1 and b.ndim == 1:
        return out[0, 0]
    if a.ndim == 1:
        return out[0]
    if b.ndim == 1:
        return out[:, 0]
    return out


def is_zero(a: np.ndarray) -> bool:
    return not any(a.flat)


def _like(a: np.ndarray, values: list) -> np.ndarray:
    out = np.empty(a.shape, dtype=object)
    out.flat[:] = values
    return out


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise sum that skips zero entries; may return one of its inputs unchanged."""
    if not any(b.flat):
        return a
    if not any(a.flat):
        return b
    return _like(a, [x + y if y else x for x, y in zip(a.flat, b.flat)])


def scale(a: np.ndarray, c) -> np.ndarray:
    """``c * a`` touching only nonzero entries; may return ``a`` itself when ``c == 1``."""
    if c == 1:
        return a
    return _like(a, [v * c if v else v for v in a.flat])


def equal(a: np.ndarray, b: np.ndarray) -> bool:
    return a.shape == b.shape and all(x == y for x, y in zip(a.flat, b.flat))


def to_float(a: np.ndarray) -> np.ndarray:
    return np.array(a, dtype=float)


def rref(a: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Reduced row-echelon form and the list of pivot columns."""
    m = qarray(a) if a.dtype != object else a.copy()
    if m.ndim != 2:
        raise ValueError("rref expects a 2-d array")
    rows, cols = m.shape
    pivots: list[int] = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        pivot = next((i for i in range(r, rows) if m[i, c] != 0), None)
        if pivot is None:
            continue
        if pivot != r:
            m[[r, pivot]] = m[[pivot, r]]
        m[r] = m[r] / m[r, c]
        for i in range(rows):
            if i != r and m[i, c] != 0:
                m[i] = m[i] - m[i, c] * m[r]
        pivots.append(c)
        r += 1
    return m, pivots


def rank(a: np.ndarray) -> int:
    if a.size == 0:
        return 0
    return len(rref(a)[1])


def nullspace(a: np.ndarray) -> list[np.ndarray]:
    """Canonical RREF basis of the right null space of ``a``."""
    cols = a.shape[1]
    if a.shape[0] == 0:
        return [identity(cols)[:, j].copy() for j in range(cols)]
    r, pivots = rref(a)
    free = [c for c in range(cols) if c not in pivots]
    basis = []
    for f in free:
        v = zeros(cols)
        v[f] = Fraction(1)
        for i, p in enumerate(pivots):
            v[p] = -r[i, f]
        basis.append(v)
    return basis


def inverse(a: np.ndarray) -> np.ndarray:
    n, m = a.shape
    if n != m:
        raise ValueError("inverse of a non-square matrix")
    aug = np.concatenate([qarray(a), identity(n)], axis=1)
    r, pivots = rref(aug)
    if pivots[:n] != list(range(n)):
        raise SingularMatrixError("matrix is singular")
    return r[:, n:].copy()


def solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``a x = b`` for a unique ``x``; ``b`` may be a vector or matrix."""
    x, null = solve_general(a, b)
    if null:
        raise SingularMatrixError("solution is not unique")
    return x


def solve_general(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Particular solution of ``a x = b`` plus a null-space basis of ``a``."""
    vec = b.ndim == 1
    bb = b.reshape(-1, 1) if vec else b
    rows, cols = a.shape
    aug = np.concatenate([qarray(a), qarray(bb)], axis=1)
    r, pivots = rref(aug)
    if any(p >= cols for p in pivots):
        raise InconsistentSystemError("linear system has no solution")
    x = zeros(cols, bb.shape[1])
    for i, p in enumerate(pivots):
        x[p] = r[i, cols:]
    return (x[:, 0].copy() if vec else x), nullspace(a)


def left_inverse(e: np.ndarray) -> np.ndarray:
    """Left inverse (E^T E)^{-1} E^T of an injective matrix."""
    et = e.T
    return matmul(inverse(matmul(et, e)), et)


def in_span(vectors: Sequence[np.ndarray], v: np.ndarray) -> bool:
    if not vectors:
        return is_zero(v)
    base = np.array(list(vectors), dtype=object)
    return rank(np.vstack([base, v.reshape(1, -1)])) == rank(base)


def independent_subset(vectors: Iterable[np.ndarray]) -> list[int]:
    """Indices of a maximal linearly independent prefix-greedy subset."""
    kept: list[np.ndarray] = []
    idx: list[int] = []
    for i, v in enumerate(vectors):
        if not in_span(kept, v):
            kept.append(v)
            idx.append(i)
    return idx


def block_diag(*blocks: np.ndarray) -> np.ndarray:
    n = sum(b.shape[0] for b in blocks)
    m = sum(b.shape[1] for b in blocks)
    out = zeros(n, m)
    r = c = 0
    for b in blocks:
        out[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


def ratstr(x) -> str:
    """Render an exact rational as ``"p/q"`` (or ``"p"`` for integers)."""
    f = to_fraction(x)
    return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


def matstr(a: np.ndarray) -> list:
    """Nested lists of rational strings, for reports."""
    if a.ndim == 1:
        return [ratstr(v) for v in a]
    return [matstr(row) for row in a]
