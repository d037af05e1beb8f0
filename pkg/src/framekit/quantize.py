"""Quantum side at the level of quadratures and covariances.

A unitary ``U = exp(-i s G)`` with a quadratic generator acts on linear
observables by ``U A U^dagger = A o M`` where ``M`` is the classical flow of
``G`` at time ``-s``.  For a product ``U1 U2`` the substitution matrix is
``M_U2 M_U1``.  States transform with ``M^-1``.
"""

from __future__ import annotations

import functools
import itertools
import math
import types
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

from . import linalg as la
from .abelian import ExtendedSystem, convert, extended_space
from .algebra import (LinearMap, PhaseSpace, QuadraticObservable, SymplecticMap, conjugation_map, flow_matrix,
                      is_symplectic, linear_flow, substitute)
from .frames import Frame, _cyc, frame_transformation
from .model import MassConfig, build_relative_model, relative_space

KINDS = ("T_p", "T_q", "T_qi", "T_pi")


class ReductionError(ValueError):
    pass


class RepresentationError(ValueError):
    def __init__(self, message: str, spectrum=None):
        super().__init__(message)
        self.spectrum = spectrum


class AlreadySharpError(ValueError):
    """Conditioning on a coordinate with zero variance."""


class UnsupportedFramePairError(ValueError):
    pass


# -- trivialization maps -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TrivializationMap:
    """Classical action ``A -> A o map`` of a trivializing unitary.

    ``map = flow(generator, -s)`` composed with the optional rotation
    ``parity_factor`` so that the designated constraint becomes a single
    coordinate.  ``constraint_label`` and ``gauge_label`` name the pair that
    is eliminated afterwards; ``relabel`` renames the surviving coordinates.
    """

    kind: str
    anchor: int | None
    generator: QuadraticObservable
    s: Fraction
    map: SymplecticMap
    parity_factor: SymplecticMap | None
    constraint_label: str
    gauge_label: str
    relabel: Mapping[str, str] = field(default_factory=dict)

    @property
    def space(self) -> PhaseSpace:
        return self.map.source

    def conjugate(self, f: QuadraticObservable) -> QuadraticObservable:
        return substitute(f, self.map)


def _rotation(space: PhaseSpace, i: str, j: str) -> tuple[QuadraticObservable, SymplecticMap]:
    """Quarter turn generated by ``R = q_i p_j - q_j p_i`` as an exact signed permutation.

    Conjugation by ``exp(-i pi/2 R)`` sends ``q_i -> q_j``, ``q_j -> -q_i`` and
    the same for momenta.
    """
    r = space[f"q{i}"] * space[f"p{j}"] - space[f"q{j}"] * space[f"p{i}"]
    m = la.identity(space.dim)
    for a, b in ((f"q{i}", f"q{j}"), (f"p{i}", f"p{j}")):
        ia, ib = space.index(a), space.index(b)
        m[ia, ia] = m[ib, ib] = Fraction(0)
        m[ia, ib] = Fraction(1)
        m[ib, ia] = Fraction(-1)
    return r, SymplecticMap(m, space)


def trivialization(kind: str, anchor: int | None, masses: MassConfig) -> TrivializationMap:
    """Build ``T_p``, ``T_q`` (on the extended space) or ``T_qi``, ``T_pi`` (on the relative space)."""
    if kind not in KINDS:
        raise ValueError(f"unknown trivialization {kind!r}; expected one of {KINDS}")
    mus = masses.reduced
    mu = masses.mu
    if kind in ("T_p", "T_q"):
        ext = extended_space(relative_space())
        phi1 = ext["q1"] + ext["q2"] + ext["q3"]
        phi2 = sum((ext[f"p{i + 1}"] / mus[i] for i in range(3)), ext.zero())
        if kind == "T_p":
            gen, c_lab, g_lab = ext["q"] * phi2 / mu, "p", "q"
        else:
            gen, c_lab, g_lab = ext["p"] * phi1, "q", "p"
        return TrivializationMap(kind, None, gen, Fraction(1), conjugation_map(gen, 1), None, c_lab, g_lab)
    if anchor not in (1, 2, 3):
        raise ValueError("anchored trivializations need anchor 1, 2 or 3")
    space = PhaseSpace.standard(["1", "2", "3"])
    a, a1, a2 = anchor, _cyc(anchor + 1), _cyc(anchor + 2)
    if kind == "T_qi":
        gen = space[f"p{a}"] * (space[f"q{a1}"] + space[f"q{a2}"])
        c_lab, g_lab = f"q{a}", f"p{a}"
    else:
        gen = -(space[f"q{a}"] * (space[f"p{a1}"] / mus[a1 - 1] + space[f"p{a2}"] / mus[a2 - 1])) * mus[a - 1]
        c_lab, g_lab = f"p{a}", f"q{a}"
    _, rot = _rotation(space, str(a1), str(a2))
    m = conjugation_map(gen, 1) @ rot
    relabel = {}
    for j in (a1, a2):
        relabel[f"q{j}"] = f"u{j}"
        relabel[f"p{j}"] = f"pi{j}"
    return TrivializationMap(kind, anchor, gen, Fraction(1), m, rot, c_lab, g_lab, relabel)


# -- symmetry reduction ------------------------------------------------------------

@dataclass(frozen=True)
class Stage:
    """Matrices of one conjugate-then-eliminate step, for composing frame changes."""

    kind: str
    map: np.ndarray
    elimination: np.ndarray
    before: PhaseSpace
    after: PhaseSpace


@dataclass(frozen=True, eq=False)
class ReducedSystem:
    space: PhaseSpace
    constraints: tuple[QuadraticObservable, ...]
    observables: Mapping[str, QuadraticObservable]
    hamiltonian: QuadraticObservable
    stages: tuple[Stage, ...]

    def embedding_matrix(self) -> np.ndarray:
        """``M1 J1 M2 J2 ...``: reduced point to extended point."""
        out = None
        for st in self.stages:
            step = la.matmul(st.map, st.elimination)
            out = step if out is None else la.matmul(out, step)
        return out

    def reduction_matrix(self) -> np.ndarray:
        """``... J2^T M2^-1 J1^T M1^-1``: extended point to reduced point."""
        out = None
        for st in self.stages:
            step = la.matmul(st.elimination.T, la.inverse(st.map))
            out = step if out is None else la.matmul(step, out)
        return out


def _single_coordinate(c: QuadraticObservable, label: str) -> bool:
    k = c.space.index(label)
    return c.constant == 0 and c.is_linear() and c.linear[k] != 0 and all(
        v == 0 for i, v in enumerate(c.linear) if i != k)


def _elimination(space: PhaseSpace, c_label: str, g_label: str) -> tuple[PhaseSpace, np.ndarray]:
    drop = {space.index(c_label), space.index(g_label)}
    if space.partner(space.index(c_label)) != space.index(g_label):
        raise ReductionError(f"{c_label} and {g_label} are not a conjugate pair")
    keep_pairs = [k for k in range(space.n_pairs) if k not in drop]
    new = PhaseSpace(tuple(space.q_labels[k] for k in keep_pairs), tuple(space.p_labels[k] for k in keep_pairs))
    j = la.zeros(space.dim, new.dim)
    for col, lab in enumerate(new.labels):
        j[space.index(lab), col] = Fraction(1)
    return new, j


def symmetry_reduce(ext: ExtendedSystem, path: Sequence) -> ReducedSystem:
    """Conjugate by each trivialization and eliminate the pair carrying the constraint.

    ``path`` holds :class:`TrivializationMap` objects, or ``(map, (constraint,
    gauge))`` tuples overriding the eliminated pair.
    """
    space = ext.space
    constraints = list(ext.constraints)
    observables = dict(ext.dirac_observables)
    h = ext.hamiltonian
    stages = []
    for item in path:
        tm, pair = (item, (item.constraint_label, item.gauge_label)) if isinstance(item, TrivializationMap) else item
        if tm.map.source.labels != space.labels:
            raise ReductionError(f"{tm.kind} acts on {tm.map.source.labels}, current space is {space.labels}")
        c_lab, g_lab = pair
        constraints = [tm.conjugate(c) for c in constraints]
        observables = {k: tm.conjugate(v) for k, v in observables.items()}
        h = tm.conjugate(h)
        hit = [c for c in constraints if _single_coordinate(c, c_lab)]
        if not hit:
            raise ReductionError(f"after {tm.kind} no constraint acts on {c_lab} alone")
        constraints.remove(hit[0])
        gi = space.index(g_lab)
        for name, f in [("hamiltonian", h), *observables.items(), *(("constraint", c) for c in constraints)]:
            if f.linear[gi] != 0 or any(v != 0 for v in f.quadratic[gi]):
                raise ReductionError(f"{name} depends on the gauge coordinate {g_lab}")
        new, j = _elimination(space, c_lab, g_lab)
        emb = LinearMap(j, new, space)
        constraints = [substitute(c, emb) for c in constraints]
        observables = {k: substitute(v, emb) for k, v in observables.items()}
        h = substitute(h, emb)
        if tm.relabel:
            renamed = PhaseSpace(tuple(tm.relabel.get(x, x) for x in new.q_labels),
                                 tuple(tm.relabel.get(x, x) for x in new.p_labels))
            constraints = [c.on(renamed) for c in constraints]
            observables = {k: v.on(renamed) for k, v in observables.items()}
            h = h.on(renamed)
            new = renamed
        stages.append(Stage(tm.kind, np.array(tm.map.matrix, dtype=object), j, space, new))
        space = new
    return ReducedSystem(space, tuple(constraints), types.MappingProxyType(observables), h, tuple(stages))


def reduction_path(frame_name: str, masses: MassConfig) -> list[TrivializationMap]:
    """``[T_p, T_qa]`` for ``"qa"`` and ``[T_q, T_pa]`` for ``"pa"``."""
    kind, anchor = frame_name[0], int(frame_name[1:])
    if kind == "q":
        return [trivialization("T_p", None, masses), trivialization("T_qi", anchor, masses)]
    if kind == "p":
        return [trivialization("T_q", None, masses), trivialization("T_pi", anchor, masses)]
    raise UnsupportedFramePairError(f"no reduction path for frame {frame_name!r}")


@functools.lru_cache(maxsize=256)
def _reduce_canonical(frame_name: str, masses: MassConfig) -> ReducedSystem:
    ext = convert(build_relative_model(masses))
    return symmetry_reduce(ext, reduction_path(frame_name, masses))


def reduce_to_frame(frame_name: str, masses: MassConfig, x=None) -> ReducedSystem:
    """Reduce the converted relative model along the path of ``frame_name``; cached for the canonical ``X``."""
    if x is None:
        return _reduce_canonical(frame_name, masses)
    ext = convert(build_relative_model(masses), x)
    return symmetry_reduce(ext, reduction_path(frame_name, masses))


def _frame_name(f: Frame) -> str:
    if f.kind == "relative-position":
        return f"q{f.anchor}"
    if f.kind == "relative-momentum":
        return f"p{f.anchor}"
    raise UnsupportedFramePairError(f"frames of kind {f.kind!r} have no reduction path")


def frame_change_via_neutral(a: Frame, b: Frame, masses: MassConfig) -> SymplecticMap:
    """``w_a = T w_b`` obtained by lifting ``w_b`` to the extended space and reducing along ``a``'s path."""
    red_a = reduce_to_frame(_frame_name(a), masses)
    red_b = reduce_to_frame(_frame_name(b), masses)
    if red_a.space.labels != a.space.labels or red_b.space.labels != b.space.labels:
        raise UnsupportedFramePairError("reduced labels do not match the frames")
    t = la.matmul(red_a.reduction_matrix(), red_b.embedding_matrix())
    return SymplecticMap(t, b.space, a.space)


# -- generators of linear canonical maps -------------------------------------------

@dataclass(frozen=True)
class GeneratorResult:
    """``target = parity . exp(t X_r)`` (``side="left"``) or ``exp(t X_r) . parity`` (``"right"``).

    ``direction`` records that the target maps barred coordinates to
    unbarred ones.
    """

    generator: QuadraticObservable
    t: float
    parity_factor: np.ndarray | None
    side: str
    residual: float
    direction: str = "barred-to-unbarred"

    @property
    def abs_t(self) -> float:
        return abs(self.t)

    def reconstruct(self) -> np.ndarray:
        m, _ = flow_matrix(self.generator * self.t, 1.0)
        m = np.asarray(m, dtype=float)
        if self.parity_factor is None:
            return m
        p = np.asarray(self.parity_factor, dtype=float)
        return p @ m if self.side == "left" else m @ p


def point_parities(n_pairs: int) -> list[np.ndarray]:
    """Signed permutations acting identically on positions and momenta, identity first."""
    out = []
    for perm in itertools.permutations(range(n_pairs)):
        for signs in itertools.product((1, -1), repeat=n_pairs):
            s = np.zeros((n_pairs, n_pairs))
            for i, (j, sg) in enumerate(zip(perm, signs)):
                s[i, j] = sg
            out.append(scipy.linalg.block_diag(s, s))
    return out


def _real_log(m: np.ndarray, tol: float):
    ev = np.linalg.eigvals(m)
    if np.any((np.abs(ev.imag) < tol) & (ev.real <= 0)):
        return None
    k = scipy.linalg.logm(m)
    if np.max(np.abs(np.imag(k))) > tol:
        return None
    return np.real(k)


def find_generator(target: SymplecticMap, tol: float = 1e-9) -> GeneratorResult:
    """Quadratic generator ``r`` and time ``t`` with ``exp(t X_r)`` reproducing ``target``.

    The principal matrix logarithm ``K`` gives ``Q = -Omega K``.  When the
    target has no real logarithm a point-type signed permutation is factored
    off on either side; the sparsest generator wins, the identity parity is
    tried first.  ``r`` is normalized to unit largest coefficient with a
    positive first coefficient.
    """
    m = np.asarray(target.matrix, dtype=float)
    n = m.shape[0] // 2
    space = target.target
    om = la.to_float(la.omega(n))
    if np.allclose(m, np.eye(2 * n), atol=tol, rtol=0):
        return GeneratorResult(space.zero(), 0.0, None, "left", 0.0)
    best = None
    for idx, p in enumerate(point_parities(n)):
        for side in ("left", "right"):
            if idx == 0 and side == "right":
                continue
            rest = p.T @ m if side == "left" else m @ p.T
            k = _real_log(rest, tol)
            if k is None:
                continue
            q = -om @ k
            if np.max(np.abs(q - q.T)) > 1e-7:
                continue
            q = (q + q.T) / 2
            recon = scipy.linalg.expm(om @ q)
            recon = p @ recon if side == "left" else recon @ p
            resid = float(np.max(np.abs(recon - m)))
            if resid > tol:
                continue
            nnz = int(np.sum(np.abs(q) > tol))
            cand = (nnz, idx, side, q, p, resid)
            if best is None or cand[0] < best[0]:
                best = cand
        if idx == 0 and best is not None:
            break
    if best is None:
        raise RepresentationError("no real logarithm after removing point parities", np.linalg.eigvals(m))
    _, idx, side, q, p, resid = best
    g = QuadraticObservable(space, 0.0, np.zeros(2 * n), np.where(np.abs(q) > tol, q, 0.0))
    terms = g.terms()
    scale = max(abs(v) for v in terms.values())
    first = terms[min(terms)]
    t = scale if first > 0 else -scale
    r = _rationalize(g / t)
    return GeneratorResult(r, float(t), None if idx == 0 else _exact_parity(p), side, resid)


def _rationalize(g: QuadraticObservable, denom: int = 1000) -> QuadraticObservable:
    """Snap coefficients to nearby small rationals when they are within 1e-9."""
    def snap(x):
        f = Fraction(float(x)).limit_denominator(denom)
        return f if abs(float(f) - float(x)) < 1e-9 else float(x)

    quad = np.vectorize(snap, otypes=[object])(np.asarray(g.quadratic, dtype=float))
    lin = np.vectorize(snap, otypes=[object])(np.asarray(g.linear, dtype=float))
    return QuadraticObservable(g.space, Fraction(0), lin, quad)


def _exact_parity(p: np.ndarray) -> np.ndarray:
    return la.qarray(np.rint(p).astype(int))


def shear(space: PhaseSpace, q_label: str, p_label: str, t=1) -> SymplecticMap:
    """Exact time-``t`` flow of ``q_label * p_label``."""
    return linear_flow(space[q_label] * space[p_label], t)


# -- Gaussian states ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GaussianState:
    space: PhaseSpace
    mean: np.ndarray
    cov: np.ndarray
    log_norm: float = 0.0

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(self.space.dim)
        cov = np.asarray(self.cov, dtype=float).reshape(self.space.dim, self.space.dim)
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-9 * max(1.0, np.max(np.abs(cov))):
            raise ValueError("covariance must be symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", (cov + cov.T) / 2)

    @classmethod
    def vacuum(cls, space: PhaseSpace) -> "GaussianState":
        return cls(space, np.zeros(space.dim), 0.5 * np.eye(space.dim))

    @classmethod
    def random(cls, space: PhaseSpace, rng: np.random.Generator, squeeze: float = 0.5) -> "GaussianState":
        """Thermal state ``nu >= 1/2`` transformed by a random symplectic matrix."""
        n = space.n_pairs
        a = rng.normal(size=(2 * n, 2 * n)) * squeeze
        k = la.to_float(la.omega(n)) @ (a + a.T) / 2
        s = scipy.linalg.expm(k)
        nu = 0.5 + rng.uniform(0, 1, size=n)
        cov = s @ np.diag(np.concatenate([nu, nu])) @ s.T
        return cls(space, rng.normal(size=2 * n), cov)

    def physicality_margin(self) -> float:
        """Smallest eigenvalue of ``cov + (i/2) Omega``; nonnegative for physical states."""
        om = la.to_float(la.omega(self.space.n_pairs))
        return float(np.min(np.linalg.eigvalsh(self.cov + 0.5j * om)))

    def is_physical(self, tol: float = 1e-9) -> bool:
        return self.physicality_margin() >= -tol


def gaussian_apply(state: GaussianState, m, tol: float = 1e-9) -> GaussianState:
    """Push the state forward along the point map ``z -> M z + b``."""
    mat = np.asarray(m.matrix, dtype=float)
    if mat.shape != (state.space.dim, state.space.dim):
        raise ValueError("map dimension does not match the state")
    if not is_symplectic(mat, tol):
        raise ValueError("gaussian_apply needs a symplectic map")
    off = np.asarray(m.offset, dtype=float)
    target = getattr(m, "target", state.space)
    return GaussianState(target, mat @ state.mean + off, mat @ state.cov @ mat.T, state.log_norm)


def gaussian_condition(state: GaussianState, coordinate, value: float = 0.0) -> GaussianState:
    """Condition on one coordinate, discard its conjugate partner.

    Mean and covariance come from the Schur complement; ``log_norm``
    accumulates the log density of the conditioned coordinate at ``value``.
    """
    sp = state.space
    i = sp.index(coordinate) if isinstance(coordinate, str) else int(coordinate)
    var = state.cov[i, i]
    if var <= 1e-14:
        raise AlreadySharpError(f"coordinate {sp.labels[i]} has zero variance")
    j = sp.partner(i)
    rest = [k for k in range(sp.dim) if k not in (i, j)]
    gain = state.cov[rest, i] / var
    mean = state.mean[rest] + gain * (value - state.mean[i])
    cov = state.cov[np.ix_(rest, rest)] - np.outer(gain, state.cov[i, rest])
    log_norm = state.log_norm - 0.5 * math.log(2 * math.pi * var) - (value - state.mean[i]) ** 2 / (2 * var)
    pair = i % sp.n_pairs
    new = PhaseSpace(tuple(l for k, l in enumerate(sp.q_labels) if k != pair),
                     tuple(l for k, l in enumerate(sp.p_labels) if k != pair))
    return GaussianState(new, mean, cov, log_norm)


def evolve(state: GaussianState, hamiltonian: QuadraticObservable, t: float) -> GaussianState:
    if hamiltonian.space.labels != state.space.labels:
        raise ValueError("hamiltonian and state live on different spaces")
    return gaussian_apply(state, linear_flow(hamiltonian, float(t)))


def reduce_state(state: GaussianState, path: Sequence[TrivializationMap]) -> GaussianState:
    """Quantum reduction of a Gaussian: apply ``U``, condition on the constraint, drop the gauge partner."""
    for tm in path:
        if tm.map.source.labels != state.space.labels:
            raise ReductionError(f"{tm.kind} does not act on {state.space.labels}")
        state = gaussian_apply(state, tm.map.inverse())
        state = gaussian_condition(state, tm.constraint_label, 0.0)
        if tm.relabel:
            renamed = PhaseSpace(tuple(tm.relabel.get(x, x) for x in state.space.q_labels),
                                 tuple(tm.relabel.get(x, x) for x in state.space.p_labels))
            state = GaussianState(renamed, state.mean, state.cov, state.log_norm)
    return state


def transport(state: GaussianState, a: Frame, b: Frame) -> GaussianState:
    """Re-express a state given in frame ``b`` coordinates in frame ``a`` coordinates."""
    if state.space.labels != b.space.labels:
        raise ValueError("state is not written in the source frame")
    return gaussian_apply(state, frame_transformation(a, b))
