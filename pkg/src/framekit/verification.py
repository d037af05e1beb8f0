"""The reference checks run by ``framekit verify``.

Each criterion rebuilds its expected values from closed-form expressions in
the masses and compares them with the pipeline output.  Symbolic mass claims
are checked at seeded random rational triples.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from . import linalg as la
from .abelian import XFamily, check_abelian, convert, gauge_fix, intermediate_symplectomorphism
from .algebra import PhaseSpace, QuadraticObservable, is_symplectic, poisson_bracket
from .constraints import Multiplier, dirac_bracket, dirac_matrix, run_consistency
from .frames import all_frames, emitted_maps_symplectic, frame, frame_transformation, mass_limit_check
from .model import MassConfig, auxiliary_hamiltonian, build_relative_model, relative_lagrangian_identity
from .quantize import GaussianState, evolve, find_generator, frame_change_via_neutral, gaussian_apply, reduce_to_frame
from .report import AnalysisResult, Report

DEFAULT_SEED = 20240101


@dataclass(frozen=True)
class Criterion:
    number: int
    name: str
    analysis: str
    limit: float
    check: Callable[[random.Random], tuple[bool, dict]]


def _masses(rng: random.Random, count: int) -> list[MassConfig]:
    return [MassConfig.random(rng) for _ in range(count)]


def _chain(masses: MassConfig, weight=Fraction(1)) -> list[QuadraticObservable]:
    sp = PhaseSpace.standard(["1", "2", "3", "4"])
    mus = masses.reduced
    return [sp["p4"], (sp["q1"] + sp["q2"] + sp["q3"]) * weight,
            sum((sp[f"p{i + 1}"] / mus[i] for i in range(3)), sp.zero()) * weight,
            sp["q4"] * (masses.mu * weight * weight)]


def _multiplier_zero(ms: tuple[Multiplier, ...]) -> bool:
    return len(ms) == 1 and ms[0].status == "zero"


def c1_consistency(rng):
    """Dirac's algorithm on the auxiliary-variable Hamiltonian."""
    samples = []
    ok = True
    for m in _masses(rng, 10):
        h, p4 = auxiliary_hamiltonian(m)
        system, _ = run_consistency(h, [p4], discard_fixed_pairs=False)
        good = list(system.constraints) == _chain(m) and _multiplier_zero(system.multipliers)
        # with a halved q4 coupling the chain is rescaled and y is still forced to zero
        h2, _ = auxiliary_hamiltonian(m, Fraction(1, 2))
        s2, _ = run_consistency(h2, [p4], discard_fixed_pairs=False)
        half = list(s2.constraints) == _chain(m, Fraction(1, 2)) and _multiplier_zero(s2.multipliers)
        ok = ok and good and half
        samples.append({"masses": m.as_strings(), "chain": good, "halved_coupling": half})
    return ok, {"samples": samples}


def _dirac_expected(m: MassConfig) -> np.ndarray:
    mus = m.reduced
    mu = sum(1 / x for x in mus)
    d = la.zeros(6, 6)
    for i in range(3):
        for j in range(3):
            v = (1 if i == j else 0) - 1 / (mu * mus[i])
            d[i, 3 + j] = v
            d[3 + j, i] = -v
    return d


def c2_dirac(rng):
    ok = all(la.equal(dirac_matrix(build_relative_model(m)), _dirac_expected(m)) for m in _masses(rng, 25))
    unit = dirac_matrix(build_relative_model(MassConfig.of(1, 1, 1)))[:3, 3:]
    unit_ok = all(unit[i, j] == (Fraction(2, 3) if i == j else Fraction(-1, 3)) for i in range(3) for j in range(3))
    return ok and unit_ok, {"random_triples": ok, "unit_masses": unit}


def _h_q1(m: MassConfig, sp: PhaseSpace) -> QuadraticObservable:
    m1, m2, m3 = m.masses
    p2, p3 = sp["pi2"], sp["pi3"]
    return ((m1 + m2) / (m1 * m2) * p2 ** 2 + (m1 + m3) / (m1 * m3) * p3 ** 2 + p2 * p3 * (2 / m1)) / 2


def _h_p1(m: MassConfig, sp: PhaseSpace) -> QuadraticObservable:
    u1, u2, u3 = m.reduced
    r2, r3 = sp["pi2"], sp["pi3"]
    return ((u1 + u2) / u2 ** 2 * r3 ** 2 + (u1 + u3) / u3 ** 2 * r2 ** 2 - r2 * r3 * (2 * u1 / (u2 * u3))) / 2


def c3_hamiltonians(rng):
    ok = True
    for m in _masses(rng, 10):
        s = build_relative_model(m)
        fq, fp = frame(s, "q1"), frame(s, "p1")
        ok = ok and fq.reduced_hamiltonian == _h_q1(m, fq.space) and fp.reduced_hamiltonian == _h_p1(m, fp.space)
    s = build_relative_model(MassConfig.of(1, 1, 1))
    fq, fp = frame(s, "q1"), frame(s, "p1")
    a, b = fq.space["pi2"], fq.space["pi3"]
    unit = fq.reduced_hamiltonian == a ** 2 + b ** 2 + a * b and fp.reduced_hamiltonian == (a ** 2 + b ** 2 - a * b) * 3
    return ok and unit, {"random_triples": ok, "unit_masses": unit, "H_q1": fq.reduced_hamiltonian,
                         "H_p1": fp.reduced_hamiltonian}


# rows of w_target in terms of barred source coordinates, unit masses
_UNIT_MAPS = {
    ("q1", "q2"): [[-1, 0, 0, 0], [-1, 1, 0, 0], [0, 0, -1, -1], [0, 0, 0, 1]],
    ("p1", "p2"): [[-1, -1, 0, 0], [0, 1, 0, 0], [0, 0, -1, 0], [0, 0, -1, 1]],
    ("q1", "p1"): [[Fraction(2, 3), Fraction(1, 3), 0, 0], [Fraction(1, 3), Fraction(2, 3), 0, 0],
                   [0, 0, 2, -1], [0, 0, -1, 2]],
}


def c4_transformations(rng):
    s = build_relative_model(MassConfig.of(1, 1, 1))
    fr = all_frames(s)
    verbatim = {f"{b}->{a}": la.equal(frame_transformation(fr[a], fr[b]).matrix, la.qarray(rows))
                for (a, b), rows in _UNIT_MAPS.items()}
    names = list(fr)
    t = {(a, b): frame_transformation(fr[a], fr[b]) for a in names for b in names}
    trips = all(la.equal((t[a, b] @ t[b, c]).matrix, t[a, c].matrix) for a in names for b in names for c in names)
    return all(verbatim.values()) and trips, {"verbatim": verbatim, "compositions": trips}


def c5_generator(rng):
    s = build_relative_model(MassConfig.of(1, 1, 1))
    t = frame_transformation(frame(s, "q1"), frame(s, "p1"))
    g = find_generator(t)
    sp = t.target
    want = (sp["u2"] - sp["u3"]) * (sp["pi2"] - sp["pi3"])
    ratio = {k: float(v) / float(want.terms()[k]) for k, v in g.generator.terms().items()}
    prop = set(ratio) == set(want.terms()) and max(ratio.values()) - min(ratio.values()) < 1e-9
    mag = abs(g.abs_t - math.log(3) / 2) < 1e-9
    recon = float(np.max(np.abs(g.reconstruct() - la.to_float(t.matrix)))) < 1e-9
    return prop and mag and recon, {"r": g.generator, "t": g.t, "abs_t_minus_log3_over_2": g.abs_t - math.log(3) / 2,
                                    "direction": g.direction, "proportional": prop, "reexponentiated": recon}


def _intermediate_expected(m: MassConfig, condition: str):
    sp = PhaseSpace.standard(["1", "2", "3"])
    mus, mu = m.reduced, m.mu
    phi1 = sp["q1"] + sp["q2"] + sp["q3"]
    phi2 = sum((sp[f"p{i + 1}"] / mus[i] for i in range(3)), sp.zero())
    h = sum((sp[f"p{i + 1}"] ** 2 / (2 * mus[i]) for i in range(3)), sp.zero())
    if condition == "p":
        obs = {f"q{i}": sp[f"q{i}"] - phi1 / (mu * mus[i - 1]) for i in (1, 2, 3)}
        obs.update({f"p{i}": sp[f"p{i}"] for i in (1, 2, 3)})
        return phi2, obs, h
    obs = {f"q{i}": sp[f"q{i}"] for i in (1, 2, 3)}
    obs.update({f"p{i}": sp[f"p{i}"] - phi2 / mu for i in (1, 2, 3)})
    return phi1, obs, h - phi2 ** 2 / (2 * mu)


def c6_abelian(rng):
    ok, canon_ok, rand_ok, fix_ok, map_ok = True, True, True, True, True
    for k, m in enumerate(_masses(rng, 25)):
        s = build_relative_model(m)
        ext = convert(s)
        canon_ok &= all(check_abelian(ext).values())
        if k < 10:
            x = XFamily(m.mu).random(rng)
            rand_ok &= all(check_abelian(convert(s, x)).values())
        for cond in ("p", "q"):
            ip = gauge_fix(ext, cond)
            c, obs, h = _intermediate_expected(m, cond)
            fix_ok &= ip.constraint == c and dict(ip.observables) == obs and ip.hamiltonian == h
        v = intermediate_symplectomorphism(m).a
        map_ok &= all(v[i, j] == (1 if i == j else 0) - 1 / (m.mu * m.reduced[j]) for i in range(3) for j in range(3))
    ok = canon_ok and rand_ok and fix_ok and map_ok
    return ok, {"canonical_X": canon_ok, "random_X": rand_ok, "gauge_fix": fix_ok, "S_q_to_p": map_ok}


def c7_paths(rng):
    red_ok = True
    masses = _masses(rng, 10)
    for m in masses:
        s = build_relative_model(m)
        for name, fr in all_frames(s).items():
            red_ok &= reduce_to_frame(name, m).hamiltonian == fr.reduced_hamiltonian
    neutral = True
    for m in masses[:2]:
        fr = all_frames(build_relative_model(m))
        neutral &= all(frame_change_via_neutral(fr[a], fr[b], m).equals(frame_transformation(fr[a], fr[b]))
                       for a in fr for b in fr)
    return red_ok and neutral, {"reductions": red_ok, "neutral_frame_changes": neutral}


def c8_mass_limit(rng):
    pos = mass_limit_check(1, "relative-position")
    mom = mass_limit_check(1, "relative-momentum")
    bound = pos.bracket_bound_ok(2) and pos.bracket_monotone
    rates = {t.kind: t.hamiltonian_rate() for t in (pos, mom)}
    # O(1/m): deviation * m stays bounded and settles to a constant
    order = all(max(r) < 10 and abs(r[-1] - r[-2]) < 1e-6 * max(1.0, r[-1]) for r in rates.values())
    mono = pos.hamiltonian_monotone and mom.hamiltonian_monotone
    return bound and order and mono, {
        "bracket_deviation": [r.bracket_deviation for r in pos.rows],
        "bound_2_over_m": bound, "hamiltonian_rates": rates, "order_one_over_m": order}


def c9_gaussian(rng):
    s = build_relative_model(MassConfig.random(rng))
    f1, f2 = frame(s, "q1"), frame(s, "q2")
    t12 = frame_transformation(f2, f1)
    nrng = np.random.default_rng(rng.randrange(2 ** 32))
    state = GaussianState.random(f1.space, nrng)
    devs = []
    for t in (0.1, 1.0, 10.0):
        a = gaussian_apply(evolve(state, f1.reduced_hamiltonian, t), t12)
        b = evolve(gaussian_apply(state, t12), f2.reduced_hamiltonian, t)
        devs.append(float(np.max(np.abs(a.cov - b.cov))))
    return state.is_physical() and max(devs) <= 1e-9, {"cov_deviation": devs, "physical": state.is_physical()}


def c10_lagrangian(rng):
    ok = True
    for _ in range(100):
        m = MassConfig.random(rng)
        v = [Fraction(rng.randint(-10 ** 6, 10 ** 6), rng.randint(1, 10 ** 6)) for _ in range(3)]
        ok &= relative_lagrangian_identity(m, v, strict=False).ok
        w = v[0]
        ok &= all(x == 0 for x in relative_lagrangian_identity(m, [w, w, w], strict=False).values)
    return ok, {"samples": 100, "identity": ok}


def _random_observable(rng: random.Random, sp: PhaseSpace, degree: int = 2) -> QuadraticObservable:
    def r():
        return Fraction(rng.randint(-9, 9), rng.randint(1, 9))

    n = sp.dim
    q = la.zeros(n, n)
    if degree == 2:
        for i in range(n):
            for j in range(i, n):
                q[i, j] = q[j, i] = r()
    return QuadraticObservable(sp, r(), la.qarray([r() for _ in range(n)]), q)


def c11_properties(rng, determinism: Callable[[], bool] | None = None):
    sp = PhaseSpace.standard(["1", "2", "3"])
    anti = jac = leib = True
    for _ in range(30):
        f, g, h = (_random_observable(rng, sp) for _ in range(3))
        pb = poisson_bracket
        anti &= pb(f, g) == -pb(g, f)
        jac &= (pb(f, pb(g, h)) + pb(g, pb(h, f)) + pb(h, pb(f, g))).is_zero()
        a, b = _random_observable(rng, sp, 1), _random_observable(rng, sp, 1)
        leib &= pb(f, a * b) == pb(f, a) * b + a * pb(f, b)
    unamb = True
    for m in _masses(rng, 5):
        s = build_relative_model(m)
        cls = s.classification
        for _ in range(4):
            f, g = _random_observable(rng, sp, 1), _random_observable(rng, sp, 1)
            phi = s.constraints[rng.randrange(2)] * Fraction(rng.randint(1, 9))
            unamb &= dirac_bracket(f + phi, g, cls) == dirac_bracket(f, g, cls)
    symp = all(emitted_maps_symplectic(build_relative_model(m)) for m in _masses(rng, 2))
    m = MassConfig.random(rng)
    fr = all_frames(build_relative_model(m))
    symp &= all(is_symplectic(frame_change_via_neutral(fr[a], fr[b], m).matrix).ok for a in fr for b in fr)
    det = determinism() if determinism else True
    ok = anti and jac and leib and unamb and symp and det
    return ok, {"antisymmetry": anti, "jacobi": jac, "leibniz": leib, "dirac_unambiguous": unamb,
                "maps_symplectic": symp, "report_deterministic": det}


def _report_is_deterministic() -> bool:
    from .scenario import ScenarioConfig, run_scenario

    cfg = ScenarioConfig(MassConfig.of(1, 2, 3), ("consistency", "dirac-bracket", "abelianize", "gaussian"), 7)
    return run_scenario(cfg).to_json() == run_scenario(cfg).to_json()


CRITERIA = (
    Criterion(1, "consistency-chain", "consistency", 1.0, c1_consistency),
    Criterion(2, "dirac-bracket", "dirac-bracket", 1.0, c2_dirac),
    Criterion(3, "reduced-hamiltonians", "frames", 1.0, c3_hamiltonians),
    Criterion(4, "frame-transformations", "transformations", 1.0, c4_transformations),
    Criterion(5, "generator-recovery", "transformations", 1.0, c5_generator),
    Criterion(6, "abelianization", "abelianize", 2.0, c6_abelian),
    Criterion(7, "path-equivalence", "reduce", 5.0, c7_paths),
    Criterion(8, "heavy-mass-limit", "mass-limit", 2.0, c8_mass_limit),
    Criterion(9, "gaussian-consistency", "gaussian", 5.0, c9_gaussian),
    Criterion(10, "lagrangian-identity", "lagrangian", 1.0, c10_lagrangian),
    Criterion(11, "property-suites", "properties", 10.0, lambda rng: c11_properties(rng, _report_is_deterministic)),
)


def select(only: str | None) -> tuple[Criterion, ...]:
    """Criteria matching a number, a criterion name or an analysis name."""
    if only is None:
        return CRITERIA
    picked = tuple(c for c in CRITERIA if only in (str(c.number), c.name, c.analysis))
    if not picked:
        raise KeyError(only)
    return picked


def run_criterion(c: Criterion, seed: int = DEFAULT_SEED) -> AnalysisResult:
    """One criterion with its own seeded generator; exceeding the time limit fails it."""
    rng = random.Random(f"{seed}:{c.number}")
    start = time.perf_counter()
    try:
        ok, data = c.check(rng)
        err = None
    except Exception as exc:  # noqa: BLE001 - becomes a verdict
        ok, data, err = False, {}, f"{type(exc).__name__}: {exc}"
    elapsed = time.perf_counter() - start
    if elapsed > c.limit:
        ok = False
        err = (err + "; " if err else "") + f"time limit {c.limit} s exceeded"
    res = AnalysisResult(f"{c.number}. {c.name}", bool(ok), data, err, measured=elapsed)
    return res


def verify_reference(seed: int = DEFAULT_SEED, only: str | None = None, timing: bool = False) -> Report:
    report = Report("verify", {"seed": seed, "only": only or "all"})
    for c in select(only):
        res = run_criterion(c, seed)
        if timing:
            res.elapsed = res.measured
        report.results.append(res)
    return report
