"""Scenario configs and the analysis pipeline behind ``framekit run``."""

from __future__ import annotations

import random
import re
import sys
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import linalg as la
from .abelian import check_abelian, convert, gauge_fix, intermediate_symplectomorphism, random_valid_X
from .algebra import is_symplectic
from .constraints import dirac_matrix
from .frames import (all_frames, darboux_condition_rank, frame_transformation, induced_brackets, is_darboux,
                     mass_limit_check, naive_embedding)
from .model import MassConfig, MassDomainError, build_relative_model, derive_relative_model
from .quantize import (GaussianState, evolve, find_generator, frame_change_via_neutral, gaussian_apply,
                       reduce_state, reduce_to_frame, reduction_path)
from .report import AnalysisResult, Report

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ANALYSES = ("consistency", "dirac-bracket", "frames", "transformations", "abelianize", "reduce", "mass-limit",
            "gaussian")
OUTPUTS = ("text", "json")
KEYS = ("masses", "analyses", "seed", "output")
GAUSSIAN_TIMES = (0.1, 1.0, 10.0)


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)
        self.line = line
        self.column = column


@dataclass(frozen=True)
class ScenarioConfig:
    masses: MassConfig
    analyses: tuple[str, ...]
    seed: int = 0
    output: str = "text"

    def echo(self) -> dict:
        return {"masses": self.masses.as_strings(), "analyses": list(self.analyses), "seed": self.seed,
                "output": self.output}


def _locate(text: str, key: str) -> tuple[int | None, int | None]:
    for n, line in enumerate(text.splitlines(), 1):
        m = re.match(rf"\s*(\"?{re.escape(key)}\"?)\s*=", line)
        if m:
            return n, m.start(1) + 1
    return None, None


def parse_config(text: str) -> ScenarioConfig:
    """Strict parse of a TOML scenario; every problem is reported with its position."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+), column (\d+)", str(exc))
        msg = re.sub(r"\s*\(at (line \d+, column \d+|end of document)\)", "", str(exc))
        if m:
            where = tuple(map(int, m.groups()))
        else:
            # tomli reports truncated input only as "end of document"
            lines = text.rstrip("\n").split("\n")
            where = (len(lines), len(lines[-1]) + 1)
        raise ConfigError(f"invalid TOML: {msg}", *where) from None
    for key in raw:
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", *_locate(text, key))
    for key in ("masses", "analyses"):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")
    masses = raw["masses"]
    if not isinstance(masses, list):
        raise ConfigError("masses must be a list of rational strings", *_locate(text, "masses"))
    try:
        mc = MassConfig(tuple(masses))
    except MassDomainError as exc:
        raise ConfigError(str(exc), *_locate(text, "masses")) from None
    if mc.n != 3:
        raise ConfigError("only three-particle scenarios are supported", *_locate(text, "masses"))
    analyses = raw["analyses"]
    if not isinstance(analyses, list) or not analyses:
        raise ConfigError("analyses must be a nonempty list", *_locate(text, "analyses"))
    for a in analyses:
        if a not in ANALYSES:
            raise ConfigError(f"unknown analysis {a!r}; expected one of {', '.join(ANALYSES)}",
                              *_locate(text, "analyses"))
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed must be an integer", *_locate(text, "seed"))
    output = raw.get("output", "text")
    if output not in OUTPUTS:
        raise ConfigError(f"output must be 'text' or 'json', got {output!r}", *_locate(text, "output"))
    ordered = tuple(a for a in ANALYSES if a in analyses)
    return ScenarioConfig(mc, ordered, seed, output)


# -- analyses ----------------------------------------------------------------------

def analysis_consistency(masses: MassConfig, seed: int) -> AnalysisResult:
    system, trace = derive_relative_model(masses)
    steps = trace.to_dict()
    fixed = [s["detail"] for s in steps if s["detail"].startswith("y =")]
    found = [s["examined"] for s in steps if s["outcome"] in ("cycle", "stop1")][:4]
    ok = len(found) == 4 and fixed == ["y = 0"] and system.space.n_pairs == 3
    return AnalysisResult("consistency", ok, {
        "constraint_chain": found,
        "multiplier": fixed[0] if fixed else "unresolved",
        "trace": steps,
        "final_constraints": list(system.constraints),
    })


def analysis_dirac(masses: MassConfig, seed: int) -> AnalysisResult:
    system = build_relative_model(masses)
    d = dirac_matrix(system)
    qp = d[:3, 3:]
    expected = la.qarray([[(1 if i == j else 0) - masses.heavy_fraction(i) for j in range(3)] for i in range(3)])
    ok = la.equal(qp, expected) and la.is_zero(d[:3, :3]) and la.is_zero(d[3:, 3:])
    return AnalysisResult("dirac-bracket", ok, {
        "classification": {"first_class": len(system.classification.first_class),
                           "second_class": len(system.classification.second_class)},
        "C": system.classification.c_matrix,
        "qp_block": qp,
        "matrix": d,
    })


def analysis_frames(masses: MassConfig, seed: int) -> AnalysisResult:
    system = build_relative_model(masses)
    d = dirac_matrix(system)
    rank = darboux_condition_rank(system)
    frames = all_frames(system)
    out, ok = {}, rank == (13, 8)
    for name, fr in frames.items():
        darboux = is_darboux(fr.embedding, d, system)
        ok = ok and darboux
        out[name] = {"coordinates": fr.space, "embedding": fr.embedding.expressions(),
                     "hamiltonian": fr.reduced_hamiltonian, "darboux": darboux}
    naive = naive_embedding(masses, 1)
    return AnalysisResult("frames", ok, {
        "darboux_conditions": {"total": rank[0], "independent": rank[1]},
        "frames": out,
        "naive_q1_brackets": induced_brackets(naive, d, system),
    })


def analysis_transformations(masses: MassConfig, seed: int) -> AnalysisResult:
    system = build_relative_model(masses)
    frames = all_frames(system)
    maps, ok = {}, True
    names = list(frames)
    for a in names:
        for b in names:
            if a == b:
                continue
            t = frame_transformation(frames[a], frames[b])
            symp = is_symplectic(t.matrix).ok
            ok = ok and symp
            maps[f"{b}->{a}"] = {"matrix": t.matrix, "symplectic": symp}
    t = {(a, b): frame_transformation(frames[a], frames[b]) for a in names for b in names}
    trip = all(la.equal((t[a, b] @ t[b, c]).matrix, t[a, c].matrix) for a in names for b in names for c in names)
    gen = find_generator(frame_transformation(frames["q1"], frames["p1"]))
    return AnalysisResult("transformations", ok and trip, {
        "maps": maps,
        "compositions_exact": trip,
        "generator_p1_to_q1": {"r": gen.generator, "t": gen.t, "abs_t": gen.abs_t, "side": gen.side,
                               "direction": gen.direction, "residual": gen.residual,
                               "parity": gen.parity_factor if gen.parity_factor is not None else "none"},
    })


def analysis_abelianize(masses: MassConfig, seed: int) -> AnalysisResult:
    system = build_relative_model(masses)
    rng = random.Random(seed)
    ext = convert(system)
    checks = check_abelian(ext)
    x_rand = random_valid_X(masses.mu, rng)
    checks_rand = check_abelian(convert(system, x_rand))
    ip, iq = gauge_fix(ext, "p"), gauge_fix(ext, "q")
    round_p = ip.add_gauge(system.constraints[0]).same_structure(system)
    round_q = iq.add_gauge(system.constraints[1]).equivalent_to(system)
    canon = intermediate_symplectomorphism(masses).canonicity()
    ok = all(checks.values()) and all(checks_rand.values()) and round_p and round_q and canon["dpbar_dp"] and canon[
        "dq_dqbar_is_transpose"]
    return AnalysisResult("abelianize", ok, {
        "X": ext.x,
        "constraints": list(ext.constraints),
        "dirac_observables": dict(ext.dirac_observables),
        "hamiltonian": ext.hamiltonian,
        "checks": checks,
        "random_X": {"X": x_rand, "checks": checks_rand},
        "gauge_p": {"constraint": ip.constraint, "observables": dict(ip.observables), "hamiltonian": ip.hamiltonian,
                    "round_trip": round_p},
        "gauge_q": {"constraint": iq.constraint, "observables": dict(iq.observables), "hamiltonian": iq.hamiltonian,
                    "round_trip": round_q},
        "intermediate_map": canon,
    })


def analysis_reduce(masses: MassConfig, seed: int) -> AnalysisResult:
    system = build_relative_model(masses)
    frames = all_frames(system)
    out, ok = {}, True
    for name, fr in frames.items():
        red = reduce_to_frame(name, masses)
        match = red.space.labels == fr.space.labels and red.hamiltonian == fr.reduced_hamiltonian
        ok = ok and match
        out[name] = {"path": [s.kind for s in red.stages], "hamiltonian": red.hamiltonian,
                     "observables": dict(red.observables), "matches_frame": match}
    neutral = all(frame_change_via_neutral(frames[a], frames[b], masses).equals(frame_transformation(frames[a], frames[b]))
                  for a in frames for b in frames)
    return AnalysisResult("reduce", ok and neutral, {"reductions": out, "neutral_frame_changes_exact": neutral})


def analysis_mass_limit(masses: MassConfig, seed: int) -> AnalysisResult:
    out, ok = {}, True
    for kind in ("relative-position", "relative-momentum"):
        tab = mass_limit_check(1, kind)
        rates = tab.hamiltonian_rate()
        good = tab.bracket_bound_ok(2) and tab.bracket_monotone and tab.hamiltonian_monotone
        ok = ok and good
        out[kind] = {"rows": [{"k": r.k, "bracket_deviation": r.bracket_deviation,
                               "hamiltonian_deviation": r.hamiltonian_deviation, "rate": rate}
                              for r, rate in zip(tab.rows, rates)],
                     "bracket_bound": tab.bracket_bound_ok(2), "monotone": tab.bracket_monotone}
    return AnalysisResult("mass-limit", ok, out)


def analysis_gaussian(masses: MassConfig, seed: int) -> AnalysisResult:
    system = build_relative_model(masses)
    f1, f2 = all_frames(system)["q1"], all_frames(system)["q2"]
    t12 = frame_transformation(f2, f1)
    rng = np.random.default_rng(seed)
    state = GaussianState.random(f1.space, rng)
    rows, ok = [], state.is_physical()
    for t in GAUSSIAN_TIMES:
        a = gaussian_apply(evolve(state, f1.reduced_hamiltonian, t), t12)
        b = evolve(gaussian_apply(state, t12), f2.reduced_hamiltonian, t)
        dc = float(np.max(np.abs(a.cov - b.cov)))
        dm = float(np.max(np.abs(a.mean - b.mean)))
        ok = ok and dc <= 1e-9 * max(1.0, float(np.max(np.abs(a.cov)))) and a.is_physical()
        rows.append({"t": t, "cov_deviation": dc, "mean_deviation": dm, "physical": a.is_physical()})
    ext = convert(system)
    big = GaussianState.random(ext.space, rng)
    path = reduction_path("q1", masses)
    red = reduce_to_frame("q1", masses)
    s1 = reduce_state(evolve(big, ext.hamiltonian, 1.0), path)
    s2 = evolve(reduce_state(big, path), red.hamiltonian, 1.0)
    dev = float(np.max(np.abs(s1.cov - s2.cov)))
    ok = ok and dev <= 1e-9 * max(1.0, float(np.max(np.abs(s1.cov))))
    return AnalysisResult("gaussian", ok, {
        "initial": {"mean": state.mean, "cov": state.cov, "margin": state.physicality_margin()},
        "transport_q1_to_q2": rows,
        "reduction_commutes_with_evolution": {"cov_deviation": dev, "log_norm": s1.log_norm},
    })


RUNNERS: dict[str, Callable[[MassConfig, int], AnalysisResult]] = {
    "consistency": analysis_consistency,
    "dirac-bracket": analysis_dirac,
    "frames": analysis_frames,
    "transformations": analysis_transformations,
    "abelianize": analysis_abelianize,
    "reduce": analysis_reduce,
    "mass-limit": analysis_mass_limit,
    "gaussian": analysis_gaussian,
}


def run_scenario(config: ScenarioConfig) -> Report:
    """Run the requested analyses in pipeline order; failures become verdicts, not exceptions."""
    report = Report("scenario", config.echo())
    for name in config.analyses:
        start = time.perf_counter()
        try:
            res = RUNNERS[name](config.masses, config.seed)
        except Exception as exc:  # noqa: BLE001 - carried into the report
            res = AnalysisResult(name, False, error=f"{type(exc).__name__}: {exc}")
        res.measured = time.perf_counter() - start
        report.results.append(res)
    return report
