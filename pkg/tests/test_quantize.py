import math
from fractions import Fraction

import numpy as np
import pytest
import scipy.linalg

import framekit.quantize as qz
from framekit import linalg as la
from framekit.abelian import XFamily, convert
from framekit.algebra import PhaseSpace, SymplecticMap, linear_flow, poisson_bracket
from framekit.frames import all_frames, frame_transformation
from framekit.model import MassConfig, build_relative_model
from framekit.quantize import (AlreadySharpError, GaussianState, ReductionError, RepresentationError,
                               UnsupportedFramePairError, evolve, find_generator, frame_change_via_neutral,
                               gaussian_apply, gaussian_condition, point_parities, reduce_state, reduce_to_frame,
                               reduction_path, shear, symmetry_reduce, transport, trivialization)

NAMES = [f"{k}{a}" for k in "qp" for a in (1, 2, 3)]


def test_unknown_trivialization(unit_masses):
    with pytest.raises(ValueError):
        trivialization("T_x", None, unit_masses)
    with pytest.raises(ValueError):
        trivialization("T_qi", 4, unit_masses)
    with pytest.raises(UnsupportedFramePairError):
        reduction_path("x1", unit_masses)


@pytest.mark.parametrize("kind", ["T_p", "T_q"])
def test_extended_trivializations_isolate_a_constraint(generic_masses, kind):
    ext = convert(build_relative_model(generic_masses))
    tm = trivialization(kind, None, generic_masses)
    assert tm.map.is_exact
    images = [tm.conjugate(c) for c in ext.constraints]
    idx = ext.space.index(tm.constraint_label)
    hit = [c for c in images if c.terms().keys() == {(idx,)}]
    assert len(hit) == 1


@pytest.mark.parametrize("anchor", [1, 2, 3])
def test_rotation_matches_float_flow(anchor):
    space = PhaseSpace.standard(["1", "2", "3"])
    j, k = (anchor % 3) + 1, ((anchor + 1) % 3) + 1
    gen, rot = qz._rotation(space, str(j), str(k))
    flow = linear_flow(gen * 1.0, -math.pi / 2)
    assert np.allclose(la.to_float(rot.matrix), np.asarray(flow.matrix, dtype=float), atol=1e-12)


@pytest.mark.parametrize("name", NAMES)
@pytest.mark.parametrize("masses", [(1, 1, 1), (2, Fraction(3, 7), 5)])
def test_reduction_reproduces_frame(name, masses):
    masses = MassConfig.of(*masses)
    red = reduce_to_frame(name, masses)
    fr = all_frames(build_relative_model(masses))[name]
    assert red.space.labels == fr.space.labels
    assert red.hamiltonian == fr.reduced_hamiltonian
    assert not red.constraints


def test_reduction_needs_canonical_x(generic_masses, rng):
    fam = XFamily(generic_masses.mu)
    assert reduce_to_frame("q2", generic_masses, fam.canonical()).hamiltonian == \
        reduce_to_frame("q2", generic_masses).hamiltonian
    # the trivializations are built for the canonical choice
    with pytest.raises(ReductionError):
        reduce_to_frame("q2", generic_masses, fam.random(rng))


def test_wrong_path_order_rejected(generic_masses):
    ext = convert(build_relative_model(generic_masses))
    path = reduction_path("q1", generic_masses)
    with pytest.raises(ReductionError):
        symmetry_reduce(ext, path[::-1])
    # eliminating the wrong pair leaves a gauge dependence
    with pytest.raises(ReductionError):
        symmetry_reduce(ext, [(path[0], ("q", "p"))])


def test_neutral_frame_change_agrees(generic_masses):
    fr = all_frames(build_relative_model(generic_masses))
    for a in ("q1", "p3"):
        for b in ("q2", "p1"):
            assert frame_change_via_neutral(fr[a], fr[b], generic_masses).equals(frame_transformation(fr[a], fr[b]))


def test_point_parities():
    ps = point_parities(2)
    assert len(ps) == 8
    assert np.array_equal(ps[0], np.eye(4))
    for p in ps:
        assert is_sym(p)


def is_sym(m):
    om = la.to_float(la.omega(m.shape[0] // 2))
    return np.allclose(m.T @ om @ m, om)


def test_generator_q1_to_p1(unit_system):
    fr = all_frames(unit_system)
    res = find_generator(frame_transformation(fr["q1"], fr["p1"]))
    s = fr["q1"].space
    want = s["u2"] * s["pi2"] - s["u2"] * s["pi3"] - s["u3"] * s["pi2"] + s["u3"] * s["pi3"]
    assert res.parity_factor is None
    assert res.generator == want
    assert res.t == pytest.approx(-math.log(3) / 2, abs=1e-12)
    assert np.allclose(res.reconstruct(), la.to_float(frame_transformation(fr["q1"], fr["p1"]).matrix), atol=1e-9)


def test_generator_needs_parity(unit_system):
    fr = all_frames(unit_system)
    target = frame_transformation(fr["q1"], fr["q2"])
    res = find_generator(target)
    assert res.parity_factor is not None
    assert np.allclose(res.reconstruct(), la.to_float(target.matrix), atol=1e-9)


def test_generator_identity_and_shear():
    s = PhaseSpace.standard(["1", "2"])
    assert find_generator(SymplecticMap.identity(s)).generator.is_zero()
    res = find_generator(shear(s, "q1", "p2", Fraction(3, 2)))
    assert np.allclose(res.reconstruct(), la.to_float(shear(s, "q1", "p2", Fraction(3, 2)).matrix))


def test_no_real_logarithm(monkeypatch):
    s = PhaseSpace.standard(["1"])
    m = SymplecticMap(la.qarray([[-2, 0], [0, Fraction(-1, 2)]]), s)
    monkeypatch.setattr(qz, "point_parities", lambda n: [np.eye(2 * n)])
    with pytest.raises(RepresentationError) as exc:
        find_generator(m)
    assert exc.value.spectrum is not None


# -- Gaussian states ---------------------------------------------------------------

def test_vacuum_is_physical(space3):
    assert GaussianState.vacuum(space3).physicality_margin() == pytest.approx(0.0, abs=1e-12)
    bad = GaussianState(space3, np.zeros(6), 0.1 * np.eye(6))
    assert not bad.is_physical()


def test_asymmetric_covariance_rejected(space3):
    cov = np.eye(6)
    cov[0, 1] = 1.0
    with pytest.raises(ValueError):
        GaussianState(space3, np.zeros(6), cov)


def test_random_state_is_physical(space3):
    rng = np.random.default_rng(3)
    for _ in range(10):
        assert GaussianState.random(space3, rng).is_physical()


def test_conditioning_matches_schur_complement(space3):
    st = GaussianState.random(space3, np.random.default_rng(5))
    out = gaussian_condition(st, "q2", 0.3)
    keep = [0, 2, 3, 5]
    c = st.cov
    want = c[np.ix_(keep, keep)] - np.outer(c[keep, 1], c[1, keep]) / c[1, 1]
    assert np.allclose(out.cov, want)
    assert out.space.labels == ("q1", "q3", "p1", "p3")
    assert out.log_norm == pytest.approx(-0.5 * math.log(2 * math.pi * c[1, 1]) - (0.3 - st.mean[1]) ** 2 / (2 * c[1, 1]))


def test_sharp_coordinate_rejected(space3):
    cov = np.eye(6)
    cov[0, 0] = 0.0
    with pytest.raises(AlreadySharpError):
        gaussian_condition(GaussianState(space3, np.zeros(6), cov), "q1")


def test_apply_rejects_non_symplectic(space3):
    st = GaussianState.vacuum(space3)

    class Fake:
        matrix = 2 * np.eye(6)
        offset = np.zeros(6)
    with pytest.raises(ValueError):
        gaussian_apply(st, Fake())


def test_evolution_matches_expm(unit_system, space3):
    fr = all_frames(unit_system)["q1"]
    st = GaussianState.random(fr.space, np.random.default_rng(9))
    h = fr.reduced_hamiltonian
    k = la.to_float(fr.space.omega()) @ la.to_float(h.quadratic)
    s = scipy.linalg.expm(0.7 * k)
    out = evolve(st, h, 0.7)
    assert np.allclose(out.cov, s @ st.cov @ s.T, atol=1e-12)
    with pytest.raises(ValueError):
        evolve(GaussianState.vacuum(space3), h, 1.0)


@pytest.mark.parametrize("name", ["q1", "p2"])
def test_reduction_commutes_with_evolution(generic_masses, name):
    ext = convert(build_relative_model(generic_masses))
    st = GaussianState.random(ext.space, np.random.default_rng(2), squeeze=0.2)
    path = reduction_path(name, generic_masses)
    h_red = reduce_to_frame(name, generic_masses).hamiltonian
    for t in (0.1, 1.0):
        a = reduce_state(evolve(st, ext.hamiltonian, t), path)
        b = evolve(reduce_state(st, path), h_red, t)
        assert np.allclose(a.cov, b.cov, atol=1e-9)
        assert a.is_physical()


def test_reduce_state_checks_space(generic_masses, space3):
    with pytest.raises(ReductionError):
        reduce_state(GaussianState.vacuum(space3), reduction_path("q1", generic_masses))


def test_transport_round_trip(generic_system):
    fr = all_frames(generic_system)
    st = GaussianState.random(fr["q1"].space, np.random.default_rng(4))
    back = transport(transport(st, fr["p3"], fr["q1"]), fr["q1"], fr["p3"])
    assert np.allclose(back.cov, st.cov) and np.allclose(back.mean, st.mean)
    with pytest.raises(ValueError):
        transport(st, fr["q1"], fr["p3"])


def test_trivialization_preserves_brackets(generic_masses):
    tm = trivialization("T_pi", 2, generic_masses)
    s = tm.space
    for i in range(6):
        for j in range(6):
            a, b = s.coordinate(i), s.coordinate(j)
            assert poisson_bracket(tm.conjugate(a), tm.conjugate(b)) == poisson_bracket(a, b)
