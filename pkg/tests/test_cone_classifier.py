from math import cos, pi, sin, sqrt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from heislab.cone_classifier import (
    ADMISSIBILITY_TOL,
    F_functional,
    admissibility_scan,
    ball_second_moment,
    classify_h1,
    classify_h1_report,
    eigen_constraint,
    eta,
    flatness_decision,
    norm_bounds,
    norm_lower,
    read_ndjson,
    scan_database,
    second_moment_envelope,
    sphere_directions,
    weighted_moment,
    write_ndjson,
)
from heislab.errors import DegenerateScan, DimensionError, DomainError
from heislab.heis_core import symplectic_J
from heislab.measure_models import (
    FlatPlane,
    FullSlice,
    HorizontalGraph,
    HorizontalLine,
    MomentMatrix,
    PlanePair,
    Quad,
    VerticalAxis,
    VerticalCone,
    second_moment,
)
from heislab.perimeter_expansion import constraint_residual


def unitary(n, rng):
    """Orthogonal U commuting with J."""
    J = symplectic_J(n)
    K = rng.normal(size=(2 * n, 2 * n))
    K = K - K.T
    K = 0.5 * (K - J @ K @ J)
    return expm(K)


# ------------------------------------------------------------------ admissibility


def test_sphere_directions_unit_and_seeded():
    for n in (1, 2, 3):
        H = sphere_directions(n, 64, seed=5)
        assert H.shape == (64, 2 * n)
        assert np.allclose(np.linalg.norm(H, axis=1), 1.0)
        assert np.array_equal(H, sphere_directions(n, 64, seed=5))


def test_identity_is_not_admissible():
    f = admissibility_scan(np.eye(2), 64)
    assert f.sup_abs >= 0.125 - 1e-12
    assert not f.admissible()
    assert len(f.samples) == 64


def test_scan_errors():
    with pytest.raises(DimensionError):
        admissibility_scan(np.eye(3))
    with pytest.raises(DomainError):
        admissibility_scan(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(DomainError):
        admissibility_scan(np.zeros((2, 2)))
    # D + J singular: every direction in its kernel is characteristic
    D = np.diag([1.0, -1.0])
    ker = np.array([[1.0, -1.0]]) / sqrt(2)
    with pytest.raises(DegenerateScan):
        admissibility_scan(D, directions=ker)
    f = admissibility_scan(D, directions=np.vstack([ker, [[1.0, 0.0]]]))
    assert f.excluded == 1 and len(f.samples) == 1


def test_random_scan_has_no_admissible_matrix():
    db = scan_database(1, 200, norm_range=(0.1, 3.0), n_dirs=64, seed=11)
    assert len(db) == 200
    assert min(r["sup_abs"] for r in db) > 1e-3
    assert all(r["norm"] <= 3.0 + 1e-12 for r in db)


def test_scan_covariance_under_unitary(rng):
    for _ in range(10):
        n = int(rng.integers(1, 3))
        A = rng.normal(size=(2 * n, 2 * n))
        D = A + A.T
        U = unitary(n, rng)
        H = sphere_directions(n, 16, seed=int(rng.integers(1000)))
        f = admissibility_scan(D, directions=H)
        g = admissibility_scan(U @ D @ U.T, directions=H @ U.T)
        a = np.array([r for _, r in f.samples])
        b = np.array([r for _, r in g.samples])
        assert np.allclose(a, b, atol=1e-10)


def test_residual_field_even(rng):
    for _ in range(10):
        A = rng.normal(size=(4, 4))
        D = A + A.T
        H = sphere_directions(2, 16, seed=3)
        a = [r for _, r in admissibility_scan(D, directions=H).samples]
        b = [r for _, r in admissibility_scan(D, directions=-H).samples]
        assert np.allclose(a, b, atol=1e-12)


def test_scan_matches_constraint_residual(rng):
    for _ in range(100):
        n = int(rng.integers(1, 3))
        A = rng.normal(size=(2 * n, 2 * n))
        D = A + A.T
        h = rng.normal(size=2 * n)
        (_, r), = admissibility_scan(D, directions=h[None, :] / np.linalg.norm(h)).samples
        assert r == pytest.approx(constraint_residual(D, h), abs=1e-12)


def test_ndjson_roundtrip(tmp_path):
    db = scan_database(1, 3, seed=2)
    p = tmp_path / "scan.ndjson"
    write_ndjson(db, p)
    back = read_ndjson(p)
    assert back == db
    assert set(back[0]) == {"D", "sup_abs", "argmax_dir", "norm"}


# ------------------------------------------------------------------ eigenvalue constraint and norms


def test_eigen_constraint_examples():
    e = np.array([0.6, 0.8])
    ok = eigen_constraint(np.outer(e, e))
    assert ok.residuals == pytest.approx([0.0], abs=1e-12) and ok.passes()
    bad = eigen_constraint(np.eye(2))
    assert bad.residuals == pytest.approx([1.0, 1.0])
    assert not bad.passes()
    Q = np.diag([1.0, 1.0, 1.0, 0.0])
    assert eigen_constraint(Q).lambda2 == pytest.approx(1.0)
    assert eigen_constraint(np.diag([2.0, 0.0])).lambda2 is None


@given(st.integers(0, 10_000))
def test_eigen_constraint_conjugation_invariant(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    A = rng.normal(size=(2 * n, 2 * n))
    Q = A + A.T
    O, _ = np.linalg.qr(rng.normal(size=(2 * n, 2 * n)))
    a = eigen_constraint(Q)
    b = eigen_constraint(O @ Q @ O.T)
    assert np.allclose(sorted(a.residuals), sorted(b.residuals), atol=1e-8 * (1 + np.abs(Q).max() ** 2))


def test_norm_lower_values():
    assert norm_lower(1) == pytest.approx(1 / sqrt(19)) and norm_lower(1) == pytest.approx(0.229416, abs=1e-6)
    assert norm_lower(2) == pytest.approx(0.160128, abs=1e-6)
    with pytest.raises(DomainError):
        norm_bounds(5)


def test_admissible_entries_respect_lower_bound():
    db = scan_database(1, 60, norm_range=(0.0, 0.5), n_dirs=32, seed=4)
    nb = norm_bounds(1, db)
    assert nb.lower == pytest.approx(norm_lower(1))
    for r in db:
        if r["sup_abs"] <= ADMISSIBILITY_TOL:
            assert r["norm"] >= nb.lower
    assert set(nb.upper_search) == {1e-1, 3e-2, 1e-2, 1e-3, 1e-6}
    found = [v for v in nb.upper_search.values() if v is not None]
    assert all(v <= 0.5 + 1e-12 for v in found)


# ------------------------------------------------------------------ ball second moment


def test_ball_second_moment_positive_and_rotational():
    vals = []
    for phi in np.linspace(0, pi, 5):
        res = ball_second_moment(np.eye(2), np.array([cos(phi), sin(phi)]))
        assert res.value > 0
        assert res.sphere_form == pytest.approx(res.value, abs=1e-3)
        vals.append(res.value)
    assert max(vals) - min(vals) <= 1e-4


def test_ball_second_moment_indefinite():
    res = ball_second_moment(np.diag([1.0, -1.0]), np.array([1.0, 0.0]))
    assert res.value > 0
    assert res.sphere_form == pytest.approx(res.value, abs=1e-3)


def test_ball_second_moment_n2():
    D = np.diag([1.0, 0.5, -1.0, 0.3])
    res = ball_second_moment(D, np.array([1.0, 1.0, 0.0, 0.0]))
    assert res.sphere_form == pytest.approx(res.value, abs=1e-3)


def test_second_moment_envelope():
    db = scan_database(1, 3, seed=9)
    env = second_moment_envelope(db, n_m=3)
    assert env["value"] > 0
    assert env["value"] == pytest.approx(ball_second_moment(np.array(env["D"]), np.array(env["m"]), Quad(order=48)).value)


# ------------------------------------------------------------------ flatness


def test_flat_matrix():
    for n in (1, 2, 3):
        e = np.zeros(2 * n)
        e[-1] = 1.0
        M = MomentMatrix.from_matrix((np.eye(2 * n) - np.outer(e, e)) / (2 * n - 1))
        v = flatness_decision(M)
        assert v.verdict == "Flat"
        assert np.allclose(v.normal, e)


def test_flat_slices(rng):
    for _ in range(20):
        n = int(rng.integers(1, 4))
        e = rng.normal(size=2 * n)
        e /= np.linalg.norm(e)
        v = flatness_decision(second_moment(FullSlice(e)))
        assert v.verdict == "Flat"
        assert abs(abs(v.normal @ e) - 1) < 1e-9


def test_orthogonal_pair_not_flat():
    v = flatness_decision(second_moment(PlanePair(np.array([1.0, 0.0]), np.array([0.0, 1.0]))))
    assert v.verdict == "NotFlat"
    assert v.min_eigenvalue == pytest.approx(0.5)


@pytest.mark.parametrize("phi", [0.3, 0.7, 1.2, pi / 2, 2.5])
def test_pair_at_angle(phi):
    v = flatness_decision(second_moment(PlanePair(np.array([1.0, 0.0]), np.array([cos(phi), sin(phi)]))))
    assert v.min_eigenvalue == pytest.approx((1 - abs(cos(phi))) / 2, abs=1e-10)
    assert v.verdict == "NotFlat"


def test_inconclusive_band():
    phi = 0.05
    v = flatness_decision(second_moment(PlanePair(np.array([1.0, 0.0]), np.array([cos(phi), sin(phi)]))))
    assert v.verdict == "Inconclusive"


def test_flatness_needs_positive_trace():
    with pytest.raises(DomainError):
        flatness_decision(MomentMatrix.from_matrix(np.zeros((2, 2))))


# ------------------------------------------------------------------ functional F


def test_eta_profile():
    s = np.array([0.0, 0.5, 1.0, 1.5, 2.0, 3.0])
    assert eta(s) == pytest.approx([1, 1, 1, 0.5, 0, 0])


def test_F_flat_is_zero():
    assert F_functional(FlatPlane([1.0, 0.0])) == pytest.approx(0.0, abs=1e-12)
    assert F_functional(FlatPlane([0.0, 0.0, 1.0, 0.0])) == pytest.approx(0.0, abs=1e-12)


def test_F_orthogonal_pair():
    mu = VerticalCone.plane_pair([1.0, 0.0], [0.0, 1.0])
    F = F_functional(mu)
    assert F > 0.1
    assert F == pytest.approx(np.linalg.eigvalsh(weighted_moment(mu))[0])
    S = weighted_moment(mu)
    assert S[0, 0] == pytest.approx(S[1, 1], rel=1e-10)


def test_F_zoo_vanishes_only_on_flat():
    zoo = {
        "flat": FlatPlane([0.6, 0.8]),
        "pair": VerticalCone.plane_pair([1.0, 0.0], [cos(1.0), sin(1.0)]),
        "half_pair": VerticalCone.plane_pair([1.0, 0.0], [0.0, 1.0], ("full", "pos")),
        "graph": HorizontalGraph(None, np.eye(2)),
        "graph_indef": HorizontalGraph(None, np.diag([1.0, -1.0])),
    }
    for name, mu in zoo.items():
        assert mu.m == 3
        F = F_functional(mu)
        assert F >= 0
        if name == "flat":
            assert F == pytest.approx(0.0, abs=1e-12)
        else:
            assert F > 1e-3, name


def test_F_scale_invariant_on_cones():
    mu = VerticalCone.plane_pair([1.0, 0.0], [cos(1.0), sin(1.0)])
    base = F_functional(mu)
    for lam in (0.5, 2.0):
        assert F_functional(mu, lam) == pytest.approx(base, rel=1e-8)


def test_F_continuous_in_scale():
    mu = HorizontalGraph(None, np.eye(2))
    grid = np.linspace(0.5, 2.0, 7)
    vals = np.array([F_functional(mu, lam) for lam in grid])
    assert np.all(vals > 0)
    assert np.max(np.abs(np.diff(vals))) < 0.5 * vals.max()
    # refining the step shrinks the jumps
    fine = np.array([F_functional(mu, lam) for lam in (1.0, 1.01)])
    assert abs(fine[1] - fine[0]) < 0.05 * abs(vals[3] - vals[2]) + 1e-6


def test_F_rejects_bad_scale():
    with pytest.raises(DomainError):
        F_functional(FlatPlane([1.0, 0.0]), 0.0)


# ------------------------------------------------------------------ classification in H^1


@pytest.mark.parametrize(
    "mu,label",
    [
        (HorizontalLine([1.0, 0.0]), "HorizontalLine"),
        (VerticalAxis(1), "VerticalAxis"),
        (FlatPlane([0.6, 0.8]), "VerticalPlane"),
        (VerticalCone.plane_pair([1.0, 0.0], [0.0, 1.0]), "NotUniform"),
    ],
    ids=["line", "axis", "plane", "pair"],
)
def test_classify_h1(mu, label):
    assert classify_h1(mu) == label


def test_classify_report_records_checks():
    rep = classify_h1_report(FlatPlane([1.0, 0.0]))
    assert len(rep.checks) == 15
    assert rep.max_rel_err < 1e-3
    pair = classify_h1_report(VerticalCone.plane_pair([1.0, 0.0], [0.0, 1.0]))
    assert pair.max_rel_err > 1e-3


def test_classify_requires_h1():
    with pytest.raises(DimensionError):
        classify_h1(FlatPlane([1.0, 0.0, 0.0, 0.0]))
