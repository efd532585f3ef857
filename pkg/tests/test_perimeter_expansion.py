from math import gamma, pi, sqrt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from heislab.errors import AxisError, CharacteristicPointError, DomainError, FitError
from heislab.measure_models import cn_gamma
from heislab.perimeter_expansion import (
    ExpansionFrame,
    G,
    calC,
    coeff_e_closed,
    coeff_e_full,
    coeff_e_integral,
    coeff_fit,
    constraint_residual,
    density_expansion,
    density_fd,
    h_coefficients,
    h_eval,
    leading_coefficient_integral,
    min_A,
    oddness_integrals,
    perimeter_ball,
    perimeter_cartesian,
    polar_inverse,
    polar_map,
    rational_moment,
    rational_moment_quad,
    rho_expansion,
    rho_root,
    shifted_rational_moment,
    shifted_rational_theta,
    shifted_rational_x,
    substitution_residual,
)

E1 = np.array([1.0, 0.0])
FRAME_I = ExpansionFrame(np.eye(2), E1)
FRAME_H = ExpansionFrame(np.diag([1.0, -1.0]), E1)


def random_frame(rng, n=None):
    n = n or int(rng.integers(1, 3))
    A = rng.normal(size=(2 * n, 2 * n))
    return ExpansionFrame(0.5 * (A + A.T), rng.normal(size=2 * n))


def random_v(frame, rng):
    B = frame.tangent_basis()
    v = rng.normal(size=B.shape[0]) @ B
    return v / np.linalg.norm(v)


def test_frame_basics():
    assert np.allclose(FRAME_I.normal, np.array([1.0, -1.0]) / sqrt(2))
    assert FRAME_I.c == pytest.approx(2 * sqrt(2))
    assert FRAME_I.alpha == pytest.approx(1.0)
    with pytest.raises(CharacteristicPointError):
        ExpansionFrame(np.eye(2), np.zeros(2))
    with pytest.raises(DomainError):
        ExpansionFrame(np.eye(2), np.zeros(4))


def test_polar_examples():
    v = FRAME_I.sphere()[0][0]
    assert np.allclose(polar_map(FRAME_I, 0.0, 0.7, v), E1 + 0.7 * v)
    th, rho, vv = polar_inverse(FRAME_I, E1 + v)
    assert th == pytest.approx(0.0, abs=1e-15) and rho == pytest.approx(1.0) and np.allclose(vv, v)
    with pytest.raises(AxisError):
        polar_inverse(FRAME_I, E1 + 0.3 * FRAME_I.normal)


def test_polar_round_trip(rng):
    for _ in range(1000):
        f = random_frame(rng)
        th = rng.uniform(-pi / 2 + 1e-3, pi / 2 - 1e-3)
        rho = rng.uniform(0.01, 2.0)
        v = random_v(f, rng)
        th2, rho2, v2 = polar_inverse(f, polar_map(f, th, rho, v))
        assert th2 == pytest.approx(th, abs=1e-10)
        assert rho2 == pytest.approx(rho, rel=1e-10)
        assert np.allclose(v2, v, atol=1e-10)


def test_h_at_theta_zero():
    v = FRAME_H.sphere()[0][0]
    h = h_coefficients(FRAME_H, 0.0, v)
    gam = v @ FRAME_H.D @ v
    assert h.A == pytest.approx(1 + gam**2)
    assert h.Bbar == h.Cbar == h.Dbar == h.Ebar == 0.0
    assert h_eval(FRAME_H, 0.0, 0.3, v) == pytest.approx((1 + gam**2) * 0.3**4)


def test_h_matches_gauge_polynomial(rng):
    for _ in range(1000):
        f = random_frame(rng)
        th = rng.uniform(-pi / 2, pi / 2)
        rho = rng.uniform(0.0, 1.5)
        v = random_v(f, rng)
        g = G(f, polar_map(f, th, rho, v) - f.x)
        assert h_eval(f, th, rho, v) == pytest.approx(g, rel=1e-10, abs=1e-14)


def test_h_coefficient_symmetries(rng):
    for _ in range(100):
        f = random_frame(rng)
        th = rng.uniform(-pi / 2, pi / 2)
        v = random_v(f, rng)
        a, b = h_coefficients(f, th, v), h_coefficients(f, th, -v)
        assert a.Bbar == pytest.approx(-b.Bbar, abs=1e-14)
        assert a.Dbar == pytest.approx(-b.Dbar, abs=1e-14)
        assert (a.A, a.Cbar, a.Ebar) == pytest.approx((b.A, b.Cbar, b.Ebar), abs=1e-14)
    # with gamma(v) = 0 the cubic coefficient is even in theta
    v = FRAME_H.sphere()[0][0]
    assert abs(v @ FRAME_H.D @ v) < 1e-14
    assert h_coefficients(FRAME_H, 0.4, v).Bbar == pytest.approx(h_coefficients(FRAME_H, -0.4, v).Bbar)


def test_A_bounded_away_from_zero(rng):
    assert min_A(FRAME_I) > 0.1
    for _ in range(5):
        assert min_A(random_frame(rng, 2)) > 0


def test_rho_expansion_theta_zero():
    v = FRAME_I.sphere()[0][0]
    gam = v @ FRAME_I.D @ v
    assert rho_expansion(FRAME_I, 0.0, v, 0.05) == pytest.approx(0.05 / (1 + gam**2) ** 0.25)


def test_rho_expansion_against_bisection(rng):
    r = 1e-2
    for _ in range(100):
        th = rng.uniform(-pi / 2, pi / 2)
        v = FRAME_I.sphere()[0][int(rng.integers(2))]
        root = brentq(lambda p: h_eval(FRAME_I, th, p, v) - r**4, 0.0, 0.1, xtol=1e-16, rtol=1e-15)
        assert abs(rho_expansion(FRAME_I, th, v, r) - root) <= 1e-7
        assert float(rho_root(FRAME_I, np.array([th]), v[None, :], r)[0]) == pytest.approx(root, rel=1e-10)


def test_rho_expansion_slope():
    v = FRAME_H.sphere()[0][1]
    A = h_coefficients(FRAME_H, 0.3, v).A
    r = np.array([1e-4, 2e-4])
    slope = np.diff(rho_expansion(FRAME_H, 0.3, v, r))[0] / 1e-4
    assert slope == pytest.approx(A ** -0.25, rel=1e-3)


def test_density_expansion_fd():
    v = FRAME_I.sphere()[0][0]
    A1, B1 = density_expansion(FRAME_I, 0.0, v)
    c0, d1, d2 = density_fd(FRAME_I, 0.0, v)
    assert c0 == pytest.approx(FRAME_I.c, rel=1e-12)
    assert abs(A1 - d1) <= 1e-6 and abs(B1 - d2) <= 1e-6


def test_density_expansion_fd_random(rng):
    for _ in range(50):
        f = random_frame(rng)
        th = rng.uniform(-pi / 2, pi / 2)
        v = random_v(f, rng)
        A1, B1 = density_expansion(f, th, v)
        _, d1, d2 = density_fd(f, th, v)
        scale = 1 + abs(A1) + abs(B1)
        assert abs(A1 - d1) <= 1e-6 * scale and abs(B1 - d2) <= 1e-5 * scale


def test_density_linear_term_properties(rng):
    v = FRAME_I.sphere()[0][0]
    assert density_expansion(FRAME_I, pi / 2, v)[0] == pytest.approx(0.0, abs=1e-15)
    for _ in range(100):
        f = random_frame(rng)
        th = rng.uniform(-pi / 2, pi / 2)
        v = random_v(f, rng)
        assert density_expansion(f, th, v)[0] == pytest.approx(-density_expansion(f, th, -v)[0], abs=1e-13)


@pytest.mark.parametrize("frame", [FRAME_I, FRAME_H], ids=["identity", "hyperbolic"])
def test_perimeter_two_routes(frame):
    a = perimeter_ball(frame, 0.05)
    b = perimeter_cartesian(frame, 0.05)
    assert a == pytest.approx(b, rel=1e-4)


def test_perimeter_two_routes_n2():
    f = ExpansionFrame(np.diag([1.0, 0.5, -0.3, 0.2]), np.array([1.0, 0.0, 0.0, 0.0]))
    assert perimeter_ball(f, 0.05) == pytest.approx(perimeter_cartesian(f, 0.05), rel=1e-3)


def test_perimeter_leading_behaviour():
    ratios = [perimeter_ball(FRAME_I, r) / r**3 for r in (0.2, 0.1, 0.05)]
    gaps = [abs(q - cn_gamma(1)) for q in ratios]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] / cn_gamma(1) < 1e-3
    radii = np.linspace(0.01, 0.3, 12)
    vals = [perimeter_ball(FRAME_I, r) for r in radii]
    assert np.all(np.diff(vals) > 0)


def test_leading_coefficient_integral():
    assert leading_coefficient_integral(FRAME_I) == pytest.approx(cn_gamma(1), rel=1e-12)
    f = ExpansionFrame(np.diag([1.0, 0.5, -0.3, 0.2]), np.array([1.0, 0.0, 0.5, 0.0]))
    assert leading_coefficient_integral(f, sphere_order=24) == pytest.approx(cn_gamma(2), rel=1e-8)


def test_oddness_cancellations(rng):
    for f in (FRAME_I, FRAME_H, random_frame(rng, 2)):
        for th in (-1.0, 0.2, 0.9):
            a, b = oddness_integrals(f, th)
            assert abs(a) < 1e-10 and abs(b) < 1e-10


# ------------------------------------------------------------------ rational integrals


def test_rational_examples():
    assert rational_moment(0, 1.0) == pytest.approx(pi, rel=1e-15)
    assert rational_moment(3, 4.0) == 0.0
    ref = gamma(1.5) * gamma(0.75) / gamma(2.25)
    assert rational_moment(2, 2.25) == pytest.approx(ref, rel=1e-15)
    assert rational_moment(2, 2.25) == pytest.approx(0.958512, abs=1e-6)
    assert rational_moment_quad(2, 2.25) == pytest.approx(ref, rel=1e-10)
    with pytest.raises(DomainError):
        rational_moment(4, 2.25)
    with pytest.raises(DomainError):
        rational_moment(0, 0.5)


GRID = [(k, a, g) for k in (0, 2, 4) for a in (2.25, 2.75, 3.25) for g in (-1.0, 0.0, 1.0)]


@pytest.mark.parametrize("k,a,g", GRID)
def test_rational_grid(k, a, g):
    if a <= (k + 1) / 2:
        with pytest.raises(DomainError):
            rational_moment(k, a)
        return
    assert abs(rational_moment(k, a) - rational_moment_quad(k, a)) <= 1e-10
    f = lambda x: x**k
    closed = shifted_rational_moment(k, a, g)
    assert abs(closed - shifted_rational_x(f, a, g)) <= 1e-10 * max(1, abs(closed))
    assert abs(closed - shifted_rational_theta(f, a, g)) <= 1e-10 * max(1, abs(closed))
    assert substitution_residual(f, a, g) <= 1e-10 * max(1, abs(closed))


def test_substitution_for_n2():
    f = lambda x: 1.0 / np.sqrt(1 + x * x)
    assert substitution_residual(f, 1.4, 0.3, n=2) < 1e-10


# ------------------------------------------------------------------ third coefficient


def test_coeff_e_examples():
    assert coeff_e_closed(FRAME_I) == pytest.approx(-0.125, abs=1e-12)
    assert calC(1) == pytest.approx(1.917024, abs=1e-6)
    assert coeff_e_full(FRAME_I) == pytest.approx(calC(1) * 2 / 8 * (-0.125), rel=1e-14)
    assert coeff_e_full(FRAME_I) == pytest.approx(-0.059906, abs=2e-6)


def test_coeff_e_integral_matches_closed(rng):
    assert coeff_e_integral(FRAME_I) == pytest.approx(coeff_e_full(FRAME_I), rel=1e-10)
    assert coeff_e_integral(FRAME_H) == pytest.approx(coeff_e_full(FRAME_H), rel=1e-10)
    for _ in range(5):
        f = random_frame(rng, 1)
        assert coeff_e_integral(f) == pytest.approx(coeff_e_full(f), rel=1e-8, abs=1e-12)
    for _ in range(2):
        f = random_frame(rng, 2)
        assert coeff_e_integral(f, sphere_order=24) == pytest.approx(coeff_e_full(f), rel=1e-6, abs=1e-10)


def test_bracket_even_in_normal(rng):
    from heislab.perimeter_expansion import coeff_e_bracket

    for _ in range(50):
        n = int(rng.integers(1, 4))
        A = rng.normal(size=(2 * n, 2 * n))
        D = A + A.T
        e = rng.normal(size=2 * n)
        e /= np.linalg.norm(e)
        assert coeff_e_bracket(D, e) == pytest.approx(coeff_e_bracket(D, -e), abs=1e-12)


@pytest.mark.parametrize("frame", [FRAME_I, FRAME_H], ids=["identity", "hyperbolic"])
def test_coeff_fit(frame):
    rep = coeff_fit(frame, np.linspace(0.02, 0.1, 9))
    assert rep.c_fit == pytest.approx(cn_gamma(1), rel=1e-2)
    assert abs(rep.d_fit) <= 1e-2 * rep.c_fit
    assert rep.e_fit == pytest.approx(rep.e_closed, rel=5e-2)
    assert '"e_fit"' in rep.to_json()


def test_fit_residual_shrinks_with_grid():
    big = coeff_fit(FRAME_I, np.linspace(0.04, 0.2, 9))
    small = coeff_fit(FRAME_I, np.linspace(0.02, 0.1, 9))
    assert small.residual_norm < big.residual_norm


def test_fit_needs_six_radii():
    with pytest.raises(FitError):
        coeff_fit(FRAME_I, [0.05, 0.1])


def test_fit_ill_conditioned():
    with pytest.raises(FitError):
        coeff_fit(FRAME_I, [0.05, 0.05, 0.05, 0.05, 0.05, 0.05], perimeter=lambda r: r**3)


def test_constraint_residual_examples():
    assert constraint_residual(np.eye(2), E1) == pytest.approx(-0.125, abs=1e-12)
    assert constraint_residual(np.eye(2), np.array([0.0, 1.0])) == pytest.approx(-0.125, abs=1e-12)
    with pytest.raises(CharacteristicPointError):
        constraint_residual(np.diag([1.0, -1.0]), np.array([1.0, -1.0]))


@given(st.integers(0, 10_000), st.floats(0.01, 100))
def test_constraint_residual_scale_and_sign(seed, lam):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 3))
    A = rng.normal(size=(2 * n, 2 * n))
    D = A + A.T
    h = rng.normal(size=2 * n)
    r = constraint_residual(D, h)
    assert constraint_residual(D, lam * h) == pytest.approx(r, abs=1e-12)
    assert constraint_residual(D, -h) == pytest.approx(r, abs=1e-12)
    assert r == pytest.approx(coeff_e_closed(ExpansionFrame(D, 3.7 * h)), abs=1e-12)
