"""Small-ball expansion of the perimeter of the horizontal quadric t = <x, D x>.

Around a non-characteristic point x the ball B_r((x, f(x))) is described in the
coordinates w = x + (sin th / c) rho^2 n + cos th rho v, where n is the unit horizontal
normal, c = 2|(D + J) x| and v ranges over the unit sphere of n^perp.  In these
coordinates the squared-squared gauge distance is a polynomial H(th, rho, v) in rho and
the perimeter of the ball is

    |dK|(B_r) = sum_v int int_{H <= r^4} (2 rho^{2n}/c) d(th) |(D + J)(x + P)| drho dth,

with d(th) = cos^{2n-2} th (1 + sin^2 th).  Its expansion in r has the form
c_n r^{2n+1} + e r^{2n+3} + O(r^{2n+4}).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from math import comb, gamma, pi, sqrt
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate as sp_integrate

from .errors import AxisError, CharacteristicPointError, DomainError, FitError
from .heis_core import HPoint, symplectic_J
from .measure_models import HorizontalGraph, Quad, ball_mass, cn_gamma
from .quadrature import gl_interval, orthonormal_complement, sphere_area, sphere_rule, sublevel_intervals


@dataclass(frozen=True, eq=False)
class ExpansionFrame:
    D: np.ndarray
    x: np.ndarray
    normal: np.ndarray = field(init=False)
    c: float = field(init=False)
    alpha: float = field(init=False)

    def __post_init__(self):
        D = np.array(self.D, dtype=float)
        x = np.array(self.x, dtype=float).reshape(-1)
        if D.shape != (x.size, x.size) or x.size % 2:
            raise DomainError(f"D has shape {D.shape} but x has length {x.size}")
        if np.max(np.abs(D - D.T)) > 1e-12:
            raise DomainError("D must be symmetric")
        g = (D + symplectic_J(x.size // 2)) @ x
        gn = np.linalg.norm(g)
        if gn <= 1e-12 * max(1.0, np.linalg.norm(x)):
            raise CharacteristicPointError("(D + J) x vanishes: x is characteristic")
        nrm = g / gn
        for arr in (D, x, nrm):
            arr.setflags(write=False)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "normal", nrm)
        object.__setattr__(self, "c", float(2.0 * gn))
        object.__setattr__(self, "alpha", float(nrm @ D @ nrm))

    @property
    def n(self) -> int:
        return self.x.size // 2

    @property
    def J(self) -> np.ndarray:
        return symplectic_J(self.n)

    def beta(self, v) -> np.ndarray:
        return np.asarray(v) @ (self.D @ self.normal)

    def gamma(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return np.einsum("...i,ij,...j->...", v, self.D, v)

    def tangent_basis(self) -> np.ndarray:
        """Rows: an orthonormal basis of n^perp."""
        return orthonormal_complement(self.normal, 2 * self.n)

    def sphere(self, order: int = 16):
        """Quadrature (points, weights) on S(n) = S^{2n-1} cap n^perp with its surface measure."""
        if self.n == 1:
            tau = self.J @ self.normal
            return np.stack([tau, -tau]), np.array([1.0, 1.0])
        pts, wts = sphere_rule(2 * self.n - 2, order)
        return pts @ self.tangent_basis(), wts

    def r_max(self) -> float:
        """Default upper radius for the expansion regime."""
        M = self.D + self.J
        u, s, vt = np.linalg.svd(M)
        null = vt[s <= 1e-10 * s.max()]
        if null.shape[0] == 0:
            dist = float(np.linalg.norm(self.x))
        else:
            dist = float(np.linalg.norm(self.x - null.T @ (null @ self.x)))
        return min(0.1 * self.c, 0.1 * dist)

    def to_dict(self) -> dict:
        return {"D": self.D.tolist(), "x": self.x.tolist(), "normal": self.normal.tolist(), "c": self.c}


# ------------------------------------------------------------------ coordinates


def polar_map(frame: ExpansionFrame, theta, rho, v) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)[..., None]
    rho = np.asarray(rho, dtype=float)[..., None]
    v = np.asarray(v, dtype=float)
    return frame.x + np.sin(theta) * rho**2 / frame.c * frame.normal + np.cos(theta) * rho * v


def polar_inverse(frame: ExpansionFrame, w):
    """Return (theta, rho, v) with polar_map(theta, rho, v) = w."""
    u = np.asarray(w, dtype=float) - frame.x
    lam = float(u @ frame.normal)
    perp = u - lam * frame.normal
    p = float(np.linalg.norm(perp))
    if p <= 1e-14 * max(1.0, float(np.linalg.norm(u))):
        raise AxisError("w - x is parallel to the normal")
    # zeta = rho^2 solves zeta^2 - |perp|^2 zeta - c^2 lam^2 = 0
    zeta = 0.5 * (p * p + sqrt(p**4 + 4.0 * lam * lam * frame.c**2))
    rho = sqrt(zeta)
    theta = float(np.arcsin(np.clip(frame.c * lam / zeta, -1.0, 1.0)))
    return theta, rho, perp / p


def G(frame: ExpansionFrame, w) -> np.ndarray:
    """|w|^4 + (c<n, w> + <w, D w>)^2 for a displacement w from x."""
    w = np.asarray(w, dtype=float)
    sq = np.sum(w * w, axis=-1)
    return sq * sq + (frame.c * (w @ frame.normal) + frame.gamma(w)) ** 2


@dataclass(frozen=True)
class HCoefficients:
    A: float
    Bbar: float
    Cbar: float
    Dbar: float
    Ebar: float


def _coeff_arrays(frame: ExpansionFrame, theta, v):
    th = np.asarray(theta, dtype=float)
    s, co = np.sin(th), np.cos(th)
    beta = frame.beta(v)
    gam = frame.gamma(v)
    a = frame.alpha
    A = co**4 + (co**2 * gam + s) ** 2
    Bb = 4.0 * s * co * beta * (co**2 * gam + s)
    Cb = s**2 * (co**2 * (2.0 + 4.0 * beta**2 + 2.0 * gam * a) + 2.0 * s * a)
    Db = 4.0 * a * beta * s**3 * co
    Eb = (1.0 + a * a) * s**4 + 0.0 * beta
    return A, Bb, Cb, Db, Eb


def h_coefficients(frame: ExpansionFrame, theta: float, v) -> HCoefficients:
    return HCoefficients(*(float(t) for t in _coeff_arrays(frame, theta, v)))


def h_eval(frame: ExpansionFrame, theta, rho, v) -> np.ndarray:
    A, Bb, Cb, Db, Eb = _coeff_arrays(frame, theta, v)
    c = frame.c
    rho = np.asarray(rho, dtype=float)
    return A * rho**4 + Bb / c * rho**5 + Cb / c**2 * rho**6 + Db / c**3 * rho**7 + Eb / c**4 * rho**8


def _h_poly(frame: ExpansionFrame, theta, v, r: float) -> np.ndarray:
    """Rows of coefficients (degree 8 first) of H - r^4 in rho."""
    A, Bb, Cb, Db, Eb = (np.atleast_1d(t) for t in _coeff_arrays(frame, theta, v))
    c = frame.c
    N = max(A.size, Eb.size)
    z = np.zeros(N)
    bc = lambda t: np.broadcast_to(t, (N,))
    return np.stack([bc(Eb / c**4), bc(Db / c**3), bc(Cb / c**2), bc(Bb / c), bc(A), z, z, z, np.full(N, -(r**4))], axis=1)


def min_A(frame: ExpansionFrame, n_theta: int = 256, n_v: int = 64) -> float:
    """Grid minimum of A over (theta, v); it stays bounded away from zero."""
    th = np.linspace(-pi / 2, pi / 2, n_theta)
    if frame.n == 1:
        V, _ = frame.sphere()
    else:
        rng = np.random.default_rng(7)
        V = rng.standard_normal((n_v, 2 * frame.n - 1)) @ frame.tangent_basis()
        V /= np.linalg.norm(V, axis=1, keepdims=True)
    A = _coeff_arrays(frame, th[:, None], V[None, :, :])[0]
    return float(A.min())


# ------------------------------------------------------------------ radius and density


def rho_expansion(frame: ExpansionFrame, theta, v, r) -> np.ndarray:
    """Third-order expansion P(r) of the rho-radius of the ball in direction (theta, v)."""
    A, Bb, Cb, _, _ = _coeff_arrays(frame, theta, v)
    B = Bb / frame.c
    C = Cb / frame.c**2
    r = np.asarray(r, dtype=float)
    return r / A**0.25 - B * r**2 / (4.0 * A**1.5) + (7.0 * B**2 / (32.0 * A**2.75) - C / (4.0 * A**1.75)) * r**3


def rho_root(frame: ExpansionFrame, theta, v, r: float) -> np.ndarray:
    """Exact smallest positive root of H(theta, ., v) = r^4."""
    from .quadrature import smallest_positive_root

    C = _h_poly(frame, theta, v, r)
    return smallest_positive_root(C)


def density_expansion(frame: ExpansionFrame, theta, v):
    """(A_1, B_1) with 2|(D+J)(x + P)| = c + A_1 rho + B_1 rho^2 + O(rho^3)."""
    th = np.asarray(theta, dtype=float)
    v = np.asarray(v, dtype=float)
    J = frame.J
    nrm = frame.normal
    jv = (v @ J.T) @ nrm
    A1 = 2.0 * np.cos(th) * (frame.beta(v) + jv)
    Mv = v @ (frame.D + J).T
    proj = Mv - (Mv @ nrm)[..., None] * nrm
    B1 = 2.0 / frame.c * (frame.alpha * np.sin(th) + np.sum(proj * proj, axis=-1) * np.cos(th) ** 2)
    return A1, B1


def density(frame: ExpansionFrame, theta, rho, v) -> np.ndarray:
    w = polar_map(frame, theta, rho, v)
    return 2.0 * np.linalg.norm(w @ (frame.D + frame.J).T, axis=-1)


def density_fd(frame: ExpansionFrame, theta: float, v, h: float = 1e-4):
    """Finite-difference Taylor coefficients (phi(0), phi'(0), phi''(0)/2) of rho -> density."""
    f = lambda p: float(density(frame, theta, p, v))
    fp, f0, fm = f(h), f(0.0), f(-h)
    return f0, (fp - fm) / (2 * h), (fp - 2 * f0 + fm) / (2 * h * h)


# ------------------------------------------------------------------ perimeter


def _dtheta(n: int, th):
    return np.cos(th) ** (2 * n - 2) * (1.0 + np.sin(th) ** 2)


def perimeter_ball(frame: ExpansionFrame, r: float, order_theta: int = 400, order_rho: int = 24, sphere_order: int = 12) -> float:
    """|dK|(B_r((x, f(x)))) by quadrature in the adapted polar coordinates."""
    if not r > 0:
        raise DomainError("r must be positive")
    n = frame.n
    V, Wv = frame.sphere(sphere_order)
    th, wth = gl_interval(-pi / 2, pi / 2, order_theta)
    TH = np.repeat(th, V.shape[0])
    VV = np.tile(V, (th.size, 1))
    W = np.repeat(wth, V.shape[0]) * np.tile(Wv, th.size)
    C = _h_poly(frame, TH, VV, r)
    upper = np.full(TH.size, 4.0 * r / min_A(frame) ** 0.25 + r)
    lo, hi = sublevel_intervals(C, upper)
    rows, slots = np.nonzero(hi > lo)
    rho, wr = gl_interval(lo[rows, slots], hi[rows, slots], order_rho)
    T = TH[rows][:, None]
    dens = density(frame, np.broadcast_to(T, rho.shape), rho, VV[rows][:, None, :])
    xi = 2.0 * rho ** (2 * n) / frame.c * _dtheta(n, T) * dens / 2.0  # density() already carries the factor 2
    return float(np.sum(W[rows][:, None] * wr * xi))


def perimeter_cartesian(frame: ExpansionFrame, r: float, quad: Quad = Quad(order=48)) -> float:
    """Same quantity from the graph-measure representation 2 int_{G <= r^4} |(D+J)(x+w)| dw."""
    graph = HorizontalGraph(None, frame.D)
    center = HPoint(frame.x, float(graph.f(frame.x)))
    return cn_gamma(frame.n) * ball_mass(graph, center, r, quad)


# ------------------------------------------------------------------ rational integrals


def rational_moment(k: int, alpha: float) -> float:
    """int_R x^k (1 + x^2)^{-alpha} dx."""
    if k < 0 or not alpha > (k + 1) / 2:
        raise DomainError(f"need alpha > (k+1)/2, got k={k}, alpha={alpha}")
    if k % 2:
        return 0.0
    return gamma((k + 1) / 2) * gamma(alpha - (k + 1) / 2) / gamma(alpha)


def rational_moment_quad(k: int, alpha: float) -> float:
    """Adaptive quadrature of the same integral (oracle)."""
    if k < 0 or not alpha > (k + 1) / 2:
        raise DomainError(f"need alpha > (k+1)/2, got k={k}, alpha={alpha}")
    f = lambda x: x**k / (1 + x * x) ** alpha
    a, _ = sp_integrate.quad(f, 0.0, 1.0, epsabs=0, epsrel=1e-13, limit=200)
    b, _ = sp_integrate.quad(f, 1.0, np.inf, epsabs=0, epsrel=1e-13, limit=200)
    return (1 + (-1) ** k) * (a + b)


def shifted_rational_moment(k: int, alpha: float, gam: float) -> float:
    """int_R x^k (1 + (x + gam)^2)^{-alpha} dx via binomial expansion and rational_moment."""
    return sum(comb(k, j) * (-gam) ** (k - j) * rational_moment(j, alpha) for j in range(k + 1))


def shifted_rational_theta(f: Callable, alpha: float, gam: float, n: int = 1) -> float:
    """int d(th) cos^{4 alpha - 2n - 1} th f(sin th / cos^2 th) / A^alpha over (-pi/2, pi/2).

    Here A = cos^4 th + (cos^2 th gam + sin th)^2.
    """

    def integrand(th):
        s, co = np.sin(th), np.cos(th)
        if co <= 0:
            return 0.0
        A = co**4 + (co**2 * gam + s) ** 2
        return _dtheta(n, th) * co ** (4 * alpha - 2 * n - 1) * f(s / co**2) / A**alpha

    a, _ = sp_integrate.quad(integrand, -pi / 2, 0.0, epsabs=0, epsrel=1e-13, limit=400)
    b, _ = sp_integrate.quad(integrand, 0.0, pi / 2, epsabs=0, epsrel=1e-13, limit=400)
    return a + b


def shifted_rational_x(f: Callable, alpha: float, gam: float) -> float:
    g = lambda x: f(x) / (1 + (x + gam) ** 2) ** alpha
    parts = [(-np.inf, -gam - 1), (-gam - 1, -gam), (-gam, -gam + 1), (-gam + 1, np.inf)]
    return sum(sp_integrate.quad(g, a, b, epsabs=0, epsrel=1e-13, limit=400)[0] for a, b in parts)


def substitution_residual(f: Callable, alpha: float, gam: float, n: int = 1) -> float:
    """|theta form - x form| for the substitution x = sin th / cos^2 th."""
    return abs(shifted_rational_theta(f, alpha, gam, n) - shifted_rational_x(f, alpha, gam))


# ------------------------------------------------------------------ third coefficient


def coeff_e_bracket(D: np.ndarray, nrm: np.ndarray) -> float:
    D = np.asarray(D, dtype=float)
    nrm = np.asarray(nrm, dtype=float)
    n = nrm.size // 2
    J = symplectic_J(n)
    k = 2 * n - 1
    Dn = D @ nrm
    an = float(nrm @ Dn)
    quad_part = (np.trace(D @ D) - 2.0 * float(Dn @ Dn) + an * an) / (4.0 * k)
    return float(
        quad_part + (n - 1) / k - 0.25 + float(nrm @ (D @ (J @ nrm))) / k - (np.trace(D) - an) ** 2 / (8.0 * k)
    )


def coeff_e_closed(frame: ExpansionFrame) -> float:
    """The bracket E(D, n); it vanishes identically on supports of uniform measures."""
    return coeff_e_bracket(frame.D, frame.normal)


def calC(n: int) -> float:
    return sqrt(pi) * gamma((2 * n + 1) / 4) / (((2 * n + 3) / 4) * gamma((2 * n + 3) / 4))


def coeff_e_full(frame: ExpansionFrame) -> float:
    """Coefficient of r^{2n+3} in the perimeter expansion."""
    n = frame.n
    return calC(n) * sphere_area(2 * n - 2) / frame.c**2 * coeff_e_closed(frame)


def coeff_e_integral(frame: ExpansionFrame, order_theta: int = 400, sphere_order: int = 16) -> float:
    """Coefficient of r^{2n+3} from its (theta, v) integral representation."""
    n = frame.n
    c = frame.c
    V, Wv = frame.sphere(sphere_order)
    th, wth = gl_interval(-pi / 2, pi / 2, order_theta)
    T = th[:, None]
    A, Bb, Cb, _, _ = _coeff_arrays(frame, T, V[None, :, :])
    A1, B1 = density_expansion(frame, T, V[None, :, :])
    Bcal = c * B1
    inner = (2 * n + 7) / 32.0 * Bb**2 / A**2 - Cb / (4 * A) - A1 * Bb / (4 * A) + Bcal / (2 * n + 3)
    integrand = _dtheta(n, T) * inner / (c * c * A ** ((2 * n + 3) / 4))
    return float(np.sum(wth[:, None] * Wv[None, :] * integrand))


def leading_coefficient_integral(frame: ExpansionFrame, order_theta: int = 400, sphere_order: int = 16) -> float:
    """(1/(2n+1)) int int d(th) / A^{(2n+1)/4}: the r^{2n+1} coefficient, equal to c_n."""
    n = frame.n
    V, Wv = frame.sphere(sphere_order)
    th, wth = gl_interval(-pi / 2, pi / 2, order_theta)
    A = _coeff_arrays(frame, th[:, None], V[None, :, :])[0]
    return float(np.sum(wth[:, None] * Wv[None, :] * _dtheta(n, th[:, None]) / A ** ((2 * n + 1) / 4)) / (2 * n + 1))


def oddness_integrals(frame: ExpansionFrame, theta: float, sphere_order: int = 16):
    """int_S A_1 / A^{(2n+2)/4} and int_S B / A^{(2n+6)/4} at a fixed theta; both vanish."""
    n = frame.n
    V, Wv = frame.sphere(sphere_order)
    A, Bb, _, _, _ = _coeff_arrays(frame, theta, V)
    A1, _ = density_expansion(frame, theta, V)
    return float(Wv @ (A1 / A ** ((2 * n + 2) / 4))), float(Wv @ (Bb / frame.c / A ** ((2 * n + 6) / 4)))


def constraint_residual(D, h) -> float:
    """E(D, n(h)) with n(h) = (D + J) h / |(D + J) h|."""
    return coeff_e_closed(ExpansionFrame(D, h))


# ------------------------------------------------------------------ fitting


@dataclass
class ExpansionReport:
    c_fit: float
    d_fit: float
    e_fit: float
    c_err: float
    d_err: float
    e_err: float
    c_closed: float
    e_closed: float
    e_integral: float
    residual_norm: float
    condition: float
    radii: list
    perimeters: list
    r_max: float
    frame: dict

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)


def coeff_fit(frame: ExpansionFrame, r_grid: Sequence[float], perimeter: Optional[Callable] = None) -> ExpansionReport:
    """Least-squares fit of |dK|(B_r) / r^{2n+1} to c + d r + e r^2."""
    r = np.asarray(sorted(float(t) for t in r_grid))
    if r.size < 6:
        raise FitError(f"need at least 6 radii, got {r.size}")
    if np.any(r <= 0):
        raise FitError("radii must be positive")
    n = frame.n
    per = perimeter or (lambda rr: perimeter_ball(frame, rr))
    P = np.array([per(t) for t in r])
    y = P / r ** (2 * n + 1)
    X = np.stack([np.ones_like(r), r, r * r], axis=1)
    cond = float(np.linalg.cond(X))
    if not np.isfinite(cond) or cond > 1e12:
        raise FitError(f"design matrix is ill-conditioned (condition number {cond:.3e})")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    res = y - X @ coef
    dof = max(r.size - 3, 1)
    s2 = float(res @ res) / dof
    cov = s2 * np.linalg.inv(X.T @ X)
    errs = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return ExpansionReport(
        c_fit=float(coef[0]),
        d_fit=float(coef[1]),
        e_fit=float(coef[2]),
        c_err=float(errs[0]),
        d_err=float(errs[1]),
        e_err=float(errs[2]),
        c_closed=cn_gamma(n),
        e_closed=coeff_e_full(frame),
        e_integral=coeff_e_integral(frame),
        residual_norm=float(np.linalg.norm(res)),
        condition=cond,
        radii=r.tolist(),
        perimeters=P.tolist(),
        r_max=frame.r_max(),
        frame=frame.to_dict(),
    )
