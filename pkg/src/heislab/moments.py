"""Gaussian-weighted moments of uniform-measure models.

All integrals here are taken against e^{-s||z||^4} dmu(z) and normalized by
C(m) = Gamma(m/4 + 1), which is s^{m/4} times the total Gaussian mass of an
m-uniform measure.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from math import factorial, gamma, log
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import integrate as sp_integrate
from scipy.special import gammaln, logsumexp

from .errors import DomainError, IntegrationError
from .heis_core import HPoint, apply_J, gauge4, polarization
from .measure_models import All, MeasureModel, Quad

MOMENT_QUAD = Quad(order_all=160, error_estimate=False)
FORMULA_QUAD = Quad(order_all=200, error_estimate=False)


def C_m(m: float) -> float:
    return gamma(m / 4.0 + 1.0)


def _m_of(mu) -> int:
    return mu if isinstance(mu, (int, np.integer)) else mu.m


# ------------------------------------------------------------------ radial integrals


def gamma_integral(m: float, p: float, s: float) -> float:
    """int |z|^p e^{-s|z|^4} dmu for an m-uniform mu: (m/4) s^{-(m+p)/4} Gamma((m+p)/4)."""
    if not s > 0:
        raise DomainError(f"s must be positive, got {s}")
    if p < 0 or m + p <= 0:
        raise DomainError(f"need p >= 0 and m + p > 0, got m={m}, p={p}")
    return (m / 4.0) * s ** (-(m + p) / 4.0) * gamma((m + p) / 4.0)


def radial_integral(mu, g, u: Optional[HPoint] = None, breaks: Sequence[float] = (), tol: float = 1e-12) -> float:
    """m int_0^inf r^{m-1} g(r) dr, the integral of g(||u^{-1} z||) against an m-uniform measure.

    ``mu`` is a model or the exponent m itself; ``breaks`` lists discontinuities of g.
    """
    m = _m_of(mu)
    if u is not None and not isinstance(mu, (int, np.integer)) and not mu.on_support(u):
        from .errors import SupportError

        raise SupportError("radial reduction needs a center on the support")
    pts = sorted(b for b in breaks if b > 0)
    edges = [0.0] + pts
    total = 0.0
    f = lambda r: m * r ** (m - 1) * g(r)
    for a, b in zip(edges[:-1], edges[1:]):
        v, _ = sp_integrate.quad(f, a, b, epsabs=tol, epsrel=tol, limit=400)
        total += v
    v, err = sp_integrate.quad(f, edges[-1], np.inf, epsabs=tol, epsrel=tol, limit=400)
    if not np.isfinite(v):
        raise IntegrationError("radial profile is not integrable")
    return total + v


# ------------------------------------------------------------------ multi-indices


@dataclass(frozen=True)
class MultiIndexAlpha:
    a1: int
    a2: int
    a3: int

    def __post_init__(self):
        if min(self.a1, self.a2, self.a3) < 0 or (self.a1, self.a2, self.a3) == (0, 0, 0):
            raise DomainError("alpha must be nonnegative and nonzero")

    @property
    def weight(self) -> int:
        return self.a1 + 2 * self.a2 + 3 * self.a3

    @property
    def order(self) -> int:
        return self.a1 + self.a2 + self.a3

    @property
    def factorial(self) -> int:
        return factorial(self.a1) * factorial(self.a2) * factorial(self.a3)

    def in_A(self, l: int) -> bool:
        return self.weight <= l


def alphas_of_order(k: int):
    return [MultiIndexAlpha(a, b, k - a - b) for a in range(k + 1) for b in range(k + 1 - a)]


def alphas_upto(l: int):
    """The set A(l) of multi-indices of weight at most l."""
    out = []
    for a1 in range(l + 1):
        for a2 in range(l // 2 + 1):
            for a3 in range(l // 3 + 1):
                if (a1, a2, a3) != (0, 0, 0) and a1 + 2 * a2 + 3 * a3 <= l:
                    out.append(MultiIndexAlpha(a1, a2, a3))
    return out


# ------------------------------------------------------------------ moments


def _gauss(s):
    return lambda h, t: np.exp(-s * gauge4(h, t))


def moments_b(mu: MeasureModel, ks: Iterable[int], s: float, u: HPoint, quad: Quad = MOMENT_QUAD) -> np.ndarray:
    """Vector of b_{k,s}(u) = s^{k+m/4}/(k! C(m)) int (2V(u,z))^k e^{-s||z||^4} dmu(z)."""
    ks = [int(k) for k in ks]
    if not s > 0:
        raise DomainError("s must be positive")
    m = mu.m
    C = C_m(m)
    kmax = max(ks)

    def g(h, t):
        V, _, _, _ = polarization(u.h, u.t, h, t)
        w = np.exp(-s * gauge4(h, t))
        return np.stack([(2.0 * V) ** k * w for k in ks], axis=1)

    raw = mu.integrate(g, All(s, 4 * kmax), quad).value
    return np.array([s ** (k + m / 4) / (factorial(k) * C) * raw[i] for i, k in enumerate(ks)])


def moment_b(mu: MeasureModel, k: int, s: float, u: HPoint, quad: Quad = MOMENT_QUAD) -> float:
    return float(moments_b(mu, [k], s, u, quad)[0])


def moments_c(mu: MeasureModel, alphas: Sequence[MultiIndexAlpha], s: float, u: HPoint, quad: Quad = MOMENT_QUAD) -> np.ndarray:
    """c_{alpha,s}(u) = s^{|alpha|+m/4}/(alpha! C(m)) int L^a1 Q^a2 T^a3 e^{-s||z||^4} dmu."""
    m = mu.m
    C = C_m(m)
    deg = max(3 * a.a1 + 2 * a.a2 + a.a3 for a in alphas)

    def g(h, t):
        _, L, Q, T = polarization(u.h, u.t, h, t)
        w = np.exp(-s * gauge4(h, t))
        return np.stack([L**a.a1 * Q**a.a2 * T**a.a3 * w for a in alphas], axis=1)

    raw = mu.integrate(g, All(s, deg + 1), quad).value
    return np.array([s ** (a.order + m / 4) / (a.factorial * C) * raw[i] for i, a in enumerate(alphas)])


def moment_c(mu: MeasureModel, alpha: MultiIndexAlpha, s: float, u: HPoint, quad: Quad = MOMENT_QUAD) -> float:
    return float(moments_c(mu, [alpha], s, u, quad)[0])


def b_bound(m: float, k: int, s: float, unorm: float) -> float:
    """16^k (x^k/k!) Gamma((m+3k)/4)/Gamma(m/4) (x^{2k} + 1) with x = ||u|| s^{1/4}."""
    x = unorm * s**0.25
    return 16.0**k * x**k / factorial(k) * gamma((m + 3 * k) / 4) / gamma(m / 4) * (x ** (2 * k) + 1)


def c_bound(m: float, alpha: MultiIndexAlpha, s: float, unorm: float) -> float:
    """D(alpha) (s^{1/4}||u||)^{w(alpha)}."""
    a1, a2, a3 = alpha.a1, alpha.a2, alpha.a3
    D = 4.0 ** (a1 + a3) * 12.0**a2 / alpha.factorial * gamma((m + 3 * a1 + 2 * a2 + a3) / 4) / gamma(m / 4)
    return D * (s**0.25 * unorm) ** alpha.weight


# ------------------------------------------------------------------ expansion inequality


def log_E(m: float, rel: float = 1e-16) -> float:
    """log of E(m) = sum_{k>=1} (16^k/k!) Gamma((m+3k)/4)/Gamma(m/4), summed to convergence.

    The terms grow until k is in the tens of thousands before the factorial wins, so the
    sum is accumulated in log space.
    """
    total = -np.inf
    start = 1
    block = 20000
    base = gammaln(m / 4)
    while True:
        k = np.arange(start, start + block, dtype=float)
        lt = k * log(16.0) - gammaln(k + 1) + gammaln((m + 3 * k) / 4) - base
        total = np.logaddexp(total, logsumexp(lt))
        if lt[-1] < total + log(rel) and lt[-1] < lt[-2]:
            return float(total)
        start += block


def log_G(m: float) -> float:
    """log of G(m) = max(E(m), e)."""
    return max(log_E(m), 1.0)


@dataclass(frozen=True)
class ExpansionResidual:
    lhs: float
    rhs: float  # may be inf: G(m) exceeds the double range
    log_rhs: float
    scaled_lhs: float  # lhs / (s||u||^4)^{q+1/4}

    @property
    def holds(self) -> bool:
        if self.lhs == 0.0:
            return True
        return log(self.lhs) <= self.log_rhs

    def __iter__(self):
        yield self.lhs
        yield self.rhs


def expansion_residual(mu: MeasureModel, u: HPoint, s: float, q: int, quad: Quad = MOMENT_QUAD) -> ExpansionResidual:
    unorm4 = float(gauge4(u.h, u.t))
    if unorm4 == 0.0:
        return ExpansionResidual(0.0, 0.0, -np.inf, 0.0)
    x = s * unorm4
    b = moments_b(mu, range(0, 4 * q + 1), s, u, quad)
    taylor = sum(x**k / factorial(k) for k in range(q + 1))
    lhs = abs(float(b.sum()) - taylor)
    lr = log_G(mu.m) + (q + 0.25) * log(x) + log(2.0 + x ** (2 * q))
    rhs = float(np.exp(lr)) if lr < 700 else float("inf")
    return ExpansionResidual(lhs, rhs, lr, lhs / x ** (q + 0.25))


# ------------------------------------------------------------------ curves


@dataclass(frozen=True, eq=False)
class MomentCurves:
    s: float
    b_s: np.ndarray
    Q_s: np.ndarray
    T_s: float
    C_m: float

    @property
    def trace(self) -> float:
        return float(np.trace(self.Q_s))


def curves(mu: MeasureModel, s: float, quad: Quad = MOMENT_QUAD) -> MomentCurves:
    """Barycentre b(s), matrix Q(s) = Q1 + Q2 - Q3 - Q4 and height T(s)."""
    if not s > 0:
        raise DomainError("s must be positive")
    n = mu.n
    d = 2 * n
    m = mu.m
    C = C_m(m)

    def g(h, t):
        w = np.exp(-s * gauge4(h, t))
        Jh = apply_J(h)
        r2 = np.sum(h * h, axis=1)
        zz = h[:, :, None] * h[:, None, :]
        JJ = Jh[:, :, None] * Jh[:, None, :]
        zJ = h[:, :, None] * Jh[:, None, :]
        parts = [
            ((r2[:, None] * h + t[:, None] * Jh) * w[:, None]),  # b
            (t * w)[:, None],  # T
            ((r2**2)[:, None, None] * zz + (t**2)[:, None, None] * JJ).reshape(-1, d * d) * w[:, None],  # Q1
            ((r2 * t)[:, None, None] * (zJ + zJ.transpose(0, 2, 1))).reshape(-1, d * d) * w[:, None],  # Q2
            (zz + JJ).reshape(-1, d * d) * w[:, None],  # Q3
            (r2 * w)[:, None],  # Q4 (times identity)
        ]
        return np.concatenate(parts, axis=1)

    raw = mu.integrate(g, All(s, 6), quad).value
    i = 0
    bint = raw[i : i + d]; i += d
    Tint = raw[i]; i += 1
    Q1 = raw[i : i + d * d].reshape(d, d); i += d * d
    Q2 = raw[i : i + d * d].reshape(d, d); i += d * d
    Q3 = raw[i : i + d * d].reshape(d, d); i += d * d
    Q4 = raw[i]
    lo = s ** (0.5 + m / 4) / C
    hi = s ** (1.5 + m / 4) / C
    b_s = 4.0 * lo * bint
    T_s = 2.0 * lo * Tint
    Q = 8.0 * hi * Q1 + 8.0 * hi * Q2 - 4.0 * lo * Q3 - 2.0 * lo * Q4 * np.eye(d)
    Q = 0.5 * (Q + Q.T)
    return MomentCurves(float(s), b_s, Q, float(T_s), C)


def trace_Q(mu: MeasureModel, s: float, method: str = "Assembled", quad: Optional[Quad] = None) -> float:
    if method == "Assembled":
        return curves(mu, s, quad or MOMENT_QUAD).trace
    if method != "Formula":
        raise DomainError(f"unknown method {method!r}")
    n, m = mu.n, mu.m

    def g(h, t):
        r2 = np.sum(h * h, axis=1)
        N4 = gauge4(h, t)
        return r2 * (8.0 * s * N4 - (8.0 + 4.0 * n)) * np.exp(-s * N4)

    val = mu.integrate(g, All(s, 6), quad or FORMULA_QUAD).value
    return float(s ** ((m + 2) / 4) / C_m(m) * val)


def f_curve(mu: MeasureModel, s: float, quad: Quad = MOMENT_QUAD) -> float:
    """f(s) = int |z_H|^2 e^{-s||z||^4} dmu(z)."""
    g = lambda h, t: np.sum(h * h, axis=1) * np.exp(-s * gauge4(h, t))
    return float(mu.integrate(g, All(s, 2), quad).value)


def f_from_trace(mu: MeasureModel, s: float, quad: Optional[Quad] = None) -> float:
    """-C(m)/(8 s^{(n+2)/2}) int_0^s lam^{(2n-2-m)/4} Tr Q(lam) dlam.

    The substitution lam = s u^4 turns the weight into the smooth factor u^{2n+1-m}.
    """
    n, m = mu.n, mu.m
    a = (2 * n - 2 - m) / 4.0
    integrand = lambda v: 4.0 * s ** (a + 1) * v ** (2 * n + 1 - m) * trace_Q(mu, s * v**4, "Formula", quad) if v > 0 else 0.0
    val, _ = sp_integrate.quad(integrand, 0.0, 1.0, epsabs=1e-12, epsrel=1e-10, limit=100)
    return -C_m(m) / (8.0 * s ** ((n + 2) / 2)) * val


def ode_check(mu: MeasureModel, s: float, quad: Optional[Quad] = None) -> float:
    return abs(f_curve(mu, s) - f_from_trace(mu, s, quad))


def T_bound(m: float) -> float:
    return 2.0 * gamma((m + 2) / 4) / gamma(m / 4)


def f_bound(m: float) -> float:
    """Upper bound for s^{(m+2)/4} f(s)."""
    return (m / 4) * gamma((m + 2) / 4)


def curves_csv(mu: MeasureModel, s_values: Sequence[float]) -> str:
    out = io.StringIO()
    d = 2 * mu.n
    head = ["s"] + [f"b{i}" for i in range(d)] + [f"Q{i}{j}" for i in range(d) for j in range(d)] + ["T", "trQ"]
    out.write(",".join(head) + "\n")
    for s in s_values:
        c = curves(mu, s)
        row = [s, *c.b_s, *c.Q_s.reshape(-1), c.T_s, c.trace]
        out.write(",".join(f"{float(v):.17e}" for v in row) + "\n")
    return out.getvalue()
