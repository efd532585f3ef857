"""Arithmetic of the Heisenberg group H^n with the Koranyi gauge.

Points are written (x_H, x_T) with x_H in R^{2n} and x_T real.  The group law is

    x * y = (x_H + y_H, x_T + y_T + 2<x_H, J y_H>),   J = [[0, I], [-I, 0]].

Every public function has a scalar form acting on :class:`HPoint` and most have an
array form (suffix-free helpers ``group_mul``, ``gauge``, ``polarization``) that
broadcasts over leading axes, which the quadrature code relies on.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionError, DomainError, InvalidIsometry

MAX_N = 4


@lru_cache(maxsize=None)
def _symplectic(n: int) -> np.ndarray:
    eye = np.eye(n)
    zero = np.zeros((n, n))
    J = np.block([[zero, eye], [-eye, zero]])
    J.setflags(write=False)
    return J


def symplectic_J(n: int) -> np.ndarray:
    """The standard symplectic matrix on R^{2n} (read-only)."""
    if n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    return _symplectic(int(n))


@dataclass(frozen=True, eq=False)
class HPoint:
    """A point of H^n stored as horizontal part ``h`` (length 2n) and height ``t``."""

    h: np.ndarray
    t: float

    def __post_init__(self):
        h = np.array(self.h, dtype=float).reshape(-1)
        if h.size == 0 or h.size % 2:
            raise DimensionError(f"horizontal part must have even positive length, got {h.size}")
        t = float(self.t)
        if not (np.all(np.isfinite(h)) and np.isfinite(t)):
            raise DomainError("coordinates must be finite")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "t", t)

    @property
    def n(self) -> int:
        return self.h.size // 2

    @classmethod
    def from_coords(cls, coords) -> "HPoint":
        c = np.asarray(coords, dtype=float).reshape(-1)
        return cls(c[:-1], c[-1])

    @classmethod
    def origin(cls, n: int) -> "HPoint":
        return cls(np.zeros(2 * n), 0.0)

    def coords(self) -> np.ndarray:
        return np.append(self.h, self.t)

    def allclose(self, other: "HPoint", atol: float = 1e-12) -> bool:
        return self.n == other.n and np.allclose(self.coords(), other.coords(), rtol=0, atol=atol)

    def __repr__(self) -> str:
        return f"HPoint(h={self.h.tolist()}, t={self.t!r})"


def _same_n(x: HPoint, y: HPoint) -> None:
    if x.n != y.n:
        raise DimensionError(f"points live in H^{x.n} and H^{y.n}")


# ---------------------------------------------------------------- array forms


def twist(xh: np.ndarray, yh: np.ndarray) -> np.ndarray:
    """<x_H, J y_H> along the last axis, broadcasting."""
    n = xh.shape[-1] // 2
    # <x, J y> = <x_1, y_2> - <x_2, y_1> with x = (x_1, x_2)
    return np.sum(xh[..., :n] * yh[..., n:], axis=-1) - np.sum(xh[..., n:] * yh[..., :n], axis=-1)


def apply_J(v: np.ndarray) -> np.ndarray:
    """J v along the last axis."""
    n = v.shape[-1] // 2
    return np.concatenate([v[..., n:], -v[..., :n]], axis=-1)


def group_mul(xh, xt, yh, yt):
    """Array form of the group product; returns (h, t)."""
    xh = np.asarray(xh, dtype=float)
    yh = np.asarray(yh, dtype=float)
    return xh + yh, np.asarray(xt) + np.asarray(yt) + 2.0 * twist(xh, yh)


def gauge(h, t) -> np.ndarray:
    """Koranyi gauge (|h|^4 + t^2)^{1/4}, broadcasting over leading axes."""
    h = np.asarray(h, dtype=float)
    sq = np.sum(h * h, axis=-1)
    return (sq * sq + np.asarray(t, dtype=float) ** 2) ** 0.25


def gauge4(h, t) -> np.ndarray:
    """Fourth power of the gauge, avoiding the root."""
    h = np.asarray(h, dtype=float)
    sq = np.sum(h * h, axis=-1)
    return sq * sq + np.asarray(t, dtype=float) ** 2


def distance(xh, xt, yh, yt) -> np.ndarray:
    """Array form of the left-invariant Koranyi distance."""
    xh = np.asarray(xh, dtype=float)
    yh = np.asarray(yh, dtype=float)
    return gauge(yh - xh, np.asarray(yt) - np.asarray(xt) - 2.0 * twist(xh, yh))


def polarization(uh, ut, zh, zt):
    """Return arrays (V, L, Q, T) of the quartic polarization at (u, z).

    V(u, z) = (||u||^4 + ||z||^4 - ||u^{-1} z||^4) / 2 and 2V = L + Q + T with

        L = <u_H, 4|z_H|^2 z_H + 4 z_T J z_H>
        Q = -4<z_H,u_H>^2 - 2|z_H|^2|u_H|^2 - 4<J z_H,u_H>^2 + 2 z_T u_T
        T = <z_H, 4|u_H|^2 u_H + 4 u_T J u_H>
    """
    uh = np.asarray(uh, dtype=float)
    zh = np.asarray(zh, dtype=float)
    ut = np.asarray(ut, dtype=float)
    zt = np.asarray(zt, dtype=float)
    dh = zh - uh
    dt = zt - ut - 2.0 * twist(uh, zh)  # height of u^{-1} z
    V = 0.5 * (gauge4(uh, ut) + gauge4(zh, zt) - gauge4(dh, dt))
    zz = np.sum(zh * zh, axis=-1)
    uu = np.sum(uh * uh, axis=-1)
    zu = np.sum(zh * uh, axis=-1)
    Jzu = np.sum(apply_J(zh) * uh, axis=-1)
    Juz = np.sum(apply_J(uh) * zh, axis=-1)
    L = 4.0 * zz * zu + 4.0 * zt * Jzu
    Q = -4.0 * zu**2 - 2.0 * zz * uu - 4.0 * Jzu**2 + 2.0 * zt * ut
    T = 4.0 * uu * zu + 4.0 * ut * Juz
    return V, L, Q, T


# ---------------------------------------------------------------- point forms


def mul(x: HPoint, y: HPoint) -> HPoint:
    _same_n(x, y)
    h, t = group_mul(x.h, x.t, y.h, y.t)
    return HPoint(h, float(t))


def inv(x: HPoint) -> HPoint:
    return HPoint(-x.h, -x.t)


def dilate(lam: float, x: HPoint) -> HPoint:
    if not lam > 0:
        raise DomainError(f"dilation factor must be positive, got {lam}")
    return HPoint(lam * x.h, lam * lam * x.t)


def knorm(x: HPoint) -> float:
    return float(gauge(x.h, x.t))


def kdist(x: HPoint, y: HPoint) -> float:
    _same_n(x, y)
    return float(distance(x.h, x.t, y.h, y.t))


@dataclass(frozen=True)
class PolarizationParts:
    V: float
    L: float
    Q: float
    T: float


def polarize(u: HPoint, z: HPoint) -> PolarizationParts:
    _same_n(u, z)
    V, L, Q, T = polarization(u.h, u.t, z.h, z.t)
    return PolarizationParts(float(V), float(L), float(Q), float(T))


# ---------------------------------------------------------------- isometries


@dataclass(frozen=True, eq=False)
class IsometryU:
    """An element of S(2n): orthogonal U with U^T J U = sign * J."""

    U: np.ndarray
    sign: int
    tol: float = 1e-12

    def __post_init__(self):
        U = np.array(self.U, dtype=float)
        if U.ndim != 2 or U.shape[0] != U.shape[1] or U.shape[0] % 2:
            raise InvalidIsometry(f"U must be a square matrix of even size, got shape {U.shape}")
        if self.sign not in (1, -1):
            raise InvalidIsometry(f"sign must be +1 or -1, got {self.sign}")
        n = U.shape[0] // 2
        J = symplectic_J(n)
        orth = np.max(np.abs(U.T @ U - np.eye(2 * n)))
        sympl = np.max(np.abs(U.T @ J @ U - self.sign * J))
        if orth > self.tol or sympl > self.tol:
            raise InvalidIsometry(
                f"not in S(2n): orthogonality defect {orth:.3e}, symplectic defect {sympl:.3e}"
            )
        U.setflags(write=False)
        object.__setattr__(self, "U", U)

    @property
    def n(self) -> int:
        return self.U.shape[0] // 2


def isometry_apply(iso: IsometryU, x: HPoint) -> HPoint:
    if iso.n != x.n:
        raise DimensionError(f"isometry acts on H^{iso.n}, point lives in H^{x.n}")
    return HPoint(iso.U @ x.h, iso.sign * x.t)


def random_isometry(n: int, rng: np.random.Generator, sign: int = 1) -> IsometryU:
    """Sample U in S(2n) from the unitary group U(n) embedded as [[A, -B], [B, A]].

    Such matrices commute with J; composing with diag(I, -I) flips the sign.
    """
    Z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    Qc, R = np.linalg.qr(Z)
    Qc = Qc * (np.diag(R) / np.abs(np.diag(R)))
    A, B = Qc.real, Qc.imag
    U = np.block([[A, -B], [B, A]])
    if sign == -1:
        U = U @ np.diag(np.r_[np.ones(n), -np.ones(n)])
    return IsometryU(U, sign, tol=1e-10)
