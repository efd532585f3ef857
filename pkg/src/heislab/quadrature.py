"""Quadrature building blocks shared by the measure, moment and expansion modules."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from functools import lru_cache
from math import gamma, pi
from typing import Any

import numpy as np
from scipy.special import gammainccinv

from .errors import DomainError

DEFAULT_SEED = 20240229


@dataclass(frozen=True)
class IntegrationResult:
    value: Any  # float, or an ndarray for vector/matrix valued integrands
    abs_error_est: float
    samples: int
    seed: int

    def to_json(self) -> str:
        d = asdict(self)
        d["value"] = np.asarray(self.value).tolist()
        return json.dumps(d, sort_keys=True)

    def __float__(self) -> float:
        return float(self.value)


@lru_cache(maxsize=None)
def gauss_legendre(order: int):
    """Gauss-Legendre nodes and weights on [-1, 1] (read-only arrays)."""
    x, w = np.polynomial.legendre.leggauss(int(order))
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gl_interval(a, b, order: int):
    """Nodes and weights mapped onto [a, b]; a and b may be arrays (broadcast on a new last axis)."""
    x, w = gauss_legendre(order)
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    half = 0.5 * (b - a)
    return 0.5 * (a + b) + half * x, half * w


def sphere_area(k: int) -> float:
    """Surface measure of the unit sphere S^k in R^{k+1} (S^0 has counting measure 2)."""
    return 2.0 * pi ** ((k + 1) / 2) / gamma((k + 1) / 2)


@lru_cache(maxsize=None)
def _sphere_rule(k: int, order: int):
    if k == 0:
        pts = np.array([[1.0], [-1.0]])
        wts = np.array([1.0, 1.0])
    elif k == 1:
        phi = 2 * pi * np.arange(2 * order) / (2 * order)
        pts = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        wts = np.full(phi.size, 2 * pi / phi.size)
    elif k == 2:
        x, w = gauss_legendre(order)
        phi = 2 * pi * np.arange(2 * order) / (2 * order)
        z = np.repeat(x, phi.size)
        s = np.sqrt(1 - z * z)
        ph = np.tile(phi, x.size)
        pts = np.stack([s * np.cos(ph), s * np.sin(ph), z], axis=1)
        wts = np.repeat(w, phi.size) * (2 * pi / phi.size)
    elif k == 3:
        # Hopf coordinates: (cos a e^{i p}, sin a e^{i q}), measure sin a cos a da dp dq
        xa, wa = gl_interval(0.0, pi / 2, order)
        p = 2 * pi * np.arange(2 * order) / (2 * order)
        A, P, Qv = np.meshgrid(xa, p, p, indexing="ij")
        W = np.broadcast_to((wa * np.sin(xa) * np.cos(xa))[:, None, None], A.shape) * (2 * pi / p.size) ** 2
        pts = np.stack(
            [np.cos(A) * np.cos(P), np.cos(A) * np.sin(P), np.sin(A) * np.cos(Qv), np.sin(A) * np.sin(Qv)],
            axis=-1,
        ).reshape(-1, 4)
        wts = W.reshape(-1)
    else:
        from scipy.stats import qmc

        g = qmc.Sobol(k + 1, scramble=True, seed=DEFAULT_SEED).random(2 ** max(12, 2 * order.bit_length()))
        from scipy.special import ndtri

        v = ndtri(np.clip(g, 1e-15, 1 - 1e-15))
        pts = v / np.linalg.norm(v, axis=1, keepdims=True)
        wts = np.full(pts.shape[0], sphere_area(k) / pts.shape[0])
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


def sphere_rule(k: int, order: int = 32):
    """Points and weights integrating over S^k with its surface measure.

    Exact for trigonometric/polynomial integrands of degree well below ``order`` when k <= 3.
    """
    if k < 0:
        raise DomainError(f"sphere dimension must be nonnegative, got {k}")
    return _sphere_rule(int(k), int(order))


def orthonormal_complement(vectors, dim: int) -> np.ndarray:
    """Rows form an orthonormal basis of the complement of span(vectors) in R^dim."""
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    if V.size == 0:
        return np.eye(dim)
    _, s, vt = np.linalg.svd(V, full_matrices=True)
    rank = int(np.sum(s > 1e-12 * max(1.0, s.max())))
    return vt[rank:]


def truncation_radius(m: float, p: float, s: float, tol: float = 1e-14) -> float:
    """Gauge radius R with relative tail of r^p e^{-s r^4} on an m-uniform measure below tol/10.

    The tail beyond R equals (m/4) s^{-(m+p)/4} Gamma((m+p)/4, s R^4), so it suffices to invert
    the regularized upper incomplete gamma function.
    """
    a = (m + p) / 4.0
    x = float(gammainccinv(a, tol / 10.0))
    return (x / s) ** 0.25


def smallest_positive_root(coeffs: np.ndarray) -> np.ndarray:
    """Batched smallest positive real root of polynomials (highest degree first along axis 1).

    Roots are found as companion-matrix eigenvalues and then polished by Newton steps.
    Rows without a positive root yield inf.
    """
    C = np.asarray(coeffs, dtype=float)
    roots = _batched_roots(C)
    real = np.where(np.abs(roots.imag) <= 1e-7 * (1 + np.abs(roots.real)), roots.real, np.inf)
    real = np.where(real > 0, real, np.inf)
    r = real.min(axis=1)
    return polish(C, r)


def _batched_roots(C: np.ndarray) -> np.ndarray:
    lead = C[:, 0:1]
    monic = C[:, 1:] / lead
    deg = monic.shape[1]
    comp = np.zeros((C.shape[0], deg, deg))
    comp[:, 0, :] = -monic
    if deg > 1:
        comp[:, np.arange(1, deg), np.arange(deg - 1)] = 1.0
    return np.linalg.eigvals(comp)


def polish(C: np.ndarray, r: np.ndarray, steps: int = 3) -> np.ndarray:
    """Newton-refine roots r of the row polynomials C (inf entries left untouched)."""
    r = r.copy()
    ok = np.isfinite(r)
    if not ok.any():
        return r
    Cs = C[ok]
    x = r[ok]
    dC = Cs[:, :-1] * np.arange(Cs.shape[1] - 1, 0, -1)
    for _ in range(steps):
        p = _horner(Cs, x)
        dp = _horner(dC, x)
        step = np.where(dp != 0, p / np.where(dp != 0, dp, 1.0), 0.0)
        x = x - step
    r[ok] = x
    return r


def _horner(C: np.ndarray, x: np.ndarray) -> np.ndarray:
    acc = np.zeros_like(x)
    for j in range(C.shape[1]):
        acc = acc * x + C[:, j]
    return acc


def sublevel_intervals(coeffs: np.ndarray, upper: np.ndarray, extra_breaks=None):
    """Intervals in [0, upper] where each row polynomial is <= 0.

    Returns (lo, hi) arrays of shape (N, K) where unused slots satisfy lo == hi.
    ``extra_breaks`` (N, j) adds split points such as half-space boundaries; the caller
    then masks pieces through its own indicator at the piece midpoint.
    """
    C = np.asarray(coeffs, dtype=float)
    N = C.shape[0]
    roots = _batched_roots(C)
    real = np.where(np.abs(roots.imag) <= 1e-7 * (1 + np.abs(roots.real)), roots.real, np.nan)
    real = np.where(real > 0, real, np.nan)
    real = np.sort(real, axis=1)
    for j in range(real.shape[1]):
        col = real[:, j]
        fin = np.isfinite(col)
        if fin.any():
            col[fin] = polish(C[fin], col[fin])
    pts = [np.zeros((N, 1)), np.minimum(np.nan_to_num(real, nan=np.inf), upper[:, None])]
    if extra_breaks is not None:
        eb = np.asarray(extra_breaks, dtype=float).reshape(N, -1)
        eb = np.where((eb > 0) & np.isfinite(eb), eb, np.inf)
        pts.append(np.minimum(eb, upper[:, None]))
    pts.append(upper[:, None])
    allp = np.sort(np.concatenate(pts, axis=1), axis=1)
    lo = allp[:, :-1]
    hi = allp[:, 1:]
    mid = 0.5 * (lo + hi)
    val = _horner_matrix(C, mid)
    inside = (val <= 0) & (hi > lo)
    lo = np.where(inside, lo, 0.0)
    hi = np.where(inside, hi, 0.0)
    return lo, hi


def _horner_matrix(C: np.ndarray, X: np.ndarray) -> np.ndarray:
    acc = np.zeros_like(X)
    for j in range(C.shape[1]):
        acc = acc * X + C[:, j : j + 1]
    return acc


def stratified_uniform(dim: int, per_axis: int, seed: int, chunk: int = 0) -> np.ndarray:
    """One uniform sample in each cell of a per_axis^dim grid on [0,1]^dim.

    Seeding is counter based on (seed, chunk) so that splitting work into chunks never
    changes the samples drawn for a given chunk.
    """
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, int(chunk)])
    grids = np.meshgrid(*[np.arange(per_axis)] * dim, indexing="ij")
    cells = np.stack([g.reshape(-1) for g in grids], axis=1).astype(float)
    return (cells + rng.random(cells.shape)) / per_axis


def stratified_estimate(values: np.ndarray, volume: float, per_axis: int):
    """Mean-value estimate and a standard error from pairing adjacent strata."""
    vals = np.asarray(values, dtype=float)
    est = volume * vals.mean()
    if vals.size < 4:
        return est, abs(est)
    even = vals[: vals.size // 2 * 2]
    diff = even[0::2] - even[1::2]
    var = np.mean(diff**2) / 2.0
    err = volume * np.sqrt(var / vals.size)
    return est, err
