"""Uniform-measure candidates on H^n and quadrature of integrals against them.

Every model is described by its support and a density with respect to Euclidean
Hausdorff measure on that support:

* vertical hyperplane pieces carry (1/c_n) H^{2n-1} of the footprint times dt,
* the horizontal line {(s v, 0)} carries (1/2) ds,
* the vertical axis {(0, t)} carries (1/2) dt,
* the graph t = <x, D x> + <b, x> carries (1/c_n) |b + 2(D + J) x| dx.

With these normalizations every flat plane, line and axis model is uniform:
mu(B_r(x)) = r^m for x on the support.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, replace
from math import gamma, pi, sqrt
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import integrate as sp_integrate

from .errors import (
    DegenerateOmega,
    DimensionError,
    DomainError,
    IntegrationError,
    SupportError,
)
from .heis_core import HPoint, apply_J, symplectic_J, twist
from .quadrature import (
    DEFAULT_SEED,
    IntegrationResult,
    gauss_legendre,
    gl_interval,
    orthonormal_complement,
    sphere_area,
    sphere_rule,
    stratified_estimate,
    stratified_uniform,
    sublevel_intervals,
    truncation_radius,
)
from .quadric import Quadric, classify_vertical_rank

Integrand = Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]]


# ------------------------------------------------------------------ constants


def cn_gamma(n: int) -> float:
    """sqrt(pi) Gamma((2n-1)/4) sigma_{2n-2} / ((2n+1) Gamma((2n+1)/4))."""
    return sqrt(pi) * gamma((2 * n - 1) / 4) * sphere_area(2 * n - 2) / ((2 * n + 1) * gamma((2 * n + 1) / 4))


def cn_constant(n: int, method: str = "GammaFormula", samples: int = 1_000_000, seed: int = DEFAULT_SEED) -> float:
    """Euclidean area of the unit Koranyi ball inside a vertical hyperplane.

    ``GeometricQuadrature`` integrates 2 sqrt(1 - |y|^4) over the unit ball of R^{2n-1}:
    adaptively for n = 1, by stratified Monte Carlo otherwise.
    """
    if not 1 <= n <= 4:
        raise DomainError(f"n must lie in 1..4, got {n}")
    if method == "GammaFormula":
        return cn_gamma(n)
    if method != "GeometricQuadrature":
        raise DomainError(f"unknown method {method!r}")
    if n == 1:
        val, _ = sp_integrate.quad(lambda x: np.sqrt(1.0 - x**4), 0.0, 1.0, epsabs=1e-15, epsrel=1e-13, limit=200)
        return 4.0 * val
    d = 2 * n - 1
    per = int(np.ceil(samples ** (1.0 / d)))
    u = 2.0 * stratified_uniform(d, per, seed) - 1.0
    q = np.sum(u * u, axis=1)
    vals = np.where(q <= 1.0, 2.0 * np.sqrt(np.clip(1.0 - q * q, 0.0, None)), 0.0)
    est, _ = stratified_estimate(vals, 2.0**d, per)
    return float(est)


# ------------------------------------------------------------------ regions


@dataclass(frozen=True)
class All:
    """The whole space; ``s`` and ``degree`` describe the decay |z|^degree e^{-s|z|^4} of the integrand."""

    s: float = 1.0
    degree: float = 0.0
    tol: float = 1e-14


@dataclass(frozen=True, eq=False)
class Ball:
    center: HPoint
    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise DomainError(f"radius must be positive, got {self.r}")


Region = Union[All, Ball]


@dataclass(frozen=True)
class Quad:
    """Quadrature options. Orders refer to Gauss-Legendre nodes per axis."""

    order: int = 64
    order_t: int = 48
    order_all: int = 160
    angles: int = 2048
    sphere_order: int = 16
    samples: int = 1_000_000
    seed: int = DEFAULT_SEED
    error_estimate: bool = True


def _apply(g: Integrand, h: np.ndarray, t: np.ndarray) -> np.ndarray:
    if g is None:
        return np.ones(h.shape[0])
    out = np.asarray(g(h, t), dtype=float)
    if out.shape[:1] != (h.shape[0],):
        raise IntegrationError(f"integrand returned shape {out.shape} for {h.shape[0]} points")
    return out


def _wsum(w: np.ndarray, vals: np.ndarray):
    res = np.tensordot(w, vals, axes=(0, 0))
    if not np.all(np.isfinite(res)):
        raise IntegrationError("integrand produced non-finite values")
    return res


def _as_value(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


# ------------------------------------------------------------------ base class


class MeasureModel:
    """Common interface: ``n``, ``m``, ``integrate``, ``on_support``, ``support_points``."""

    n: int
    kind: str = "Model"

    @property
    def m(self) -> int:
        raise NotImplementedError

    def integrate(self, g: Integrand, region: Region, quad: Quad = Quad()) -> IntegrationResult:
        if isinstance(region, Ball) and region.center.n != self.n:
            raise DimensionError(f"model lives in H^{self.n}, ball center in H^{region.center.n}")
        hi = self._integrate(g, region, quad)
        if quad.error_estimate and not getattr(self, "_stochastic", False):
            coarse = Quad(
                order=max(8, quad.order * 2 // 3),
                order_t=max(8, quad.order_t * 2 // 3),
                order_all=max(8, quad.order_all * 2 // 3),
                angles=max(16, quad.angles * 2 // 3),
                sphere_order=max(4, quad.sphere_order * 2 // 3),
                samples=quad.samples,
                seed=quad.seed,
                error_estimate=False,
            )
            lo = self._integrate(g, region, coarse)
            err = float(np.max(np.abs(np.asarray(hi[0]) - np.asarray(lo[0]))))
        else:
            err = hi[1]
        if isinstance(region, All):
            self._decay_check(g, region, hi[0])
        return IntegrationResult(_as_value(hi[0]), float(err), int(hi[2]), int(quad.seed))

    # subclasses return (value, err, samples)
    def _integrate(self, g, region, quad):
        raise NotImplementedError

    def _decay_check(self, g, region: All, value) -> None:
        if g is None:
            raise IntegrationError("the constant integrand is not integrable over the whole space")
        R = truncation_radius(self.m, region.degree, region.s, region.tol)
        h, t = self._boundary_points(R)
        if h.shape[0] == 0:
            return
        vals = np.abs(np.asarray(g(h, t), dtype=float)).reshape(h.shape[0], -1).max()
        # compare against the integrand's size at the natural radius s^{-1/4}, since the
        # integral itself may vanish by symmetry
        h0, t0 = self._boundary_points(region.s ** -0.25)
        typical = np.abs(np.asarray(g(h0, t0), dtype=float)).max() * region.s ** (-(self.m + 1) / 4)
        scale = max(float(np.max(np.abs(value))), float(typical), 1e-300)
        if not np.isfinite(vals) or vals * R ** (self.m + 1) > 1e-6 * scale + 1e-12:
            raise IntegrationError("integrand does not decay at the truncation radius")

    def _boundary_points(self, R: float):
        return np.zeros((0, 2 * self.n)), np.zeros(0)

    def on_support(self, z: HPoint, tol: float = 1e-9) -> bool:
        raise NotImplementedError

    def support_points(self, k: int, scale: float = 1.0) -> list:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


# ------------------------------------------------------------------ vertical pieces


@dataclass(frozen=True, eq=False)
class PlanePiece:
    """Part of the vertical hyperplane {<e, y> = offset} cut by half-spaces <a_i, y> >= o_i."""

    normal: np.ndarray
    offset: float = 0.0
    cuts: tuple = ()

    def __post_init__(self):
        e = np.array(self.normal, dtype=float).reshape(-1)
        nrm = np.linalg.norm(e)
        if nrm == 0 or e.size % 2:
            raise DomainError("plane normal must be a nonzero vector of even length")
        e = e / nrm
        e.setflags(write=False)
        object.__setattr__(self, "normal", e)
        object.__setattr__(self, "offset", float(self.offset) / nrm)
        cuts = []
        for a, o in self.cuts:
            a = np.array(a, dtype=float).reshape(-1)
            a.setflags(write=False)
            cuts.append((a, float(o)))
        object.__setattr__(self, "cuts", tuple(cuts))

    @property
    def base(self) -> np.ndarray:
        return self.offset * self.normal

    def admits(self, y: np.ndarray) -> np.ndarray:
        ok = np.ones(y.shape[:-1], dtype=bool)
        for a, o in self.cuts:
            ok &= y @ a >= o - 1e-14
        return ok

    def to_dict(self) -> dict:
        return {
            "normal": self.normal.tolist(),
            "offset": self.offset,
            "cuts": [[a.tolist(), o] for a, o in self.cuts],
        }


class VerticalModel(MeasureModel):
    """A finite union of vertical hyperplane pieces, each with density (1/c_n) H^{2n-1} x dt."""

    kind = "VerticalCone"

    def __init__(self, pieces: Sequence[PlanePiece]):
        if not pieces:
            raise DomainError("at least one plane piece is required")
        n = pieces[0].normal.size // 2
        for p in pieces:
            if p.normal.size != 2 * n:
                raise DimensionError("plane pieces live in different dimensions")
        self.n = n
        self.pieces = tuple(pieces)
        self.cn = cn_gamma(n)
        self._stochastic = n >= 2

    @property
    def m(self) -> int:
        return 2 * self.n + 1

    # -------------------------------------------------------------- support
    def on_support(self, z: HPoint, tol: float = 1e-9) -> bool:
        for p in self.pieces:
            if abs(z.h @ p.normal - p.offset) <= tol * (1 + np.linalg.norm(z.h)) and p.admits(z.h):
                return True
        return False

    def support_points(self, k: int, scale: float = 1.0) -> list:
        """Deterministic sample of support points spread over the pieces."""
        rng = np.random.default_rng(12345)
        pts = []
        i = 0
        while len(pts) < k:
            p = self.pieces[i % len(self.pieces)]
            B = orthonormal_complement(p.normal, 2 * self.n)
            for _ in range(1000):
                y = p.base + scale * (rng.standard_normal(B.shape[0]) @ B)
                if p.admits(y):
                    break
            t = scale**2 * rng.standard_normal()
            pts.append(HPoint(y, t) if len(pts) else HPoint(p.base, 0.0))
            i += 1
        return pts

    def to_dict(self) -> dict:
        return {"type": "VerticalCone", "n": self.n, "pieces": [p.to_dict() for p in self.pieces]}

    # -------------------------------------------------------------- integration
    def _integrate(self, g, region, quad):
        total = 0.0
        err = 0.0
        count = 0
        for piece in self.pieces:
            if self.n == 1:
                v, e, c = self._piece_n1(piece, g, region, quad)
            else:
                v, e, c = self._piece_mc(piece, g, region, quad)
            total = total + v
            err += e
            count += c
        return total, err, count

    def _sigma_bounds(self, piece: PlanePiece, d: np.ndarray, lo: float, hi: float):
        """Restrict the line parameter of an n=1 piece by its cuts."""
        p0 = piece.base
        for a, o in piece.cuts:
            ad = a @ d
            rhs = o - a @ p0
            if abs(ad) < 1e-15:
                if rhs > 1e-14:
                    return 1.0, 0.0
                continue
            if ad > 0:
                lo = max(lo, rhs / ad)
            else:
                hi = min(hi, rhs / ad)
        return lo, hi

    def _piece_n1(self, piece, g, region, quad):
        e = piece.normal
        d = apply_J(e)  # unit direction of the footprint line
        p0 = piece.base
        if isinstance(region, Ball):
            c = region.center
            r = region.r
            delta = c.h @ e - piece.offset
            if abs(delta) >= r:
                return 0.0, 0.0, 0
            s0 = (c.h - p0) @ d
            R = sqrt(r * r - delta * delta)
            slo, shi = self._sigma_bounds(piece, d, s0 - R, s0 + R)
            if shi <= slo:
                return 0.0, 0.0, 0
            # sigma = s0 + R sin(psi) removes the square-root endpoint behaviour
            plo = np.arcsin(np.clip((slo - s0) / R, -1, 1))
            phi = np.arcsin(np.clip((shi - s0) / R, -1, 1))
            psi, wpsi = gl_interval(plo, phi, quad.order)
            sig = s0 + R * np.sin(psi)
            q = (sig - s0) ** 2 + delta**2
            half = R * np.cos(psi) * np.sqrt(r * r + q)  # sqrt(r^4 - q^2)
            y = p0[None, :] + sig[:, None] * d[None, :]
            jac = R * np.cos(psi)
            if g is None:
                val = np.sum(wpsi * jac * 2.0 * half) / self.cn
                return val, 0.0, psi.size
            tc = c.t + 2.0 * twist(c.h[None, :], y)
            tau, wtau = gl_interval(-1.0, 1.0, quad.order_t)
            Y = np.repeat(y, tau.size, axis=0)
            Tt = (tc[:, None] + half[:, None] * tau[None, :]).reshape(-1)
            W = ((wpsi * jac * half)[:, None] * wtau[None, :]).reshape(-1) / self.cn
            vals = _apply(g, Y, Tt)
            return _wsum(W, vals), 0.0, W.size
        # whole space: tensor rule on a box containing the truncated gauge ball
        R = truncation_radius(self.m, region.degree, region.s, region.tol)
        s0 = -(p0 @ d)
        slo, shi = self._sigma_bounds(piece, d, s0 - R, s0 + R)
        if shi <= slo:
            return 0.0, 0.0, 0
        # split at the point closest to the origin so radial kinks sit on cell corners
        sb = [slo] + ([s0] if slo < s0 < shi else []) + [shi]
        sig = np.concatenate([gl_interval(a, b, quad.order_all)[0] for a, b in zip(sb[:-1], sb[1:])])
        ws = np.concatenate([gl_interval(a, b, quad.order_all)[1] for a, b in zip(sb[:-1], sb[1:])])
        tt = np.concatenate([gl_interval(-R * R, 0.0, quad.order_all)[0], gl_interval(0.0, R * R, quad.order_all)[0]])
        wt = np.concatenate([gl_interval(-R * R, 0.0, quad.order_all)[1], gl_interval(0.0, R * R, quad.order_all)[1]])
        y = p0[None, :] + sig[:, None] * d[None, :]
        Y = np.repeat(y, tt.size, axis=0)
        Tt = np.tile(tt, sig.size)
        W = (ws[:, None] * wt[None, :]).reshape(-1) / self.cn
        return _wsum(W, _apply(g, Y, Tt)), 0.0, W.size

    def _piece_mc(self, piece, g, region, quad):
        n = self.n
        dim = 2 * n - 1
        B = orthonormal_complement(piece.normal, 2 * n)
        p0 = piece.base
        per = int(np.ceil(quad.samples ** (1.0 / dim)))
        u = 2.0 * stratified_uniform(dim, per, quad.seed, chunk=_piece_tag(piece)) - 1.0
        if isinstance(region, Ball):
            c, r = region.center, region.r
            delta = c.h @ piece.normal - piece.offset
            if abs(delta) >= r:
                return 0.0, 0.0, 0
            R = sqrt(r * r - delta * delta)
            xi0 = B @ (c.h - p0)
            xi = xi0 + R * u
            y = p0 + xi @ B
            q = np.sum((xi - xi0) ** 2, axis=1) + delta**2
            inside = (q <= r * r) & piece.admits(y)
            half = np.sqrt(np.clip(r**4 - q * q, 0.0, None))
            vol = (2 * R) ** dim
            if g is None:
                vals = np.where(inside, 2.0 * half, 0.0) / self.cn
                est, err = stratified_estimate(vals, vol, per)
                return est, err, vals.size
            tc = c.t + 2.0 * twist(c.h[None, :], y)
            return self._mc_with_t(g, y, tc, half, inside, vol, per, quad)
        R = truncation_radius(self.m, region.degree, region.s, region.tol)
        xi = R * u
        y = p0 + xi @ B
        inside = piece.admits(y)
        return self._mc_with_t(g, y, np.zeros(y.shape[0]), np.full(y.shape[0], R * R), inside, (2 * R) ** dim, per, quad)

    def _mc_with_t(self, g, y, tc, half, inside, vol, per, quad):
        tau, wtau = gl_interval(-1.0, 1.0, quad.order_t)
        idx = np.flatnonzero(inside)
        block = max(1, 400_000 // tau.size)
        per_sample = []
        for s in range(0, idx.size, block):
            j = idx[s : s + block]
            Y = np.repeat(y[j], tau.size, axis=0)
            Tt = (tc[j, None] + half[j, None] * tau[None, :]).reshape(-1)
            vals = _apply(g, Y, Tt)
            vals = vals.reshape((j.size, tau.size) + vals.shape[1:])
            contrib = np.tensordot(wtau, vals, axes=(0, 1)) * half[j].reshape((-1,) + (1,) * (vals.ndim - 2))
            per_sample.append(contrib)
        if per_sample:
            ps = np.concatenate(per_sample, axis=0)
        else:
            ps = np.zeros((0,))
        full_shape = (y.shape[0],) + ps.shape[1:]
        full = np.zeros(full_shape)
        full[idx] = ps
        full /= self.cn
        est = vol * full.mean(axis=0)
        flat = full.reshape(full.shape[0], -1)
        _, err = stratified_estimate(flat[:, 0], vol, per)
        if not np.all(np.isfinite(est)):
            raise IntegrationError("integrand produced non-finite values")
        return est, err, full.shape[0] * tau.size

    def _boundary_points(self, R):
        pts_h, pts_t = [], []
        for piece in self.pieces:
            B = orthonormal_complement(piece.normal, 2 * self.n)
            for k in range(B.shape[0]):
                for sgn in (1, -1):
                    y = piece.base + sgn * R * B[k]
                    pts_h += [y, y]
                    pts_t += [0.0, 0.0]
            pts_h += [piece.base, piece.base]
            pts_t += [R * R, -R * R]
        return np.array(pts_h), np.array(pts_t)


def _piece_tag(piece: PlanePiece) -> int:
    return zlib.crc32(piece.normal.tobytes() + np.float64(piece.offset).tobytes())


class FlatPlane(VerticalModel):
    kind = "FlatPlane"

    def __init__(self, normal):
        e = np.asarray(normal, dtype=float).reshape(-1)
        if e.size % 2 or e.size == 0:
            raise DimensionError("normal must have even length")
        nrm = np.linalg.norm(e)
        if abs(nrm - 1.0) > 1e-12:
            raise DomainError(f"FlatPlane normal must be a unit vector, |e| = {nrm}")
        super().__init__([PlanePiece(e)])
        self.normal = self.pieces[0].normal

    def to_dict(self) -> dict:
        return {"type": "FlatPlane", "n": self.n, "normal": self.normal.tolist()}


class VerticalCone(VerticalModel):
    """Union of vertical plane pieces, optionally attached to the quadric they came from."""

    kind = "VerticalCone"

    def __init__(self, pieces, quadric: Optional[Quadric] = None, label: str = "VerticalCone"):
        super().__init__(pieces)
        self.quadric = quadric
        self.kind = label

    @classmethod
    def plane_pair(cls, nvec, mvec, halves=("full", "full")) -> "VerticalCone":
        """Planes V(n) and V(m) through the origin.

        Each entry of ``halves`` is "full", "pos" or "neg" (keep <J e, y> >= 0 or <= 0 on the
        plane with normal e), "none" to drop the plane, or an explicit cut vector.
        """
        pieces = []
        for e, hsel in zip((nvec, mvec), halves):
            e = np.asarray(e, dtype=float)
            e = e / np.linalg.norm(e)
            if isinstance(hsel, str):
                if hsel == "none":
                    continue
                if hsel == "full":
                    cuts = ()
                elif hsel in ("pos", "neg"):
                    cuts = (((1 if hsel == "pos" else -1) * apply_J(e), 0.0),)
                else:
                    raise DomainError(f"unknown half selector {hsel!r}")
            else:
                cuts = ((np.asarray(hsel, dtype=float), 0.0),)
            pieces.append(PlanePiece(e, 0.0, cuts))
        model = cls(pieces, label="PlanePair")
        model.pair = (np.asarray(nvec, float) / np.linalg.norm(nvec), np.asarray(mvec, float) / np.linalg.norm(mvec))
        model.halves = tuple(halves)
        return model

    @classmethod
    def from_quadric(cls, q: Quadric, select: Optional[Sequence[bool]] = None) -> "VerticalCone":
        """Vertical model on K(b, Q, 0) when its footprint is a union of hyperplanes.

        ``select`` chooses which of the hyperplanes to keep; which component carries the
        measure is not determined by the quadric alone, so it is left to the caller.
        """
        info = classify_vertical_rank(q)
        planes = []
        if info.kind == "Rank1Flat":
            e = info.normal
            lam = info.scale
            perp = q.b - (q.b @ e) * e
            if np.linalg.norm(perp) > 1e-10 * (1 + np.linalg.norm(q.b)):
                raise DomainError("footprint is a parabolic cylinder, not a union of hyperplanes")
            beta = q.b @ e
            planes.append((e, 0.0))
            if abs(beta) > 1e-14:
                planes.append((e, -beta / lam))
        elif info.kind == "Rank2" and info.pair is not None:
            nv, mv = info.pair
            x0 = info.shift
            planes += [(nv, float(nv @ x0)), (mv, float(mv @ x0))]
        else:
            raise DomainError(f"{info.kind} quadric without a hyperplane factorization")
        if select is None:
            select = [True] * len(planes)
        pieces = [PlanePiece(e, o) for (e, o), keep in zip(planes, select) if keep]
        return cls(pieces, quadric=q)


# ------------------------------------------------------------------ line and axis


class HorizontalLine(MeasureModel):
    """(1/2) ds on the horizontal line {(s v, 0)} in H^1."""

    kind = "HorizontalLine"

    def __init__(self, direction):
        v = np.asarray(direction, dtype=float).reshape(-1)
        if v.size != 2:
            raise DimensionError("the horizontal line model is defined in H^1 only")
        nrm = np.linalg.norm(v)
        if nrm == 0:
            raise DomainError("direction must be nonzero")
        self.direction = v / nrm
        self.n = 1

    @property
    def m(self) -> int:
        return 1

    def on_support(self, z, tol=1e-9):
        v = self.direction
        return abs(z.t) <= tol and abs(twist(v, z.h)) <= tol * (1 + np.linalg.norm(z.h))

    def support_points(self, k, scale=1.0):
        return [HPoint(s * scale * self.direction, 0.0) for s in np.linspace(-1.0, 1.5, k)]

    def to_dict(self):
        return {"type": "HorizontalLine", "n": 1, "direction": self.direction.tolist()}

    def _integrate(self, g, region, quad):
        v = self.direction
        if isinstance(region, Ball):
            c, r = region.center, region.r
            # gauge^4 of c^{-1} (s v, 0) as a quartic in s
            a = c.h @ v
            hh = c.h @ c.h
            k = twist(c.h, v)
            p2 = np.array([1.0, -2 * a, hh])
            p1 = np.array([2 * k, c.t])
            P = np.polymul(p2, p2)
            P = np.polyadd(P, np.polymul(p1, p1))
            P[-1] -= r**4
            S = np.sqrt(hh) + r + 1.0
            # shift s = -S + u so that the search runs over u in [0, 2S]
            Pu = np.poly1d(P)(np.poly1d([1.0, -S])).coeffs
            lo, hi = sublevel_intervals(Pu[None, :], np.array([2 * S]))
            lo, hi = lo[0] - S, hi[0] - S
        else:
            R = truncation_radius(1, region.degree, region.s, region.tol)
            lo, hi = np.array([-R]), np.array([R])
        keep = hi > lo
        lo, hi = lo[keep], hi[keep]
        if lo.size == 0:
            return 0.0, 0.0, 0
        order = quad.order_all if isinstance(region, All) else quad.order
        s, w = gl_interval(lo, hi, order)
        s, w = s.reshape(-1), w.reshape(-1) * 0.5
        if g is None:
            return float(w.sum()), 0.0, s.size
        return _wsum(w, _apply(g, s[:, None] * v[None, :], np.zeros(s.size))), 0.0, s.size

    def _boundary_points(self, R):
        return np.array([R * self.direction, -R * self.direction]), np.zeros(2)


class VerticalAxis(MeasureModel):
    """(1/2) dt on the vertical axis {(0, t)}."""

    kind = "VerticalAxis"

    def __init__(self, n: int = 1):
        if n < 1:
            raise DomainError("n must be positive")
        self.n = int(n)

    @property
    def m(self) -> int:
        return 2

    def on_support(self, z, tol=1e-9):
        return float(np.linalg.norm(z.h)) <= tol

    def support_points(self, k, scale=1.0):
        return [HPoint(np.zeros(2 * self.n), scale**2 * t) for t in np.linspace(-1.0, 1.5, k)]

    def to_dict(self):
        return {"type": "VerticalAxis", "n": self.n}

    def _integrate(self, g, region, quad):
        if isinstance(region, Ball):
            c, r = region.center, region.r
            hh = c.h @ c.h
            if hh * hh >= r**4:
                return 0.0, 0.0, 0
            w = sqrt(r**4 - hh * hh)
            lo, hi, order = c.t - w, c.t + w, quad.order
        else:
            R = truncation_radius(2, region.degree, region.s, region.tol)
            lo, hi, order = -R * R, R * R, quad.order_all
        t, wt = gl_interval(lo, hi, order)
        t, wt = t.reshape(-1), 0.5 * wt.reshape(-1)
        if g is None:
            return float(wt.sum()), 0.0, t.size
        return _wsum(wt, _apply(g, np.zeros((t.size, 2 * self.n)), t)), 0.0, t.size

    def _boundary_points(self, R):
        return np.zeros((2, 2 * self.n)), np.array([R * R, -R * R])


# ------------------------------------------------------------------ graphs


class HorizontalGraph(MeasureModel):
    """(1/c_n)|b + 2(D + J)x| dx on the graph t = <x, D x> + <b, x>, optionally over a half-space.

    ``halfspace`` = (a, o) keeps the points with <a, x> >= o.
    """

    kind = "HorizontalGraph"

    def __init__(self, b, D, halfspace=None):
        D = np.asarray(D, dtype=float)
        b = np.zeros(D.shape[0]) if b is None else np.asarray(b, dtype=float).reshape(-1)
        self.quadric = Quadric(b, D, -1.0)
        self.n = self.quadric.n
        self.b = self.quadric.b
        self.D = self.quadric.Q
        self.cn = cn_gamma(self.n)
        if halfspace is not None:
            a, o = halfspace
            halfspace = (np.asarray(a, dtype=float).reshape(-1), float(o))
        self.halfspace = halfspace
        self._stochastic = False

    @property
    def m(self) -> int:
        return 2 * self.n + 1

    def f(self, x):
        x = np.asarray(x, dtype=float)
        return np.einsum("...i,ij,...j->...", x, self.D, x) + x @ self.b

    def density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        J = symplectic_J(self.n)
        return np.linalg.norm(self.b + 2.0 * x @ (self.D + J).T, axis=-1) / self.cn

    def _admits(self, x):
        if self.halfspace is None:
            return np.ones(x.shape[:-1], dtype=bool)
        a, o = self.halfspace
        return x @ a >= o - 1e-14

    def on_support(self, z, tol=1e-9):
        return abs(float(self.f(z.h)) - z.t) <= tol * (1 + z.h @ z.h) and bool(self._admits(z.h))

    def support_points(self, k, scale=1.0):
        rng = np.random.default_rng(54321)
        pts = []
        while len(pts) < k:
            x = scale * rng.standard_normal(2 * self.n)
            if self._admits(x):
                pts.append(HPoint(x, float(self.f(x))))
        return pts

    def to_dict(self):
        d = {"type": "HorizontalGraph", "n": self.n, "b": self.b.tolist(), "D": self.D.tolist()}
        if self.halfspace is not None:
            d["halfspace"] = [self.halfspace[0].tolist(), self.halfspace[1]]
        return d

    def characteristic_point(self) -> Optional[np.ndarray]:
        J = symplectic_J(self.n)
        M = 2.0 * (self.D + J)
        try:
            x = np.linalg.solve(M, -self.b)
        except np.linalg.LinAlgError:
            return None
        return x if np.allclose(M @ x, -self.b, atol=1e-10) else None

    def _directions(self, quad, k=None):
        if self.n == 1:
            k = quad.angles if k is None else k
            phi = 2 * pi * np.arange(k) / k
            return np.stack([np.cos(phi), np.sin(phi)], axis=1), np.full(k, 2 * pi / k)
        return sphere_rule(2 * self.n - 1, quad.sphere_order)

    def _integrate(self, g, region, quad):
        n = self.n
        J = symplectic_J(n)
        k = None
        if isinstance(region, Ball) and n == 1:
            # small balls around non-characteristic points are thin in the normal direction,
            # so the angular resolution has to follow the aspect ratio |gradient| / r
            lin = self.b + 2.0 * (self.D + J) @ region.center.h
            need = 64.0 * (1.0 + np.linalg.norm(lin)) / region.r
            k = int(max(quad.angles, 2 ** int(np.ceil(np.log2(need)))))
        if isinstance(region, Ball) and n > 1 and self.halfspace is None:
            return self._ball_slab(g, region, quad)
        om, wom = self._directions(quad, k)
        if isinstance(region, Ball):
            c, r = region.center, region.r
            ch = c.h
            kappa = float(self.f(ch)) - c.t
            lin = self.b + 2.0 * (self.D + J) @ ch
            beta = om @ lin
            qd = np.einsum("ki,ij,kj->k", om, self.D, om)
            coeffs = np.stack(
                [1 + qd * qd, 2 * qd * beta, beta * beta + 2 * qd * kappa, 2 * beta * kappa, np.full_like(qd, kappa * kappa - r**4)],
                axis=1,
            )
            upper = np.full(om.shape[0], r)
            order = quad.order
        else:
            ch = self.characteristic_point()
            if ch is None:
                ch = np.zeros(2 * n)
            R = truncation_radius(self.m, region.degree, region.s, region.tol) + np.linalg.norm(ch)
            coeffs = np.stack([np.ones(om.shape[0]), np.full(om.shape[0], -2 * R)], axis=1)  # rho - 2R <= 0
            upper = np.full(om.shape[0], R)
            order = quad.order_all
        breaks = None
        if self.halfspace is not None:
            a, o = self.halfspace
            aw = om @ a
            with np.errstate(divide="ignore", invalid="ignore"):
                breaks = np.where(np.abs(aw) > 1e-15, (o - ch @ a) / aw, np.inf)[:, None]
        lo, hi = sublevel_intervals(coeffs, upper, breaks)
        if self.halfspace is not None:
            mid = 0.5 * (lo + hi)
            pts = ch[None, None, :] + mid[:, :, None] * om[:, None, :]
            ok = self._admits(pts)
            hi = np.where(ok, hi, lo)
        rows, slots = np.nonzero(hi > lo)
        if rows.size == 0:
            return 0.0, 0.0, 0
        rho, wr = gl_interval(lo[rows, slots], hi[rows, slots], order)  # (P, order)
        dirs = om[rows]
        x = ch[None, None, :] + rho[:, :, None] * dirs[:, None, :]
        wgt = wr * rho ** (2 * n - 1) * wom[rows][:, None]
        x = x.reshape(-1, 2 * n)
        wgt = wgt.reshape(-1) * self.density(x)
        t = self.f(x)
        if g is None:
            return float(wgt.sum()), 0.0, wgt.size
        return _wsum(wgt, _apply(g, x, t)), 0.0, wgt.size

    def _ball_slab(self, g, region, quad):
        # Small balls are slabs of width ~ r^2 / |gradient| across the gradient direction e.
        # Write w = s e + y with y orthogonal to e; for fixed y the gauge condition is a quartic
        # in s whose sublevel set is found exactly, and y runs over the (2n-1)-ball of radius r.
        n = self.n
        J = symplectic_J(n)
        c, r = region.center, region.r
        ch = c.h
        kappa = float(self.f(ch)) - c.t
        lin = self.b + 2.0 * (self.D + J) @ ch
        L = np.linalg.norm(lin)
        e = lin / L if L > 1e-12 else np.eye(2 * n)[0]
        basis = orthonormal_complement(e, 2 * n)  # (2n-1, 2n)
        om_y, w_y = sphere_rule(2 * n - 2, max(quad.sphere_order, 24))
        # rho' = r (1 - u^2) smooths the square-root edge of the slab at |y| = r
        u, wu = gauss_legendre(quad.order)
        u, wu = 0.5 * (u + 1.0), 0.5 * wu
        rp = r * (1.0 - u * u)
        wrp = wu * 2.0 * r * u * rp ** (2 * n - 2)
        Y = (rp[:, None, None] * (om_y @ basis)[None, :, :]).reshape(-1, 2 * n)
        wY = (wrp[:, None] * w_y[None, :]).reshape(-1)
        a = float(e @ self.D @ e)
        De = self.D @ e
        total, count = 0.0, 0
        chunk = max(1, 200_000 // quad.order)
        for k0 in range(0, Y.shape[0], chunk):
            Yc, wc = Y[k0 : k0 + chunk], wY[k0 : k0 + chunk]
            pp = (lin @ e) + 2.0 * Yc @ De
            q = kappa + Yc @ lin + np.einsum("ki,ij,kj->k", Yc, self.D, Yc)
            rho2 = np.einsum("ki,ki->k", Yc, Yc)
            for sign in (1.0, -1.0):
                p_s = sign * pp
                coeffs = np.stack(
                    [np.full_like(q, 1 + a * a), 2 * a * p_s, 2 * rho2 + p_s * p_s + 2 * a * q, 2 * p_s * q, rho2 * rho2 + q * q - r**4],
                    axis=1,
                )
                lo, hi = sublevel_intervals(coeffs, np.full(q.shape[0], r))
                rows, slots = np.nonzero(hi > lo)
                if rows.size == 0:
                    continue
                sv, ws = gl_interval(lo[rows, slots], hi[rows, slots], quad.order)
                x = ch + sign * sv[:, :, None] * e + Yc[rows][:, None, :]
                x = x.reshape(-1, 2 * n)
                wgt = (ws * wc[rows][:, None]).reshape(-1) * self.density(x)
                total += float(wgt.sum()) if g is None else _wsum(wgt, _apply(g, x, self.f(x)))
                count += wgt.size
        return total, 0.0, count

    def _boundary_points(self, R):
        om, _ = self._directions(Quad(angles=16, sphere_order=4))
        x = R * om
        return x, self.f(x)


# ------------------------------------------------------------------ helpers


def integrate(mu: MeasureModel, g: Integrand, region: Region, quad: Quad = Quad()) -> IntegrationResult:
    return mu.integrate(g, region, quad)


def ball_mass(mu: MeasureModel, center: HPoint, r: float, quad: Quad = Quad(), tol: float = 1e-9) -> float:
    if not mu.on_support(center, tol):
        raise SupportError(f"{center!r} is not on the support of {mu.kind}")
    return float(mu.integrate(None, Ball(center, r), replace(quad, error_estimate=False)).value)


def model_from_dict(d: dict) -> MeasureModel:
    kind = d.get("type")
    if kind == "FlatPlane":
        return FlatPlane(d["normal"])
    if kind == "HorizontalLine":
        return HorizontalLine(d["direction"])
    if kind == "VerticalAxis":
        return VerticalAxis(int(d.get("n", 1)))
    if kind == "PlanePair":
        return VerticalCone.plane_pair(d["n_normal"], d["m_normal"], tuple(d.get("halves", ("full", "full"))))
    if kind == "VerticalCone":
        if "pieces" in d:
            pieces = [PlanePiece(p["normal"], p.get("offset", 0.0), tuple((a, o) for a, o in p.get("cuts", []))) for p in d["pieces"]]
            return VerticalCone(pieces)
        q = Quadric.from_dict(d["quadric"])
        return VerticalCone.from_quadric(q, d.get("select"))
    if kind == "HorizontalGraph":
        hs = d.get("halfspace")
        return HorizontalGraph(d.get("b"), d["D"], None if hs is None else (hs[0], hs[1]))
    raise DomainError(f"unknown model type {kind!r}")


def model_from_json(text: str) -> MeasureModel:
    return model_from_dict(json.loads(text))


# ------------------------------------------------------------------ sphere-slice measures


@dataclass(frozen=True, eq=False)
class FullSlice:
    """H^{2n-2} on the great sphere S^{2n-1} cap e^perp."""

    normal: np.ndarray

    @property
    def n(self):
        return np.asarray(self.normal).size // 2


@dataclass(frozen=True, eq=False)
class PlanePair:
    """Slices of two vertical planes; ``halves`` entries are 'full', 'pos', 'neg' or 'none'."""

    n_normal: np.ndarray
    m_normal: np.ndarray
    halves: tuple = ("full", "full")

    @property
    def n(self):
        return np.asarray(self.n_normal).size // 2


@dataclass(frozen=True, eq=False)
class Sampler:
    """A weighted list of unit directions."""

    directions: np.ndarray
    weights: np.ndarray

    @property
    def n(self):
        return np.asarray(self.directions).shape[1] // 2


OmegaMeasure = Union[FullSlice, PlanePair, Sampler]


@dataclass(frozen=True, eq=False)
class MomentMatrix:
    M: np.ndarray
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns

    @classmethod
    def from_matrix(cls, M: np.ndarray) -> "MomentMatrix":
        M = 0.5 * (M + M.T)
        lam, vec = np.linalg.eigh(M)
        return cls(M, lam[::-1].copy(), vec[:, ::-1].copy())


def _slices(om: OmegaMeasure):
    """(normal, weight fraction, cut vector or None) for each great-sphere slice."""
    if isinstance(om, FullSlice):
        e = np.asarray(om.normal, float)
        return [(e / np.linalg.norm(e), 1.0, None)]
    if isinstance(om, PlanePair):
        out = []
        for e, hsel in zip((om.n_normal, om.m_normal), om.halves):
            e = np.asarray(e, float)
            e = e / np.linalg.norm(e)
            if hsel == "none":
                continue
            if hsel == "full":
                out.append((e, 1.0, None))
            elif hsel in ("pos", "neg"):
                out.append((e, 0.5, (1 if hsel == "pos" else -1) * apply_J(e)))
            else:
                raise DomainError(f"unknown half selector {hsel!r}")
        return out
    raise TypeError


def omega_mass(om: OmegaMeasure) -> float:
    if isinstance(om, Sampler):
        mass = float(np.sum(om.weights))
    else:
        k = 2 * om.n - 2
        mass = sum(frac for _, frac, _ in _slices(om)) * sphere_area(k)
    if not mass > 0:
        raise DegenerateOmega("slice measure has zero mass")
    return mass


def second_moment(om: OmegaMeasure) -> MomentMatrix:
    """Normalized second moment of the slice measure; its trace is 1."""
    mass = omega_mass(om)
    if isinstance(om, Sampler):
        U = np.asarray(om.directions, float)
        S = np.einsum("k,ki,kj->ij", np.asarray(om.weights, float), U, U)
        return MomentMatrix.from_matrix(S / mass)
    n = om.n
    k = 2 * n - 2
    S = np.zeros((2 * n, 2 * n))
    for e, frac, _ in _slices(om):
        # a hemisphere has half the second moment of the full great sphere (u -> -u symmetry)
        S += frac * sphere_area(k) * (np.eye(2 * n) - np.outer(e, e)) / (2 * n - 1)
    return MomentMatrix.from_matrix(S / mass)


def omega_rule(om: OmegaMeasure, order: int = 32):
    """Quadrature points and weights for integrals against the slice measure."""
    if isinstance(om, Sampler):
        return np.asarray(om.directions, float), np.asarray(om.weights, float)
    n = om.n
    k = 2 * n - 2
    P, W = [], []
    for e, frac, cut in _slices(om):
        B = orthonormal_complement(e, 2 * n)
        if cut is not None:
            a = cut - (cut @ e) * e
            a = a / np.linalg.norm(a)
            rest = orthonormal_complement(np.vstack([e, a]), 2 * n)
            B = np.vstack([rest, a])  # last coordinate along the cut direction
        pts, wts = sphere_rule(k, order)
        if cut is not None:
            if k == 2:
                # hemisphere rule: Gauss-Legendre in the last coordinate over [0, 1]
                z, wz = gl_interval(0.0, 1.0, order)
                phi = 2 * pi * np.arange(2 * order) / (2 * order)
                zz = np.repeat(z, phi.size)
                ss = np.sqrt(1 - zz * zz)
                ph = np.tile(phi, z.size)
                pts = np.stack([ss * np.cos(ph), ss * np.sin(ph), zz], axis=1)
                wts = np.repeat(wz, phi.size) * (2 * pi / phi.size)
            else:
                keep = pts[:, -1] >= 0
                pts, wts = pts[keep], wts[keep]
        P.append(pts @ B)
        W.append(wts)
    return np.vstack(P), np.concatenate(W)


def slice_integral(om: OmegaMeasure, f, g, form: str = "BallRestricted", cn: Optional[float] = None, order: int = 32) -> float:
    """Reduce an integral over a vertical cone to the slice measure.

    BallRestricted:  int_{B_1} g(z_H) dmu = (2/c_n) int_0^1 r^{2n-2} sqrt(1-r^4) int g(r v) domega(v) dr
    FullWeighted:    int f(z_T) g(z_H) dmu = (1/c_n) int f(t) dt * int_0^inf r^{2n-2} int g(r v) domega(v) dr
    """
    n = om.n
    cn = cn_gamma(n) if cn is None else cn
    V, Wv = omega_rule(om, order)

    def sphere_part(r):
        return float(Wv @ np.asarray(g(r * V), dtype=float))

    if form == "BallRestricted":
        val, _ = sp_integrate.quad(
            lambda r: r ** (2 * n - 2) * np.sqrt(max(1.0 - r**4, 0.0)) * sphere_part(r), 0.0, 1.0, epsabs=1e-14, epsrel=1e-12, limit=200
        )
        return 2.0 * val / cn
    if form == "FullWeighted":
        ft, _ = sp_integrate.quad(f, -np.inf, np.inf, epsabs=1e-14, epsrel=1e-12, limit=200)
        gr, _ = sp_integrate.quad(lambda r: r ** (2 * n - 2) * sphere_part(r), 0.0, np.inf, epsabs=1e-14, epsrel=1e-12, limit=200)
        return ft * gr / cn
    raise DomainError(f"unknown form {form!r}")
