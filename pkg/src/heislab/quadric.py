"""Quadrics K(b, Q, T) = {z : <b, z_H> + <z_H, Q z_H> + T z_T = 0} in H^n."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CharacteristicPointError, DegenerateQuadric, DimensionError, DomainError, NotAGraph
from .heis_core import HPoint, symplectic_J

RANK_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class Quadric:
    b: np.ndarray
    Q: np.ndarray
    T: float

    def __post_init__(self):
        b = np.array(self.b, dtype=float).reshape(-1)
        Q = np.array(self.Q, dtype=float)
        if b.size % 2 or Q.shape != (b.size, b.size):
            raise DimensionError(f"b has length {b.size} but Q has shape {Q.shape}")
        if np.max(np.abs(Q - Q.T), initial=0.0) > 1e-12:
            raise DomainError("Q must be symmetric")
        T = float(self.T)
        if not np.any(Q) and T == 0.0:
            raise DegenerateQuadric("Q and T both vanish")
        b.setflags(write=False)
        Q.setflags(write=False)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "T", T)

    @property
    def n(self) -> int:
        return self.b.size // 2

    def gradient(self, h) -> np.ndarray:
        """b + 2(Q - T J) h, the horizontal gradient of F at any point above h."""
        h = np.asarray(h, dtype=float)
        return self.b + 2.0 * h @ (self.Q - self.T * symplectic_J(self.n)).T

    def to_dict(self) -> dict:
        return {"n": self.n, "b": self.b.tolist(), "Q": self.Q.tolist(), "T": self.T}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "Quadric":
        q = cls(d["b"], d["Q"], d["T"])
        if "n" in d and int(d["n"]) != q.n:
            raise DimensionError(f"declared n={d['n']} but b has length {q.b.size}")
        return q

    @classmethod
    def from_json(cls, text: str) -> "Quadric":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class AffineSubspace:
    base: np.ndarray
    basis: np.ndarray  # rows, orthonormal
    dim: int

    def contains(self, h, tol: float = 1e-9) -> bool:
        d = np.asarray(h, dtype=float) - self.base
        if self.dim:
            d = d - self.basis.T @ (self.basis @ d)
        return float(np.linalg.norm(d)) <= tol * (1 + np.linalg.norm(h))

    def distance(self, h) -> float:
        d = np.asarray(h, dtype=float) - self.base
        if self.dim:
            d = d - self.basis.T @ (self.basis @ d)
        return float(np.linalg.norm(d))


def _check(q: Quadric, z: HPoint) -> None:
    if q.n != z.n:
        raise DimensionError(f"quadric in H^{q.n}, point in H^{z.n}")


def eval_F(q: Quadric, z: HPoint) -> float:
    _check(q, z)
    return float(q.b @ z.h + z.h @ q.Q @ z.h + q.T * z.t)


def contains(q: Quadric, z: HPoint, tol: float = 1e-10) -> bool:
    return abs(eval_F(q, z)) <= tol * (1.0 + z.h @ z.h + abs(z.t))


def singular_set(q: Quadric) -> Optional[AffineSubspace]:
    """Footprint of the characteristic set, or None when it is empty."""
    M = 2.0 * (q.Q - q.T * symplectic_J(q.n))
    u, s, vt = np.linalg.svd(M)
    smax = s.max() if s.size else 0.0
    keep = s > RANK_TOL * smax if smax > 0 else np.zeros_like(s, dtype=bool)
    rhs = -q.b
    coef = (u.T @ rhs)[keep] / s[keep]
    h0 = vt[keep].T @ coef
    if np.linalg.norm(M @ h0 - rhs) > 1e-9 * (1 + np.linalg.norm(q.b)):
        return None
    null = vt[~keep]
    if q.T == 0.0:
        # F is constant (= -<h0, Q h0>) along the solution set, so it is either inside K or disjoint
        if abs(h0 @ q.Q @ h0) > 1e-10 * (1 + h0 @ h0):
            return None
    return AffineSubspace(h0, null, int(null.shape[0]))


def horizontal_normal(q: Quadric, z: HPoint, tol: float = 1e-12) -> np.ndarray:
    _check(q, z)
    g = q.gradient(z.h)
    nrm = np.linalg.norm(g)
    if nrm <= tol * max(1.0, np.abs(q.Q).max(), np.abs(q.b).max(initial=0.0)):
        raise CharacteristicPointError(f"horizontal gradient vanishes at {z!r}")
    return g / nrm


def graph_value(q: Quadric, h) -> np.ndarray:
    """f(h) = -(<h, Q h> + <b, h>)/T, vectorized over leading axes of h."""
    if q.T == 0.0:
        raise NotAGraph("T = 0: the quadric is vertically ruled")
    h = np.asarray(h, dtype=float)
    return -(np.einsum("...i,ij,...j->...", h, q.Q, h) + h @ q.b) / q.T


def graph_eval(q: Quadric, h) -> HPoint:
    h = np.asarray(h, dtype=float)
    if h.size != 2 * q.n:
        raise DimensionError(f"expected {2 * q.n} horizontal coordinates, got {h.size}")
    return HPoint(h, float(graph_value(q, h)))


def blowdown(q: Quadric) -> Quadric:
    return Quadric(np.zeros_like(q.b), q.Q, q.T)


@dataclass(frozen=True, eq=False)
class VerticalRank:
    """Rank analysis of a vertically ruled quadric (T = 0).

    kind is "Rank1Flat", "Rank2" or "HigherRank".  For Rank1Flat, ``normal`` and ``scale``
    give Q = scale * normal (x) normal.  For an indefinite Rank2 quadric whose zero set is a
    pair of vertical planes, ``pair`` holds their unit normals (n, m) with
    <x - shift, Q (x - shift)> proportional to <x - shift, n><x - shift, m>.
    """

    kind: str
    rank: int
    normal: Optional[np.ndarray] = None
    scale: Optional[float] = None
    pair: Optional[tuple] = None
    shift: Optional[np.ndarray] = None
    definite: Optional[bool] = None


def classify_vertical_rank(q: Quadric, tol: float = RANK_TOL) -> VerticalRank:
    if q.T != 0.0:
        raise DomainError("classify_vertical_rank requires T = 0")
    if not np.any(q.Q):
        raise DegenerateQuadric("Q vanishes")
    lam, vec = np.linalg.eigh(q.Q)
    big = np.abs(lam).max()
    nz = np.abs(lam) > tol * big
    rank = int(nz.sum())
    if rank == 1:
        i = int(np.argmax(np.abs(lam)))
        return VerticalRank("Rank1Flat", 1, normal=_canon(vec[:, i]), scale=float(lam[i]))
    if rank > 2:
        return VerticalRank("HigherRank", rank)
    idx = np.flatnonzero(nz)
    l1, l2 = lam[idx]  # ascending
    e1, e2 = vec[:, idx[0]], vec[:, idx[1]]
    definite = bool(l1 * l2 > 0)
    # shift so the linear term disappears (possible iff b lies in range(Q))
    Qp = np.linalg.pinv(q.Q, rcond=tol)
    x0 = -0.5 * Qp @ q.b
    in_range = np.linalg.norm(q.Q @ x0 + 0.5 * q.b) <= 1e-9 * (1 + np.linalg.norm(q.b))
    pair = None
    if not definite and in_range and abs(x0 @ q.Q @ x0) <= 1e-10 * (1 + x0 @ x0):
        a, c = np.sqrt(-l1), np.sqrt(l2)
        nv = a * e1 + c * e2
        mv = -a * e1 + c * e2
        pair = (nv / np.linalg.norm(nv), mv / np.linalg.norm(mv))
    return VerticalRank("Rank2", 2, pair=pair, shift=x0 if in_range else None, definite=definite)


def _canon(v: np.ndarray) -> np.ndarray:
    """Fix the sign of a unit vector so its first non-negligible entry is positive."""
    k = int(np.flatnonzero(np.abs(v) > 1e-12)[0])
    return v if v[k] > 0 else -v
