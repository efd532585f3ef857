"""Decision procedures for uniform cones: admissibility scans, eigenvalue and norm
constraints, flatness of the slice moment matrix and the classification in H^1."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import pi, sqrt
from typing import Optional, Sequence

import numpy as np
from scipy.stats import qmc

from .errors import DegenerateScan, DimensionError, DomainError, HeislabError
from .heis_core import HPoint, symplectic_J
from .measure_models import (
    Ball,
    HorizontalGraph,
    HorizontalLine,
    MeasureModel,
    MomentMatrix,
    Quad,
    VerticalAxis,
    VerticalModel,
    ball_mass,
    cn_gamma,
)
from .perimeter_expansion import coeff_e_bracket
from .quadrature import DEFAULT_SEED, sphere_rule

ADMISSIBILITY_TOL = 1e-6
FLAT_GAP = 1e-2
SIGMA_TUBE = 1e-6


# ------------------------------------------------------------------ admissibility


@dataclass
class ResidualField:
    D: np.ndarray
    samples: list  # (direction, residual)
    sup_abs: float
    argmax_dir: np.ndarray
    excluded: int = 0

    def admissible(self, tol: float = ADMISSIBILITY_TOL) -> bool:
        return self.sup_abs <= tol


def sphere_directions(n: int, count: int, seed: int = DEFAULT_SEED) -> np.ndarray:
    """Quasi-uniform seeded unit directions in R^{2n}."""
    if count < 1:
        raise DomainError("need at least one direction")
    rng = np.random.default_rng(seed)
    if n == 1:
        phi = 2 * pi * (np.arange(count) + rng.random()) / count
        return np.stack([np.cos(phi), np.sin(phi)], axis=1)
    if n == 2:
        # Fibonacci lattice on S^3 through Hopf coordinates
        i = np.arange(count) + 0.5
        golden = (1 + sqrt(5)) / 2
        u = (i / count + rng.random()) % 1.0
        a = np.arcsin(np.sqrt(u))
        p = 2 * pi * ((i / golden + rng.random()) % 1.0)
        q = 2 * pi * ((i / golden**2 + rng.random()) % 1.0)
        return np.stack([np.cos(a) * np.cos(p), np.cos(a) * np.sin(p), np.sin(a) * np.cos(q), np.sin(a) * np.sin(q)], axis=1)
    from scipy.special import ndtri

    g = qmc.Sobol(2 * n, scramble=True, seed=seed).random(count)
    v = ndtri(np.clip(g, 1e-15, 1 - 1e-15))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _sigma_distance(M: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Distance of each row of H to the kernel of M."""
    _, s, vt = np.linalg.svd(M)
    null = vt[s <= 1e-10 * s.max()]
    if null.shape[0] == 0:
        return np.linalg.norm(H, axis=1)
    return np.linalg.norm(H - (H @ null.T) @ null, axis=1)


def admissibility_scan(D, n_dirs: int = 64, seed: int = DEFAULT_SEED, directions: Optional[np.ndarray] = None) -> ResidualField:
    """Residual E(D, n(h)) over sphere directions h, skipping a tube around the characteristic set."""
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1] or D.shape[0] % 2:
        raise DimensionError(f"D must be 2n x 2n, got {D.shape}")
    if np.max(np.abs(D - D.T)) > 1e-12:
        raise DomainError("D must be symmetric")
    if not np.any(D):
        raise DomainError("D must be nonzero")
    n = D.shape[0] // 2
    M = D + symplectic_J(n)
    H = sphere_directions(n, n_dirs, seed) if directions is None else np.atleast_2d(np.asarray(directions, float))
    keep = _sigma_distance(M, H) > SIGMA_TUBE
    if not keep.any():
        raise DegenerateScan("every direction lies in the characteristic set")
    samples = []
    for h in H[keep]:
        g = M @ h
        samples.append((h, coeff_e_bracket(D, g / np.linalg.norm(g))))
    res = np.array([r for _, r in samples])
    i = int(np.argmax(np.abs(res)))
    return ResidualField(D, samples, float(np.abs(res[i])), samples[i][0], int((~keep).sum()))


def random_symmetric(n: int, rng: np.random.Generator, norm: float) -> np.ndarray:
    A = rng.standard_normal((2 * n, 2 * n))
    S = A + A.T
    return norm * S / np.linalg.norm(S, 2)


def scan_database(n: int, count: int, norm_range=(0.1, 3.0), n_dirs: int = 64, seed: int = DEFAULT_SEED) -> list:
    """Records {D, sup_abs, argmax_dir, norm} for seeded random symmetric D."""
    lo, hi = norm_range
    if not 0 <= lo <= hi:
        raise DomainError(f"bad norm range {norm_range}")
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        D = random_symmetric(n, rng, rng.uniform(lo, hi))
        f = admissibility_scan(D, n_dirs, seed + k)
        out.append(
            {"D": D.tolist(), "sup_abs": f.sup_abs, "argmax_dir": f.argmax_dir.tolist(), "norm": float(np.linalg.norm(D, 2))}
        )
    return out


def write_ndjson(records: Sequence[dict], path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def read_ndjson(path) -> list:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


# ------------------------------------------------------------------ eigenvalue and norm constraints


@dataclass
class EigenConstraint:
    eigenvalues: list
    residuals: list
    lambda2: Optional[float]

    @property
    def max_abs(self) -> float:
        return max((abs(r) for r in self.residuals), default=0.0)

    def passes(self, tol: float = 1e-9) -> bool:
        return self.max_abs <= tol


def eigen_constraint(Q, tol: float = 1e-9) -> EigenConstraint:
    """-3 lam^2 + 2 Tr(Q) lam + 2 Tr(Q^2) - Tr(Q)^2 at each nonzero eigenvalue of Q."""
    Q = np.asarray(Q, dtype=float)
    if np.max(np.abs(Q - Q.T), initial=0.0) > 1e-12:
        raise DomainError("Q must be symmetric")
    lam = np.linalg.eigvalsh(Q)
    tr = float(np.trace(Q))
    tr2 = float(np.trace(Q @ Q))
    nz = [float(x) for x in lam if abs(x) > tol]
    res = [-3 * x * x + 2 * tr * x + 2 * tr2 - tr * tr for x in nz]
    l2 = 2 * tr / 3 - 1 if any(abs(x - 1) <= tol for x in nz) else None
    return EigenConstraint(nz, res, l2)


@dataclass
class NormBounds:
    lower: float
    upper_search: dict = field(default_factory=dict)  # threshold -> largest norm seen below it (or None)


RELAXATION = (1e-1, 3e-2, 1e-2, 1e-3, 1e-6)


def norm_lower(n: int) -> float:
    return 1.0 / sqrt(4 * n * n + 8 * n + 7)


def norm_bounds(n: int, database: Optional[Sequence[dict]] = None) -> NormBounds:
    """Analytic lower bound for the norm of admissible D and an empirical upper envelope.

    The envelope lists, for each residual threshold, the largest operator norm among
    database entries whose sup_abs falls below it.
    """
    if not 1 <= n <= 4:
        raise DomainError(f"n must lie in 1..4, got {n}")
    env = {}
    for thr in RELAXATION:
        norms = [r["norm"] for r in database or () if r["sup_abs"] <= thr]
        env[thr] = max(norms) if norms else None
    return NormBounds(norm_lower(n), env)


# ------------------------------------------------------------------ second moment on the unit ball


@dataclass
class BallSecondMoment:
    value: float
    sphere_form: float
    abs_error_est: float


def ball_second_moment(D, m, quad: Quad = Quad(order=64), sphere_order: Optional[int] = None) -> BallSecondMoment:
    """int_{B_1(0)} <m, z_H>^2 dmu for the graph t = <x, D x>, two ways.

    ``value`` integrates against the graph measure directly; ``sphere_form`` is the
    one-dimensional reduction over the unit sphere of R^{2n}.
    """
    D = np.asarray(D, dtype=float)
    m = np.asarray(m, dtype=float)
    n = D.shape[0] // 2
    m = m / np.linalg.norm(m)
    graph = HorizontalGraph(None, D)
    res = graph.integrate(lambda h, t: (h @ m) ** 2, Ball(HPoint.origin(n), 1.0), quad)
    # |(D + J) v| may vanish on the sphere, so the rule needs to be fine there
    V, W = sphere_rule(2 * n - 1, sphere_order or (1024 if n == 1 else 40))
    gam = np.einsum("ki,ij,kj->k", V, D, V)
    dens = np.linalg.norm(V @ (D + symplectic_J(n)).T, axis=1)
    sph = 2.0 / cn_gamma(n) / (2 * n + 3) * float(W @ ((V @ m) ** 2 * dens * (1 + gam * gam) ** (-(2 * n + 3) / 4)))
    return BallSecondMoment(float(res.value), sph, res.abs_error_est)


def second_moment_envelope(database: Sequence[dict], n_m: int = 8, seed: int = DEFAULT_SEED, quad: Quad = Quad(order=48)) -> dict:
    """Smallest ball second moment over database matrices and seeded unit vectors m.

    An empirical stand-in for the uniform lower bound: the minimum is taken over every
    record and ``n_m`` directions per record.
    """
    best = {"value": float("inf"), "D": None, "m": None}
    for k, rec in enumerate(database):
        D = np.asarray(rec["D"], dtype=float)
        for m in sphere_directions(D.shape[0] // 2, n_m, seed + k):
            v = ball_second_moment(D, m, quad).value
            if v < best["value"]:
                best = {"value": v, "D": D.tolist(), "m": m.tolist()}
    return best


# ------------------------------------------------------------------ flatness


@dataclass
class FlatnessVerdict:
    verdict: str  # "Flat", "NotFlat" or "Inconclusive"
    min_eigenvalue: float
    spectrum: list
    normal: Optional[np.ndarray] = None

    def __str__(self):
        return self.verdict


def flatness_decision(M: MomentMatrix, tol: float = ADMISSIBILITY_TOL, flat_gap: float = FLAT_GAP) -> FlatnessVerdict:
    """Flat iff the least eigenvalue vanishes and the rest equal 1/(2n-1).

    M is rescaled to unit trace first.
    """
    tr = float(np.trace(M.M))
    if not tr > 0:
        raise DomainError("moment matrix must have positive trace")
    lam = M.eigenvalues / tr
    k = lam.size - 1
    amin = float(lam[-1])
    spectrum = lam.tolist()
    if amin <= tol and np.all(np.abs(lam[:-1] - 1.0 / k) <= tol):
        e = M.eigenvectors[:, -1]
        j = int(np.flatnonzero(np.abs(e) > 1e-12)[0])
        return FlatnessVerdict("Flat", amin, spectrum, e if e[j] > 0 else -e)
    if amin >= flat_gap:
        return FlatnessVerdict("NotFlat", amin, spectrum)
    return FlatnessVerdict("Inconclusive", amin, spectrum)


def eta(s) -> np.ndarray:
    """Smoothstep cutoff: 1 on [0, 1], 0 on [2, inf)."""
    s = np.asarray(s, dtype=float)
    u = np.clip(s - 1.0, 0.0, 1.0)
    return 1.0 - 3.0 * u * u + 2.0 * u**3


def weighted_moment(mu: MeasureModel, scale: float = 1.0, quad: Quad = Quad(error_estimate=False)) -> np.ndarray:
    """Weighted moment of the rescaled measure lam^m (delta_lam)_# mu, lam = scale; cones give the same value for every lam."""
    lam = float(scale)
    if not lam > 0:
        raise DomainError("scale must be positive")

    def g(h, t):
        hh = lam * h
        nrm = (np.sum(hh * hh, axis=-1) ** 2 + (lam * lam * t) ** 2) ** 0.25
        return eta(nrm)[..., None, None] * hh[..., :, None] * hh[..., None, :]

    res = mu.integrate(g, Ball(HPoint.origin(mu.n), 2.0 / lam), quad)
    S = np.asarray(res.value, dtype=float) * lam**mu.m
    return 0.5 * (S + S.T)


def F_functional(mu: MeasureModel, scale: float = 1.0, quad: Quad = Quad(error_estimate=False)) -> float:
    """min over unit m of int eta <z_H, m>^2 dmu: the least eigenvalue of the weighted moment."""
    S = weighted_moment(mu, scale, quad)
    return max(float(np.linalg.eigvalsh(S)[0]), 0.0)


# ------------------------------------------------------------------ classification in H^1

LABELS = ("HorizontalLine", "VerticalAxis", "VerticalPlane", "NotUniform")
H1_RADII = (0.5, 1.0, 2.0)


@dataclass
class H1Report:
    label: str
    max_rel_err: float
    checks: list  # (center coords, r, mass, r^m)


def classify_h1_report(mu: MeasureModel, tol: float = 1e-3, quad: Quad = Quad(), n_centers: int = 5) -> H1Report:
    if mu.n != 1:
        raise DimensionError("classification is implemented for H^1 only")
    checks = []
    worst = 0.0
    for z in mu.support_points(n_centers):
        for r in H1_RADII:
            try:
                mass = ball_mass(mu, z, r, quad)
            except HeislabError:
                mass = float("nan")
            target = r**mu.m
            err = abs(mass - target) / target if np.isfinite(mass) else float("inf")
            worst = max(worst, err)
            checks.append((z.coords().tolist(), r, mass, target))
    if worst > tol:
        label = "NotUniform"
    elif isinstance(mu, HorizontalLine):
        label = "HorizontalLine"
    elif isinstance(mu, VerticalAxis):
        label = "VerticalAxis"
    elif isinstance(mu, VerticalModel) and len(mu.pieces) == 1 and not mu.pieces[0].cuts:
        label = "VerticalPlane"
    else:
        label = "NotUniform"
    return H1Report(label, worst, checks)


def classify_h1(mu: MeasureModel, tol: float = 1e-3, quad: Quad = Quad()) -> str:
    return classify_h1_report(mu, tol, quad).label
