"""Command-line front end: every pipeline writes a CSV or JSON table with its config echoed.

Exit codes: 0 success, 1 a check failed, 2 bad input, 3 characteristic point.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .cone_classifier import ADMISSIBILITY_TOL, classify_h1_report, scan_database
from .errors import CharacteristicPointError, HeislabError
from .heis_core import MAX_N
from .measure_models import FlatPlane, Quad, ball_mass, model_from_dict
from .moments import gamma_integral, radial_integral, trace_Q
from .perimeter_expansion import (
    ExpansionFrame,
    coeff_fit,
    rational_moment,
    rational_moment_quad,
    shifted_rational_moment,
    shifted_rational_theta,
    shifted_rational_x,
)
from .quadrature import DEFAULT_SEED

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_CHARACTERISTIC = 0, 1, 2, 3


class InputError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    n: Optional[int] = None
    seed: int = DEFAULT_SEED
    tol: Optional[float] = None
    samples: int = 1_000_000
    out: Optional[str] = None
    format: str = "csv"
    params: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.n is not None and not 1 <= self.n <= MAX_N:
            raise InputError(f"--n must lie in 1..{MAX_N}, got {self.n}")
        if self.samples < 1000:
            raise InputError(f"--samples must be at least 1000, got {self.samples}")
        if self.tol is not None and not self.tol > 0:
            raise InputError("--tol must be positive")
        if not 0 <= self.seed < 2**64:
            raise InputError("--seed must be a 64-bit unsigned integer")

    def quad(self) -> Quad:
        return Quad(samples=self.samples, seed=self.seed)

    def header(self) -> dict:
        d = asdict(self)
        d.pop("out")
        d["version"] = __version__
        return d


# ------------------------------------------------------------------ output


def fmt(x) -> str:
    """Numbers in full precision scientific notation."""
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x) or math.isinf(x):
            return json.dumps(str(x))
        return f"{x:.17e}"
    return str(x)


def to_json(obj, indent: int = 0) -> str:
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(to_json(v) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + to_json(v, indent + 1) for v in seq) + "\n" + end + "]"
    if isinstance(obj, str):
        return json.dumps(obj)
    return fmt(obj)


def csv_cell(v) -> str:
    if isinstance(v, (list, tuple, np.ndarray)):
        return '"' + " ".join(fmt(x) for x in v) + '"'
    if isinstance(v, str):
        return v
    return fmt(v)


def render(cfg: RunConfig, columns: list, rows: list, summary: dict) -> str:
    if cfg.format == "json":
        body = {"config": cfg.header(), "summary": summary, "rows": [dict(zip(columns, r)) for r in rows]}
        return to_json(body) + "\n"
    lines = [f"# {k}={json.dumps(v, sort_keys=True)}" for k, v in cfg.header().items()]
    lines += [f"# summary.{k}={csv_cell(v)}" for k, v in summary.items()]
    lines.append(",".join(columns))
    lines += [",".join(csv_cell(v) for v in r) for r in rows]
    return "\n".join(lines) + "\n"


def emit(cfg: RunConfig, text: str) -> None:
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)


# ------------------------------------------------------------------ input helpers


def load_model(spec: str):
    """A model from a JSON file path or an inline JSON object."""
    try:
        text = spec if spec.lstrip().startswith("{") else Path(spec).read_text()
    except OSError as exc:
        raise InputError(f"cannot read model spec: {exc}") from exc
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed model JSON: {exc}") from exc
    try:
        return model_from_dict(d)
    except (HeislabError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"invalid model spec: {exc}") from exc


def parse_floats(text: str, name: str) -> list:
    try:
        vals = [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError as exc:
        raise InputError(f"{name}: {exc}") from exc
    if not vals:
        raise InputError(f"{name} is empty")
    return vals


def parse_matrix(text: str, name: str) -> np.ndarray:
    try:
        M = np.array(json.loads(text), dtype=float)
    except (json.JSONDecodeError, ValueError, TypeError) as exc:
        raise InputError(f"{name}: {exc}") from exc
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InputError(f"{name} must be a square matrix")
    return M


# ------------------------------------------------------------------ commands


def cmd_verify_uniform(cfg: RunConfig, args) -> int:
    mu = load_model(args.model)
    if cfg.n is not None and cfg.n != mu.n:
        raise InputError(f"--n={cfg.n} but the model lives in H^{mu.n}")
    radii = parse_floats(args.radii, "--radii")
    if any(r <= 0 for r in radii):
        raise InputError("radii must be positive")
    tol = cfg.tol if cfg.tol is not None else 1e-6
    cfg.params.update(model=mu.to_dict(), radii=radii, centers=args.centers)
    rows = []
    worst = 0.0
    quad = cfg.quad()
    for z in mu.support_points(args.centers):
        for r in radii:
            mass = ball_mass(mu, z, r, quad)
            target = r**mu.m
            err = abs(mass - target) / target
            worst = max(worst, err)
            rows.append([z.coords().tolist(), r, mass, target, err])
    ok = worst <= tol
    emit(cfg, render(cfg, ["center", "r", "mass", "r_pow_m", "rel_err"], rows, {"max_rel_err": worst, "tol": tol, "pass": ok}))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_expansion(cfg: RunConfig, args) -> int:
    D = parse_matrix(args.D, "--D")
    x = parse_floats(args.x, "--x")
    radii = parse_floats(args.radii, "--radii") if args.radii else np.linspace(0.02, 0.1, 9).tolist()
    if cfg.n is not None and D.shape[0] != 2 * cfg.n:
        raise InputError(f"--n={cfg.n} but D is {D.shape[0]}x{D.shape[0]}")
    cfg.params.update(D=D.tolist(), x=x, radii=radii)
    try:
        frame = ExpansionFrame(D, x)
    except CharacteristicPointError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CHARACTERISTIC
    rep = coeff_fit(frame, radii)
    summary = {k: v for k, v in asdict(rep).items() if k not in ("radii", "perimeters", "frame")}
    rows = [[r, p, p / r ** (2 * frame.n + 1)] for r, p in zip(rep.radii, rep.perimeters)]
    emit(cfg, render(cfg, ["r", "perimeter", "scaled"], rows, summary))
    return EXIT_OK


def cmd_scan(cfg: RunConfig, args) -> int:
    n = cfg.n or 1
    lo, hi = parse_floats(args.norm_range, "--norm-range")[:2]
    tol = cfg.tol if cfg.tol is not None else ADMISSIBILITY_TOL
    cfg.params.update(count=args.count, norm_range=[lo, hi], dirs=args.dirs)
    db = scan_database(n, args.count, (lo, hi), args.dirs, cfg.seed)
    rows = [[r["norm"], r["sup_abs"], r["argmax_dir"], r["D"]] for r in db]
    sups = [r["sup_abs"] for r in db]
    summary = {
        "min_sup_abs": min(sups),
        "max_sup_abs": max(sups),
        "admissible_candidates": sum(s <= tol for s in sups),
        "tol": tol,
    }
    if cfg.format == "json" and args.ndjson:
        lines = [json.dumps({"config": cfg.header(), "summary": summary}, sort_keys=True)]
        lines += [json.dumps(r, sort_keys=True) for r in db]
        emit(cfg, "\n".join(lines) + "\n")
    else:
        emit(cfg, render(cfg, ["norm", "sup_abs", "argmax_dir", "D"], rows, summary))
    return EXIT_OK


def cmd_classify_h1(cfg: RunConfig, args) -> int:
    mu = load_model(args.model)
    if mu.n != 1:
        raise InputError("classification is implemented for H^1 only")
    tol = cfg.tol if cfg.tol is not None else 1e-3
    cfg.params.update(model=mu.to_dict())
    rep = classify_h1_report(mu, tol, cfg.quad())
    rows = [[c, r, mass, target] for c, r, mass, target in rep.checks]
    emit(cfg, render(cfg, ["center", "r", "mass", "r_pow_m"], rows, {"label": rep.label, "max_rel_err": rep.max_rel_err}))
    sys.stderr.write(rep.label + "\n")
    return EXIT_OK


RATIONAL_GRID = [(k, a) for k in (0, 2, 4) for a in (2.25, 2.75, 3.25) if a > (k + 1) / 2]
SHIFTS = (-1.0, 0.0, 1.0)


def xcheck_rational(quad: Quad):
    rows = []
    for k, a in RATIONAL_GRID:
        ref = rational_moment(k, a)
        rows.append([f"rational k={k} alpha={a}", ref, rational_moment_quad(k, a)])
        for g in SHIFTS:
            f = lambda x, k=k: x**k
            closed = shifted_rational_moment(k, a, g)
            rows.append([f"shifted k={k} alpha={a} gamma={g} x-form", closed, shifted_rational_x(f, a, g)])
            rows.append([f"shifted k={k} alpha={a} gamma={g} theta-form", closed, shifted_rational_theta(f, a, g)])
    return rows, 1e-10


def xcheck_gamma(quad: Quad):
    rows = []
    for m in (1, 2, 3, 5):
        for p in range(4):
            ref = gamma_integral(m, p, 1.0)
            val = radial_integral(m, lambda r, p=p: r**p * np.exp(-(r**4)))
            rows.append([f"m={m} p={p}", ref, val])
    return rows, 1e-6


def xcheck_trace(quad: Quad):
    mu = FlatPlane([1.0, 0.0])
    rows = [[f"flat s={s}", trace_Q(mu, s, "Formula"), trace_Q(mu, s, "Assembled")] for s in (0.5, 1.0, 2.0)]
    return rows, 1e-6


XCHECKS = {"rational": xcheck_rational, "gamma": xcheck_gamma, "trace": xcheck_trace}


def cmd_xcheck(cfg: RunConfig, args) -> int:
    rows, default_tol = XCHECKS[args.suite](cfg.quad())
    tol = cfg.tol if cfg.tol is not None else default_tol
    cfg.params.update(suite=args.suite)
    out = []
    worst = 0.0
    for name, ref, val in rows:
        res = abs(val - ref) / max(1.0, abs(ref))
        worst = max(worst, res)
        out.append([name, ref, val, res, res <= tol])
    ok = worst <= tol
    emit(cfg, render(cfg, ["check", "reference", "value", "residual", "pass"], out, {"max_residual": worst, "tol": tol, "pass": ok}))
    return EXIT_OK if ok else EXIT_FAIL


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", type=int, default=None, help="Heisenberg dimension (1..4)")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--tol", type=float, default=None, help="pass/fail tolerance (command default if omitted)")
    common.add_argument("--samples", type=int, default=1_000_000, help="Monte Carlo samples where used")
    common.add_argument("--out", default=None, help="output file (stdout if omitted)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    p = argparse.ArgumentParser(prog="heislab", description="Uniform-measure experiments in the Heisenberg group.")
    p.add_argument("--version", action="version", version=f"heislab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("verify-uniform", parents=[common], help="ball masses against r^m")
    s.add_argument("model", help="model JSON file or inline JSON")
    s.add_argument("--radii", default="0.5,1,2")
    s.add_argument("--centers", type=int, default=5)
    s.set_defaults(func=cmd_verify_uniform)

    s = sub.add_parser("expansion", parents=[common], help="small-ball perimeter expansion fit")
    s.add_argument("--D", required=True, help="symmetric matrix as JSON, e.g. [[1,0],[0,1]]")
    s.add_argument("--x", required=True, help="base point, comma separated")
    s.add_argument("--radii", default=None, help="comma separated radii (default 9 points in [0.02, 0.1])")
    s.set_defaults(func=cmd_expansion)

    s = sub.add_parser("scan", parents=[common], help="admissibility scan over random symmetric D")
    s.add_argument("--count", type=int, default=200)
    s.add_argument("--norm-range", default="0.1,3")
    s.add_argument("--dirs", type=int, default=64)
    s.add_argument("--ndjson", action="store_true", help="with --format json, write one record per line")
    s.set_defaults(func=cmd_scan)

    s = sub.add_parser("classify-h1", parents=[common], help="label a model in H^1")
    s.add_argument("model", help="model JSON file or inline JSON")
    s.set_defaults(func=cmd_classify_h1)

    s = sub.add_parser("xcheck", parents=[common], help="closed forms against quadrature")
    s.add_argument("suite", choices=sorted(XCHECKS))
    s.set_defaults(func=cmd_xcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = RunConfig(args.command, args.n, args.seed, args.tol, args.samples, args.out, args.format)
    try:
        cfg.validate()
        return args.func(cfg, args)
    except InputError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except CharacteristicPointError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CHARACTERISTIC
    except HeislabError as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
