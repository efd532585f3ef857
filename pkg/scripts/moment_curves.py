"""Tabulate b(s), T(s), Tr Q(s) and f(s) for the flat plane and a plane pair in H^1."""

import argparse
from pathlib import Path

import numpy as np

from heislab.measure_models import FlatPlane, VerticalCone
from heislab.moments import curves_csv

MODELS = {
    "flat": FlatPlane([1.0, 0.0]),
    "pair": VerticalCone.plane_pair([1.0, 0.0], [0.0, 1.0]),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/curves")
    ap.add_argument("--smin", type=float, default=0.25)
    ap.add_argument("--smax", type=float, default=4.0)
    ap.add_argument("--points", type=int, default=9)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    s_values = np.geomspace(args.smin, args.smax, args.points)
    for name, mu in MODELS.items():
        text = curves_csv(mu, s_values)
        (out / f"{name}.csv").write_text(text)
        print(f"--- {name}")
        print(text, end="")


if __name__ == "__main__":
    main()
