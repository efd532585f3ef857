"""Admissibility scan over random symmetric matrices in H^1 plus the empirical envelopes.

Stores the scan as newline-delimited JSON and prints the smallest residual, the norm
envelope per threshold, and the smallest ball second moment found.
"""

import argparse
from pathlib import Path

from heislab.cone_classifier import norm_bounds, scan_database, second_moment_envelope, write_ndjson


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=1)
    ap.add_argument("--count", type=int, default=200)
    ap.add_argument("--dirs", type=int, default=64)
    ap.add_argument("--seed", type=int, default=20240229)
    ap.add_argument("--envelope-records", type=int, default=20)
    ap.add_argument("--out", default="results/scan_h1.ndjson")
    args = ap.parse_args()
    db = scan_database(args.n, args.count, (0.1, 3.0), args.dirs, args.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_ndjson(db, args.out)
    best = min(db, key=lambda r: r["sup_abs"])
    print(f"{len(db)} matrices, min sup_abs {best['sup_abs']:.6f} at norm {best['norm']:.4f}")
    nb = norm_bounds(args.n, db)
    print(f"analytic lower norm bound {nb.lower:.6f}")
    for thr, v in nb.upper_search.items():
        print(f"  sup_abs <= {thr:g}: largest norm {v}")
    env = second_moment_envelope(db[: args.envelope_records])
    print(f"smallest ball second moment over {args.envelope_records} records: {env['value']:.6f}")


if __name__ == "__main__":
    main()
