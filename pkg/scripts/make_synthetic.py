#!/usr/bin/env python3
"""Generate a two-class Gaussian classification set in LIBSVM text format.

Rows are unit-normalized; class means sit +/- `separation` apart along a
random unit direction, so linear models separate the data but not perfectly.

Usage:
  python3 scripts/make_synthetic.py --n 2000 --dim 50 --seed 42 --out train.txt
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from asyncdca import from_dense, write_libsvm


def synthesize(n: int, dim: int, seed: int, separation: float):
    rng = np.random.default_rng(seed)
    mu = rng.normal(size=dim)
    mu /= np.linalg.norm(mu)
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    X = rng.normal(size=(n, dim)) * 0.7 + np.outer(y, mu) * separation
    X /= np.maximum(np.linalg.norm(X, axis=1, keepdims=True), 1e-12)
    return from_dense(X, y)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2000, help="number of examples")
    ap.add_argument("--dim", type=int, default=50, help="feature dimension")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--separation", type=float, default=1.5,
                    help="distance between the class means")
    ap.add_argument("--out", default=None, help="output path (default: stdout)")
    args = ap.parse_args()

    dataset = synthesize(args.n, args.dim, args.seed, args.separation)
    if args.out is None:
        write_libsvm(dataset, sys.stdout)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            write_libsvm(dataset, fh)
        print(f"wrote {dataset.n} x {dataset.dim} examples to {args.out}")


if __name__ == "__main__":
    main()
