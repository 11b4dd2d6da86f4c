#!/usr/bin/env python3
"""Run one dataset through all four execution modes and tabulate gap by round.

Usage:
  python3 scripts/compare_modes.py --data train.txt --lambda 1e-3 \
      --rounds 20 --nodes 4 --cores 2 --barrier 2 --local-iters 2000 \
      --out-dir traces/
"""

from __future__ import annotations

import argparse
import os

from asyncdca import Config, load_libsvm, run, write_trace


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data", required=True, help="LIBSVM-format training data")
    ap.add_argument("--loss", default="hinge",
                    choices=["hinge", "squared-hinge", "logistic"])
    ap.add_argument("--lambda", dest="lam", type=float, default=1e-3)
    ap.add_argument("--rounds", type=int, default=20)
    ap.add_argument("--local-iters", type=int, default=2000)
    ap.add_argument("--nodes", type=int, default=4)
    ap.add_argument("--cores", type=int, default=2)
    ap.add_argument("--barrier", type=int, default=2,
                    help="bounded barrier for the hybrid run")
    ap.add_argument("--delay-bound", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--sim-time", action="store_true",
                    help="deterministic logical clock instead of threads")
    ap.add_argument("--out-dir", default=None,
                    help="also write one trace CSV per mode here")
    args = ap.parse_args()

    dataset = load_libsvm(args.data)
    shared = dict(loss=args.loss, lam=args.lam, rounds=args.rounds,
                  local_iters=args.local_iters, seed=args.seed)
    configs = {
        "sequential": Config(mode="sequential", **shared),
        "cocoa": Config(mode="cocoa", nodes=args.nodes,
                        sim_time=args.sim_time, **shared),
        "hybrid": Config(mode="hybrid", nodes=args.nodes, cores=args.cores,
                         barrier=args.barrier, delay_bound=args.delay_bound,
                         sim_time=args.sim_time, **shared),
        "passcode": Config(mode="passcode", cores=args.cores,
                           sim_time=args.sim_time, **shared),
    }

    reports = {}
    for name, cfg in configs.items():
        reports[name] = run(cfg, dataset)
        if args.out_dir is not None:
            os.makedirs(args.out_dir, exist_ok=True)
            write_trace(os.path.join(args.out_dir, f"{name}.csv"),
                        reports[name].trace)

    names = list(configs)
    print("round  " + "".join(f"{name:>14}" for name in names))
    for i in range(args.rounds):
        cells = []
        for name in names:
            trace = reports[name].trace
            cells.append(f"{trace[i].gap:14.3e}" if i < len(trace) else " " * 14)
        print(f"{i + 1:5d}  " + "".join(cells))
    print()
    for name in names:
        last = reports[name].trace[-1]
        print(f"{name:>10}: {reports[name].merges} merges, "
              f"final gap {last.gap:.3e}, msgs/merge {last.msgs}")


if __name__ == "__main__":
    main()
