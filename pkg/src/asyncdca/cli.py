"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 data parse error,
4 divergence detected during the run.
"""

from __future__ import annotations

import argparse
import sys

from .data import ParseError, PartitionError, load_libsvm
from .errors import ConfigError, DivergenceError
from .metrics import write_trace
from .runtime import (
    DEFAULT_LOCAL_ITERS,
    DESK_LOCAL_ITERS,
    MODES,
    Config,
    load_delay_schedule,
    run,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_DIVERGED = 4


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="asyncdca",
        description="Asynchronous distributed dual coordinate ascent for "
        "L2-regularized linear models on LIBSVM-format data.",
    )
    p.add_argument("--data", required=True, help="training data, LIBSVM format (.gz ok)")
    p.add_argument(
        "--loss",
        choices=["hinge", "squared-hinge", "logistic"],
        default="hinge",
    )
    p.add_argument("--lambda", dest="lam", type=float, default=1e-4, metavar="F",
                   help="L2 regularization strength (default 1e-4)")
    p.add_argument("--nodes", type=int, default=1, metavar="K")
    p.add_argument("--cores", type=int, default=1, metavar="R",
                   help="threads per node sharing one primal vector")
    p.add_argument("--barrier", type=int, default=None, metavar="S",
                   help="merge as soon as S node updates are pending (default: nodes)")
    p.add_argument("--delay-bound", type=int, default=1, metavar="G",
                   help="max merges a node may fall behind before the master blocks")
    p.add_argument("--local-iters", type=int, default=None, metavar="H",
                   help=f"coordinate steps per core per round "
                        f"(default {DEFAULT_LOCAL_ITERS}, or {DESK_LOCAL_ITERS} with --desk)")
    p.add_argument("--nu", type=float, default=1.0, metavar="F",
                   help="aggregation weight applied to each merged delta")
    p.add_argument("--sigma", default="auto", metavar="F|auto",
                   help="subproblem quadratic-penalty weight (auto = nu * barrier)")
    p.add_argument("--rounds", type=int, default=10, metavar="N",
                   help="global merge budget")
    p.add_argument("--seed", type=int, default=0, metavar="N")
    p.add_argument("--mode", choices=list(MODES), default="hybrid")
    p.add_argument("--gap-target", type=float, default=None, metavar="F",
                   help="stop once the duality gap falls to this value")
    p.add_argument("--trace", default=None, metavar="PATH.csv",
                   help="write the per-round trace as CSV")
    p.add_argument("--sim-time", action="store_true",
                   help="deterministic logical clock instead of real threads")
    p.add_argument("--delay-schedule", default=None, metavar="PATH",
                   help="key-value file of per-worker extra ticks per round")
    p.add_argument("--subproblem-scale", choices=["n", "nk"], default="n",
                   help="conjugate-term weight in local subproblems")
    p.add_argument("--wild", action="store_true",
                   help="racy shared-vector writes (no per-element atomicity)")
    p.add_argument("--desk", action="store_true",
                   help=f"small-corpus preset: local iters {DESK_LOCAL_ITERS}")
    p.add_argument("--unsafe-sigma", action="store_true",
                   help="allow sigma below the safe bound nu * barrier")
    return p


def cli_main(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return int(code) if code is not None else EXIT_OK

    if args.sigma == "auto":
        sigma = None
    else:
        try:
            sigma = float(args.sigma)
        except ValueError:
            print(f"asyncdca: --sigma must be a number or 'auto', got {args.sigma!r}",
                  file=sys.stderr)
            return EXIT_CONFIG

    schedule = None
    if args.delay_schedule is not None:
        try:
            schedule = load_delay_schedule(args.delay_schedule)
        except OSError as exc:
            print(f"asyncdca: cannot read delay schedule: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except ConfigError as exc:
            print(f"asyncdca: {exc}", file=sys.stderr)
            return EXIT_CONFIG

    local_iters = args.local_iters
    if local_iters is None:
        local_iters = DESK_LOCAL_ITERS if args.desk else DEFAULT_LOCAL_ITERS

    config = Config(
        loss=args.loss,
        lam=args.lam,
        nodes=args.nodes,
        cores=args.cores,
        barrier=args.barrier,
        delay_bound=args.delay_bound,
        local_iters=local_iters,
        nu=args.nu,
        sigma=sigma,
        rounds=args.rounds,
        seed=args.seed,
        mode=args.mode,
        subproblem_scale=args.subproblem_scale,
        gap_target=args.gap_target,
        delay_schedule=schedule,
        sim_time=args.sim_time,
        wild=args.wild,
        unsafe_sigma=args.unsafe_sigma,
    )
    try:
        config = config.normalized()
    except ConfigError as exc:
        print(f"asyncdca: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        dataset = load_libsvm(args.data)
    except ParseError as exc:
        print(f"asyncdca: {args.data}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"asyncdca: cannot read data: {exc}", file=sys.stderr)
        return EXIT_PARSE

    try:
        report = run(config, dataset)
    except (ConfigError, PartitionError) as exc:
        print(f"asyncdca: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"asyncdca: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED

    if args.trace is not None:
        try:
            write_trace(args.trace, report.trace)
        except OSError as exc:
            print(f"asyncdca: cannot write trace: {exc}", file=sys.stderr)
            return EXIT_CONFIG

    last = report.trace[-1]
    print(
        f"mode={config.mode} merges={report.merges} "
        f"primal={last.primal:.12g} dual={last.dual:.12g} gap={last.gap:.12g}"
        + (" (gap target reached)" if report.stopped_early else "")
    )
    return EXIT_OK


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
