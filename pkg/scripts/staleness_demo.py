#!/usr/bin/env python3
"""Show the bounded-delay merge rule holding back fast workers.

Three nodes run on the simulated clock with worker 0 slowed by two extra
ticks per round (scripts/slow_worker.toml). With barrier 2 and a delay bound
of 1 the master stalls rather than let the fast pair lap worker 0: no merge
fires at tick 2, and the laggard's update jumps the queue as soon as it
lands. A loose bound lets the fast pair merge on unchecked every tick.

Usage:
  python3 scripts/staleness_demo.py [--rounds 6]
"""

from __future__ import annotations

import argparse
from pathlib import Path

from asyncdca import Config, load_delay_schedule, mask_to_contributors, run

from make_synthetic import synthesize


def replay(dataset, schedule, delay_bound: int, rounds: int) -> None:
    cfg = Config(
        mode="hybrid", nodes=3, cores=2, barrier=2, delay_bound=delay_bound,
        nu=1.0, lam=1e-2, local_iters=400, rounds=rounds, sim_time=True,
        seed=5, delay_schedule=schedule,
    )
    report = run(cfg, dataset)
    print(f"delay bound {delay_bound}:")
    print("merge  ticks  contributors  merges each waited   gap")
    merge_events = [ev for ev in report.protocol_events if ev[0] == "merge"]
    ages = {}
    for ev in report.protocol_events:
        if ev[0] == "recv":
            ages.setdefault(ev[2], []).append(ev[3] - 1)
    consumed = {k: 0 for k in range(cfg.nodes)}
    for rec, ev in zip(report.trace, merge_events):
        who = mask_to_contributors(rec.contributors)
        waited = []
        for k in ev[2]:
            waited.append(ages[k][consumed[k]])
            consumed[k] += 1
        print(f"{rec.round:5d}  {rec.sim_ticks:5.0f}  {str(set(who)):>12}  "
              f"{str(waited):>18}  {rec.gap:.3e}")
    print()


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rounds", type=int, default=6)
    ap.add_argument("--schedule",
                    default=str(Path(__file__).with_name("slow_worker.toml")))
    args = ap.parse_args()

    dataset = synthesize(n=600, dim=20, seed=7, separation=1.5)
    schedule = load_delay_schedule(args.schedule)
    print(f"worker extra ticks per round: {schedule.extra}\n")
    replay(dataset, schedule, delay_bound=1, rounds=args.rounds)
    replay(dataset, schedule, delay_bound=10, rounds=args.rounds)


if __name__ == "__main__":
    main()
