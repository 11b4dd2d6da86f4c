"""Objective values, the duality gap, and the run trace format.

Primal:  P(w) = (1/n) sum_i loss(x_i . w, y_i) + (lam/2) ||w||^2
Dual:    D(a) = -(1/n) sum_i conj(-a_i) - (lam/2) ||(1/(lam n)) X a||^2
with w = (1/(lam n)) X a linking the two; P(w) - D(a) >= 0 for any feasible
pair, and the gap certifies suboptimality of both.

Traces are small CSV files, one row per merge (or per round in single-node
modes), floats printed with enough digits to round-trip exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .losses import LossKind, conjugate_array, primal_loss_array

TRACE_FIELDS = (
    "round",
    "wall_ms",
    "sim_ticks",
    "primal",
    "dual",
    "gap",
    "contributors",
    "msgs",
)


def primal_objective(dataset: Dataset, v: np.ndarray, lam: float, kind: LossKind) -> float:
    margins = dataset.margins(v)
    losses = primal_loss_array(kind, margins, dataset.labels)
    return float(np.mean(losses)) + 0.5 * lam * float(v @ v)


def dual_from_parts(
    alpha: np.ndarray, v: np.ndarray, labels: np.ndarray, lam: float, kind: LossKind
) -> float:
    """D(alpha) given the matching v = (1/(lam n)) X alpha already in hand."""
    conj_vals, feasible = conjugate_array(kind, alpha, labels)
    if not feasible.all():
        return -math.inf
    n = alpha.shape[0]
    return -float(np.sum(conj_vals)) / n - 0.5 * lam * float(v @ v)


def dual_objective(dataset: Dataset, alpha: np.ndarray, lam: float, kind: LossKind) -> float:
    v = dataset.feature_combination(alpha) / (lam * dataset.n)
    return dual_from_parts(alpha, v, dataset.labels, lam, kind)


def duality_gap(primal: float, dual: float) -> float:
    return primal - dual


def contributors_mask(contributors: tuple[int, ...] | list[int]) -> int:
    mask = 0
    for k in contributors:
        mask |= 1 << int(k)
    return mask


def mask_to_contributors(mask: int) -> tuple[int, ...]:
    out = []
    k = 0
    while mask:
        if mask & 1:
            out.append(k)
        mask >>= 1
        k += 1
    return tuple(out)


@dataclass
class TraceRecord:
    """One progress sample: objectives plus who and what produced it."""

    round: int
    wall_ms: float
    sim_ticks: float
    primal: float
    dual: float
    gap: float
    contributors: int
    msgs: int


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_trace(path: str, records: list[TraceRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_FIELDS)
        for r in records:
            writer.writerow(
                [
                    r.round,
                    _fmt(r.wall_ms),
                    _fmt(r.sim_ticks),
                    _fmt(r.primal),
                    _fmt(r.dual),
                    _fmt(r.gap),
                    r.contributors,
                    r.msgs,
                ]
            )


def read_trace(path: str) -> list[TraceRecord]:
    out: list[TraceRecord] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != TRACE_FIELDS:
            raise ValueError(f"unexpected trace header: {header}")
        for row in reader:
            out.append(
                TraceRecord(
                    round=int(row[0]),
                    wall_ms=float(row[1]),
                    sim_ticks=float(row[2]),
                    primal=float(row[3]),
                    dual=float(row[4]),
                    gap=float(row[5]),
                    contributors=int(row[6]),
                    msgs=int(row[7]),
                )
            )
    return out
