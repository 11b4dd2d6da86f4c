"""Per-node dual coordinate ascent over a shared, element-atomic primal vector.

A node owns a block of examples and R cores. Each core repeatedly samples an
example from its private sub-block, solves the 1-D restriction of the node's
perturbed local subproblem against the current shared vector, accumulates the
dual step into a block-local delta, and folds (step / (lam n)) x_i into the
shared vector one element at a time. Cores never share dual coordinates, so
dual mass is race-free by construction; only the shared primal vector sees
concurrent writers.

The subproblem for a node with examples I_k, anchored at (alpha, v), is

    Q(delta) = -(cw/n) sum_{i in I_k} conj(-(alpha_i + delta_i))
               - (lam/S) ||v||^2 / 2
               - (1/n) v . (X delta)
               - (sigma / (2 lam n^2)) ||X delta||^2

where cw is 1 under whole-n conjugate scaling and n/n_k under per-block
scaling, and S is the aggregation barrier size.
"""

from __future__ import annotations

import hashlib
import math
import threading
from dataclasses import dataclass

import numpy as np

from .data import Dataset, Partition
from .errors import DivergenceError
from .losses import LossKind, conjugate_array, step_function


class SharedPrimal:
    """Dense shared vector with element-granular atomic accumulation.

    Writers call `add_scaled`; with several writer threads each element
    update is serialized through a striped lock table, so no increment is
    ever lost, while readers use plain unsynchronized element reads and may
    observe a half-applied update (there is no vector-level snapshot
    consistency). With a single writer, or in `wild` mode, updates go
    through unsynchronized vectorized adds; wild mode deliberately allows
    lost updates under concurrency and is for experimentation only.
    """

    N_STRIPES = 128

    def __init__(self, values: np.ndarray, atomic: bool, wild: bool = False):
        self._v = np.array(values, dtype=np.float64, copy=True)
        self._atomic = bool(atomic) and not wild
        self.wild = bool(wild)
        self._locks = (
            [threading.Lock() for _ in range(self.N_STRIPES)] if self._atomic else None
        )

    @property
    def values(self) -> np.ndarray:
        """Live backing array; element reads on it are intentionally unlocked."""
        return self._v

    @property
    def dim(self) -> int:
        return self._v.shape[0]

    def add_scaled(self, indices: np.ndarray, values: np.ndarray, scale: float) -> None:
        """v[indices] += scale * values, element-atomically when required.

        `indices` must not contain repeats (sparse points never do).
        """
        if not self._atomic:
            self._v[indices] += scale * values
            return
        v = self._v
        locks = self._locks
        nstripes = self.N_STRIPES
        for j in range(indices.shape[0]):
            i = indices[j]
            lock = locks[i % nstripes]
            lock.acquire()
            v[i] += scale * values[j]
            lock.release()

    def snapshot(self) -> np.ndarray:
        """Copy of the vector; meaningful when writers are quiescent."""
        return self._v.copy()

    def load(self, values: np.ndarray) -> None:
        """Overwrite the vector, e.g. with a freshly broadcast global state."""
        self._v[:] = values


@dataclass
class WorkerState:
    """Everything one node needs between rounds.

    `alpha` is a full-length dual vector that the node only ever touches on
    its own block. `blocks` holds per-core example-id arrays with zero-norm
    examples already filtered out of the sampling pool; `own_indices` keeps
    the complete block (including zero-norm examples) for objective sums.
    """

    worker_id: int
    dataset: Dataset
    blocks: list[np.ndarray]
    own_indices: np.ndarray
    alpha: np.ndarray
    kind: LossKind
    lam: float
    sigma: float
    nu: float
    barrier: int
    conj_weight: float = 1.0
    seed: int = 0
    round_tag: int = 0


@dataclass
class LocalRoundResult:
    """One round's output: the sparse dual step and the shared-vector change."""

    round_tag: int
    delta_indices: np.ndarray
    delta_values: np.ndarray
    delta_v: np.ndarray
    steps_taken: int
    q_gain: float


def build_worker_state(
    worker_id: int,
    dataset: Dataset,
    part: Partition,
    kind: LossKind,
    lam: float,
    sigma: float,
    nu: float,
    barrier: int,
    conj_weight: float = 1.0,
    seed: int = 0,
) -> WorkerState:
    sq = dataset.squared_norms
    blocks = [blk[sq[blk] > 0.0] for blk in part.cores[worker_id]]
    own = part.node_indices(worker_id)
    return WorkerState(
        worker_id=worker_id,
        dataset=dataset,
        blocks=blocks,
        own_indices=own,
        alpha=np.zeros(dataset.n, dtype=np.float64),
        kind=kind,
        lam=lam,
        sigma=sigma,
        nu=nu,
        barrier=barrier,
        conj_weight=conj_weight,
        seed=seed,
    )


def local_round(
    state: WorkerState, shared: SharedPrimal, iters: int, parallel: bool = True
) -> LocalRoundResult:
    """Run one asynchronous round: each core takes `iters` sampled steps.

    Core r draws its PRNG stream from (seed, worker, r, round_tag), so the
    sampled index sequence is reproducible regardless of how the cores'
    writes to the shared vector interleave. With `parallel=False` the cores
    run back to back on the calling thread (used by the deterministic
    simulated-time driver); numerics for one core never depend on Python
    threads, only on what it happens to read from the shared vector.
    """
    tag = state.round_tag
    v_old = shared.snapshot()
    delta = np.zeros(state.dataset.n, dtype=np.float64)
    n_cores = len(state.blocks)
    if parallel and n_cores > 1:
        failures: list[BaseException] = []

        def runner(r: int) -> None:
            try:
                _core_loop(state, shared, delta, r, iters)
            except BaseException as exc:
                failures.append(exc)

        threads = [
            threading.Thread(target=runner, args=(r,), name=f"core-{state.worker_id}-{r}")
            for r in range(n_cores)
        ]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        if failures:
            raise failures[0]
    else:
        for r in range(n_cores):
            _core_loop(state, shared, delta, r, iters)
    delta_v = shared.snapshot() - v_old
    touched = np.nonzero(delta)[0]
    values = delta[touched]
    gain = _q_gain(state, v_old, touched, values)
    state.round_tag = tag + 1
    return LocalRoundResult(
        round_tag=tag,
        delta_indices=touched,
        delta_values=values,
        delta_v=delta_v,
        steps_taken=iters * n_cores,
        q_gain=gain,
    )


def _core_loop(
    state: WorkerState,
    shared: SharedPrimal,
    delta: np.ndarray,
    r: int,
    iters: int,
) -> None:
    block = state.blocks[r]
    if block.size == 0 or iters <= 0:
        return
    rng = np.random.default_rng([state.seed, state.worker_id, r, state.round_tag])
    picks = rng.integers(0, block.size, size=iters)
    points = state.dataset.points
    alpha = state.alpha
    varr = shared.values
    step = step_function(state.kind)
    cw = state.conj_weight
    inv_lam_n = 1.0 / (state.lam * state.dataset.n)
    sig_scale = state.sigma * inv_lam_n
    for h in range(iters):
        i = int(block[picks[h]])
        pt = points[i]
        idx = pt.indices
        vals = pt.values
        vdx = float(varr[idx] @ vals)
        if not math.isfinite(vdx):
            raise DivergenceError(
                f"non-finite shared-vector read on worker {state.worker_id}, example {i}"
            )
        a = alpha[i] + delta[i]
        eps = step(a, pt.label, vdx, sig_scale * pt.squared_norm, cw)
        if eps != 0.0:
            if not math.isfinite(eps):
                raise DivergenceError(
                    f"non-finite step on worker {state.worker_id}, example {i}"
                )
            delta[i] += eps
            shared.add_scaled(idx, vals, eps * inv_lam_n)


def sparse_combination(dataset: Dataset, indices: np.ndarray, coeff: np.ndarray) -> np.ndarray:
    """sum_j coeff_j * x_{indices_j} accumulated into a dense length-d vector."""
    out = np.zeros(dataset.dim, dtype=np.float64)
    points = dataset.points
    for j in range(indices.shape[0]):
        pt = points[int(indices[j])]
        out[pt.indices] += coeff[j] * pt.values
    return out


def _q_gain(
    state: WorkerState, v_old: np.ndarray, idx: np.ndarray, vals: np.ndarray
) -> float:
    """Q(delta) - Q(0): only touched coordinates move the conjugate sum."""
    if idx.size == 0:
        return 0.0
    y = state.dataset.labels[idx]
    new_c, ok_new = conjugate_array(state.kind, state.alpha[idx] + vals, y)
    old_c, ok_old = conjugate_array(state.kind, state.alpha[idx], y)
    if not (ok_new.all() and ok_old.all()):
        return -math.inf
    n = state.dataset.n
    xdelta = sparse_combination(state.dataset, idx, vals)
    conj_term = -(state.conj_weight / n) * float(np.sum(new_c - old_c))
    lin_term = -float(v_old @ xdelta) / n
    quad_term = -state.sigma * float(xdelta @ xdelta) / (2.0 * state.lam * n * n)
    return conj_term + lin_term + quad_term


def subproblem_objective(
    state: WorkerState, v_snapshot: np.ndarray, delta: np.ndarray
) -> float:
    """Value of the node's perturbed subproblem at a full-length delta.

    delta must be zero outside the node's block. Returns -inf when
    alpha + delta leaves the conjugate's domain.
    """
    own = state.own_indices
    y = state.dataset.labels[own]
    conj_vals, ok = conjugate_array(state.kind, state.alpha[own] + delta[own], y)
    if not ok.all():
        return -math.inf
    n = state.dataset.n
    moved = own[delta[own] != 0.0]
    xdelta = sparse_combination(state.dataset, moved, delta[moved])
    value = -(state.conj_weight / n) * float(np.sum(conj_vals))
    value -= (state.lam / state.barrier) * 0.5 * float(v_snapshot @ v_snapshot)
    value -= float(v_snapshot @ xdelta) / n
    value -= state.sigma * float(xdelta @ xdelta) / (2.0 * state.lam * n * n)
    return value


def solve_subproblem(
    state: WorkerState,
    v_old: np.ndarray,
    tol: float = 1e-10,
    max_passes: int = 2000,
) -> np.ndarray:
    """Maximize the node's subproblem to high accuracy by cyclic exact
    coordinate ascent; used as the reference when scoring a round's quality.

    The effective read vector carries sigma-scaled accumulation, which makes
    each 1-D solve exact for the anchored subproblem rather than for the
    drifting global dual.
    """
    n = state.dataset.n
    delta = np.zeros(n, dtype=np.float64)
    w_eff = np.array(v_old, dtype=np.float64, copy=True)
    points = state.dataset.points
    alpha = state.alpha
    step = step_function(state.kind)
    cw = state.conj_weight
    inv_lam_n = 1.0 / (state.lam * n)
    sig_scale = state.sigma * inv_lam_n
    order = [int(i) for i in state.own_indices if points[int(i)].squared_norm > 0.0]
    for _ in range(max_passes):
        biggest = 0.0
        for i in order:
            pt = points[i]
            vdx = float(w_eff[pt.indices] @ pt.values)
            a = alpha[i] + delta[i]
            eps = step(a, pt.label, vdx, sig_scale * pt.squared_norm, cw)
            if eps != 0.0:
                delta[i] += eps
                w_eff[pt.indices] += (state.sigma * eps * inv_lam_n) * pt.values
                biggest = max(biggest, abs(eps))
        if biggest <= tol:
            break
    return delta


def measure_theta(
    state: WorkerState,
    v_old: np.ndarray,
    delta: np.ndarray,
    tol: float = 1e-10,
    delta_star: np.ndarray | None = None,
) -> float:
    """Residual subproblem gap ratio of a round's delta against the exact
    block solution: 0 means the round solved the subproblem, values near 1
    mean it barely moved. Already-optimal blocks score 0 by convention; tiny
    negative numerators from the reference solver's finite tolerance are
    floored at 0. Pass `delta_star` to reuse a reference solution when
    scoring several deltas against one anchor.
    """
    zero = np.zeros(state.dataset.n, dtype=np.float64)
    q0 = subproblem_objective(state, v_old, zero)
    if delta_star is None:
        delta_star = solve_subproblem(state, v_old, tol=tol)
    q_star = subproblem_objective(state, v_old, delta_star)
    q_delta = subproblem_objective(state, v_old, delta)
    denom = q_star - q0
    if denom <= 0.0:
        return 0.0
    return max(0.0, (q_star - q_delta) / denom)


def alpha_checksum(alpha: np.ndarray) -> str:
    """Bitwise digest of a dual vector, for exact trajectory comparisons."""
    return hashlib.sha256(np.ascontiguousarray(alpha, dtype=np.float64).tobytes()).hexdigest()
