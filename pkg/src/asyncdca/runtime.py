"""Run drivers that wire workers to the master under four execution modes.

hybrid      K nodes x R cores, bounded-barrier / bounded-staleness merges.
sequential  K=R=S=1 plain dual coordinate ascent, single thread.
cocoa       S=K synchronous merge every round (delay bound irrelevant).
passcode    K=1 multicore node with a pass-through master (S=1).

Everything lives in one process. Workers and master exchange value messages
only (no shared state crosses the channel), so the transport could be swapped
for sockets without touching the protocol. Two clocks are supported: a
deterministic discrete-event simulation driven by per-worker tick costs, and
real threads with wall-clock time. The sequential mode always runs on the
simulated clock; hybrid K=1,R=1,S=1,nu=1,sigma=1 performs the identical
arithmetic sequence, which is what makes the two modes' dual trajectories
bitwise comparable.

Progress measurement keeps its own (alpha, v) pair, fed by exactly the deltas
each merge accepted, so v = X alpha / (lam n) holds to machine precision at
every checkpoint and the reported gap is a true weak-duality certificate. The
dual value is computed inline at each merge; the primal is evaluated post-hoc
from buffered v snapshots unless an early-stop gap target forces it inline.
"""

from __future__ import annotations

import dataclasses
import heapq
import math
import queue
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .aggregator import MasterState, MergeRecord, UpdateMsg, merge, new_master_state, offer, ready
from .data import Dataset, Partition, partition
from .errors import ChannelClosed, ConfigError, DivergenceError, ProtocolError
from .local_solver import (
    SharedPrimal,
    WorkerState,
    alpha_checksum,
    build_worker_state,
    local_round,
    sparse_combination,
)
from .losses import LossKind, loss_kind
from .metrics import TraceRecord, contributors_mask, dual_from_parts, primal_objective

MODES = ("hybrid", "sequential", "cocoa", "passcode")

DEFAULT_LOCAL_ITERS = 40000
DESK_LOCAL_ITERS = 2000

_WALL_TICK_SECONDS = 0.001


@dataclass
class DelaySchedule:
    """Artificial per-round latency on top of every worker's unit compute cost.

    `extra` maps worker index to additional ticks per round; unlisted workers
    fall back to `default_extra`. An all-zero schedule is indistinguishable
    from no schedule. On the simulated clock a round costs 1 + extra ticks;
    on the wall clock the extra ticks become sleeps at one millisecond per
    tick.
    """

    extra: dict[int, float] = field(default_factory=dict)
    default_extra: float = 0.0

    def extra_ticks(self, worker: int) -> float:
        return self.extra.get(worker, self.default_extra)

    def round_cost(self, worker: int) -> float:
        return 1.0 + self.extra_ticks(worker)

    def validate(self, n_workers: int) -> None:
        for k, v in self.extra.items():
            if not (0 <= k < n_workers):
                raise ConfigError(f"delay schedule names unknown worker {k} (have {n_workers})")
            if not (math.isfinite(v) and v >= 0.0):
                raise ConfigError(f"delay for worker {k} must be finite and >= 0, got {v}")
        if not (math.isfinite(self.default_extra) and self.default_extra >= 0.0):
            raise ConfigError(f"default delay must be finite and >= 0, got {self.default_extra}")


def parse_delay_schedule(text: str) -> DelaySchedule:
    """Parse `worker_index = extra_ticks` lines; `default = F` covers the rest.

    Blank lines and `#` comments are ignored. This accepts the flat subset of
    TOML that such files use.
    """
    extra: dict[int, float] = {}
    default = 0.0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"delay schedule line {lineno}: expected `key = value`, got {raw!r}")
        key = key.strip().strip('"')
        value = value.strip()
        try:
            cost = float(value)
        except ValueError as exc:
            raise ConfigError(f"delay schedule line {lineno}: bad tick cost {value!r}") from exc
        if key == "default":
            default = cost
        else:
            try:
                worker = int(key)
            except ValueError as exc:
                raise ConfigError(
                    f"delay schedule line {lineno}: key must be a worker index or `default`"
                ) from exc
            if worker in extra:
                raise ConfigError(f"delay schedule line {lineno}: duplicate worker {worker}")
            extra[worker] = cost
    return DelaySchedule(extra=extra, default_extra=default)


def load_delay_schedule(path: str) -> DelaySchedule:
    with open(path, encoding="utf-8") as fh:
        return parse_delay_schedule(fh.read())


@dataclass
class Config:
    """Solver configuration; call `normalized()` before use.

    `barrier=None` resolves per mode (nodes for hybrid and cocoa, 1 for the
    single-node modes); `sigma=None` resolves to the safe default nu * barrier.
    """

    loss: LossKind | str = LossKind.HINGE
    lam: float = 1e-4
    nodes: int = 1
    cores: int = 1
    barrier: int | None = None
    delay_bound: int = 1
    local_iters: int = DEFAULT_LOCAL_ITERS
    nu: float = 1.0
    sigma: float | None = None
    rounds: int = 10
    seed: int = 0
    mode: str = "hybrid"
    subproblem_scale: str = "n"
    gap_target: float | None = None
    delay_schedule: DelaySchedule | None = None
    sim_time: bool = False
    wild: bool = False
    unsafe_sigma: bool = False

    def normalized(self) -> "Config":
        cfg = dataclasses.replace(self)
        cfg.loss = loss_kind(cfg.loss) if isinstance(cfg.loss, str) else cfg.loss
        if cfg.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {cfg.mode!r}")
        if not (math.isfinite(cfg.lam) and cfg.lam > 0):
            raise ConfigError(f"lambda must be positive, got {cfg.lam}")
        for name in ("nodes", "cores", "local_iters", "rounds", "delay_bound"):
            val = getattr(cfg, name)
            if not isinstance(val, int) or val < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {val!r}")
        if cfg.mode == "sequential":
            if cfg.nodes != 1 or cfg.cores != 1:
                raise ConfigError("sequential mode runs one node with one core")
            if cfg.barrier not in (None, 1):
                raise ConfigError("sequential mode implies barrier 1")
            cfg.barrier = 1
            cfg.delay_bound = 1
            cfg.sim_time = True
        elif cfg.mode == "cocoa":
            if cfg.barrier is None:
                cfg.barrier = cfg.nodes
            elif cfg.barrier != cfg.nodes:
                raise ConfigError("cocoa mode merges all nodes every round (barrier == nodes)")
            cfg.delay_bound = 1
        elif cfg.mode == "passcode":
            if cfg.nodes != 1:
                raise ConfigError("passcode mode runs a single multicore node")
            if cfg.barrier not in (None, 1):
                raise ConfigError("passcode mode implies barrier 1")
            cfg.barrier = 1
            cfg.delay_bound = 1
        else:
            if cfg.barrier is None:
                cfg.barrier = cfg.nodes
        if not (1 <= cfg.barrier <= cfg.nodes):
            raise ConfigError(f"barrier must satisfy 1 <= S <= nodes, got S={cfg.barrier} K={cfg.nodes}")
        lo = 1.0 / cfg.barrier
        if not (math.isfinite(cfg.nu) and lo <= cfg.nu <= 1.0):
            raise ConfigError(f"nu must lie in [1/barrier, 1] = [{lo:g}, 1], got {cfg.nu}")
        safe = cfg.nu * cfg.barrier
        if cfg.sigma is None:
            cfg.sigma = safe
        if not (math.isfinite(cfg.sigma) and cfg.sigma > 0):
            raise ConfigError(f"sigma must be positive, got {cfg.sigma}")
        if cfg.sigma < safe * (1.0 - 1e-12) and not cfg.unsafe_sigma:
            raise ConfigError(
                f"sigma={cfg.sigma:g} below the safe bound nu*barrier={safe:g}; "
                "pass --unsafe-sigma to override"
            )
        if cfg.subproblem_scale not in ("n", "nk"):
            raise ConfigError(f"subproblem_scale must be 'n' or 'nk', got {cfg.subproblem_scale!r}")
        if cfg.gap_target is not None and not (math.isfinite(cfg.gap_target) and cfg.gap_target > 0):
            raise ConfigError(f"gap target must be positive, got {cfg.gap_target}")
        if cfg.delay_schedule is not None:
            cfg.delay_schedule.validate(cfg.nodes)
        return cfg


def inject_delays(config: Config, schedule: DelaySchedule) -> Config:
    """Attach an artificial latency schedule to a configuration."""
    schedule.validate(config.nodes)
    return dataclasses.replace(config, delay_schedule=schedule)


@dataclass
class RunReport:
    trace: list[TraceRecord]
    final_alpha_checksum: str
    final_v: np.ndarray
    alpha_trajectory: list[str]
    merges: int
    stopped_early: bool
    protocol_events: list[tuple]


class _Measurement:
    """Checkpoint bookkeeping fed with exactly the deltas each merge accepted.

    Maintains alpha and its induced v = X alpha / (lam n) incrementally, so
    every checkpointed (v, alpha) pair is consistent by construction. Dual
    values are computed on the spot; v snapshots are buffered and priced into
    primal values after the run, except when a gap target requires the primal
    inline to decide early stopping.
    """

    def __init__(self, dataset: Dataset, cfg: Config, clock_origin: float):
        self.dataset = dataset
        self.kind = cfg.loss
        self.lam = cfg.lam
        self.nu = cfg.nu
        self.gap_target = cfg.gap_target
        self.clock_origin = clock_origin
        self.alpha = np.zeros(dataset.n, dtype=np.float64)
        self.v_true = np.zeros(dataset.dim, dtype=np.float64)
        self.rows: list[dict] = []
        self.alpha_trajectory: list[str] = []
        self.target_reached = False

    def on_merge(self, rec: MergeRecord, sim_ticks: float) -> None:
        scale = self.nu / (self.lam * self.dataset.n)
        for msg in rec.messages:
            self.alpha[msg.delta_indices] += self.nu * msg.delta_values
            self.v_true += scale * sparse_combination(
                self.dataset, msg.delta_indices, msg.delta_values
            )
        dual = dual_from_parts(self.alpha, self.v_true, self.dataset.labels, self.lam, self.kind)
        if not math.isfinite(dual):
            raise DivergenceError(f"non-finite dual objective at merge {rec.merge_index}")
        wall_ms = (time.perf_counter() - self.clock_origin) * 1000.0
        row = {
            "round": rec.merge_index + 1,
            "wall_ms": wall_ms,
            "sim_ticks": sim_ticks,
            "dual": dual,
            "primal": None,
            "v_snap": None,
            "contributors": contributors_mask(rec.contributors),
            "msgs": rec.transmissions,
        }
        if self.gap_target is not None:
            primal = primal_objective(self.dataset, self.v_true, self.lam, self.kind)
            if not math.isfinite(primal):
                raise DivergenceError(f"non-finite primal objective at merge {rec.merge_index}")
            row["primal"] = primal
            if primal - dual <= self.gap_target:
                self.target_reached = True
        else:
            row["v_snap"] = self.v_true.copy()
        self.rows.append(row)
        self.alpha_trajectory.append(alpha_checksum(self.alpha))

    def finish(self) -> list[TraceRecord]:
        out: list[TraceRecord] = []
        for row in self.rows:
            primal = row["primal"]
            if primal is None:
                primal = primal_objective(self.dataset, row["v_snap"], self.lam, self.kind)
                if not math.isfinite(primal):
                    raise DivergenceError(f"non-finite primal objective at round {row['round']}")
            out.append(
                TraceRecord(
                    round=row["round"],
                    wall_ms=row["wall_ms"],
                    sim_ticks=row["sim_ticks"],
                    primal=primal,
                    dual=row["dual"],
                    gap=primal - row["dual"],
                    contributors=row["contributors"],
                    msgs=row["msgs"],
                )
            )
        return out


def _build_workers(cfg: Config, dataset: Dataset, part: Partition) -> list[WorkerState]:
    states = []
    for k in range(cfg.nodes):
        if cfg.subproblem_scale == "nk":
            cw = dataset.n / part.node_indices(k).shape[0]
        else:
            cw = 1.0
        states.append(
            build_worker_state(
                worker_id=k,
                dataset=dataset,
                part=part,
                kind=cfg.loss,
                lam=cfg.lam,
                sigma=cfg.sigma,
                nu=cfg.nu,
                barrier=cfg.barrier,
                conj_weight=cw,
                seed=cfg.seed,
            )
        )
    return states


def run(config: Config, dataset: Dataset) -> RunReport:
    """Execute a full run and return its trace and final state."""
    cfg = config.normalized()
    part = partition(dataset, cfg.nodes, cfg.cores, cfg.seed)
    states = _build_workers(cfg, dataset, part)
    master = new_master_state(dataset.dim, cfg.nodes, cfg.barrier, cfg.delay_bound, cfg.nu)
    measurement = _Measurement(dataset, cfg, clock_origin=time.perf_counter())
    if cfg.sim_time or cfg.mode == "sequential":
        _run_simulated(cfg, dataset, states, master, measurement)
    else:
        _run_threaded(cfg, dataset, states, master, measurement)
    trace = measurement.finish()
    return RunReport(
        trace=trace,
        final_alpha_checksum=alpha_checksum(measurement.alpha),
        final_v=master.v,
        alpha_trajectory=measurement.alpha_trajectory,
        merges=master.merges_done,
        stopped_early=measurement.target_reached,
        protocol_events=list(master.events),
    )


def _run_simulated(
    cfg: Config,
    dataset: Dataset,
    states: list[WorkerState],
    master: MasterState,
    measurement: _Measurement,
) -> None:
    """Discrete-event loop on a logical clock; fully deterministic.

    Each heap event is one worker finishing a round. The worker's cores run
    back to back at the pop, reading the vector last broadcast to that
    worker, which reproduces the stale-read semantics of real concurrency
    without its nondeterminism. A worker whose offer is pending stays off the
    heap until a broadcast releases it.
    """
    schedule = cfg.delay_schedule or DelaySchedule()
    shared = [
        SharedPrimal(np.zeros(dataset.dim), atomic=False, wild=cfg.wild)
        for _ in range(cfg.nodes)
    ]
    heap: list[tuple[float, int, int]] = []
    seq = 0
    for k in range(cfg.nodes):
        heapq.heappush(heap, (schedule.round_cost(k), seq, k))
        seq += 1
    while master.merges_done < cfg.rounds and not measurement.target_reached:
        if not heap:
            raise ProtocolError(
                "all workers are blocked pending but no merge is ready; "
                "protocol invariant broken"
            )
        now, _, k = heapq.heappop(heap)
        result = local_round(states[k], shared[k], cfg.local_iters, parallel=False)
        offer(
            master,
            UpdateMsg(
                worker_id=k,
                round_tag=result.round_tag,
                delta_v=result.delta_v,
                delta_indices=result.delta_indices,
                delta_values=result.delta_values,
            ),
        )
        while (
            ready(master)
            and master.merges_done < cfg.rounds
            and not measurement.target_reached
        ):
            rec = merge(master)
            measurement.on_merge(rec, sim_ticks=now)
            for msg in rec.messages:
                w = msg.worker_id
                states[w].alpha[msg.delta_indices] += cfg.nu * msg.delta_values
                shared[w].load(master.v)
                heapq.heappush(heap, (now + schedule.round_cost(w), seq, w))
                seq += 1


_STOP = object()


def _run_threaded(
    cfg: Config,
    dataset: Dataset,
    states: list[WorkerState],
    master: MasterState,
    measurement: _Measurement,
) -> None:
    """Real threads: master on the calling thread, one controller per node.

    Channels are queues carrying values only. A controller's broadcast queue
    is FIFO, so the final broadcast it is owed always lands before the stop
    sentinel; unmerged work found at shutdown is discarded by design.
    """
    schedule = cfg.delay_schedule or DelaySchedule()
    inbox: queue.Queue = queue.Queue()
    mailboxes = [queue.Queue() for _ in range(cfg.nodes)]
    shared = [
        SharedPrimal(np.zeros(dataset.dim), atomic=cfg.cores > 1, wild=cfg.wild)
        for _ in range(cfg.nodes)
    ]

    def controller(k: int) -> None:
        state = states[k]
        try:
            while True:
                result = local_round(state, shared[k], cfg.local_iters, parallel=True)
                sleep_for = schedule.extra_ticks(k) * _WALL_TICK_SECONDS
                if sleep_for > 0:
                    time.sleep(sleep_for)
                inbox.put(
                    (
                        "update",
                        UpdateMsg(
                            worker_id=k,
                            round_tag=result.round_tag,
                            delta_v=result.delta_v,
                            delta_indices=result.delta_indices,
                            delta_values=result.delta_values,
                        ),
                    )
                )
                item = mailboxes[k].get()
                if item is _STOP:
                    return
                v_new, idx, vals = item
                shared[k].load(v_new)
                state.alpha[idx] += cfg.nu * vals
        except BaseException as exc:
            inbox.put(("error", k, exc))

    threads = [
        threading.Thread(target=controller, args=(k,), name=f"worker-{k}")
        for k in range(cfg.nodes)
    ]
    for th in threads:
        th.start()
    failure: BaseException | None = None
    try:
        while master.merges_done < cfg.rounds and not measurement.target_reached:
            kind, *payload = inbox.get()
            if kind == "error":
                _, exc = payload
                failure = exc
                break
            offer(master, payload[0])
            while (
                ready(master)
                and master.merges_done < cfg.rounds
                and not measurement.target_reached
            ):
                rec = merge(master)
                measurement.on_merge(rec, sim_ticks=0.0)
                for msg in rec.messages:
                    mailboxes[msg.worker_id].put(
                        (master.v.copy(), msg.delta_indices, msg.delta_values)
                    )
    finally:
        for mb in mailboxes:
            mb.put(_STOP)
        for th in threads:
            th.join()
    if failure is not None:
        if isinstance(failure, (DivergenceError, ProtocolError)):
            raise failure
        raise ChannelClosed(f"worker thread failed: {failure!r}") from failure
