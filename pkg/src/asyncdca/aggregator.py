"""Master-side merge protocol: bounded barrier with a staleness cap.

The master keeps the authoritative global vector v. Workers send rounds as
(worker, round_tag, delta_v, sparse dual delta) messages. A merge fires as
soon as at least `barrier` offers are pending AND no worker outside the
pending set has fallen further behind than `delay_bound` merges; the second
clause blocks fast workers from lapping a straggler beyond the cap. From the
pending set the master folds in the `barrier` stalest offers (ties broken by
arrival order), scaled by nu, then broadcasts the new v to exactly the
contributors. Non-selected offers stay pending for a later merge.

Staleness of worker k is 1 plus the number of merges since k last
contributed; it resets to 1 when k's offer is merged and grows by one at
every merge k sits out, whether k is idle, computing, or pending.

Each merge consumes `barrier` uploads and triggers `barrier` broadcasts, so
master traffic is exactly 2 * barrier transmissions per merge regardless of
node count or staleness bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ProtocolError


@dataclass
class UpdateMsg:
    """One node round's contribution as it travels to the master."""

    worker_id: int
    round_tag: int
    delta_v: np.ndarray
    delta_indices: np.ndarray
    delta_values: np.ndarray


@dataclass
class MergeRecord:
    """What one merge did: who got in, how stale they were, traffic used."""

    merge_index: int
    contributors: tuple[int, ...]
    staleness: dict[int, int]
    transmissions: int
    messages: tuple[UpdateMsg, ...]


@dataclass
class MasterState:
    v: np.ndarray
    n_workers: int
    barrier: int
    delay_bound: int
    nu: float
    staleness: np.ndarray = field(init=False)
    pending: list[UpdateMsg] = field(default_factory=list)
    arrival_seq: dict[int, int] = field(default_factory=dict)
    merges_done: int = 0
    offers_seen: int = 0
    events: list[tuple] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.staleness = np.ones(self.n_workers, dtype=np.int64)


def new_master_state(
    dim: int, n_workers: int, barrier: int, delay_bound: int, nu: float
) -> MasterState:
    if not (1 <= barrier <= n_workers):
        raise ProtocolError(f"barrier {barrier} outside [1, {n_workers}]")
    if delay_bound < 1:
        raise ProtocolError(f"delay bound must be >= 1, got {delay_bound}")
    return MasterState(
        v=np.zeros(dim, dtype=np.float64),
        n_workers=n_workers,
        barrier=barrier,
        delay_bound=delay_bound,
        nu=nu,
    )


def offer(master: MasterState, msg: UpdateMsg) -> None:
    """Register an arriving update; a worker can have at most one in flight."""
    if any(p.worker_id == msg.worker_id for p in master.pending):
        raise ProtocolError(f"worker {msg.worker_id} already has a pending offer")
    if not (0 <= msg.worker_id < master.n_workers):
        raise ProtocolError(f"unknown worker id {msg.worker_id}")
    master.pending.append(msg)
    master.arrival_seq[msg.worker_id] = master.offers_seen
    master.offers_seen += 1
    master.events.append(
        ("recv", master.merges_done, msg.worker_id, int(master.staleness[msg.worker_id]))
    )


def ready(master: MasterState) -> bool:
    """True when a merge may fire under the barrier + staleness-cap rule."""
    if len(master.pending) < master.barrier:
        return False
    pending_ids = {p.worker_id for p in master.pending}
    for k in range(master.n_workers):
        if k not in pending_ids and master.staleness[k] > master.delay_bound:
            return False
    return True


def merge(master: MasterState) -> MergeRecord:
    """Fold in the `barrier` stalest pending offers and advance the clock."""
    if not ready(master):
        raise ProtocolError("merge attempted while not ready")
    order = sorted(
        master.pending,
        key=lambda p: (-int(master.staleness[p.worker_id]), master.arrival_seq[p.worker_id]),
    )
    chosen = order[: master.barrier]
    chosen_ids = tuple(p.worker_id for p in chosen)
    stale_view = {p.worker_id: int(master.staleness[p.worker_id]) for p in chosen}
    for msg in chosen:
        master.v = master.v + master.nu * msg.delta_v
    keep = set(chosen_ids)
    master.pending = [p for p in master.pending if p.worker_id not in keep]
    master.staleness += 1
    for k in chosen_ids:
        master.staleness[k] = 1
    rec = MergeRecord(
        merge_index=master.merges_done,
        contributors=chosen_ids,
        staleness=stale_view,
        transmissions=2 * master.barrier,
        messages=tuple(chosen),
    )
    master.merges_done += 1
    master.events.append(("merge", rec.merge_index, chosen_ids))
    return rec


def drain_merges(master: MasterState) -> list[MergeRecord]:
    """Fire merges while the rule allows; normally that is zero or one."""
    out = []
    while ready(master):
        out.append(merge(master))
    return out


def transmissions_per_merge(barrier: int) -> int:
    """Uploads consumed plus broadcasts sent by a single merge."""
    return 2 * barrier


def receive_staleness_log(master: MasterState) -> list[tuple[int, int]]:
    """(worker, merges the master ran since that worker last contributed),
    one entry per received offer, as seen at the moment of receipt."""
    return [(e[2], e[3] - 1) for e in master.events if e[0] == "recv"]
