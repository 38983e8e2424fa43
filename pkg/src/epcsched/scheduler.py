"""Placement policies over measured usage and open reservations.

Admission never trusts declarations alone: a node's occupancy is the maximum
of what the probes measured and what reservations say, so a node looks full
both while measurements lag behind fresh placements and while real usage
exceeds what jobs reserved.  Protected memory is never over-committed.
"""

from __future__ import annotations

from bisect import insort
from dataclasses import dataclass
from statistics import pstdev
from typing import Callable, Iterable, Mapping

from .cluster import ClusterState, NodeState
from .metrics import METRIC_EPC_PAGES, METRIC_STD_BYTES, SeriesStore, WindowQuery
from .trace import JobSpec


@dataclass(frozen=True)
class Placement:
    job_id: str
    node_id: str
    decided_at_ms: int


@dataclass(frozen=True)
class NodeUsage:
    """Measured usage of one node inside the query window."""

    epc_pages: int = 0
    std_bytes: int = 0


_NO_USAGE = NodeUsage()


class PendingQueue:
    """Jobs waiting for placement, in first-come-first-served order
    (submit time, then job id).  Placement or a kill removes a job; there is
    no other way out."""

    def __init__(self, jobs: Iterable[JobSpec] = ()):
        self._jobs: list[JobSpec] = []
        for job in jobs:
            self.push(job)

    @staticmethod
    def _key(job: JobSpec):
        return (job.submit_ms, job.job_id)

    def push(self, job: JobSpec) -> None:
        insort(self._jobs, job, key=self._key)

    def remove(self, job_id: str) -> JobSpec:
        for i, job in enumerate(self._jobs):
            if job.job_id == job_id:
                return self._jobs.pop(i)
        raise KeyError(job_id)

    def jobs(self) -> list[JobSpec]:
        """Snapshot in queue order."""
        return list(self._jobs)

    def __len__(self) -> int:
        return len(self._jobs)

    def __iter__(self):
        return iter(self._jobs)


def feasible(job: JobSpec, node: NodeState,
             usage: Mapping[str, NodeUsage]) -> bool:
    """Whether the node can take the job right now.

    Enclave jobs need an enclave-capable node with enough usable pages beyond
    max(measured, reserved) occupancy; every job additionally needs standard
    memory for its advertised request (an enclave job's untrusted part lives
    there too).
    """
    seen = usage.get(node.node_id, _NO_USAGE)
    if job.kind.uses_epc:
        if not node.is_sgx:
            return False
        occupied = max(seen.epc_pages, node.reserved_epc_pages)
        if occupied + job.declared_epc_pages > node.spec.epc.usable_pages:
            return False
    occupied_std = max(seen.std_bytes, node.reserved_std)
    return occupied_std + job.requested_mem <= node.spec.std_capacity


def binpack_select(job: JobSpec, nodes: Mapping[str, NodeState],
                   usage: Mapping[str, NodeUsage]) -> str | None:
    """First feasible node in a fixed order, so load piles up on the lowest
    node ids.  Standard jobs try enclave-capable nodes last, keeping the
    scarce protected-memory hosts free for jobs that need them."""
    if job.kind.uses_epc:
        candidates = sorted((n for n in nodes.values() if n.is_sgx),
                            key=lambda n: n.node_id)
    else:
        candidates = sorted(nodes.values(), key=lambda n: (n.is_sgx, n.node_id))
    for node in candidates:
        if feasible(job, node, usage):
            return node.node_id
    return None


def _epc_fraction(node: NodeState, extra_pages: int) -> float:
    return (node.reserved_epc_pages + extra_pages) / node.spec.epc.usable_pages


def _std_fraction(node: NodeState, extra_bytes: int) -> float:
    return (node.reserved_std + extra_bytes) / node.spec.std_capacity


def _pick_balanced(job: JobSpec, candidates: list[NodeState],
                   usage: Mapping[str, NodeUsage],
                   load: Callable[[NodeState, int], float],
                   extra: int) -> str | None:
    """Among feasible candidates, the one whose hypothetical placement leaves
    the candidate set's load fractions with the smallest population stddev;
    ties go to the lowest node id."""
    best_id: str | None = None
    best_score = 0.0
    for target in sorted(candidates, key=lambda n: n.node_id):
        if not feasible(job, target, usage):
            continue
        loads = [load(n, extra if n is target else 0) for n in candidates]
        score = pstdev(loads)
        if best_id is None or score < best_score:
            best_id, best_score = target.node_id, score
    return best_id


def spread_select(job: JobSpec, nodes: Mapping[str, NodeState],
                  usage: Mapping[str, NodeUsage]) -> str | None:
    """Evens out the reserved fraction of the resource the job cares about.

    Enclave jobs balance page reservations across enclave-capable nodes.
    Standard jobs balance standard memory across the plain nodes and fall
    back to enclave-capable ones only when no plain node is feasible."""
    if job.kind.uses_epc:
        sgx = [n for n in nodes.values() if n.is_sgx]
        return _pick_balanced(job, sgx, usage, _epc_fraction,
                              job.declared_epc_pages)
    plain = [n for n in nodes.values() if not n.is_sgx]
    chosen = _pick_balanced(job, plain, usage, _std_fraction, job.requested_mem)
    if chosen is not None:
        return chosen
    sgx = [n for n in nodes.values() if n.is_sgx]
    return _pick_balanced(job, sgx, usage, _std_fraction, job.requested_mem)


POLICIES: dict[str, Callable[..., str | None]] = {
    "binpack": binpack_select,
    "spread": spread_select,
}


def snapshot_usage(store: SeriesStore, now_ms: int,
                   window_ms: int = 25_000) -> dict[str, NodeUsage]:
    """One windowed usage query per metric, merged per node."""
    epc = store.per_node_usage(WindowQuery(METRIC_EPC_PAGES, now_ms, window_ms))
    std = store.per_node_usage(WindowQuery(METRIC_STD_BYTES, now_ms, window_ms))
    return {node_id: NodeUsage(epc.get(node_id, 0), std.get(node_id, 0))
            for node_id in epc.keys() | std.keys()}


def schedule_tick(queue: PendingQueue, cluster: ClusterState,
                  store: SeriesStore, now_ms: int, policy: str = "binpack",
                  window_ms: int = 25_000) -> list[Placement]:
    """Walk the queue in order once, placing every job that fits somewhere.

    Measured usage is snapshotted once per tick; reservations made for jobs
    placed earlier in the same walk are visible to later ones, so one tick
    cannot over-commit a node.  Jobs with no feasible node simply stay queued
    without blocking the jobs behind them.
    """
    try:
        select = POLICIES[policy]
    except KeyError:
        raise ValueError(f"unknown policy {policy!r}") from None
    usage = snapshot_usage(store, now_ms, window_ms)
    placements: list[Placement] = []
    for job in queue.jobs():
        node_id = select(job, cluster.nodes, usage)
        if node_id is None:
            continue
        cluster.nodes[node_id].reserve(job.requested_mem, job.declared_epc_pages)
        queue.remove(job.job_id)
        placements.append(Placement(job.job_id, node_id, now_ms))
    return placements
