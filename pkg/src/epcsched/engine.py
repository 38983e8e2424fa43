"""Deterministic replay engine tying the pieces together.

Time is an integer millisecond clock.  Events at the same instant run in a
fixed kind order (finishes first, then startup completions, the usage probe,
the scheduler tick, and submissions last), with insertion order as the final
tie-break, so two runs over the same inputs produce byte-identical outputs.

A job's life: submission queues it; a scheduler tick may place it, which
reserves node resources and, for enclave jobs, registers its declared page
limit and initializes the enclave.  A denied initialization kills the job on
the spot (the enclave cannot be built; re-queueing would just retry the same
doomed init) and releases its reservations.  A granted job holds its node
through the enclave construction delay, runs for its duration, and releases
everything when it finishes.  Waiting time counts submission to placement;
the construction delay extends the finish time instead, so both readings of
"start" stay recomputable from the outcome timestamps.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from enum import Enum, IntEnum

from ._units import PAGE_SIZE
from .cluster import ClusterState, NodeSpec
from .driver import DriverState, InitResult, startup_delay
from .metrics import SeriesStore, probe_tick
from .scheduler import POLICIES, PendingQueue, schedule_tick
from .trace import JobKind, JobSpec


class ConfigError(ValueError):
    """Inconsistent run configuration, caught before any event runs."""


class EventKind(IntEnum):
    # Numeric order is the tie-break order at equal timestamps.
    FINISH = 0
    STARTUP_DONE = 1
    PROBE_TICK = 2
    SCHEDULER_TICK = 3
    SUBMIT = 4


@dataclass(frozen=True)
class SimEvent:
    time_ms: int
    kind: EventKind
    seq: int
    payload: str | None = None

    def __lt__(self, other: "SimEvent") -> bool:
        return ((self.time_ms, self.kind.value, self.seq)
                < (other.time_ms, other.kind.value, other.seq))


class JobStatus(Enum):
    COMPLETED = "Completed"
    KILLED = "Killed"
    UNFINISHED = "Unfinished"


@dataclass(frozen=True)
class JobOutcome:
    """Terminal record of one job.  Killed jobs keep the node that rejected
    them but no start or finish; unfinished jobs never left the queue."""

    job_id: str
    kind: JobKind
    submitted_ms: int
    started_ms: int | None
    finished_ms: int | None
    status: JobStatus
    node_id: str | None
    declared_pages: int
    actual_pages: int

    @property
    def waiting_ms(self) -> int | None:
        if self.started_ms is None:
            return None
        return self.started_ms - self.submitted_ms

    @property
    def turnaround_ms(self) -> int | None:
        if self.finished_ms is None:
            return None
        return self.finished_ms - self.submitted_ms


@dataclass(frozen=True)
class SimConfig:
    scheduler_period_ms: int = 5_000
    probe_period_ms: int = 10_000
    window_ms: int = 25_000
    policy: str = "binpack"
    enforce_limits: bool = True
    include_startup_delays: bool = True
    check_invariants: bool = False

    def __post_init__(self):
        if self.scheduler_period_ms <= 0 or self.probe_period_ms <= 0:
            raise ConfigError("tick periods must be positive")
        if self.window_ms <= 0:
            raise ConfigError("window_ms must be positive")
        if self.probe_period_ms >= self.window_ms:
            raise ConfigError(
                "probe_period_ms must be smaller than window_ms, or the "
                "scheduler can observe windows with no sample at all")
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown policy {self.policy!r}")


@dataclass
class SimResult:
    """Everything a run leaves behind, ordered deterministically."""

    outcomes: list[JobOutcome]
    store: SeriesStore
    pending_epc: list[tuple[int, int]]  # (time_ms, queued declared EPC bytes)
    makespan_ms: int                    # latest completion (0 if none)


class _Engine:
    def __init__(self, jobs: list[JobSpec], cluster_specs: list[NodeSpec],
                 config: SimConfig):
        self.jobs: dict[str, JobSpec] = {}
        for job in jobs:
            if job.job_id in self.jobs:
                raise ValueError(f"duplicate job_id {job.job_id!r}")
            self.jobs[job.job_id] = job
        self.config = config
        self.cluster = ClusterState.from_specs(cluster_specs)
        self.driver = DriverState.for_cluster(self.cluster)
        self.store = SeriesStore()
        self.queue = PendingQueue()
        self.heap: list[SimEvent] = []
        self.seq = 0
        self.inflight = 0  # queued submit/startup/finish events
        self.outcomes: dict[str, JobOutcome] = {}
        self.node_of: dict[str, str] = {}
        self.placed_at: dict[str, int] = {}
        self.pending_epc: list[tuple[int, int]] = []
        self.makespan_ms = 0
        self.last_progress_ms = 0

    def _push(self, time_ms: int, kind: EventKind, payload: str | None = None):
        heapq.heappush(self.heap, SimEvent(time_ms, kind, self.seq, payload))
        self.seq += 1
        if kind in (EventKind.SUBMIT, EventKind.STARTUP_DONE, EventKind.FINISH):
            self.inflight += 1

    def _all_terminal(self) -> bool:
        return len(self.outcomes) == len(self.jobs)

    def run(self) -> SimResult:
        for job in sorted(self.jobs.values(),
                          key=lambda j: (j.submit_ms, j.job_id)):
            self._push(job.submit_ms, EventKind.SUBMIT, job.job_id)
        if self.jobs:
            self._push(0, EventKind.PROBE_TICK)
            self._push(0, EventKind.SCHEDULER_TICK)
        while self.heap:
            event = heapq.heappop(self.heap)
            self._dispatch(event)
            if self.config.check_invariants:
                self._check_invariants(event.time_ms)
        outcomes = sorted(self.outcomes.values(),
                          key=lambda o: (o.submitted_ms, o.job_id))
        return SimResult(outcomes=outcomes, store=self.store,
                         pending_epc=self.pending_epc,
                         makespan_ms=self.makespan_ms)

    def _dispatch(self, event: SimEvent) -> None:
        kind, now = event.kind, event.time_ms
        if kind is EventKind.SUBMIT:
            self.inflight -= 1
            self.queue.push(self.jobs[event.payload])
            self.last_progress_ms = now
        elif kind is EventKind.SCHEDULER_TICK:
            self._on_scheduler_tick(now)
        elif kind is EventKind.PROBE_TICK:
            if not self._all_terminal():
                probe_tick(self.cluster, self.driver, self.store, now)
                self._push(now + self.config.probe_period_ms,
                           EventKind.PROBE_TICK)
        elif kind is EventKind.STARTUP_DONE:
            self.inflight -= 1
            job = self.jobs[event.payload]
            self._push(now + job.duration_ms, EventKind.FINISH, job.job_id)
        elif kind is EventKind.FINISH:
            self.inflight -= 1
            self._on_finish(event.payload, now)

    def _on_scheduler_tick(self, now: int) -> None:
        placements = schedule_tick(self.queue, self.cluster, self.store, now,
                                   self.config.policy, self.config.window_ms)
        for placement in placements:
            self._handle_placement(placement.job_id, placement.node_id, now)
        backlog = sum(job.declared_epc_pages for job in self.queue
                      if job.kind.uses_epc) * PAGE_SIZE
        self.pending_epc.append((now, backlog))
        if placements:
            self.last_progress_ms = now
        if self._all_terminal():
            return
        if self._stuck(now, placements):
            self._mark_unfinished()
            return
        self._push(now + self.config.scheduler_period_ms,
                   EventKind.SCHEDULER_TICK)

    def _handle_placement(self, job_id: str, node_id: str, now: int) -> None:
        job = self.jobs[job_id]
        node = self.cluster.nodes[node_id]
        if job.kind.uses_epc:
            self.driver.register_limit(job_id, job.declared_epc_pages)
            granted = self.driver.enclave_init(node_id, job_id,
                                               job.actual_epc_pages,
                                               enforce=self.config.enforce_limits)
            if granted is not InitResult.GRANTED:
                if (self.config.check_invariants
                        and granted is InitResult.DENIED_CAPACITY
                        and self.config.enforce_limits
                        and job.actual_epc_pages <= job.declared_epc_pages):
                    raise AssertionError(
                        f"{job_id}: capacity denial on {node_id} despite "
                        "admission on declared pages")
                node.release(job.requested_mem, job.declared_epc_pages)
                self._record(job, JobStatus.KILLED, node_id)
                return
        startup_ms = 0
        if job.kind.uses_epc and self.config.include_startup_delays:
            startup_ms = int(round(startup_delay(job.actual_mem, node.spec.epc)))
        node.running.add(job_id)
        self.cluster.running_jobs[job_id] = job
        self.node_of[job_id] = node_id
        self.placed_at[job_id] = now
        self._push(now + startup_ms, EventKind.STARTUP_DONE, job_id)

    def _on_finish(self, job_id: str, now: int) -> None:
        job = self.jobs[job_id]
        node_id = self.node_of[job_id]
        node = self.cluster.nodes[node_id]
        if job.kind.uses_epc:
            self.driver.enclave_release(node_id, job_id, job.actual_epc_pages)
        node.release(job.requested_mem, job.declared_epc_pages)
        node.running.discard(job_id)
        del self.cluster.running_jobs[job_id]
        self._record(job, JobStatus.COMPLETED, node_id,
                     started_ms=self.placed_at[job_id], finished_ms=now)
        self.makespan_ms = max(self.makespan_ms, now)
        self.last_progress_ms = now

    def _record(self, job: JobSpec, status: JobStatus,
                node_id: str | None = None, started_ms: int | None = None,
                finished_ms: int | None = None) -> None:
        self.outcomes[job.job_id] = JobOutcome(
            job_id=job.job_id, kind=job.kind, submitted_ms=job.submit_ms,
            started_ms=started_ms, finished_ms=finished_ms, status=status,
            node_id=node_id, declared_pages=job.declared_epc_pages,
            actual_pages=job.actual_epc_pages)

    def _stuck(self, now: int, placements: list) -> bool:
        """Nothing running, nothing in flight, nothing placeable, and a full
        metrics window has already drained: the queue can never move again."""
        return (len(self.queue) > 0 and not placements
                and not self.cluster.running_jobs and self.inflight == 0
                and now - self.last_progress_ms
                > self.config.window_ms + self.config.scheduler_period_ms)

    def _mark_unfinished(self) -> None:
        for job in self.queue.jobs():
            self.queue.remove(job.job_id)
            self._record(job, JobStatus.UNFINISHED)

    def _check_invariants(self, now: int) -> None:
        for node_id in sorted(self.cluster.nodes):
            node = self.cluster.nodes[node_id]
            specs = [self.jobs[pod] for pod in node.running]
            want_std = sum(j.requested_mem for j in specs)
            if node.reserved_std != want_std:
                raise AssertionError(
                    f"t={now} {node_id}: reserved_std {node.reserved_std} "
                    f"!= running sum {want_std}")
            if node.reserved_std > node.spec.std_capacity:
                raise AssertionError(f"t={now} {node_id}: standard over-commit")
            want_pages = sum(j.declared_epc_pages for j in specs if j.kind.uses_epc)
            if node.reserved_epc_pages != want_pages:
                raise AssertionError(
                    f"t={now} {node_id}: reserved pages {node.reserved_epc_pages} "
                    f"!= running sum {want_pages}")
            if node.is_sgx:
                if node.reserved_epc_pages > node.spec.epc.usable_pages:
                    raise AssertionError(f"t={now} {node_id}: page over-commit")
                counters = self.driver.nodes[node_id]
                owned = sum(counters.owned.values())
                if counters.free_pages != counters.total_pages - owned:
                    raise AssertionError(
                        f"t={now} {node_id}: free {counters.free_pages} != "
                        f"total {counters.total_pages} - owned {owned}")
                if self.config.enforce_limits:
                    for pod, held in counters.owned.items():
                        if held > self.limits_or_inf(pod):
                            raise AssertionError(
                                f"t={now} {node_id}: {pod} holds {held} pages "
                                "over its limit")

    def limits_or_inf(self, pod: str) -> float:
        limit = self.driver.limit_of(pod)
        return float("inf") if limit is None else limit


def run(jobs: list[JobSpec], cluster: list[NodeSpec],
        config: SimConfig | None = None) -> SimResult:
    """Replay a workload on a cluster and return outcomes, the probed sample
    store, and the queued-protected-memory series sampled at every scheduler
    tick (after that tick's placements)."""
    return _Engine(jobs, cluster, config or SimConfig()).run()
