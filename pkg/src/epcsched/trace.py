"""Workload ingestion: parse normalized job traces, slice them, and scale them
into concrete job specifications.

Trace records describe jobs by memory *fractions* of whatever machine they
originally ran on.  Materialization multiplies those fractions against target
capacities (a large standard-memory node, or a small protected-memory budget
for enclave-backed jobs) and tags a seeded subset of records as enclave jobs.
"""

from __future__ import annotations

import csv
import gzip
import io
import logging
import math
from contextlib import contextmanager
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._units import GIB, PAGE_SIZE

log = logging.getLogger(__name__)

DEFAULT_STD_MULTIPLIER = 32 * GIB
DEFAULT_SGX_MULTIPLIER = 98_041_856  # 93.5 MiB of protected memory

CANONICAL_FIELDS = ("job_id", "submit_s", "duration_s",
                    "assigned_mem_frac", "max_mem_frac")
JOBS_FIELDS = ("job_id", "kind", "submit_ms", "duration_ms", "requested_mem",
               "actual_mem", "declared_epc_pages", "actual_epc_pages")


class TraceParseError(ValueError):
    """Input violates the trace contract.  Carries the 1-based source line."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class JobKind(Enum):
    STANDARD = "standard"
    SGX = "sgx"
    MALICIOUS_SGX = "malicious_sgx"

    @property
    def uses_epc(self) -> bool:
        return self is not JobKind.STANDARD


@dataclass(frozen=True)
class RawJobRecord:
    """One normalized trace row.  Memory is a fraction of the source machine."""

    job_id: str
    submit_s: float
    duration_s: float
    assigned_mem_frac: float
    max_mem_frac: float

    def __post_init__(self):
        if not self.job_id:
            raise ValueError("empty job_id")
        if self.submit_s < 0:
            raise ValueError(f"negative submit time for {self.job_id}")
        if self.duration_s < 0:
            raise ValueError(f"negative duration for {self.job_id}")
        for name in ("assigned_mem_frac", "max_mem_frac"):
            frac = getattr(self, name)
            if not 0.0 <= frac <= 1.0:
                raise ValueError(f"{name}={frac} outside [0, 1] for {self.job_id}")


@dataclass(frozen=True)
class JobSpec:
    """A runnable job with concrete sizes.  All times are integer milliseconds.

    Standard jobs carry zero page counts.  Enclave jobs declare a page limit
    up front (what the scheduler admits against) which may differ from the
    pages they actually allocate at startup.
    """

    job_id: str
    kind: JobKind
    submit_ms: int
    duration_ms: int
    requested_mem: int        # advertised standard-memory request, bytes
    actual_mem: int           # memory really touched while running, bytes
    declared_epc_pages: int   # protected-memory limit announced to the cluster
    actual_epc_pages: int     # protected pages allocated at enclave startup

    def __post_init__(self):
        if self.submit_ms < 0 or self.duration_ms < 0:
            raise ValueError(f"negative time field for {self.job_id}")
        if min(self.requested_mem, self.actual_mem,
               self.declared_epc_pages, self.actual_epc_pages) < 0:
            raise ValueError(f"negative size field for {self.job_id}")
        if self.kind.uses_epc:
            if self.declared_epc_pages < 1:
                raise ValueError(
                    f"enclave job {self.job_id} must declare at least one page")
        elif self.declared_epc_pages or self.actual_epc_pages:
            raise ValueError(
                f"standard job {self.job_id} cannot hold protected pages")


@dataclass(frozen=True)
class ScalingConfig:
    """How a raw trace becomes a workload: slice window, sampling stride,
    enclave share, and the capacity multipliers turning fractions into bytes."""

    slice_start_s: float = 0.0
    slice_end_s: float = math.inf
    sampling_stride: int = 1
    sgx_fraction: float = 0.0
    std_multiplier: int = DEFAULT_STD_MULTIPLIER
    sgx_multiplier: int = DEFAULT_SGX_MULTIPLIER
    rng_seed: int = 0

    def __post_init__(self):
        if self.slice_start_s < 0:
            raise ValueError("slice_start_s must be >= 0")
        if not self.slice_start_s < self.slice_end_s:
            raise ValueError("slice_start_s must lie below slice_end_s")
        if self.sampling_stride < 1:
            raise ValueError("sampling_stride must be >= 1")
        if not 0.0 <= self.sgx_fraction <= 1.0:
            raise ValueError("sgx_fraction must lie in [0, 1]")
        if self.std_multiplier <= 0 or self.sgx_multiplier <= 0:
            raise ValueError("capacity multipliers must be positive")
        if self.rng_seed < 0:
            raise ValueError("rng_seed must be >= 0")


@contextmanager
def _open_text(source):
    if hasattr(source, "read"):
        data = source.read()
        if isinstance(data, bytes):
            data = data.decode("utf-8")
        yield io.StringIO(data)
    else:
        with open(source, "r", encoding="utf-8", newline="") as fh:
            yield fh


@contextmanager
def _open_write(dest):
    if hasattr(dest, "write"):
        yield dest
    else:
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            yield fh


def parse_trace(source, fmt: str = "canonical_csv",
                columns: "BorgColumns | None" = None) -> list[RawJobRecord]:
    """Dispatch to a trace reader.  fmt is 'canonical_csv' or 'borg_tables'."""
    if fmt == "canonical_csv":
        return parse_canonical_csv(source)
    if fmt == "borg_tables":
        return parse_borg_tables(source, columns=columns)
    raise ValueError(f"unknown trace format {fmt!r}")


def parse_canonical_csv(source) -> list[RawJobRecord]:
    """Read the canonical trace CSV (path or open file).

    Header and column order are fixed.  Malformed rows raise TraceParseError
    with their line number; rows with a negative duration are dropped with a
    logged diagnostic (truncated exports produce them).  Records come back
    sorted by submit time.
    """
    records: list[RawJobRecord] = []
    seen: dict[str, int] = {}
    with _open_text(source) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if [h.strip() for h in header] != list(CANONICAL_FIELDS):
            raise TraceParseError(
                f"expected header {','.join(CANONICAL_FIELDS)}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CANONICAL_FIELDS):
                raise TraceParseError(
                    f"expected {len(CANONICAL_FIELDS)} fields, got {len(row)}",
                    line=lineno)
            job_id = row[0].strip()
            try:
                submit_s, duration_s, assigned, peak = (float(v) for v in row[1:])
            except ValueError:
                raise TraceParseError(
                    f"non-numeric field in {row!r}", line=lineno) from None
            if duration_s < 0:
                log.warning("dropping job %s (line %d): negative duration %s",
                            job_id, lineno, duration_s)
                continue
            if job_id in seen:
                raise TraceParseError(
                    f"duplicate job_id {job_id!r} (first seen on line {seen[job_id]})",
                    line=lineno)
            try:
                rec = RawJobRecord(job_id, submit_s, duration_s, assigned, peak)
            except ValueError as exc:
                raise TraceParseError(str(exc), line=lineno) from None
            seen[job_id] = lineno
            records.append(rec)
    records.sort(key=lambda r: r.submit_s)
    return records


@dataclass(frozen=True)
class BorgColumns:
    """Column indices into 2011 public cluster-trace shards.  Configurable
    because derived extracts often drop or reorder columns."""

    event_time: int = 0
    event_job_id: int = 2
    event_task_index: int = 3
    event_type: int = 5
    event_mem_request: int = 10
    usage_job_id: int = 2
    usage_task_index: int = 3
    usage_max_mem: int = 10


_EV_SUBMIT, _EV_SCHEDULE, _EV_FINISH = 0, 1, 4


def _shard_rows(directory: Path):
    for shard in sorted(directory.glob("*.csv.gz")):
        with gzip.open(shard, "rt", encoding="utf-8", newline="") as fh:
            yield from csv.reader(fh)


def parse_borg_tables(root, columns: BorgColumns | None = None) -> list[RawJobRecord]:
    """Adapt a directory of gzipped 2011-schema shards into canonical records.

    Expects task_events/ and task_usage/ subdirectories of *.csv.gz files.
    Each task becomes one record keyed "<job>-<task index>"; its duration runs
    from its first SCHEDULE to its FINISH event and tasks that never finish
    are dropped.  assigned_mem_frac comes from the request column of the
    submit/schedule rows, max_mem_frac from the maximum across usage rows.
    Out-of-range fractions are clamped to [0, 1]: the public trace carries a
    handful of requests above the rescaling ceiling.
    """
    cols = columns or BorgColumns()
    root = Path(root)
    events_dir = root / "task_events"
    usage_dir = root / "task_usage"
    if not events_dir.is_dir():
        raise TraceParseError(f"missing task_events/ directory under {root}")

    submit: dict[tuple[str, str], float] = {}
    sched: dict[tuple[str, str], float] = {}
    finish: dict[tuple[str, str], float] = {}
    request: dict[tuple[str, str], float] = {}
    for row in _shard_rows(events_dir):
        key = (row[cols.event_job_id], row[cols.event_task_index])
        etype = int(row[cols.event_type])
        t = float(row[cols.event_time]) / 1e6  # raw timestamps are microseconds
        if etype == _EV_SUBMIT:
            submit.setdefault(key, t)
        elif etype == _EV_SCHEDULE:
            sched.setdefault(key, t)
        elif etype == _EV_FINISH:
            finish.setdefault(key, t)
        if etype in (_EV_SUBMIT, _EV_SCHEDULE) and key not in request:
            field = row[cols.event_mem_request].strip()
            if field:
                request[key] = float(field)

    peak: dict[tuple[str, str], float] = {}
    if usage_dir.is_dir():
        for row in _shard_rows(usage_dir):
            key = (row[cols.usage_job_id], row[cols.usage_task_index])
            field = row[cols.usage_max_mem].strip()
            if field:
                value = float(field)
                if value > peak.get(key, -1.0):
                    peak[key] = value

    records = []
    for key, end in finish.items():
        start = sched.get(key)
        if start is None or end < start:
            continue
        records.append(RawJobRecord(
            job_id=f"{key[0]}-{key[1]}",
            submit_s=max(0.0, submit.get(key, start)),
            duration_s=end - start,
            assigned_mem_frac=min(max(request.get(key, 0.0), 0.0), 1.0),
            max_mem_frac=min(max(peak.get(key, 0.0), 0.0), 1.0),
        ))
    records.sort(key=lambda r: (r.submit_s, r.job_id))
    return records


def slice_and_sample(records: Sequence[RawJobRecord],
                     cfg: ScalingConfig) -> list[RawJobRecord]:
    """Keep records submitted inside [slice_start_s, slice_end_s), re-base
    their submit times to the slice origin, then keep every stride-th one."""
    window = [r for r in records
              if cfg.slice_start_s <= r.submit_s < cfg.slice_end_s]
    sampled = window[::cfg.sampling_stride]
    return [replace(r, submit_s=r.submit_s - cfg.slice_start_s) for r in sampled]


def _ceil_pages(nbytes: int, page_size: int) -> int:
    return -(-nbytes // page_size)


def _tag_uniform(seed: int, index: int) -> float:
    # Counter-based: the draw for record i depends only on (seed, i), so
    # raising sgx_fraction can only add enclave jobs, never reshuffle old ones.
    gen = np.random.Generator(np.random.Philox(key=seed, counter=[index, 0, 0, 0]))
    return float(gen.random())


def materialize(records: Sequence[RawJobRecord], cfg: ScalingConfig,
                page_size: int = PAGE_SIZE) -> list[JobSpec]:
    """Scale fraction records into concrete jobs.

    Record i becomes an enclave job iff its seeded uniform draw falls below
    cfg.sgx_fraction; memory fractions are multiplied by the matching capacity
    multiplier.  Enclave jobs get page counts rounded up to whole pages, with
    at least one page declared (an enclave cannot be smaller than one page).
    """
    jobs: list[JobSpec] = []
    for index, rec in enumerate(records):
        sgx = _tag_uniform(cfg.rng_seed, index) < cfg.sgx_fraction
        multiplier = cfg.sgx_multiplier if sgx else cfg.std_multiplier
        requested = int(round(rec.assigned_mem_frac * multiplier))
        actual = int(round(rec.max_mem_frac * multiplier))
        if sgx:
            kind = JobKind.SGX
            declared_pages = max(1, _ceil_pages(requested, page_size))
            actual_pages = _ceil_pages(actual, page_size)
        else:
            kind = JobKind.STANDARD
            declared_pages = actual_pages = 0
        jobs.append(JobSpec(
            job_id=rec.job_id,
            kind=kind,
            submit_ms=round(rec.submit_s * 1000),
            duration_ms=round(rec.duration_s * 1000),
            requested_mem=requested,
            actual_mem=actual,
            declared_epc_pages=declared_pages,
            actual_epc_pages=actual_pages,
        ))
    return jobs


def inject_malicious(jobs: Sequence[JobSpec], n: int, declared_pages: int,
                     use_fraction: float, usable_pages: int,
                     page_size: int = PAGE_SIZE) -> list[JobSpec]:
    """Append n adversarial enclave jobs that declare a tiny page limit but
    allocate use_fraction of the target protected-memory budget.

    They are submitted at time zero and sized to outlive the whole workload,
    so unless limit enforcement kills them at startup they squat on protected
    pages for the entire replay.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if not 0.0 < use_fraction <= 1.0:
        raise ValueError("use_fraction must lie in (0, 1]")
    if usable_pages < 1:
        raise ValueError("usable_pages must be >= 1")
    span = max((j.submit_ms + j.duration_ms for j in jobs), default=0)
    actual_pages = int(use_fraction * usable_pages)
    out = list(jobs)
    for k in range(n):
        out.append(JobSpec(
            job_id=f"malicious-{k}",
            kind=JobKind.MALICIOUS_SGX,
            submit_ms=0,
            duration_ms=span,
            requested_mem=page_size,
            actual_mem=actual_pages * page_size,
            declared_epc_pages=declared_pages,
            actual_epc_pages=actual_pages,
        ))
    return out


def _fmt_number(x: float):
    return int(x) if float(x).is_integer() else x


def write_canonical_csv(records: Iterable[RawJobRecord], dest) -> None:
    with _open_write(dest) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CANONICAL_FIELDS)
        for r in records:
            writer.writerow([r.job_id, _fmt_number(r.submit_s),
                             _fmt_number(r.duration_s),
                             _fmt_number(r.assigned_mem_frac),
                             _fmt_number(r.max_mem_frac)])


def write_jobs_csv(jobs: Iterable[JobSpec], dest) -> None:
    with _open_write(dest) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(JOBS_FIELDS)
        for j in jobs:
            writer.writerow([j.job_id, j.kind.value, j.submit_ms, j.duration_ms,
                             j.requested_mem, j.actual_mem,
                             j.declared_epc_pages, j.actual_epc_pages])


def read_jobs_csv(source) -> list[JobSpec]:
    with _open_text(source) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if tuple(h.strip() for h in header) != JOBS_FIELDS:
            raise TraceParseError(f"expected header {','.join(JOBS_FIELDS)}", line=1)
        jobs = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                jobs.append(JobSpec(
                    job_id=row[0], kind=JobKind(row[1]),
                    submit_ms=int(row[2]), duration_ms=int(row[3]),
                    requested_mem=int(row[4]), actual_mem=int(row[5]),
                    declared_epc_pages=int(row[6]), actual_epc_pages=int(row[7]),
                ))
            except (ValueError, IndexError) as exc:
                raise TraceParseError(str(exc), line=lineno) from None
    return jobs
