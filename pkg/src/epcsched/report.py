"""Outcome statistics and artifact serialization.

Owns the on-disk vocabulary of a run directory (outcomes.csv, pending_epc.csv,
samples.csv, jobs.csv, summary.json, meta.json) and turns directories of runs
into plain whitespace-separated datasets ready for plotting.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from itertools import groupby
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats as _scipy_stats

from .engine import JobOutcome, JobStatus
from .trace import JobKind, JobSpec, _open_text, _open_write, read_jobs_csv

OUTCOMES_FILE = "outcomes.csv"
PENDING_FILE = "pending_epc.csv"
SAMPLES_FILE = "samples.csv"
SUMMARY_FILE = "summary.json"
JOBS_FILE = "jobs.csv"
META_FILE = "meta.json"

OUTCOMES_FIELDS = ("job_id", "kind", "submit_ms", "start_ms", "finish_ms",
                   "status", "node_id", "declared_pages", "actual_pages")
PENDING_FIELDS = ("time_ms", "pending_epc_bytes")

FIGURES = (6, 7, 8, 9, 10)


def write_outcomes_csv(outcomes: Iterable[JobOutcome], dest) -> None:
    with _open_write(dest) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(OUTCOMES_FIELDS)
        for o in outcomes:
            writer.writerow([
                o.job_id, o.kind.value, o.submitted_ms,
                "" if o.started_ms is None else o.started_ms,
                "" if o.finished_ms is None else o.finished_ms,
                o.status.value, o.node_id or "",
                o.declared_pages, o.actual_pages,
            ])


def read_outcomes_csv(source) -> list[JobOutcome]:
    outcomes = []
    with _open_text(source) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if tuple(header) != OUTCOMES_FIELDS:
            raise ValueError(f"expected header {','.join(OUTCOMES_FIELDS)}")
        for row in reader:
            if not row:
                continue
            outcomes.append(JobOutcome(
                job_id=row[0], kind=JobKind(row[1]), submitted_ms=int(row[2]),
                started_ms=int(row[3]) if row[3] else None,
                finished_ms=int(row[4]) if row[4] else None,
                status=JobStatus(row[5]), node_id=row[6] or None,
                declared_pages=int(row[7]), actual_pages=int(row[8])))
    return outcomes


def write_pending_csv(series: Iterable[tuple[int, int]], dest) -> None:
    with _open_write(dest) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PENDING_FIELDS)
        for time_ms, backlog in series:
            writer.writerow([time_ms, backlog])


def read_pending_csv(source) -> list[tuple[int, int]]:
    series = []
    with _open_text(source) as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for row in reader:
            if row:
                series.append((int(row[0]), int(row[1])))
    return series


def summary(outcomes: Sequence[JobOutcome]) -> dict:
    """Headline numbers of a run; every value is recomputable from the
    outcome rows alone."""
    completed = [o for o in outcomes if o.status is JobStatus.COMPLETED]
    started = [o for o in outcomes if o.started_ms is not None]
    return {
        "jobs": len(outcomes),
        "completed": len(completed),
        "killed": sum(o.status is JobStatus.KILLED for o in outcomes),
        "unfinished": sum(o.status is JobStatus.UNFINISHED for o in outcomes),
        "makespan_ms": max((o.finished_ms for o in completed), default=0),
        "total_waiting_ms": sum(o.waiting_ms for o in started),
        "total_turnaround_ms": sum(o.turnaround_ms for o in completed),
    }


def waiting_cdf(outcomes: Sequence[JobOutcome]) -> list[tuple[int, float]]:
    """Right-continuous empirical CDF of waiting times over jobs that
    actually started.  Killed and unfinished jobs never started, so they are
    not part of the curve (the summary carries their counts)."""
    waits = sorted(o.waiting_ms for o in outcomes if o.started_ms is not None)
    if not waits:
        return []
    n = len(waits)
    points = []
    seen = 0
    for value, group in groupby(waits):
        seen += sum(1 for _ in group)
        points.append((value, seen / n))
    return points


def turnaround_sum(outcomes: Sequence[JobOutcome]) -> int:
    """Total submission-to-completion time across completed jobs."""
    return sum(o.turnaround_ms for o in outcomes
               if o.status is JobStatus.COMPLETED)


def mean_waiting(outcomes: Sequence[JobOutcome]) -> float | None:
    waits = [o.waiting_ms for o in outcomes if o.started_ms is not None]
    if not waits:
        return None
    return float(np.mean(waits))


@dataclass(frozen=True)
class BucketStat:
    lo: int
    hi: int
    count: int
    mean_ms: float | None
    ci95_ms: float | None


def _bucket_stats(pairs: list[tuple[int, int]],
                  edges: Sequence[int]) -> list[BucketStat]:
    out = []
    for lo, hi in zip(edges, edges[1:]):
        waits = [w for size, w in pairs if lo <= size < hi]
        if not waits:
            out.append(BucketStat(lo, hi, 0, None, None))
            continue
        mean = float(np.mean(waits))
        ci = None
        if len(waits) >= 2:
            spread = float(np.std(waits, ddof=1))
            n = len(waits)
            # t critical value below 30 samples, normal approximation above
            crit = (float(_scipy_stats.t.ppf(0.975, n - 1)) if n < 30
                    else 1.959963984540054)
            ci = crit * spread / math.sqrt(n)
        out.append(BucketStat(lo, hi, len(waits), mean, ci))
    return out


def power_of_two_edges(values: Iterable[int]) -> list[int]:
    """Default bucket boundaries: consecutive powers of two covering the
    positive values."""
    positive = [v for v in values if v > 0]
    if not positive:
        return [1, 2]
    lo = 1 << max(0, min(positive).bit_length() - 1)
    hi = 1 << max(positive).bit_length()
    edges = []
    edge = lo
    while edge <= hi:
        edges.append(edge)
        edge *= 2
    return edges


def waiting_by_memory(outcomes: Sequence[JobOutcome],
                      jobs_by_id: Mapping[str, JobSpec],
                      sgx_edges: Sequence[int] | None = None,
                      std_edges: Sequence[int] | None = None,
                      ) -> dict[str, list[BucketStat]]:
    """Mean waiting time (with a 95% confidence interval) bucketed by the
    memory each started job requested.

    Enclave jobs and standard jobs get separate bucket edges because their
    request sizes live on very different scales (a dual-axis plot downstream).
    """
    sgx_pairs: list[tuple[int, int]] = []
    std_pairs: list[tuple[int, int]] = []
    for o in outcomes:
        if o.started_ms is None:
            continue
        job = jobs_by_id[o.job_id]
        pair = (job.requested_mem, o.waiting_ms)
        (sgx_pairs if job.kind.uses_epc else std_pairs).append(pair)
    if sgx_edges is None:
        sgx_edges = power_of_two_edges(size for size, _ in sgx_pairs)
    if std_edges is None:
        std_edges = power_of_two_edges(size for size, _ in std_pairs)
    return {"sgx": _bucket_stats(sgx_pairs, sgx_edges),
            "std": _bucket_stats(std_pairs, std_edges)}


def _run_dirs(root: Path) -> list[tuple[Path, dict]]:
    runs = []
    for meta_path in sorted(root.glob("*/" + META_FILE)):
        with open(meta_path, encoding="utf-8") as fh:
            runs.append((meta_path.parent, json.load(fh)))
    return runs


def _fmt(value) -> str:
    if value is None:
        return "nan"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def figure_dataset(artifact_dir, figure: int, dest=None) -> Path:
    """Emit one plot-ready dataset from an experiment directory.

    6: queued protected-memory backlog over time, one series per run.
    7/9: waiting-time CDF per run (9 is the enforcement comparison; same
    columns, kept separate so both sweeps can live in one directory).
    8: mean waiting with 95% CI per requested-memory bucket, per job class.
    10: total turnaround per run plus the workload's inherent run-time sum.
    """
    if figure not in FIGURES:
        raise ValueError(f"unknown figure {figure}; pick one of {FIGURES}")
    root = Path(artifact_dir)
    runs = _run_dirs(root)
    if not runs:
        raise FileNotFoundError(f"no run directories under {root}")
    out_path = Path(dest) if dest else root / f"fig{figure}.dat"
    lines: list[str] = []
    if figure == 6:
        lines.append("# label time_ms pending_epc_bytes")
        for run_dir, meta in runs:
            for time_ms, backlog in read_pending_csv(run_dir / PENDING_FILE):
                lines.append(f"{meta['label']} {time_ms} {backlog}")
    elif figure in (7, 9):
        lines.append("# label waiting_ms cumulative_fraction")
        for run_dir, meta in runs:
            outcomes = read_outcomes_csv(run_dir / OUTCOMES_FILE)
            for wait_ms, fraction in waiting_cdf(outcomes):
                lines.append(f"{meta['label']} {wait_ms} {_fmt(fraction)}")
    elif figure == 8:
        lines.append("# label class bucket_lo bucket_hi count mean_waiting_ms ci95_ms")
        for run_dir, meta in runs:
            outcomes = read_outcomes_csv(run_dir / OUTCOMES_FILE)
            jobs = {j.job_id: j for j in _read_jobs(run_dir)}
            table = waiting_by_memory(outcomes, jobs)
            for klass, buckets in sorted(table.items()):
                for b in buckets:
                    lines.append(
                        f"{meta['label']} {klass} {b.lo} {b.hi} {b.count} "
                        f"{_fmt(b.mean_ms)} {_fmt(b.ci95_ms)}")
    elif figure == 10:
        lines.append("# label total_turnaround_ms")
        workload_ms = None
        for run_dir, meta in runs:
            outcomes = read_outcomes_csv(run_dir / OUTCOMES_FILE)
            lines.append(f"{meta['label']} {turnaround_sum(outcomes)}")
            if workload_ms is None:
                jobs = _read_jobs(run_dir)
                workload_ms = sum(j.duration_ms for j in jobs)
        lines.append(f"workload {workload_ms or 0}")
    out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out_path


def _read_jobs(run_dir: Path) -> list[JobSpec]:
    return read_jobs_csv(run_dir / JOBS_FILE)
