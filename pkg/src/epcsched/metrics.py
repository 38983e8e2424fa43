"""Time-series store for probed usage samples and the sliding-window query
the scheduler reads.

The query semantics mirror the monitoring stack the scheduler was built
against: per (pod, node) group, take the maximum nonzero sample inside the
closed window [now - window, now]; then sum those maxima per node.  Nodes
with no qualifying sample are absent from the result, which the caller must
treat as zero usage.
"""

from __future__ import annotations

import csv
from bisect import bisect_left
from dataclasses import dataclass
from typing import Iterator

from .cluster import ClusterState
from .driver import DriverState
from .trace import JobKind, _open_write

METRIC_EPC_PAGES = "epc_pages"
METRIC_STD_BYTES = "std_bytes"

SAMPLES_FIELDS = ("time_ms", "node", "pod", "metric", "value")


class OutOfOrderSampleError(ValueError):
    """Appending a sample older than the stream it extends."""


@dataclass(frozen=True)
class MetricSample:
    time_ms: int
    node_id: str
    pod_id: str
    metric: str
    value: int

    def __post_init__(self):
        if self.time_ms < 0:
            raise ValueError("sample time must be >= 0")
        if self.value < 0:
            raise ValueError("sample value must be >= 0")


@dataclass(frozen=True)
class WindowQuery:
    """Aggregate one metric over the closed window [now - window, now]."""

    metric: str
    now_ms: int
    window_ms: int = 25_000

    def __post_init__(self):
        if self.window_ms <= 0:
            raise ValueError("window_ms must be positive")
        if self.now_ms < 0:
            raise ValueError("now_ms must be >= 0")


class _Stream:
    """Samples of one (node, pod, metric) series, times kept sorted."""

    __slots__ = ("times", "values")

    def __init__(self):
        self.times: list[int] = []
        self.values: list[int] = []


class SeriesStore:
    """Append-only sample store, queryable per window.

    Streams are keyed by (node, pod, metric).  Within a stream, time must not
    go backwards; across streams there is no ordering requirement.  Queries
    bisect into the stream, so their cost is bounded by the window size, not
    the history length.
    """

    def __init__(self):
        self._streams: dict[tuple[str, str, str], _Stream] = {}
        self._log: list[MetricSample] = []

    def __len__(self) -> int:
        return len(self._log)

    def append(self, sample: MetricSample) -> None:
        key = (sample.node_id, sample.pod_id, sample.metric)
        stream = self._streams.get(key)
        if stream is None:
            stream = self._streams[key] = _Stream()
        if stream.times and sample.time_ms < stream.times[-1]:
            raise OutOfOrderSampleError(
                f"sample at {sample.time_ms}ms precedes stream "
                f"{key} tip {stream.times[-1]}ms")
        stream.times.append(sample.time_ms)
        stream.values.append(sample.value)
        self._log.append(sample)

    def per_node_usage(self, q: WindowQuery) -> dict[str, int]:
        """Sum, per node, of each pod's maximum nonzero sample in the window.

        Zero-valued samples never qualify, so an idle pod cannot drag a
        node's aggregate down and a node whose pods only reported zeros is
        simply absent from the result.
        """
        out: dict[str, int] = {}
        lo_bound = q.now_ms - q.window_ms
        for (node_id, _pod, metric), stream in self._streams.items():
            if metric != q.metric:
                continue
            best = None
            start = bisect_left(stream.times, lo_bound)
            for i in range(start, len(stream.times)):
                if stream.times[i] > q.now_ms:
                    break
                value = stream.values[i]
                if value != 0 and (best is None or value > best):
                    best = value
            if best is not None:
                out[node_id] = out.get(node_id, 0) + best
        return out

    def samples(self) -> Iterator[MetricSample]:
        """All samples in append order."""
        return iter(self._log)

    def write_csv(self, dest) -> None:
        with _open_write(dest) as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(SAMPLES_FIELDS)
            for s in self._log:
                writer.writerow([s.time_ms, s.node_id, s.pod_id, s.metric, s.value])


def probe_tick(cluster: ClusterState, driver: DriverState, store: SeriesStore,
               now_ms: int) -> None:
    """Record one sample per running pod, as the per-node usage probe would.

    Enclave-backed pods report the pages the driver says they own, plus their
    advertised standard-memory request for the untrusted part; standard pods
    report the memory they actually touch.  Pods count from placement, so a
    pod still in enclave construction is already visible here.
    """
    for node_id in sorted(cluster.nodes):
        node = cluster.nodes[node_id]
        for pod_id in sorted(node.running):
            job = cluster.running_jobs[pod_id]
            if job.kind.uses_epc:
                store.append(MetricSample(now_ms, node_id, pod_id,
                                          METRIC_EPC_PAGES,
                                          driver.pages_of(pod_id)))
                std_usage = job.requested_mem
            else:
                std_usage = job.actual_mem
            store.append(MetricSample(now_ms, node_id, pod_id,
                                      METRIC_STD_BYTES, std_usage))
