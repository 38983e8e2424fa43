"""Deterministic replay simulator for clusters that schedule enclave-backed
containers against a scarce protected-memory region.

The pieces compose bottom-up: traces become job specs (`trace`), jobs land on
modeled nodes (`cluster`) whose protected pages a driver facsimile hands out
(`driver`), probes feed a windowed metrics store (`metrics`) that placement
policies read (`scheduler`), and an integer-millisecond event loop replays
the whole thing (`engine`).  `experiment` and `report` wrap runs into sweep
directories and plot-ready datasets; `synthetic` ships a workload to replay.
"""

from .cluster import (CapacityError, ClusterState, EpcModel, NodeSpec,
                      NodeState, default_cluster, pages_for)
from .driver import DriverError, DriverState, InitResult, startup_delay
from .engine import (ConfigError, EventKind, JobOutcome, JobStatus, SimConfig,
                     SimEvent, SimResult, run)
from .experiment import (ExperimentConfig, MaliciousConfig, load_cluster,
                         load_config, run_experiment)
from .metrics import (METRIC_EPC_PAGES, METRIC_STD_BYTES, MetricSample,
                      OutOfOrderSampleError, SeriesStore, WindowQuery,
                      probe_tick)
from .report import (BucketStat, figure_dataset, mean_waiting, summary,
                     turnaround_sum, waiting_by_memory, waiting_cdf)
from .scheduler import (PendingQueue, Placement, binpack_select, feasible,
                        schedule_tick, spread_select)
from .synthetic import (bundled_trace_path, load_bundled_trace,
                        synthetic_trace)
from .trace import (BorgColumns, JobKind, JobSpec, RawJobRecord,
                    ScalingConfig, TraceParseError, inject_malicious,
                    materialize, parse_trace, slice_and_sample)

__version__ = "0.1.0"

__all__ = [
    "BorgColumns", "BucketStat", "CapacityError", "ClusterState",
    "ConfigError", "DriverError", "DriverState", "EpcModel", "EventKind",
    "ExperimentConfig", "InitResult", "JobKind", "JobOutcome", "JobSpec",
    "JobStatus", "MaliciousConfig", "METRIC_EPC_PAGES", "METRIC_STD_BYTES",
    "MetricSample", "NodeSpec", "NodeState", "OutOfOrderSampleError",
    "PendingQueue", "Placement", "RawJobRecord", "ScalingConfig",
    "SeriesStore", "SimConfig", "SimEvent", "SimResult", "TraceParseError",
    "WindowQuery", "binpack_select", "bundled_trace_path",
    "default_cluster", "feasible",
    "figure_dataset", "inject_malicious", "load_bundled_trace",
    "load_cluster", "load_config", "materialize", "mean_waiting",
    "pages_for", "parse_trace", "probe_tick", "run", "run_experiment",
    "schedule_tick", "slice_and_sample", "spread_select", "startup_delay",
    "summary", "synthetic_trace", "turnaround_sum", "waiting_by_memory",
    "waiting_cdf",
]
