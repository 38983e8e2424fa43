"""Replay the bundled workload at several protected-memory sizes.

Every job is an enclave job here, so the protected region is the bottleneck:
each doubling of its size cuts the makespan until the cluster is no longer
the constraint and the makespan converges on the workload's own span.
"""

import sys
import time
from dataclasses import replace

from epcsched import (ScalingConfig, SimConfig, default_cluster,
                      load_bundled_trace, materialize, run)

MIB = 1024 * 1024


def cluster_with(usable_mib: int):
    specs = []
    for spec in default_cluster():
        if spec.epc is not None:
            epc = replace(spec.epc, total_bytes=usable_mib * MIB,
                          usable_bytes=usable_mib * MIB)
            specs.append(replace(spec, epc=epc))
        else:
            specs.append(spec)
    return specs


def main(sizes):
    jobs = materialize(load_bundled_trace(), ScalingConfig(sgx_fraction=1.0))
    span_min = max(j.submit_ms + j.duration_ms for j in jobs) / 60_000
    print(f"{len(jobs)} enclave jobs, workload span {span_min:.1f} min\n")
    print(f"{'EPC MiB':>8}  {'makespan min':>12}  {'completed':>9}")
    for usable_mib in sizes:
        t0 = time.perf_counter()
        result = run(jobs, cluster_with(usable_mib), SimConfig())
        done = sum(o.status.name == "COMPLETED" for o in result.outcomes)
        print(f"{usable_mib:>8}  {result.makespan_ms / 60_000:>12.1f}  "
              f"{done:>5}/{len(jobs)}   ({time.perf_counter() - t0:.1f}s)")


if __name__ == "__main__":
    main([int(a) for a in sys.argv[1:]] or [32, 64, 128, 256])
