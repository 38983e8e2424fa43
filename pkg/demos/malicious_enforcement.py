"""Demonstrate why the driver checks declared limits before granting pages.

Two adversarial jobs declare a single protected page each, then try to grab
half the usable region at enclave startup.  With enforcement on, the grant
that exceeds the declared limit is refused and the pod is killed on the spot;
honest jobs never notice.  With enforcement off, the squatters win their
pages, sit on them for the whole workload span, and every honest enclave job
queues behind memory that the scheduler believes is free.
"""

from epcsched import (JobKind, ScalingConfig, SimConfig, default_cluster,
                      inject_malicious, load_bundled_trace, materialize, run)


def honest_mean_wait(outcomes):
    waits = [o.waiting_ms for o in outcomes
             if o.kind is not JobKind.MALICIOUS_SGX and o.started_ms is not None]
    return sum(waits) / len(waits)


jobs = materialize(load_bundled_trace(), ScalingConfig(sgx_fraction=0.5))
usable_pages = next(s for s in default_cluster() if s.epc).epc.usable_pages
rigged = inject_malicious(jobs, n=2, declared_pages=1, use_fraction=0.5,
                          usable_pages=usable_pages)

clean = run(jobs, default_cluster(), SimConfig())
base = honest_mean_wait(clean.outcomes)
print(f"baseline (no attackers): honest mean wait {base:.1f} ms\n")

for enforce in (True, False):
    result = run(rigged, default_cluster(), SimConfig(enforce_limits=enforce))
    by_id = {o.job_id: o for o in result.outcomes}
    wait = honest_mean_wait(result.outcomes)
    print(f"enforce_limits={enforce}:")
    for k in range(2):
        o = by_id[f"malicious-{k}"]
        print(f"  {o.job_id}: declared {o.declared_pages} page, "
              f"allocated {o.actual_pages} -> {o.status.name}")
    print(f"  honest mean wait {wait:.1f} ms ({wait / base:.2f}x baseline)\n")
