"""Measure what converting part of a workload to enclaves costs.

The same trace is replayed with 0%, 25%, 50%, and 100% of jobs tagged as
enclave jobs.  Tagging is monotone in the fraction (a job enclaved at 25%
stays enclaved at 50%), so the runs differ only in how many jobs compete for
protected pages.  Moderate shares barely move the mean waiting time; at 100%
the two small protected-memory nodes carry everything and queueing explodes.
"""

from epcsched import (ScalingConfig, SimConfig, default_cluster,
                      load_bundled_trace, materialize, mean_waiting, run)

records = load_bundled_trace()
baseline = None

print(f"{'SGX share':>9}  {'mean wait ms':>12}  {'vs baseline':>11}")
for fraction in (0.0, 0.25, 0.5, 1.0):
    jobs = materialize(records, ScalingConfig(sgx_fraction=fraction))
    result = run(jobs, default_cluster(), SimConfig())
    wait = mean_waiting(result.outcomes)
    if baseline is None:
        baseline = wait
    n_sgx = sum(j.kind.uses_epc for j in jobs)
    print(f"{fraction:>9.0%}  {wait:>12.1f}  {wait / baseline:>10.2f}x"
          f"   ({n_sgx} enclave jobs)")
