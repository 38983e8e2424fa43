"""Sample store and sliding-window aggregation."""

import io
import time

import numpy as np
import pytest

from conftest import GIB, sgx_job, sgx_node, std_job, std_node
from epcsched.cluster import ClusterState
from epcsched.driver import DriverState
from epcsched.metrics import (
    METRIC_EPC_PAGES,
    METRIC_STD_BYTES,
    MetricSample,
    OutOfOrderSampleError,
    SeriesStore,
    WindowQuery,
    probe_tick,
)


def oracle_per_node_usage(samples, metric, now_ms, window_ms):
    """Reference aggregation: linear scan over every sample ever appended."""
    best = {}
    for s in samples:
        if s.metric != metric or s.value == 0:
            continue
        if not now_ms - window_ms <= s.time_ms <= now_ms:
            continue
        key = (s.node_id, s.pod_id)
        if key not in best or s.value > best[key]:
            best[key] = s.value
    out = {}
    for (node_id, _pod), value in best.items():
        out[node_id] = out.get(node_id, 0) + value
    return out


def store_with(rows):
    store = SeriesStore()
    for t, node, pod, metric, value in rows:
        store.append(MetricSample(t, node, pod, metric, value))
    return store


class TestAppend:
    def test_rejects_backwards_time_within_stream(self):
        store = store_with([(10, "n1", "p1", "m", 1)])
        with pytest.raises(OutOfOrderSampleError):
            store.append(MetricSample(9, "n1", "p1", "m", 1))

    def test_equal_time_allowed(self):
        store = store_with([(10, "n1", "p1", "m", 1), (10, "n1", "p1", "m", 2)])
        assert len(store) == 2

    def test_streams_are_independent(self):
        store = store_with([(10, "n1", "p1", "m", 1)])
        store.append(MetricSample(3, "n1", "p2", "m", 1))
        store.append(MetricSample(3, "n2", "p1", "m", 1))
        store.append(MetricSample(3, "n1", "p1", "other", 1))
        assert len(store) == 4

    def test_validation(self):
        with pytest.raises(ValueError):
            MetricSample(-1, "n", "p", "m", 0)
        with pytest.raises(ValueError):
            MetricSample(0, "n", "p", "m", -1)
        with pytest.raises(ValueError):
            WindowQuery("m", now_ms=0, window_ms=0)


class TestWindowQuery:
    def test_max_per_pod(self):
        store = store_with([
            (5_000, "n1", "p1", "m", 10),
            (9_000, "n1", "p1", "m", 20),
        ])
        assert store.per_node_usage(WindowQuery("m", 10_000)) == {"n1": 20}

    def test_sum_across_pods(self):
        store = store_with([
            (5_000, "n1", "a", "m", 5),
            (5_000, "n1", "b", "m", 7),
        ])
        assert store.per_node_usage(WindowQuery("m", 10_000)) == {"n1": 12}

    def test_zero_samples_never_qualify(self):
        store = store_with([
            (5_000, "n1", "p1", "m", 0),
            (6_000, "n1", "p2", "m", 0),
        ])
        assert store.per_node_usage(WindowQuery("m", 10_000)) == {}

    def test_window_is_closed_on_both_ends(self):
        store = store_with([(1_000, "n1", "p1", "m", 3)])
        assert store.per_node_usage(WindowQuery("m", 26_000, 25_000)) == {"n1": 3}
        assert store.per_node_usage(WindowQuery("m", 1_000, 25_000)) == {"n1": 3}
        assert store.per_node_usage(WindowQuery("m", 26_001, 25_000)) == {}
        assert store.per_node_usage(WindowQuery("m", 999, 25_000)) == {}

    def test_stale_pod_still_counts_inside_window(self):
        # A pod that stopped reporting holds its node's aggregate up until
        # its last sample leaves the window.
        store = store_with([(20_000, "n1", "gone", "m", 100)])
        assert store.per_node_usage(WindowQuery("m", 45_000)) == {"n1": 100}
        assert store.per_node_usage(WindowQuery("m", 45_001)) == {}

    def test_metric_filter(self):
        store = store_with([
            (5_000, "n1", "p1", "m", 10),
            (5_000, "n1", "p1", "other", 99),
        ])
        assert store.per_node_usage(WindowQuery("m", 10_000)) == {"n1": 10}

    def test_nodes_without_samples_absent(self):
        store = store_with([(5_000, "n1", "p1", "m", 10)])
        out = store.per_node_usage(WindowQuery("m", 10_000))
        assert "n2" not in out

    def test_matches_oracle_on_random_histories(self):
        rng = np.random.default_rng(7)
        for _ in range(60):
            store = SeriesStore()
            kept = []
            n_streams = int(rng.integers(1, 7))
            for s in range(n_streams):
                node = f"n{rng.integers(1, 4)}"
                pod = f"p{s}"
                metric = "m" if rng.random() < 0.8 else "other"
                times = np.sort(rng.integers(0, 200, size=rng.integers(1, 30)))
                for t in times:
                    v = int(rng.integers(0, 5))
                    sample = MetricSample(int(t), node, pod, metric, v)
                    store.append(sample)
                    kept.append(sample)
            for _ in range(20):
                now = int(rng.integers(0, 250))
                window = int(rng.integers(1, 100))
                got = store.per_node_usage(WindowQuery("m", now, window))
                want = oracle_per_node_usage(kept, "m", now, window)
                assert got == want


def test_query_cost_tracks_window_not_history():
    store = SeriesStore()
    for i in range(200_000):
        store.append(MetricSample(i, "n1", f"p{i % 8}", "m", 1 + i % 3))
    q = WindowQuery("m", 200_000, 100)
    t0 = time.perf_counter()
    for _ in range(200):
        store.per_node_usage(q)
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0


class TestProbeTick:
    def test_samples_running_pods_only(self):
        cluster = ClusterState.from_specs([std_node("n1"), sgx_node("s1")])
        driver = DriverState.for_cluster(cluster)
        store = SeriesStore()

        job_std = std_job("web", requested=2 * GIB, actual=GIB)
        job_sgx = sgx_job("enc", declared=500, requested_mem=4096)
        driver.register_limit("enc", 500)
        driver.enclave_init("s1", "enc", 500)
        cluster.nodes["n1"].running.add("web")
        cluster.nodes["s1"].running.add("enc")
        cluster.running_jobs = {"web": job_std, "enc": job_sgx}

        probe_tick(cluster, driver, store, 10_000)
        rows = [(s.time_ms, s.node_id, s.pod_id, s.metric, s.value)
                for s in store.samples()]
        assert rows == [
            (10_000, "n1", "web", METRIC_STD_BYTES, GIB),
            (10_000, "s1", "enc", METRIC_EPC_PAGES, 500),
            (10_000, "s1", "enc", METRIC_STD_BYTES, 4096),
        ]

    def test_idle_cluster_appends_nothing(self):
        cluster = ClusterState.from_specs([std_node("n1")])
        driver = DriverState.for_cluster(cluster)
        store = SeriesStore()
        probe_tick(cluster, driver, store, 0)
        assert len(store) == 0


def test_write_csv():
    store = store_with([(0, "n1", "p1", "epc_pages", 7)])
    buf = io.StringIO()
    store.write_csv(buf)
    assert buf.getvalue() == "time_ms,node,pod,metric,value\n0,n1,p1,epc_pages,7\n"
