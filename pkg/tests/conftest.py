"""Shared builders for tests."""

from __future__ import annotations

from epcsched import EpcModel, NodeSpec
from epcsched.trace import JobKind, JobSpec

GIB = 1024 ** 3
PAGE = 4096


def std_node(node_id: str = "n1", std_capacity: int = 64 * GIB) -> NodeSpec:
    return NodeSpec(node_id, std_capacity=std_capacity)


def sgx_node(node_id: str = "sgx1", std_capacity: int = 8 * GIB,
             epc: EpcModel | None = None) -> NodeSpec:
    return NodeSpec(node_id, std_capacity=std_capacity, epc=epc or EpcModel())


def std_job(job_id: str, submit_ms: int = 0, duration_ms: int = 10_000,
            requested: int = 1 * GIB, actual: int | None = None) -> JobSpec:
    return JobSpec(job_id, JobKind.STANDARD, submit_ms, duration_ms,
                   requested, requested if actual is None else actual, 0, 0)


def sgx_job(job_id: str, submit_ms: int = 0, duration_ms: int = 10_000,
            declared: int = 1_000, actual: int | None = None,
            requested_mem: int = PAGE, actual_mem: int | None = None,
            kind: JobKind = JobKind.SGX) -> JobSpec:
    actual_pages = declared if actual is None else actual
    return JobSpec(job_id, kind, submit_ms, duration_ms, requested_mem,
                   actual_pages * PAGE if actual_mem is None else actual_mem,
                   declared, actual_pages)
