"""Cluster description: node capacities, protected-memory geometry, and the
reservation accounting the scheduler admits against.

Protected memory (the enclave page cache) is tracked in whole pages and is
never over-committed: only the usable slice of the hardware region can ever
be handed out, and reservations above it are a hard fault, not a soft error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

from ._units import MIB, PAGE_SIZE
from .trace import JobSpec

DEFAULT_EPC_TOTAL = 128 * MIB
DEFAULT_EPC_USABLE = 98_041_856  # 93.5 MiB usable out of 128 MiB: 23936 pages


class CapacityError(RuntimeError):
    """A reservation or release that violates node accounting.  Reaching this
    means the caller (the scheduler) is broken, so it is never caught inside
    the package."""


@dataclass(frozen=True)
class EpcModel:
    """Protected-memory geometry plus the enclave startup-cost constants of
    one node.

    Startup cost is piecewise linear in the allocation size: a fixed service
    startup, a cheap per-MiB slope while the allocation fits the usable
    region, and a steeper slope plus an extra fixed penalty once it spills
    beyond it and pages start getting evicted during construction.
    """

    total_bytes: int = DEFAULT_EPC_TOTAL
    usable_bytes: int = DEFAULT_EPC_USABLE
    page_size: int = PAGE_SIZE
    aesm_startup_ms: float = 100.0
    rate_below_ms_per_mib: float = 1.6
    rate_above_ms_per_mib: float = 4.5
    fixed_above_ms: float = 200.0

    def __post_init__(self):
        if self.page_size <= 0:
            raise ValueError("page_size must be positive")
        if self.total_bytes <= 0:
            raise ValueError("total_bytes must be positive")
        if not 0 < self.usable_bytes <= self.total_bytes:
            raise ValueError("usable_bytes must lie in (0, total_bytes]")
        if self.usable_bytes % self.page_size:
            raise ValueError("usable_bytes must be a whole number of pages")
        if (self.aesm_startup_ms < 0 or self.rate_below_ms_per_mib < 0
                or self.rate_above_ms_per_mib < 0 or self.fixed_above_ms < 0):
            raise ValueError("startup-cost constants must be >= 0")

    @property
    def usable_pages(self) -> int:
        return self.usable_bytes // self.page_size

    @property
    def usable_mib(self) -> float:
        return self.usable_bytes / MIB


def pages_for(nbytes: int | float, model: EpcModel) -> int:
    """Pages needed to hold nbytes, rounded up to whole pages."""
    if nbytes < 0:
        raise ValueError("nbytes must be >= 0")
    if isinstance(nbytes, int):
        return -(-nbytes // model.page_size)
    return math.ceil(nbytes / model.page_size)


@dataclass(frozen=True)
class NodeSpec:
    """Static description of one node.  epc is None on nodes without
    protected-memory hardware."""

    node_id: str
    std_capacity: int
    epc: EpcModel | None = None

    def __post_init__(self):
        if not self.node_id:
            raise ValueError("empty node_id")
        if self.std_capacity <= 0:
            raise ValueError(f"std_capacity must be positive on {self.node_id}")

    @property
    def is_sgx(self) -> bool:
        return self.epc is not None


@dataclass
class NodeState:
    """Mutable per-node accounting: reservations and the running pod set."""

    spec: NodeSpec
    reserved_std: int = 0
    reserved_epc_pages: int = 0
    running: set[str] = field(default_factory=set)

    @property
    def node_id(self) -> str:
        return self.spec.node_id

    @property
    def is_sgx(self) -> bool:
        return self.spec.is_sgx

    @property
    def epc(self) -> EpcModel | None:
        return self.spec.epc

    def reserve(self, std_bytes: int, epc_pages: int) -> None:
        if std_bytes < 0 or epc_pages < 0:
            raise CapacityError("reservation amounts must be >= 0")
        if epc_pages and not self.is_sgx:
            raise CapacityError(
                f"{self.node_id} has no protected memory to reserve")
        if self.reserved_std + std_bytes > self.spec.std_capacity:
            raise CapacityError(
                f"{self.node_id}: standard reservation {self.reserved_std}+{std_bytes} "
                f"exceeds capacity {self.spec.std_capacity}")
        if self.is_sgx and self.reserved_epc_pages + epc_pages > self.spec.epc.usable_pages:
            raise CapacityError(
                f"{self.node_id}: page reservation {self.reserved_epc_pages}+{epc_pages} "
                f"exceeds usable {self.spec.epc.usable_pages}")
        self.reserved_std += std_bytes
        self.reserved_epc_pages += epc_pages

    def release(self, std_bytes: int, epc_pages: int) -> None:
        if std_bytes < 0 or epc_pages < 0:
            raise CapacityError("release amounts must be >= 0")
        if std_bytes > self.reserved_std or epc_pages > self.reserved_epc_pages:
            raise CapacityError(
                f"{self.node_id}: releasing more than is reserved")
        self.reserved_std -= std_bytes
        self.reserved_epc_pages -= epc_pages


@dataclass
class ClusterState:
    """All node states plus the registry of currently running jobs, which is
    what the usage probe reads."""

    nodes: dict[str, NodeState]
    running_jobs: dict[str, JobSpec] = field(default_factory=dict)

    @classmethod
    def from_specs(cls, specs: Iterable[NodeSpec]) -> "ClusterState":
        nodes: dict[str, NodeState] = {}
        for spec in sorted(specs, key=lambda s: s.node_id):
            if spec.node_id in nodes:
                raise ValueError(f"duplicate node_id {spec.node_id!r}")
            nodes[spec.node_id] = NodeState(spec)
        if not nodes:
            raise ValueError("cluster needs at least one node")
        return cls(nodes=nodes)

    def sgx_node_ids(self) -> list[str]:
        return [nid for nid in self.nodes if self.nodes[nid].is_sgx]


def default_cluster() -> list[NodeSpec]:
    """The evaluation cluster shape: two large standard nodes and two small
    nodes with protected-memory hardware."""
    epc = EpcModel()
    return [
        NodeSpec("node-1", std_capacity=64 * 1024 * MIB),
        NodeSpec("node-2", std_capacity=64 * 1024 * MIB),
        NodeSpec("sgx-1", std_capacity=8 * 1024 * MIB, epc=epc),
        NodeSpec("sgx-2", std_capacity=8 * 1024 * MIB, epc=epc),
    ]
