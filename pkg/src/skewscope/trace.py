"""Trace container, topology metadata, and trace validation.

A trace is an immutable, time-ordered sequence of telemetry events plus
the cluster topology it was captured on and an optional ground-truth
fault injection log.  Validation and slicing are pure functions.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

from .events import (
    PAYLOAD_VANTAGE,
    TRANSFER_KINDS,
    VANTAGE_ORDER,
    PathologyKind,
    TelemetryEvent,
)


class TopologyError(ValueError):
    """Raised for infeasible or inconsistent cluster topologies."""


@dataclass(frozen=True)
class ClusterTopology:
    """Static shape of the simulated inference cluster."""

    num_nodes: int
    gpus_per_node: int
    tp_degree: int
    pp_stages: int
    nic_capacity_bytes_per_s: int
    pcie_capacity_bytes_per_s: int
    fabric_base_latency_ns: int
    fabric_jitter_ns: int

    def __post_init__(self) -> None:
        if self.num_nodes < 1 or self.gpus_per_node < 1:
            raise TopologyError("num_nodes and gpus_per_node must be >= 1")
        if self.tp_degree < 1 or self.pp_stages < 1:
            raise TopologyError("tp_degree and pp_stages must be >= 1")
        if self.tp_degree * self.pp_stages > self.num_nodes * self.gpus_per_node:
            raise TopologyError(
                "tp_degree x pp_stages exceeds available GPUs "
                f"({self.tp_degree}x{self.pp_stages} > "
                f"{self.num_nodes}x{self.gpus_per_node})"
            )
        if self.nic_capacity_bytes_per_s <= 0:
            raise TopologyError("nic_capacity_bytes_per_s must be > 0")
        if self.pcie_capacity_bytes_per_s <= 0:
            raise TopologyError("pcie_capacity_bytes_per_s must be > 0")
        if self.fabric_base_latency_ns <= 0:
            raise TopologyError("fabric_base_latency_ns must be > 0")
        if self.fabric_jitter_ns < 0:
            raise TopologyError("fabric_jitter_ns must be >= 0")


@dataclass(frozen=True)
class Location:
    """Where a fault or finding is anchored.  Fields are set only when
    meaningful for the kind."""

    node: int | None = None
    gpu: int | None = None
    rank: int | None = None
    stage: int | None = None
    flow: int | None = None

    def to_dict(self) -> dict[str, int]:
        return {
            k: v
            for k, v in (
                ("node", self.node),
                ("gpu", self.gpu),
                ("rank", self.rank),
                ("stage", self.stage),
                ("flow", self.flow),
            )
            if v is not None
        }

    def sort_key(self) -> tuple[int, ...]:
        return tuple(
            -1 if v is None else v
            for v in (self.node, self.gpu, self.rank, self.stage, self.flow)
        )

    def covers(self, other: "Location") -> bool:
        """True if every field set on ``self`` matches ``other``.

        Used by the eval harness: an injection location with only
        ``node`` set matches any finding at that node.
        """
        for name in ("node", "gpu", "rank", "stage", "flow"):
            want = getattr(self, name)
            if want is not None and getattr(other, name) != want:
                return False
        return True


def location_from_dict(d: dict) -> Location:
    return Location(
        node=d.get("node"),
        gpu=d.get("gpu"),
        rank=d.get("rank"),
        stage=d.get("stage"),
        flow=d.get("flow"),
    )


@dataclass(frozen=True)
class InjectionRecord:
    """Ground-truth record of one injected fault."""

    kind: PathologyKind
    start: int
    end: int
    location: Location
    magnitude: float

    def __post_init__(self) -> None:
        if self.start >= self.end:
            raise ValueError("injection start must precede end")
        if self.magnitude < 1.0:
            raise ValueError("injection magnitude must be >= 1.0")


@dataclass
class Trace:
    """Time-ordered event sequence with topology metadata."""

    topology: ClusterTopology
    epoch_ns: int
    events: list[TelemetryEvent]
    injections: list[InjectionRecord] = field(default_factory=list)

    def horizon_ns(self) -> int:
        """Exclusive upper bound of observed event time."""
        return self.events[-1].ts + 1 if self.events else 0


@dataclass(frozen=True)
class Violation:
    index: int  # event index, or -1 for trace-level problems
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_trace(trace: Trace) -> ValidationReport:
    """Check every trace invariant; an empty report means the trace is valid.

    Returned violations carry the offending event index.  The trace is
    never mutated.
    """
    report = ValidationReport()
    add = report.violations.append
    topo = trace.topology

    prev_ts = None
    for i, ev in enumerate(trace.events):
        kind = ev.kind
        expected = PAYLOAD_VANTAGE.get(kind)
        if expected is None:
            add(Violation(i, f"unknown payload kind {kind!r} at index {i}"))
            continue
        if ev.vantage is not expected:
            add(
                Violation(
                    i,
                    f"payload/vantage mismatch at index {i}: {kind} under "
                    f"{ev.vantage.value}",
                )
            )
        if prev_ts is not None and ev.ts < prev_ts:
            add(Violation(i, f"non-monotonic timestamp at index {i}"))
        prev_ts = ev.ts

        if not 0 <= ev.node_id < topo.num_nodes:
            add(Violation(i, f"node_id {ev.node_id} out of range at index {i}"))
        p = ev.payload
        if kind in TRANSFER_KINDS and p.bytes <= 0:
            add(Violation(i, f"non-positive bytes at index {i}"))
        gpu = getattr(p, "gpu_id", None)
        if gpu is not None and not 0 <= gpu < topo.gpus_per_node:
            add(Violation(i, f"gpu_id {gpu} out of range at index {i}"))
        if kind == "DmaP2P":
            for g in (p.src_gpu, p.dst_gpu):
                if not 0 <= g < topo.gpus_per_node:
                    add(Violation(i, f"p2p gpu {g} out of range at index {i}"))
            if p.duration_ns <= 0:
                add(Violation(i, f"non-positive p2p duration at index {i}"))
        elif kind == "CollectiveBurst":
            if not 0 <= p.rank < topo.tp_degree:
                add(Violation(i, f"rank {p.rank} out of range at index {i}"))
        elif kind == "StageHandoff":
            if not 0 <= p.from_stage < topo.pp_stages:
                add(Violation(i, f"from_stage {p.from_stage} out of range at index {i}"))
            if not 0 <= p.to_stage < topo.pp_stages:
                add(Violation(i, f"to_stage {p.to_stage} out of range at index {i}"))
        elif kind == "LinkSample":
            if not 0 <= p.peer_node < topo.num_nodes:
                add(Violation(i, f"peer_node {p.peer_node} out of range at index {i}"))
            if p.latency_ns < 0 or p.jitter_ns < 0:
                add(Violation(i, f"negative link timing at index {i}"))
        elif kind == "DmaD2H" and p.completion_latency_ns < 0:
            add(Violation(i, f"negative completion latency at index {i}"))
        elif kind == "NicQueueSample":
            if min(p.rx_depth_pkts, p.tx_depth_pkts, p.rx_bytes_per_s, p.tx_bytes_per_s) < 0:
                add(Violation(i, f"negative queue sample field at index {i}"))

    for j, inj in enumerate(trace.injections):
        if inj.start >= inj.end:
            add(Violation(-1, f"injection {j}: start must precede end"))
        if inj.magnitude < 1.0:
            add(Violation(-1, f"injection {j}: magnitude below 1.0"))

    return report


def merge_traces(parts: list[Trace]) -> Trace:
    """Fuse per-vantage traces captured on the same topology.

    Events are globally time-ordered with a stable tiebreak: vantage
    order (north-south < PCIe < east-west) and then the event's index in
    its source part.  Injection logs are concatenated in part order.
    """
    if not parts:
        raise ValueError("merge_traces requires at least one part")
    topo = parts[0].topology
    for p in parts[1:]:
        if p.topology != topo:
            for name in (
                "num_nodes",
                "gpus_per_node",
                "tp_degree",
                "pp_stages",
                "nic_capacity_bytes_per_s",
                "pcie_capacity_bytes_per_s",
                "fabric_base_latency_ns",
                "fabric_jitter_ns",
            ):
                if getattr(p.topology, name) != getattr(topo, name):
                    raise ValueError(f"topology mismatch on field {name!r}")
            raise ValueError("topology mismatch")

    tagged = [
        (ev.ts, VANTAGE_ORDER[ev.vantage], i, ev)
        for part in parts
        for i, ev in enumerate(part.events)
    ]
    tagged.sort(key=lambda t: t[:3])
    injections = [inj for part in parts for inj in part.injections]
    return Trace(
        topology=topo,
        epoch_ns=parts[0].epoch_ns,
        events=[t[3] for t in tagged],
        injections=injections,
    )


def window_slice(trace: Trace, start: int, end: int) -> list[TelemetryEvent]:
    """Events with start <= ts < end, original order preserved."""
    if start > end:
        raise ValueError("window start must be <= end")
    ts = [ev.ts for ev in trace.events]
    lo = bisect.bisect_left(ts, start)
    hi = bisect.bisect_left(ts, end)
    return trace.events[lo:hi]
