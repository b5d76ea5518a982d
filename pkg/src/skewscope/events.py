"""Event vocabulary visible from the three DPU vantage points.

Timestamps are integer nanoseconds since the trace epoch; all transfer
sizes are integer bytes.  Events are treated as immutable after
construction and are safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from enum import Enum


class VantagePoint(str, Enum):
    """Observation position an event was captured from."""

    NORTH_SOUTH_NIC = "NorthSouthNic"
    PCIE_OBSERVER = "PcieObserver"
    EAST_WEST_FABRIC = "EastWestFabric"


#: Merge/sort order for equal timestamps: NIC north-south first, then PCIe,
#: then east-west fabric.
VANTAGE_ORDER: dict[VantagePoint, int] = {
    VantagePoint.NORTH_SOUTH_NIC: 0,
    VantagePoint.PCIE_OBSERVER: 1,
    VantagePoint.EAST_WEST_FABRIC: 2,
}


class PathologyKind(str, Enum):
    """Closed set of the 28 detectable skew/imbalance signatures.

    The serialized names are stable identifiers used in fault sidecar
    files, findings files, and the eval harness.  Declaration order is
    the canonical presentation order (north-south, PCIe, east-west).
    """

    # NIC north-south (9)
    BURST_ADMISSION_BACKLOG = "BurstAdmissionBacklog"
    INGRESS_STARVATION = "IngressStarvation"
    FLOW_SKEW = "FlowSkew"
    INGRESS_DROP_RETRANSMIT = "IngressDropRetransmit"
    EGRESS_BACKLOG = "EgressBacklog"
    EGRESS_JITTER = "EgressJitter"
    EGRESS_DROP_RETRANSMIT = "EgressDropRetransmit"
    EARLY_COMPLETION_SKEW = "EarlyCompletionSkew"
    BANDWIDTH_SATURATION = "BandwidthSaturation"
    # PCIe observer (10)
    H2D_STARVATION = "H2dStarvation"
    D2H_BOTTLENECK = "D2hBottleneck"
    KERNEL_LAUNCH_LATENCY = "KernelLaunchLatency"
    INTRA_NODE_GPU_SKEW = "IntraNodeGpuSkew"
    PCIE_LINK_SATURATION = "PcieLinkSaturation"
    P2P_THROTTLING = "P2pThrottling"
    PINNED_MEMORY_FRAGMENTATION = "PinnedMemoryFragmentation"
    HOST_CPU_BOTTLENECK = "HostCpuBottleneck"
    REGISTRATION_CHURN = "RegistrationChurn"
    DECODE_EARLY_STOP_SKEW = "DecodeEarlyStopSkew"
    # East-west fabric (9)
    TP_STRAGGLER = "TpStraggler"
    PP_BUBBLE = "PpBubble"
    CROSS_NODE_LOAD_SKEW = "CrossNodeLoadSkew"
    NETWORK_CONGESTION = "NetworkCongestion"
    HEAD_OF_LINE_BLOCKING = "HeadOfLineBlocking"
    RETRANSMISSION_STORM = "RetransmissionStorm"
    CREDIT_STARVATION = "CreditStarvation"
    KV_CACHE_TRANSFER_BOTTLENECK = "KvCacheTransferBottleneck"
    EARLY_STOP_SKEW_ACROSS_NODES = "EarlyStopSkewAcrossNodes"


KIND_ORDER: dict[PathologyKind, int] = {k: i for i, k in enumerate(PathologyKind)}


# --- payloads -------------------------------------------------------------


@dataclass(slots=True)
class IngressPacket:
    flow_id: int
    bytes: int
    is_retransmit: bool
    is_handshake: bool


@dataclass(slots=True)
class EgressPacket:
    flow_id: int
    bytes: int
    is_retransmit: bool
    stream_id: int


@dataclass(slots=True)
class NicQueueSample:
    rx_depth_pkts: int
    tx_depth_pkts: int
    rx_bytes_per_s: int
    tx_bytes_per_s: int


@dataclass(slots=True)
class DmaH2D:
    gpu_id: int
    bytes: int


@dataclass(slots=True)
class DmaD2H:
    gpu_id: int
    bytes: int
    completion_latency_ns: int


@dataclass(slots=True)
class DmaP2P:
    src_gpu: int
    dst_gpu: int
    bytes: int
    duration_ns: int


@dataclass(slots=True)
class DoorbellWrite:
    gpu_id: int
    stream_tag: int


@dataclass(slots=True)
class MemRegister:
    bytes: int


@dataclass(slots=True)
class MemUnregister:
    bytes: int


@dataclass(slots=True)
class CollectiveBurst:
    collective_id: int
    rank: int
    bytes: int


@dataclass(slots=True)
class StageHandoff:
    from_stage: int
    to_stage: int
    microbatch_id: int
    bytes: int
    token_tag: int


@dataclass(slots=True)
class RdmaCreditUpdate:
    queue_pair_id: int
    credits: int


@dataclass(slots=True)
class FabricPacket:
    flow_id: int
    bytes: int
    is_retransmit: bool
    is_duplicate: bool


@dataclass(slots=True)
class LinkSample:
    peer_node: int
    latency_ns: int
    jitter_ns: int


PAYLOAD_TYPES = (
    IngressPacket,
    EgressPacket,
    NicQueueSample,
    DmaH2D,
    DmaD2H,
    DmaP2P,
    DoorbellWrite,
    MemRegister,
    MemUnregister,
    CollectiveBurst,
    StageHandoff,
    RdmaCreditUpdate,
    FabricPacket,
    LinkSample,
)

#: Which vantage point may carry each payload kind.  Validation rejects
#: any event whose payload does not match its vantage tag.
PAYLOAD_VANTAGE: dict[str, VantagePoint] = {
    "IngressPacket": VantagePoint.NORTH_SOUTH_NIC,
    "EgressPacket": VantagePoint.NORTH_SOUTH_NIC,
    "NicQueueSample": VantagePoint.NORTH_SOUTH_NIC,
    "DmaH2D": VantagePoint.PCIE_OBSERVER,
    "DmaD2H": VantagePoint.PCIE_OBSERVER,
    "DmaP2P": VantagePoint.PCIE_OBSERVER,
    "DoorbellWrite": VantagePoint.PCIE_OBSERVER,
    "MemRegister": VantagePoint.PCIE_OBSERVER,
    "MemUnregister": VantagePoint.PCIE_OBSERVER,
    "CollectiveBurst": VantagePoint.EAST_WEST_FABRIC,
    "StageHandoff": VantagePoint.EAST_WEST_FABRIC,
    "RdmaCreditUpdate": VantagePoint.EAST_WEST_FABRIC,
    "FabricPacket": VantagePoint.EAST_WEST_FABRIC,
    "LinkSample": VantagePoint.EAST_WEST_FABRIC,
}

#: Payload kinds that move bytes; their ``bytes`` field must be positive.
TRANSFER_KINDS = frozenset(
    {
        "IngressPacket",
        "EgressPacket",
        "DmaH2D",
        "DmaD2H",
        "DmaP2P",
        "MemRegister",
        "MemUnregister",
        "CollectiveBurst",
        "StageHandoff",
        "FabricPacket",
    }
)

#: Serialization field order per payload kind, derived from the dataclass
#: definitions above.  These names are normative in the trace file format.
PAYLOAD_FIELDS: dict[str, tuple[str, ...]] = {
    t.__name__: tuple(f.name for f in fields(t)) for t in PAYLOAD_TYPES
}

_PAYLOAD_BY_NAME = {t.__name__: t for t in PAYLOAD_TYPES}


@dataclass(slots=True)
class TelemetryEvent:
    """One timestamped observation at one vantage point."""

    ts: int
    vantage: VantagePoint
    node_id: int
    payload: object

    @property
    def kind(self) -> str:
        return type(self.payload).__name__


def payload_type(kind: str):
    """Payload class for a serialized kind name, or None if unknown."""
    return _PAYLOAD_BY_NAME.get(kind)
