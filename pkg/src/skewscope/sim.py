"""Deterministic discrete-event generator for DPU-visible telemetry.

Models a TP x PP inference cluster serving an LLM-style workload.  Each
request produces an ingress packet burst, prefill H2D DMA bursts with
doorbells, per-step decode activity (collective bursts, stage handoffs,
small D2H reads, doorbells), and egress packets per generated token.
Queue and link samplers run at fixed cadences.

Compute itself is opaque from the DPU: it appears only as delays
between doorbells and the transfers that follow.

Identical (topology, workload, faults, config) inputs produce a
byte-identical trace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .events import (
    VANTAGE_ORDER,
    CollectiveBurst,
    DmaD2H,
    DmaH2D,
    DmaP2P,
    DoorbellWrite,
    EgressPacket,
    FabricPacket,
    IngressPacket,
    LinkSample,
    MemRegister,
    MemUnregister,
    NicQueueSample,
    PathologyKind,
    RdmaCreditUpdate,
    StageHandoff,
    TelemetryEvent,
    VantagePoint,
)
from .rng import RNG_SCHEME, CounterRng
from .trace import ClusterTopology, InjectionRecord, Location, Trace

NS = VantagePoint.NORTH_SOUTH_NIC
PCIE = VantagePoint.PCIE_OBSERVER
EW = VantagePoint.EAST_WEST_FABRIC

# timing model (ns)
TICK_NS = 40_000_000  # one decode step
QUEUE_CADENCE_NS = 5_000_000
LINK_CADENCE_NS = 20_000_000
CREDIT_CADENCE_NS = 50_000_000
PROBE_OFFSET_NS = 100_000_000
INGRESS_MTU = 8192
P2P_BYTES = 65536
CLIENT_FLOWS = 8
PROBE_FLOW = 0

#: fabric stream ids: 1000 + stage * 64 + source node
FABRIC_FLOW_BASE = 1000
#: RDMA queue pair ids: 100 + source node (ring edge to the next node)
QP_BASE = 100


class ConfigError(ValueError):
    """Invalid simulation inputs, reported before any event is produced."""


@dataclass(frozen=True)
class DistSpec:
    """Bounded integer distribution; shape > 1 biases toward the minimum."""

    min: int
    max: int
    shape: float = 1.0

    def __post_init__(self) -> None:
        if self.min < 1 or self.max < self.min:
            raise ConfigError("distribution bounds must satisfy 1 <= min <= max")
        if self.shape <= 0:
            raise ConfigError("distribution shape must be > 0")


@dataclass(frozen=True)
class WorkloadSpec:
    request_rate_per_s: float
    prompt_len_dist: DistSpec
    decode_len_dist: DistSpec
    bytes_per_prompt_token: int
    bytes_per_decode_step: int
    kv_handoff_bytes_per_step: int
    #: synthetic health-probe client: a tiny request every period, round
    #: robin across nodes.  Keeps the pipeline warm like a load
    #: balancer's health checks; 0 disables.
    probe_period_s: float = 0.2

    def __post_init__(self) -> None:
        if self.request_rate_per_s < 0:
            raise ConfigError("request_rate_per_s must be >= 0")
        for name in ("bytes_per_prompt_token", "bytes_per_decode_step", "kv_handoff_bytes_per_step"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        if self.probe_period_s < 0:
            raise ConfigError("probe_period_s must be >= 0")


@dataclass(frozen=True)
class FaultSpec:
    kind: PathologyKind
    start: int
    end: int
    location: Location
    magnitude: float

    def __post_init__(self) -> None:
        if self.start >= self.end:
            raise ConfigError("fault start must precede end")
        if self.magnitude < 1.0:
            raise ConfigError("fault magnitude must be >= 1.0")


@dataclass(frozen=True)
class SimConfig:
    seed: int
    horizon_ns: int
    rng: str = RNG_SCHEME

    def __post_init__(self) -> None:
        if self.horizon_ns < 0:
            raise ConfigError("horizon_ns must be >= 0")
        if self.rng != RNG_SCHEME:
            raise ConfigError(f"unknown rng scheme {self.rng!r} (expected {RNG_SCHEME!r})")


def build_placement(topo: ClusterTopology) -> dict[tuple[int, int], tuple[int, int]]:
    """Map each (stage, rank) worker to a (node, gpu) slot.

    Ranks of one stage spread across nodes and consecutive stages are
    offset by one node, so tensor collectives and pipeline handoffs
    cross the fabric where the DPU can see them.
    """
    used = [0] * topo.num_nodes
    placement = {}
    for s in range(topo.pp_stages):
        for r in range(topo.tp_degree):
            node = (r + s) % topo.num_nodes
            probes = 0
            while used[node] >= topo.gpus_per_node:
                node = (node + 1) % topo.num_nodes
                probes += 1
                if probes > topo.num_nodes:
                    raise ConfigError("no free GPU slot for worker placement")
            placement[(s, r)] = (node, used[node])
            used[node] += 1
    return placement


@dataclass
class _Request:
    rid: int
    arrival: int
    flow: int
    home: int
    prompt_tokens: int
    decode_ticks: int
    start_tick: int = 0


@dataclass
class SimContext:
    """Constants the fault injectors need about the healthy simulation."""

    topology: ClusterTopology
    workload: WorkloadSpec
    placement: dict
    tick_ns: int
    horizon_ns: int
    rng: CounterRng


def _arrivals(workload: WorkloadSpec, cfg: SimConfig, num_nodes: int, rng: CounterRng) -> list[_Request]:
    raw: list[tuple[int, int, int, int, int]] = []  # (arrival, flow, home, prompt, decode)
    if workload.request_rate_per_s > 0:
        mean_gap = 1e9 / workload.request_rate_per_s
        t = 0
        i = 0
        while True:
            t += rng.exponential_ns(mean_gap, "arrival", i)
            if t >= cfg.horizon_ns:
                break
            flow = 1 + i % CLIENT_FLOWS
            home = flow % num_nodes
            prompt = rng.bounded_int(
                workload.prompt_len_dist.min,
                workload.prompt_len_dist.max,
                workload.prompt_len_dist.shape,
                "prompt", i,
            )
            decode = rng.bounded_int(
                workload.decode_len_dist.min,
                workload.decode_len_dist.max,
                workload.decode_len_dist.shape,
                "decode", i,
            )
            raw.append((t, flow, home, prompt, decode))
            i += 1
    if workload.probe_period_s > 0:
        period = int(workload.probe_period_s * 1e9)
        k = 0
        t = PROBE_OFFSET_NS
        while t < cfg.horizon_ns:
            raw.append((t, PROBE_FLOW, k % num_nodes, 16, 4))
            k += 1
            t += period
    raw.sort(key=lambda r: r[0])
    return [
        _Request(rid=i, arrival=a, flow=f, home=h, prompt_tokens=p, decode_ticks=d)
        for i, (a, f, h, p, d) in enumerate(raw)
    ]


def simulate(
    topology: ClusterTopology,
    workload: WorkloadSpec,
    faults: list[FaultSpec],
    config: SimConfig,
) -> Trace:
    """Generate a telemetry trace, then perturb it per the fault specs.

    The returned trace is globally time ordered and passes validation;
    its injection log mirrors the fault specs.
    """
    from .inject import inject  # late import: inject builds on this module

    for fs in faults:
        if fs.end > config.horizon_ns:
            raise ConfigError(
                f"fault {fs.kind.value} interval exceeds the simulation horizon"
            )

    rng = CounterRng(config.seed)
    placement = build_placement(topology)
    horizon = config.horizon_ns
    pp = topology.pp_stages
    tp = topology.tp_degree
    bpds = workload.bytes_per_decode_step
    events: list[TelemetryEvent] = []

    def emit(ts: int, vantage: VantagePoint, node: int, payload) -> None:
        if 0 <= ts < horizon:
            events.append(TelemetryEvent(ts=ts, vantage=vantage, node_id=node, payload=payload))

    requests = _arrivals(workload, config, topology.num_nodes, rng)

    # per-node north-south byte timelines, for queue sampler rates
    ns_rx: dict[int, list[tuple[int, int]]] = {n: [] for n in range(topology.num_nodes)}
    ns_tx: dict[int, list[tuple[int, int]]] = {n: [] for n in range(topology.num_nodes)}

    for req in requests:
        rid = req.rid
        prompt_bytes = req.prompt_tokens * workload.bytes_per_prompt_token
        npkts = max(1, math.ceil(prompt_bytes / INGRESS_MTU))
        remaining = prompt_bytes
        for j in range(npkts):
            ts = req.arrival + j * 250_000 + rng.randint(0, 50_000, "ing", rid, j)
            size = min(INGRESS_MTU, remaining)
            remaining -= size
            emit(ts, NS, req.home, IngressPacket(
                flow_id=req.flow, bytes=size, is_retransmit=False, is_handshake=(j == 0)))
            if ts < horizon:
                ns_rx[req.home].append((ts, size))

        emit(req.arrival + 1_000_000, PCIE, req.home, MemRegister(bytes=prompt_bytes))

        # prefill: a couple of large H2D DMAs per stage, then a doorbell
        prep = req.arrival + 2_000_000 + rng.randint(0, 1_000_000, "prep", rid)
        stage_bytes = max(1, prompt_bytes // (pp * 2))
        last_dma_ts = prep
        for s in range(pp):
            node, gpu = placement[(s, rid % tp)]
            for j in range(2):
                ts = prep + s * 200_000 + j * 500_000
                emit(ts, PCIE, node, DmaH2D(gpu_id=gpu, bytes=stage_bytes))
                last_dma_ts = max(last_dma_ts, ts)
            emit(last_dma_ts + 300_000, PCIE, node, DoorbellWrite(gpu_id=gpu, stream_tag=rid % 8))
        ready = last_dma_ts + 300_000 + 5_000_000
        req.start_tick = ready // TICK_NS + 1

    # decode ticks: global cadence over the currently active request set
    active_at: dict[int, list[_Request]] = {}
    for req in requests:
        for k in range(req.start_tick, req.start_tick + req.decode_ticks):
            if k * TICK_NS >= horizon:
                break
            active_at.setdefault(k, []).append(req)

    node_workers: dict[int, list[tuple[int, int]]] = {}
    for (s, r), (node, gpu) in placement.items():
        node_workers.setdefault(node, []).append((s, r))

    for k in sorted(active_at):
        batch = active_at[k]
        t_k = k * TICK_NS
        n_act = len(batch)
        h2d_bytes = max(1, bpds // 8 + (bpds // 32) * n_act)
        d2h_bytes = max(1, bpds // 2 + (bpds // 8) * n_act)
        coll_bytes = bpds + (bpds // 4) * n_act

        for (s, r), (node, gpu) in placement.items():
            emit(t_k + 1_000_000 + rng.randint(0, 2_000_000, "h2d", k, s, r),
                 PCIE, node, DmaH2D(gpu_id=gpu, bytes=h2d_bytes))
            emit(t_k + 3_000_000 + rng.randint(0, 2_000_000, "bell", k, s, r),
                 PCIE, node, DoorbellWrite(gpu_id=gpu, stream_tag=(k + s * tp + r) % 8))
            burst_ts = t_k + 6_000_000 + s * 2_000_000 + rng.randint(0, 3_000_000, "coll", k, s, r)
            emit(burst_ts, EW, node, CollectiveBurst(collective_id=k * pp + s, rank=r, bytes=coll_bytes))
            peer_node, _ = placement[(s, (r + 1) % tp)]
            if peer_node != node:
                emit(burst_ts + 200_000, EW, node, FabricPacket(
                    flow_id=FABRIC_FLOW_BASE + s * 64 + node, bytes=coll_bytes,
                    is_retransmit=False, is_duplicate=False))
            d2h_ts = t_k + 30_000_000 + rng.randint(0, 2_000_000, "d2h", k, s, r)
            lat = 20_000 + d2h_bytes // 2 + rng.randint(0, 4_000, "d2hlat", k, s, r)
            emit(d2h_ts, PCIE, node, DmaD2H(gpu_id=gpu, bytes=d2h_bytes, completion_latency_ns=lat))

        for node in sorted(node_workers):
            workers = sorted(node_workers[node])
            if len(workers) >= 2:
                g_src = placement[workers[0]][1]
                g_dst = placement[workers[1]][1]
                dur = P2P_BYTES // 8 + rng.randint(0, 800, "p2pd", k, node)
                emit(t_k + 20_000_000 + rng.randint(0, 2_000_000, "p2p", k, node),
                     PCIE, node, DmaP2P(src_gpu=g_src, dst_gpu=g_dst, bytes=P2P_BYTES, duration_ns=dur))

        for b in range(pp - 1):
            for req in batch:
                node, _gpu = placement[(b, req.rid % tp)]
                emit(t_k + 24_000_000 + rng.randint(0, 2_000_000, "hand", k, b, req.rid),
                     EW, node, StageHandoff(
                         from_stage=b, to_stage=b + 1, microbatch_id=k,
                         bytes=workload.kv_handoff_bytes_per_step, token_tag=req.rid))

        for req in batch:
            ts = t_k + 34_000_000 + rng.randint(0, 3_000_000, "egr", k, req.rid)
            emit(ts, NS, req.home, EgressPacket(
                flow_id=req.flow, bytes=max(1, bpds // 8), is_retransmit=False, stream_id=req.rid))
            if ts < horizon:
                ns_tx[req.home].append((ts, max(1, bpds // 8)))

    for req in requests:
        end_ts = (req.start_tick + req.decode_ticks - 1) * TICK_NS + 36_000_000
        emit(end_ts, PCIE, req.home, MemUnregister(
            bytes=req.prompt_tokens * workload.bytes_per_prompt_token))

    # samplers
    for n in range(topology.num_nodes):
        rx = sorted(ns_rx[n])
        tx = sorted(ns_tx[n])
        rx_lo = rx_hi = tx_lo = tx_hi = 0
        rx_sum = tx_sum = 0
        j = 0
        ts = QUEUE_CADENCE_NS // 2
        while ts < horizon:
            while rx_hi < len(rx) and rx[rx_hi][0] <= ts:
                rx_sum += rx[rx_hi][1]
                rx_hi += 1
            while rx_lo < len(rx) and rx[rx_lo][0] <= ts - 1_000_000_000:
                rx_sum -= rx[rx_lo][1]
                rx_lo += 1
            while tx_hi < len(tx) and tx[tx_hi][0] <= ts:
                tx_sum += tx[tx_hi][1]
                tx_hi += 1
            while tx_lo < len(tx) and tx[tx_lo][0] <= ts - 1_000_000_000:
                tx_sum -= tx[tx_lo][1]
                tx_lo += 1
            w = rng.word("queue", n, j)
            emit(ts, NS, n, NicQueueSample(
                rx_depth_pkts=2 + w % 3,
                tx_depth_pkts=2 + (w >> 32) % 3,
                rx_bytes_per_s=rx_sum,
                tx_bytes_per_s=tx_sum))
            j += 1
            ts += QUEUE_CADENCE_NS

    jitter = topology.fabric_jitter_ns
    for i in range(topology.num_nodes):
        for jnode in range(i + 1, topology.num_nodes):
            k = 0
            ts = LINK_CADENCE_NS // 2
            while ts < horizon:
                w = rng.word("link", i, jnode, k)
                emit(ts, EW, i, LinkSample(
                    peer_node=jnode,
                    latency_ns=topology.fabric_base_latency_ns + w % (2 * jitter + 1),
                    jitter_ns=jitter // 2 + (w >> 32) % (jitter + 1)))
                k += 1
                ts += LINK_CADENCE_NS

    if topology.num_nodes > 1:
        for i in range(topology.num_nodes):
            k = 0
            ts = CREDIT_CADENCE_NS // 2
            while ts < horizon:
                emit(ts, EW, i, RdmaCreditUpdate(
                    queue_pair_id=QP_BASE + i, credits=64 - rng.word("cred", i, k) % 9))
                k += 1
                ts += CREDIT_CADENCE_NS

    ctx = SimContext(
        topology=topology,
        workload=workload,
        placement=placement,
        tick_ns=TICK_NS,
        horizon_ns=horizon,
        rng=rng,
    )
    for fault in faults:
        events = inject(events, fault, rng, ctx)

    events = [ev for ev in events if 0 <= ev.ts < horizon]
    keyed = sorted(
        ((ev.ts, VANTAGE_ORDER[ev.vantage], i) for i, ev in enumerate(events))
    )
    ordered = [events[i] for _ts, _v, i in keyed]

    injections = [
        InjectionRecord(kind=f.kind, start=f.start, end=f.end, location=f.location, magnitude=f.magnitude)
        for f in faults
    ]
    return Trace(topology=topology, epoch_ns=0, events=ordered, injections=injections)
