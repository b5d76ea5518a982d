"""Windowed detection framework.

``run_detectors`` iterates fixed windows over a trace, builds per-window
views of the relevant event subsets, and evaluates every enabled
runbook detector (see ``catalog``).  Baselines are fit once per trace
from its leading segment (first 10% of the horizon, fault-free by
scenario convention) and frozen before the main pass.

The whole pipeline is a pure function of (trace, plan, config, enabled):
rerunning it yields byte-identical findings.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field, fields as dc_fields

from .events import KIND_ORDER, PathologyKind, TelemetryEvent
from .stats import coalesce, ewma_update, max_gap, median
from .trace import ClusterTopology, Location, Trace

#: Fraction of the horizon used to fit baselines.
LEADING_FRACTION = 10  # leading segment is horizon // LEADING_FRACTION


@dataclass(frozen=True)
class WindowPlan:
    """Tiling or overlapping detection windows."""

    length_ns: int = 1_000_000_000
    hop_ns: int = 1_000_000_000

    def __post_init__(self) -> None:
        if not 0 < self.hop_ns <= self.length_ns:
            raise ValueError("require 0 < hop_ns <= length_ns")

    def iter_windows(self, start: int, end: int):
        ws = start
        while ws < end:
            yield ws, ws + self.length_ns
            ws += self.hop_ns


@dataclass
class DetectorConfig:
    """Detection thresholds.

    The paper-side red flags are qualitative; every number here is an
    artifact choice, tunable via a thresholds file.
    """

    gap_factor: float = 4.0
    spread_factor: float = 3.0
    skew_ratio: float = 2.0
    utilization_frac: float = 0.9
    retransmit_frac: float = 0.05
    jitter_cv: float = 0.5
    churn_rate: float = 0.5
    small_dma_frac: float = 0.7
    min_events: int = 8
    #: EWMA decay constant for leading-segment baselines.
    baseline_alpha: float = 0.3
    #: observed/threshold ratio mapped to severity 1.0.
    ceiling_factor: float = 3.0
    #: DMAs below this size count as "small" for fragmentation detection.
    small_dma_bytes: int = 4096
    #: multi-packet request bursts closer than this collapse into one
    #: arrival for gap statistics.
    burst_coalesce_ns: int = 50_000_000
    #: same, for per-step stage handoff bursts.
    handoff_coalesce_ns: int = 10_000_000
    #: growing-gap clause: run length and minimum growth across the run.
    bubble_growth_run: int = 4
    bubble_growth_min: float = 2.0
    #: fraction of sampled links that must spike for congestion.
    congestion_quorum: float = 0.5
    #: windows of ingress lookback for the "pending ingress" conjunct.
    ingress_lookback_windows: int = 3
    #: EWMA decay for per-flow volume smoothing (flow skew reads smoothed
    #: volumes so single-window arrival bursts do not look like skew).
    volume_skew_alpha: float = 0.15

    def __post_init__(self) -> None:
        for f in dc_fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (int, float)) and v <= 0:
                raise ValueError(f"{f.name} must be > 0")
        if not 0 < self.utilization_frac <= 1:
            raise ValueError("utilization_frac must be in (0, 1]")
        if self.min_events < 1:
            raise ValueError("min_events must be >= 1")
        if not 0 < self.baseline_alpha <= 1:
            raise ValueError("baseline_alpha must be in (0, 1]")
        if self.ceiling_factor <= 1:
            raise ValueError("ceiling_factor must be > 1")


@dataclass(frozen=True)
class Finding:
    """One fired red flag: a detected pathology in one window."""

    kind: PathologyKind
    start: int
    end: int
    location: Location
    severity: float
    evidence: dict

    def __post_init__(self) -> None:
        if not 0.0 <= self.severity <= 1.0:
            raise ValueError("severity must be in [0, 1]")
        if not self.evidence:
            raise ValueError("evidence must be non-empty")


def severity_from_ratio(observed: float, threshold: float, ceiling_factor: float = 3.0) -> float:
    """Map an observed/threshold ratio onto [0, 1].

    1.0 at ratio >= ceiling_factor, 0.0 at ratio <= 1.
    """
    if threshold <= 0:
        return 1.0
    raw = (observed / threshold - 1.0) / (ceiling_factor - 1.0)
    return min(1.0, max(0.0, raw))


# --- columnar event store ---------------------------------------------------
#
# Row layouts (leading ts enables bisect slicing):
#   ingress: (ts, node, flow, bytes, retransmit, handshake)
#   egress:  (ts, node, flow, stream, bytes, retransmit)
#   queue:   (ts, node, rx_depth, tx_depth, rx_rate, tx_rate)
#   h2d:     (ts, node, gpu, bytes)
#   d2h:     (ts, node, gpu, bytes, latency)
#   p2p:     (ts, node, src_gpu, dst_gpu, bytes, duration)
#   bell:    (ts, node, gpu, tag)
#   mem:     (ts, node, bytes, +1 register / -1 unregister)
#   coll:    (ts, node, collective_id, rank, bytes)
#   hand:    (ts, node, from_stage, to_stage, microbatch, bytes, token_tag)
#   credit:  (ts, node, qp, credits)
#   fabric:  (ts, node, flow, bytes, retransmit, duplicate)
#   link:    (ts, node, peer, latency, jitter)

TABLE_OF_KIND = {
    "IngressPacket": "ingress",
    "EgressPacket": "egress",
    "NicQueueSample": "queue",
    "DmaH2D": "h2d",
    "DmaD2H": "d2h",
    "DmaP2P": "p2p",
    "DoorbellWrite": "bell",
    "MemRegister": "mem",
    "MemUnregister": "mem",
    "CollectiveBurst": "coll",
    "StageHandoff": "hand",
    "RdmaCreditUpdate": "credit",
    "FabricPacket": "fabric",
    "LinkSample": "link",
}

_TABLES = (
    "ingress", "egress", "queue", "h2d", "d2h", "p2p", "bell",
    "mem", "coll", "hand", "credit", "fabric", "link",
)


class TracePrep:
    """Columnar projection of a trace, bisectable by timestamp."""

    __slots__ = ("rows", "ts", "topology")

    def __init__(self, trace: Trace):
        self.topology = trace.topology
        rows: dict[str, list[tuple]] = {t: [] for t in _TABLES}
        for ev in trace.events:
            p = ev.payload
            k = ev.kind
            n = ev.node_id
            t = ev.ts
            if k == "IngressPacket":
                rows["ingress"].append((t, n, p.flow_id, p.bytes, p.is_retransmit, p.is_handshake))
            elif k == "EgressPacket":
                rows["egress"].append((t, n, p.flow_id, p.stream_id, p.bytes, p.is_retransmit))
            elif k == "NicQueueSample":
                rows["queue"].append((t, n, p.rx_depth_pkts, p.tx_depth_pkts, p.rx_bytes_per_s, p.tx_bytes_per_s))
            elif k == "DmaH2D":
                rows["h2d"].append((t, n, p.gpu_id, p.bytes))
            elif k == "DmaD2H":
                rows["d2h"].append((t, n, p.gpu_id, p.bytes, p.completion_latency_ns))
            elif k == "DmaP2P":
                rows["p2p"].append((t, n, p.src_gpu, p.dst_gpu, p.bytes, p.duration_ns))
            elif k == "DoorbellWrite":
                rows["bell"].append((t, n, p.gpu_id, p.stream_tag))
            elif k == "MemRegister":
                rows["mem"].append((t, n, p.bytes, 1))
            elif k == "MemUnregister":
                rows["mem"].append((t, n, p.bytes, -1))
            elif k == "CollectiveBurst":
                rows["coll"].append((t, n, p.collective_id, p.rank, p.bytes))
            elif k == "StageHandoff":
                rows["hand"].append((t, n, p.from_stage, p.to_stage, p.microbatch_id, p.bytes, p.token_tag))
            elif k == "RdmaCreditUpdate":
                rows["credit"].append((t, n, p.queue_pair_id, p.credits))
            elif k == "FabricPacket":
                rows["fabric"].append((t, n, p.flow_id, p.bytes, p.is_retransmit, p.is_duplicate))
            elif k == "LinkSample":
                rows["link"].append((t, n, p.peer_node, p.latency_ns, p.jitter_ns))
        self.rows = rows
        self.ts = {t: [r[0] for r in rows[t]] for t in _TABLES}

    def slice(self, table: str, ws: int, we: int) -> list[tuple]:
        ts = self.ts[table]
        lo = bisect.bisect_left(ts, ws)
        hi = bisect.bisect_left(ts, we)
        return self.rows[table][lo:hi]


# --- baselines --------------------------------------------------------------


@dataclass
class Baselines:
    """Per-trace reference levels fit from the leading segment.

    Per-window statistics (rates, depths, latencies, spreads) are EWMA
    tracked across leading windows; sparse gap medians are taken over
    the whole leading segment.
    """

    ingress_rate: dict = field(default_factory=dict)     # node -> pkts/s
    rx_depth: dict = field(default_factory=dict)         # node -> mean depth
    tx_depth: dict = field(default_factory=dict)         # node -> mean depth
    flow_gap: dict = field(default_factory=dict)         # flow -> median gap ns
    flow_node: dict = field(default_factory=dict)        # flow -> modal node
    h2d_gap: dict = field(default_factory=dict)          # (node,gpu) -> ns
    bell_gap: dict = field(default_factory=dict)         # (node,gpu) -> ns
    node_bell_gap: dict = field(default_factory=dict)    # node -> ns (merged)
    credit_gap: dict = field(default_factory=dict)       # (node,qp) -> ns
    fabric_gap: dict = field(default_factory=dict)       # flow -> ns
    fabric_node: dict = field(default_factory=dict)      # flow -> src node
    handoff_gap: dict = field(default_factory=dict)      # from_stage -> ns
    d2h_latency: dict = field(default_factory=dict)      # node -> median ns
    p2p_tput: dict = field(default_factory=dict)         # node -> bytes/s
    coll_spread: float | None = None                     # median spread ns
    link_lat: dict = field(default_factory=dict)         # (node,peer) -> ns
    link_jit: dict = field(default_factory=dict)         # (node,peer) -> ns
    dma_count: dict = field(default_factory=dict)        # node -> count/window
    flow_vol: dict = field(default_factory=dict)         # flow -> EWMA bytes/window
    leading_end_ns: int = 0                              # baseline segment bound
    member_maxgap: dict = field(default_factory=dict)    # member key -> ns
    egress_members: list = field(default_factory=list)   # node ids
    d2h_members: list = field(default_factory=list)      # (node,gpu)
    ew_members: list = field(default_factory=list)       # node ids


def _segment_gap_median(times: list[int], coalesce_ns: int = 0) -> float | None:
    if coalesce_ns:
        times = coalesce(times, coalesce_ns)
    if len(times) < 4:
        return None
    gaps = [b - a for a, b in zip(times, times[1:])]
    return median(gaps)


def _collective_spreads(rows: list[tuple], tp_degree: int):
    """Per-collective (max-min) arrival spreads for complete collectives.

    Arrival maps carry (ts, node) per rank so the straggler's node can
    be recovered.
    """
    seen: dict[int, dict[int, tuple[int, int]]] = {}
    for t, n, cid, rank, _b in rows:
        arr = seen.setdefault(cid, {})
        if rank not in arr:
            arr[rank] = (t, n)
    complete = {cid: arr for cid, arr in seen.items() if len(arr) == tp_degree}
    spreads = {
        cid: max(t for t, _n in a.values()) - min(t for t, _n in a.values())
        for cid, a in complete.items()
    }
    incomplete = len(seen) - len(complete)
    return complete, spreads, incomplete


def fit_baselines(
    prep: TracePrep, plan: WindowPlan, cfg: DetectorConfig, leading_end: int
) -> Baselines:
    base = Baselines()
    base.leading_end_ns = leading_end
    alpha = cfg.baseline_alpha
    topo = prep.topology

    # whole-segment gap medians
    per_flow: dict[int, list[int]] = {}
    flow_node_count: dict[int, dict[int, int]] = {}
    for t, n, flow, _b, _r, _h in prep.slice("ingress", 0, leading_end):
        per_flow.setdefault(flow, []).append(t)
        cnts = flow_node_count.setdefault(flow, {})
        cnts[n] = cnts.get(n, 0) + 1
    for flow, times in per_flow.items():
        ctimes = coalesce(sorted(times), cfg.burst_coalesce_ns)
        if len(ctimes) < 2:
            continue
        gaps = [b - a for a, b in zip(ctimes, ctimes[1:])]
        # sparse flows get few leading arrivals; the average spacing over
        # the whole segment floors the baseline so a lucky close pair
        # cannot produce a hair-trigger threshold
        g = max(median(gaps), leading_end / len(ctimes))
        base.flow_gap[flow] = g
        counts = flow_node_count[flow]
        base.flow_node[flow] = min(counts, key=lambda nd: (-counts[nd], nd))

    streams: dict[tuple, list[int]] = {}
    for t, n, gpu, _b in prep.slice("h2d", 0, leading_end):
        streams.setdefault((n, gpu), []).append(t)
    for key, times in streams.items():
        g = _segment_gap_median(times)
        if g:
            base.h2d_gap[key] = g

    bells: dict[tuple, list[int]] = {}
    node_bells: dict[int, list[int]] = {}
    for t, n, gpu, _tag in prep.slice("bell", 0, leading_end):
        bells.setdefault((n, gpu), []).append(t)
        node_bells.setdefault(n, []).append(t)
    for key, times in bells.items():
        g = _segment_gap_median(times)
        if g:
            base.bell_gap[key] = g
    for n, times in node_bells.items():
        g = _segment_gap_median(times)
        if g:
            base.node_bell_gap[n] = g

    credits: dict[tuple, list[int]] = {}
    for t, n, qp, _c in prep.slice("credit", 0, leading_end):
        credits.setdefault((n, qp), []).append(t)
    for key, times in credits.items():
        g = _segment_gap_median(times)
        if g:
            base.credit_gap[key] = g

    fabrics: dict[int, list[int]] = {}
    for t, n, flow, _b, _r, _d in prep.slice("fabric", 0, leading_end):
        fabrics.setdefault(flow, []).append(t)
        base.fabric_node.setdefault(flow, n)
    for flow, times in fabrics.items():
        g = _segment_gap_median(times)
        if g:
            base.fabric_gap[flow] = g

    hands: dict[int, list[int]] = {}
    for t, _n, fs, _ts2, _mb, _b, _tag in prep.slice("hand", 0, leading_end):
        hands.setdefault(fs, []).append(t)
    for fs, times in hands.items():
        g = _segment_gap_median(times, cfg.handoff_coalesce_ns)
        if g:
            base.handoff_gap[fs] = g

    # EWMA over leading windows for per-window statistics
    win_s = plan.length_ns / 1e9
    rate_acc: dict[int, float | None] = {}
    rx_acc: dict[int, float | None] = {}
    tx_acc: dict[int, float | None] = {}
    lat_acc: dict[int, float | None] = {}
    tput_acc: dict[int, float | None] = {}
    llat_acc: dict[tuple, float | None] = {}
    ljit_acc: dict[tuple, float | None] = {}
    cnt_acc: dict[int, float | None] = {}
    spread_acc: float | None = None
    member_acc: dict[tuple, float | None] = {}

    member_seen_egress: set[int] = set()
    member_seen_d2h: set[tuple] = set()
    member_seen_ew: set[int] = set()

    vol_acc: dict[int, float] = {}

    for ws, we in plan.iter_windows(0, leading_end):
        if we > leading_end:
            break
        ing = prep.slice("ingress", ws, we)
        by_node: dict[int, int] = {}
        fvol: dict[int, int] = {}
        for _t, n, flow, nbytes, _r, _h in ing:
            by_node[n] = by_node.get(n, 0) + 1
            fvol[flow] = fvol.get(flow, 0) + nbytes
        for n, c in by_node.items():
            rate_acc[n] = ewma_update(rate_acc.get(n), c / win_s, alpha)
        for flow in sorted(set(vol_acc) | set(fvol)):
            vol_acc[flow] = ewma_update(
                vol_acc.get(flow), float(fvol.get(flow, 0)), cfg.volume_skew_alpha
            )

        qs = prep.slice("queue", ws, we)
        qrx: dict[int, list[int]] = {}
        qtx: dict[int, list[int]] = {}
        for _t, n, rxd, txd, _rr, _tr in qs:
            qrx.setdefault(n, []).append(rxd)
            qtx.setdefault(n, []).append(txd)
        for n, vals in qrx.items():
            rx_acc[n] = ewma_update(rx_acc.get(n), sum(vals) / len(vals), alpha)
        for n, vals in qtx.items():
            tx_acc[n] = ewma_update(tx_acc.get(n), sum(vals) / len(vals), alpha)

        d2h = prep.slice("d2h", ws, we)
        lat_by_node: dict[int, list[int]] = {}
        for t, n, gpu, _b, lat in d2h:
            lat_by_node.setdefault(n, []).append(lat)
            member_seen_d2h.add((n, gpu))
        for n, lats in lat_by_node.items():
            lat_acc[n] = ewma_update(lat_acc.get(n), median(lats), alpha)

        p2p = prep.slice("p2p", ws, we)
        tput_by_node: dict[int, list[float]] = {}
        for _t, n, _s, _d, b, dur in p2p:
            tput_by_node.setdefault(n, []).append(b * 1e9 / dur)
        for n, tputs in tput_by_node.items():
            tput_acc[n] = ewma_update(tput_acc.get(n), median(tputs), alpha)

        links = prep.slice("link", ws, we)
        link_lat: dict[tuple, list[int]] = {}
        link_jit: dict[tuple, list[int]] = {}
        for _t, n, peer, lat, jit in links:
            link_lat.setdefault((n, peer), []).append(lat)
            link_jit.setdefault((n, peer), []).append(jit)
        for key, vals in link_lat.items():
            llat_acc[key] = ewma_update(llat_acc.get(key), sum(vals) / len(vals), alpha)
        for key, vals in link_jit.items():
            ljit_acc[key] = ewma_update(ljit_acc.get(key), sum(vals) / len(vals), alpha)

        dmas_by_node: dict[int, int] = {}
        for t, n, *_ in prep.slice("h2d", ws, we):
            dmas_by_node[n] = dmas_by_node.get(n, 0) + 1
        for t, n, *_ in d2h:
            dmas_by_node[n] = dmas_by_node.get(n, 0) + 1
        for n, c in dmas_by_node.items():
            cnt_acc[n] = ewma_update(cnt_acc.get(n), c, alpha)

        coll = prep.slice("coll", ws, we)
        _c, spreads, _inc = _collective_spreads(coll, topo.tp_degree)
        if spreads:
            spread_acc = ewma_update(spread_acc, median(spreads.values()), alpha)

        # early-stop member activity (max gap per window, window length if silent)
        def _track_members(rows, key_fn, prefix):
            per: dict = {}
            for row in rows:
                per.setdefault(key_fn(row), []).append(row[0])
            keys = set(per)
            for key, times in per.items():
                mg = max(max_gap(times), times[0] - ws, we - times[-1])
                member_acc[(prefix,) + key] = ewma_update(
                    member_acc.get((prefix,) + key), mg, alpha
                )
            return keys

        eg = prep.slice("egress", ws, we)
        member_seen_egress |= {k[0] for k in _track_members(eg, lambda r: (r[1],), "egress")}
        _track_members(d2h, lambda r: (r[1], r[2]), "d2h")
        member_seen_ew |= {k[0] for k in _track_members(coll, lambda r: (r[1],), "ew")}

    base.ingress_rate = {n: v for n, v in rate_acc.items() if v}
    base.rx_depth = {n: v for n, v in rx_acc.items() if v}
    base.tx_depth = {n: v for n, v in tx_acc.items() if v}
    base.d2h_latency = {n: v for n, v in lat_acc.items() if v}
    base.p2p_tput = {n: v for n, v in tput_acc.items() if v}
    base.link_lat = {k: v for k, v in llat_acc.items() if v}
    base.link_jit = {k: v for k, v in ljit_acc.items() if v}
    base.dma_count = {n: v for n, v in cnt_acc.items() if v}
    base.flow_vol = dict(vol_acc)
    base.coll_spread = spread_acc
    base.member_maxgap = {k: v for k, v in member_acc.items() if v}
    base.egress_members = sorted(member_seen_egress)
    base.d2h_members = sorted(member_seen_d2h)
    base.ew_members = sorted(member_seen_ew)
    return base


# --- cross-window trackers --------------------------------------------------


class Trackers:
    """Last-seen timestamps per tracked stream, advanced window by window.

    Detectors read the state as of the window start, which lets gap
    detectors see silences that span window boundaries.
    """

    def __init__(self, prep: TracePrep):
        self._prep = prep
        self._ptr = {t: 0 for t in _TABLES}
        self.flow_last: dict[int, int] = {}
        self.h2d_last: dict[tuple, int] = {}
        self.bell_last: dict[tuple, int] = {}
        self.node_bell_last: dict[int, int] = {}
        self.credit_last: dict[tuple, int] = {}
        self.fabric_last: dict[int, int] = {}
        self.handoff_last: dict[int, int] = {}
        self.egress_node_last: dict[int, int] = {}
        self.d2h_gpu_last: dict[tuple, int] = {}
        self.ew_node_last: dict[int, int] = {}
        self.ingress_node_last: dict[int, int] = {}
        #: EWMA of per-flow ingress bytes per window, seeded from the
        #: leading-segment baseline and advanced after every window.
        self.flow_vol: dict[int, float] = {}

    def advance_to(self, ts: int) -> None:
        """Consume events strictly before ts into the last-seen maps."""
        prep = self._prep
        ptr = self._ptr

        def _scan(table):
            col_ts = prep.ts[table]
            rows = prep.rows[table]
            i = ptr[table]
            hi = bisect.bisect_left(col_ts, ts, i)
            view = rows[i:hi]
            ptr[table] = hi
            return view

        for t, n, flow, *_ in _scan("ingress"):
            self.flow_last[flow] = t
            self.ingress_node_last[n] = t
        for t, n, gpu, _b in _scan("h2d"):
            self.h2d_last[(n, gpu)] = t
        for t, n, gpu, _tag in _scan("bell"):
            self.bell_last[(n, gpu)] = t
            self.node_bell_last[n] = t
        for t, n, qp, _c in _scan("credit"):
            self.credit_last[(n, qp)] = t
        for t, _n, flow, *_ in _scan("fabric"):
            self.fabric_last[flow] = t
        for t, _n, fs, *_ in _scan("hand"):
            self.handoff_last[fs] = t
        for t, n, *_ in _scan("egress"):
            self.egress_node_last[n] = t
        for t, n, gpu, _b, _l in _scan("d2h"):
            self.d2h_gpu_last[(n, gpu)] = t
        for t, n, *_ in _scan("coll"):
            self.ew_node_last[n] = t


@dataclass
class WindowView:
    """Everything a detector may read for one window."""

    ws: int
    we: int
    prep: TracePrep
    topology: ClusterTopology
    cfg: DetectorConfig
    base: Baselines
    track: Trackers
    _cache: dict = field(default_factory=dict)

    @property
    def length_ns(self) -> int:
        return self.we - self.ws

    def rows(self, table: str) -> list[tuple]:
        got = self._cache.get(table)
        if got is None:
            got = self.prep.slice(table, self.ws, self.we)
            self._cache[table] = got
        return got

    def gap_with_carryin(
        self, times: list[int], last_seen: int | None, coalesce_ns: int = 0
    ) -> int:
        """Max gap over in-window events, the carry-in gap from the last
        event before the window, and the trailing open gap."""
        series = list(times)
        if last_seen is not None:
            series.insert(0, last_seen)
        if coalesce_ns:
            series = coalesce(series, coalesce_ns)
        if not series:
            return 0
        return max(max_gap(series), self.we - series[-1])


def run_detectors(
    trace: Trace,
    plan: WindowPlan | None = None,
    config: DetectorConfig | None = None,
    enabled: set[PathologyKind] | None = None,
) -> list[Finding]:
    """Evaluate every enabled runbook detector over the trace's windows.

    Findings come back sorted by (window start, kind, location) and are
    deterministic for fixed inputs.  Windows with insufficient relevant
    events stay silent.
    """
    from .catalog import CATALOG, FAMILY_FNS  # deferred: catalog builds on this module

    from .trace import validate_trace

    report = validate_trace(trace)
    if not report.ok:
        first = report.violations[0]
        raise ValueError(f"invalid trace: {first.message}")

    plan = plan or WindowPlan()
    cfg = config or DetectorConfig()
    span = trace.horizon_ns()
    if span == 0:
        return []

    prep = TracePrep(trace)
    leading_end = span // LEADING_FRACTION
    base = fit_baselines(prep, plan, cfg, leading_end)
    track = Trackers(prep)
    track.flow_vol = dict(base.flow_vol)

    entries = [e for e in CATALOG if enabled is None or e.kind in enabled]
    findings: list[Finding] = []
    for ws, we in plan.iter_windows(0, span):
        track.advance_to(ws)
        view = WindowView(ws, we, prep, trace.topology, cfg, base, track)
        for entry in entries:
            findings.extend(FAMILY_FNS[entry.predicate](view, entry))
        fvol: dict[int, int] = {}
        for _t, _n, flow, nbytes, _r, _h in view.rows("ingress"):
            fvol[flow] = fvol.get(flow, 0) + nbytes
        for flow in sorted(set(track.flow_vol) | set(fvol)):
            track.flow_vol[flow] = ewma_update(
                track.flow_vol.get(flow), float(fvol.get(flow, 0)), cfg.volume_skew_alpha
            )

    findings.sort(key=lambda f: (f.start, KIND_ORDER[f.kind], f.location.sort_key()))
    return findings
