"""Runbook detector catalog: one detection predicate per pathology.

Each catalog entry declares which payload kinds its detector reads
(detector locality: a detector sees only its declared selectors), the
threshold key it trips on, how it fills the finding location, and the
runbook text (signal summary, likely root cause, mitigation directives)
attached to reports for that kind.

Predicates are grouped into statistic families; the catalog maps kinds
to families.  All predicates are pure window functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .detect import (
    Finding,
    WindowView,
    _collective_spreads,
    severity_from_ratio,
)
from .events import PathologyKind, VantagePoint
from .stats import (
    InsufficientData,
    group_skew,
    group_thinness,
    jitter_cv,
    max_gap,
    median,
    ols_slope,
    utilization,
)
from .trace import Location

K = PathologyKind
NS = VantagePoint.NORTH_SOUTH_NIC
PCIE = VantagePoint.PCIE_OBSERVER
EW = VantagePoint.EAST_WEST_FABRIC


@dataclass(frozen=True)
class DetectorCatalogEntry:
    kind: PathologyKind
    vantage: VantagePoint
    event_selector: tuple[str, ...]
    predicate: str
    threshold_key: str
    location_rule: str
    signal: str
    root_cause: str
    directives: tuple[str, ...]


# --- detector families ------------------------------------------------------


def detect_rate_spike(view: WindowView, entry) -> list[Finding]:
    """Ingress rate and RX queue depth both spike above baseline."""
    cfg = view.cfg
    out = []
    ing = view.rows("ingress")
    qs = view.rows("queue")
    by_node: dict[int, int] = {}
    for _t, n, *_ in ing:
        by_node[n] = by_node.get(n, 0) + 1
    rx_by_node: dict[int, int] = {}
    for _t, n, rxd, *_ in qs:
        rx_by_node[n] = max(rx_by_node.get(n, 0), rxd)
    win_s = view.length_ns / 1e9
    for n in sorted(by_node):
        count = by_node[n]
        if count < cfg.min_events or n not in rx_by_node:
            continue
        base_rate = view.base.ingress_rate.get(n)
        base_rx = view.base.rx_depth.get(n)
        if not base_rate or not base_rx:
            continue
        rate = count / win_s
        max_rx = rx_by_node[n]
        if rate > cfg.gap_factor * base_rate and max_rx > cfg.gap_factor * base_rx:
            out.append(
                Finding(
                    kind=entry.kind,
                    start=view.ws,
                    end=view.we,
                    location=Location(node=n),
                    severity=severity_from_ratio(
                        rate, cfg.gap_factor * base_rate, cfg.ceiling_factor
                    ),
                    evidence={
                        "observed_rate_per_s": rate,
                        "baseline_rate_per_s": base_rate,
                        "max_rx_depth": max_rx,
                        "baseline_rx_depth": base_rx,
                    },
                )
            )
    return out


_GAP_STREAMS = {
    K.INGRESS_STARVATION: "flow",
    K.H2D_STARVATION: "h2d",
    K.KERNEL_LAUNCH_LATENCY: "bell",
    K.CREDIT_STARVATION: "credit",
}


def detect_gap_starvation(view: WindowView, entry) -> list[Finding]:
    """Max gap in one tracked stream far exceeds its baseline spacing.

    The gap statistic includes the carry-in gap from the last event
    before the window and the trailing open gap, so silences spanning
    windows are seen while they are still growing.
    """
    cfg = view.cfg
    mode = _GAP_STREAMS[entry.kind]
    out = []

    if mode == "flow":
        rows = view.rows("ingress")
        if len(rows) < cfg.min_events:
            return out
        per: dict[int, list[int]] = {}
        for t, _n, flow, *_ in rows:
            per.setdefault(flow, []).append(t)
        for flow in sorted(view.base.flow_gap):
            g0 = view.base.flow_gap[flow]
            obs = view.gap_with_carryin(
                per.get(flow, []), view.track.flow_last.get(flow), cfg.burst_coalesce_ns
            )
            if obs > cfg.gap_factor * g0:
                out.append(
                    Finding(
                        kind=entry.kind,
                        start=view.ws,
                        end=view.we,
                        location=Location(node=view.base.flow_node.get(flow), flow=flow),
                        severity=severity_from_ratio(obs, cfg.gap_factor * g0, cfg.ceiling_factor),
                        evidence={"observed_gap_ns": obs, "baseline_gap_ns": g0},
                    )
                )
        return out

    table, base_map, last_map = {
        "h2d": ("h2d", view.base.h2d_gap, view.track.h2d_last),
        "bell": ("bell", view.base.bell_gap, view.track.bell_last),
        "credit": ("credit", view.base.credit_gap, view.track.credit_last),
    }[mode]
    rows = view.rows(table)
    if len(rows) < cfg.min_events:
        return out
    per_key: dict[tuple, list[int]] = {}
    for t, n, ident, *_ in rows:
        per_key.setdefault((n, ident), []).append(t)
    for key in sorted(base_map):
        g0 = base_map[key]
        obs = view.gap_with_carryin(per_key.get(key, []), last_map.get(key))
        if obs > cfg.gap_factor * g0:
            node, ident = key
            loc = (
                Location(node=node, flow=ident)
                if mode == "credit"
                else Location(node=node, gpu=ident)
            )
            out.append(
                Finding(
                    kind=entry.kind,
                    start=view.ws,
                    end=view.we,
                    location=loc,
                    severity=severity_from_ratio(obs, cfg.gap_factor * g0, cfg.ceiling_factor),
                    evidence={"observed_gap_ns": obs, "baseline_gap_ns": g0},
                )
            )
    return out


def detect_group_skew_window(view: WindowView, entry) -> list[Finding]:
    """Byte volume imbalance across flows, nodes, or a node's GPUs.

    FlowSkew and CrossNodeLoadSkew flag the heaviest group (max/mean);
    IntraNodeGpuSkew flags the thin GPU (mean/min), because the
    heavy-side ratio cannot exceed 2 when one of few peers merely
    shrinks.
    """
    cfg = view.cfg
    out = []

    if entry.kind is K.FLOW_SKEW:
        # hold off until the volume smoother has settled (roughly 1/alpha
        # windows past the baseline segment)
        warmup = view.base.leading_end_ns + math.ceil(1.0 / cfg.volume_skew_alpha) * view.length_ns
        if view.ws < warmup:
            return out
        rows = view.rows("ingress")
        if len(rows) < cfg.min_events:
            return out
        vols: dict[int, int] = {}
        nodes: dict[int, dict[int, int]] = {}
        for _t, n, flow, nbytes, *_ in rows:
            vols[flow] = vols.get(flow, 0) + nbytes
            cnt = nodes.setdefault(flow, {})
            cnt[n] = cnt.get(n, 0) + 1
        # smooth per-flow volumes over recent windows: one window catching
        # two requests of a flow is burstiness, not session skew
        alpha = cfg.volume_skew_alpha
        smoothed = {
            flow: alpha * vols.get(flow, 0) + (1 - alpha) * view.track.flow_vol.get(flow, 0.0)
            for flow in set(vols) | set(view.track.flow_vol)
        }
        smoothed = {f: v for f, v in smoothed.items() if v > 0}
        try:
            ratio, heavy = group_skew(smoothed)
        except InsufficientData:
            return out
        if ratio > cfg.skew_ratio:
            counts = nodes.get(heavy) or {view.base.flow_node.get(heavy, 0): 1}
            node = min(counts, key=lambda nd: (-counts[nd], nd))
            out.append(
                Finding(
                    kind=entry.kind,
                    start=view.ws,
                    end=view.we,
                    location=Location(node=node, flow=heavy),
                    severity=severity_from_ratio(ratio, cfg.skew_ratio, cfg.ceiling_factor),
                    evidence={
                        "max_over_mean": ratio,
                        **{f"flow_{f}_bytes": round(v) for f, v in sorted(smoothed.items())},
                    },
                )
            )
        return out

    if entry.kind is K.CROSS_NODE_LOAD_SKEW:
        rows = view.rows("coll")
        if len(rows) < cfg.min_events:
            return out
        vols = {}
        for _t, n, _cid, _r, nbytes in rows:
            vols[n] = vols.get(n, 0) + nbytes
        try:
            ratio, heavy = group_skew(vols)
        except InsufficientData:
            return out
        if ratio > cfg.skew_ratio:
            out.append(
                Finding(
                    kind=entry.kind,
                    start=view.ws,
                    end=view.we,
                    location=Location(node=heavy),
                    severity=severity_from_ratio(ratio, cfg.skew_ratio, cfg.ceiling_factor),
                    evidence={
                        "max_over_mean": ratio,
                        **{f"node_{n}_bytes": v for n, v in sorted(vols.items())},
                    },
                )
            )
        return out

    # IntraNodeGpuSkew: per node, thin GPU by DMA volume
    h2d = view.rows("h2d")
    d2h = view.rows("d2h")
    if len(h2d) + len(d2h) < cfg.min_events:
        return out
    per_node: dict[int, dict[int, int]] = {}
    for _t, n, gpu, nbytes in h2d:
        per_node.setdefault(n, {}).setdefault(gpu, 0)
        per_node[n][gpu] += nbytes
    for _t, n, gpu, nbytes, _lat in d2h:
        per_node.setdefault(n, {}).setdefault(gpu, 0)
        per_node[n][gpu] += nbytes
    for n in sorted(per_node):
        vols = per_node[n]
        try:
            ratio, thin = group_thinness(vols)
        except InsufficientData:
            continue
        if ratio > cfg.skew_ratio:
            out.append(
                Finding(
                    kind=entry.kind,
                    start=view.ws,
                    end=view.we,
                    location=Location(node=n, gpu=thin),
                    severity=severity_from_ratio(
                        min(ratio, 100.0), cfg.skew_ratio, cfg.ceiling_factor
                    ),
                    evidence={
                        "mean_over_min": min(ratio, 1e9),
                        **{f"gpu_{g}_bytes": v for g, v in sorted(vols.items())},
                    },
                )
            )
    return out


def detect_retransmit(view: WindowView, entry) -> list[Finding]:
    """Flagged (retransmit/duplicate) packet fraction exceeds threshold."""
    cfg = view.cfg
    out = []
    if entry.kind is K.INGRESS_DROP_RETRANSMIT:
        rows = view.rows("ingress")
        flagged_of = lambda r: r[4]
    elif entry.kind is K.EGRESS_DROP_RETRANSMIT:
        rows = view.rows("egress")
        flagged_of = lambda r: r[5]
    else:  # RetransmissionStorm over fabric packets
        rows = view.rows("fabric")
        flagged_of = lambda r: r[4] or r[5]
    totals: dict[int, int] = {}
    flagged: dict[int, int] = {}
    for r in rows:
        n = r[1]
        totals[n] = totals.get(n, 0) + 1
        if flagged_of(r):
            flagged[n] = flagged.get(n, 0) + 1
    for n in sorted(totals):
        total = totals[n]
        if total < cfg.min_events:
            continue
        frac = flagged.get(n, 0) / total
        if frac > cfg.retransmit_frac:
            out.append(
                Finding(
                    kind=entry.kind,
                    start=view.ws,
                    end=view.we,
                    location=Location(node=n),
                    severity=severity_from_ratio(frac, cfg.retransmit_frac, cfg.ceiling_factor),
                    evidence={"flagged_frac": frac, "packets": total},
                )
            )
    return out


def detect_backlog(view: WindowView, entry) -> list[Finding]:
    """Queues growing (egress) or D2H completions lingering (PCIe)."""
    cfg = view.cfg
    out = []
    if entry.kind is K.EGRESS_BACKLOG:
        qs = view.rows("queue")
        per: dict[int, list[tuple[int, int]]] = {}
        for t, n, _rxd, txd, _rr, _tr in qs:
            per.setdefault(n, []).append((t, txd))
        for n in sorted(per):
            samples = per[n]
            base_tx = view.base.tx_depth.get(n)
            if len(samples) < 4 or not base_tx:
                continue
            xs = [float(t - view.ws) for t, _d in samples]
            ys = [float(d) for _t, d in samples]
            mean_depth = sum(ys) / len(ys)
            slope = ols_slope(xs, ys)
            if slope > 0 and mean_depth > cfg.gap_factor * base_tx:
                out.append(
                    Finding(
                        kind=entry.kind,
                        start=view.ws,
                        end=view.we,
                        location=Location(node=n),
                        severity=severity_from_ratio(
                            mean_depth, cfg.gap_factor * base_tx, cfg.ceiling_factor
                        ),
                        evidence={
                            "mean_tx_depth": mean_depth,
                            "baseline_tx_depth": base_tx,
                            "depth_slope_per_s": slope * 1e9,
                        },
                    )
                )
        return out

    # D2hBottleneck
    rows = view.rows("d2h")
    per_lat: dict[int, list[int]] = {}
    for _t, n, _g, _b, lat in rows:
        per_lat.setdefault(n, []).append(lat)
    for n in sorted(per_lat):
        lats = per_lat[n]
        base_lat = view.base.d2h_latency.get(n)
        if len(lats) < cfg.min_events or not base_lat:
            continue
        med = median(lats)
        if med > cfg.gap_factor * base_lat:
            out.append(
                Finding(
                    kind=entry.kind,
                    start=view.ws,
                    end=view.we,
                    location=Location(node=n),
                    severity=severity_from_ratio(med, cfg.gap_factor * base_lat, cfg.ceiling_factor),
                    evidence={
                        "median_completion_latency_ns": med,
                        "baseline_latency_ns": base_lat,
                    },
                )
            )
    return out


def detect_jitter_window(view: WindowView, entry) -> list[Finding]:
    """Uneven spacing: per-stream egress cadence, or cluster-wide link
    latency spikes (the many-links quorum separates congestion from HOL
    blocking)."""
    cfg = view.cfg
    out = []
    if entry.kind is K.EGRESS_JITTER:
        rows = view.rows("egress")
        per: dict[tuple[int, int, int], list[int]] = {}
        for t, n, flow, stream, _b, _r in rows:
            per.setdefault((n, flow, stream), []).append(t)
        worst: dict[int, tuple[float, int, int]] = {}
        for (n, flow, stream), times in per.items():
            if len(times) < cfg.min_events + 1:
                continue
            gaps = [b - a for a, b in zip(times, times[1:])]
            try:
                cv = jitter_cv(gaps)
            except InsufficientData:
                continue
            cur = worst.get(n)
            if cur is None or cv > cur[0]:
                worst[n] = (cv, flow, stream)
        for n in sorted(worst):
            cv, flow, stream = worst[n]
            if cv > cfg.jitter_cv:
                out.append(
                    Finding(
                        kind=entry.kind,
                        start=view.ws,
                        end=view.we,
                        location=Location(node=n, flow=flow),
                        severity=severity_from_ratio(cv, cfg.jitter_cv, cfg.ceiling_factor),
                        evidence={"gap_cv": cv, "stream": stream},
                    )
                )
        return out

    # NetworkCongestion
    rows = view.rows("link")
    per_link: dict[tuple, tuple[int, int]] = {}
    for _t, n, peer, lat, jit in rows:
        cur = per_link.get((n, peer), (0, 0))
        per_link[(n, peer)] = (max(cur[0], lat), max(cur[1], jit))
    spiked = 0
    total = 0
    ratios = []
    for key in sorted(per_link):
        base_lat = view.base.link_lat.get(key)
        base_jit = view.base.link_jit.get(key)
        if not base_lat or not base_jit:
            continue
        total += 1
        lat, jit = per_link[key]
        if lat > cfg.gap_factor * base_lat and jit > cfg.gap_factor * base_jit:
            spiked += 1
            ratios.append(lat / (cfg.gap_factor * base_lat))
    if total >= 2 and spiked >= max(1, -(-total * cfg.congestion_quorum // 1)):
        frac = spiked / total
        if frac >= cfg.congestion_quorum:
            out.append(
                Finding(
                    kind=entry.kind,
                    start=view.ws,
                    end=view.we,
                    location=Location(),
                    severity=severity_from_ratio(median(ratios) * cfg.gap_factor, cfg.gap_factor, cfg.ceiling_factor),
                    evidence={"spiked_links": spiked, "sampled_links": total},
                )
            )
    return out


def detect_saturation_window(view: WindowView, entry) -> list[Finding]:
    """Sustained utilization near capacity; the PCIe variant also wants
    at least one doorbell gap beyond baseline (compute stalls)."""
    cfg = view.cfg
    out = []
    if entry.kind is K.BANDWIDTH_SATURATION:
        cap = view.topology.nic_capacity_bytes_per_s
        per: dict[int, int] = {}
        counts: dict[int, int] = {}
        for _t, n, _f, nbytes, _r, _h in view.rows("ingress"):
            per[n] = per.get(n, 0) + nbytes
            counts[n] = counts.get(n, 0) + 1
        for _t, n, _f, _s, nbytes, _r in view.rows("egress"):
            per[n] = per.get(n, 0) + nbytes
            counts[n] = counts.get(n, 0) + 1
        for n in sorted(per):
            if counts.get(n, 0) < cfg.min_events:
                continue
            util = utilization(per[n], view.length_ns, cap)
            if util > cfg.utilization_frac:
                out.append(
                    Finding(
                        kind=entry.kind,
                        start=view.ws,
                        end=view.we,
                        location=Location(node=n),
                        severity=severity_from_ratio(util, cfg.utilization_frac, cfg.ceiling_factor),
                        evidence={"utilization": util, "capacity_bytes_per_s": cap},
                    )
                )
        return out

    # PcieLinkSaturation
    cap = view.topology.pcie_capacity_bytes_per_s
    per = {}
    counts = {}
    for _t, n, _g, nbytes in view.rows("h2d"):
        per[n] = per.get(n, 0) + nbytes
        counts[n] = counts.get(n, 0) + 1
    for _t, n, _g, nbytes, _lat in view.rows("d2h"):
        per[n] = per.get(n, 0) + nbytes
        counts[n] = counts.get(n, 0) + 1
    for _t, n, _s, _d, nbytes, _dur in view.rows("p2p"):
        per[n] = per.get(n, 0) + nbytes
        counts[n] = counts.get(n, 0) + 1
    bells: dict[int, list[int]] = {}
    for t, n, _g, _tag in view.rows("bell"):
        bells.setdefault(n, []).append(t)
    for n in sorted(per):
        if counts.get(n, 0) < cfg.min_events:
            continue
        util = utilization(per[n], view.length_ns, cap)
        base_bell = view.base.node_bell_gap.get(n)
        if util > cfg.utilization_frac and base_bell:
            bell_gap = view.gap_with_carryin(bells.get(n, []), view.track.node_bell_last.get(n))
            if bell_gap > base_bell:
                out.append(
                    Finding(
                        kind=entry.kind,
                        start=view.ws,
                        end=view.we,
                        location=Location(node=n),
                        severity=severity_from_ratio(util, cfg.utilization_frac, cfg.ceiling_factor),
                        evidence={
                            "utilization": util,
                            "max_doorbell_gap_ns": bell_gap,
                            "baseline_doorbell_gap_ns": base_bell,
                        },
                    )
                )
    return out


def detect_early_stop(view: WindowView, entry) -> list[Finding]:
    """A member fell silent while peers stayed active.

    Members are long-lived streams (node egress, GPU D2H, node east-west
    sends) so natural per-request completions never trip this; the
    silence must also dwarf the member's own baseline activity gap.
    """
    cfg = view.cfg
    out = []
    if entry.kind is K.EARLY_COMPLETION_SKEW:
        members = view.base.egress_members
        rows = view.rows("egress")
        active = {r[1] for r in rows}
        last_map = view.track.egress_node_last
        prefix = "egress"
        key_of = lambda m: (m,)
        loc_of = lambda m: Location(node=m)
    elif entry.kind is K.DECODE_EARLY_STOP_SKEW:
        members = view.base.d2h_members
        rows = view.rows("d2h")
        active = {(r[1], r[2]) for r in rows}
        last_map = view.track.d2h_gpu_last
        prefix = "d2h"
        key_of = lambda m: m
        loc_of = lambda m: Location(node=m[0], gpu=m[1])
    else:  # EarlyStopSkewAcrossNodes
        members = view.base.ew_members
        rows = view.rows("coll")
        active = {r[1] for r in rows}
        last_map = view.track.ew_node_last
        prefix = "ew"
        key_of = lambda m: (m,)
        loc_of = lambda m: Location(node=m)

    if len(members) < 2 or not active:
        return out
    for m in members:
        if m in active:
            continue
        last = last_map.get(m)
        if last is None or last >= view.ws:
            continue
        base_gap = view.base.member_maxgap.get((prefix,) + key_of(m))
        if not base_gap:
            continue
        silence = view.we - last
        if silence > cfg.gap_factor * base_gap:
            out.append(
                Finding(
                    kind=entry.kind,
                    start=view.ws,
                    end=view.we,
                    location=loc_of(m),
                    severity=severity_from_ratio(
                        silence, cfg.gap_factor * base_gap, cfg.ceiling_factor
                    ),
                    evidence={
                        "silence_ns": silence,
                        "baseline_activity_gap_ns": base_gap,
                        "active_peers": len(active),
                    },
                )
            )
    return out


def detect_arrival_spread_window(view: WindowView, entry) -> list[Finding]:
    """Median per-collective arrival spread far above baseline."""
    cfg = view.cfg
    rows = view.rows("coll")
    complete, spreads, incomplete = _collective_spreads(rows, view.topology.tp_degree)
    if not spreads or view.base.coll_spread is None:
        return []
    med = median(spreads.values())
    thr = cfg.spread_factor * view.base.coll_spread
    if med <= thr:
        return []
    # straggler: rank with the latest median arrival offset; its node is
    # where that rank's last-arriving bursts were emitted
    offsets: dict[int, list[int]] = {}
    node_counts: dict[int, int] = {}
    for cid, arr in complete.items():
        t0 = min(t for t, _n in arr.values())
        for r, (t, _n) in arr.items():
            offsets.setdefault(r, []).append(t - t0)
    rank = min(offsets, key=lambda r: (-median(offsets[r]), r))
    for cid, arr in complete.items():
        last_rank = max(arr, key=lambda r: (arr[r][0], r))
        if last_rank == rank:
            n = arr[rank][1]
            node_counts[n] = node_counts.get(n, 0) + 1
    node = min(node_counts, key=lambda nd: (-node_counts[nd], nd)) if node_counts else None
    return [
        Finding(
            kind=entry.kind,
            start=view.ws,
            end=view.we,
            location=Location(node=node, rank=rank),
            severity=severity_from_ratio(med, thr, cfg.ceiling_factor),
            evidence={
                "median_spread_ns": med,
                "baseline_spread_ns": view.base.coll_spread,
                "incomplete_collectives": incomplete,
            },
        )
    ]


def detect_stage_bubble(view: WindowView, entry) -> list[Finding]:
    """Handoff gaps at one pipeline boundary blow up or keep growing."""
    cfg = view.cfg
    out = []
    rows = view.rows("hand")
    per: dict[int, list[int]] = {}
    for t, _n, fs, *_ in rows:
        per.setdefault(fs, []).append(t)
    for fs in sorted(view.base.handoff_gap):
        g0 = view.base.handoff_gap[fs]
        times = per.get(fs, [])
        obs = view.gap_with_carryin(
            times, view.track.handoff_last.get(fs), cfg.handoff_coalesce_ns
        )
        fired = obs > cfg.gap_factor * g0
        growing = False
        run_growth = 0.0
        if not fired and len(times) >= cfg.bubble_growth_run + 1:
            from .stats import coalesce as _coalesce

            gts = _coalesce(times, cfg.handoff_coalesce_ns)
            gaps = [b - a for a, b in zip(gts, gts[1:])]
            # a growth run must start at or above baseline: runs climbing
            # out of compressed sub-baseline spacing are not a growing
            # bubble, and bounded noise cannot double across a run
            i = 0
            while i < len(gaps):
                if gaps[i] < g0:
                    i += 1
                    continue
                j = i
                while j + 1 < len(gaps) and gaps[j + 1] > gaps[j]:
                    j += 1
                if j - i + 1 >= cfg.bubble_growth_run:
                    growth = gaps[j] / gaps[i]
                    if growth >= cfg.bubble_growth_min:
                        growing = True
                        run_growth = max(run_growth, growth)
                i = j + 1
        if fired or growing:
            sev = (
                severity_from_ratio(obs, cfg.gap_factor * g0, cfg.ceiling_factor)
                if fired
                else severity_from_ratio(run_growth, cfg.bubble_growth_min, cfg.ceiling_factor)
            )
            out.append(
                Finding(
                    kind=entry.kind,
                    start=view.ws,
                    end=view.we,
                    location=Location(stage=fs),
                    severity=sev,
                    evidence={
                        "max_handoff_gap_ns": obs,
                        "baseline_gap_ns": g0,
                        "growing_run": growing,
                    },
                )
            )
    return out


def detect_hol_blocking(view: WindowView, entry) -> list[Finding]:
    """One fabric stream stalls while a sibling on the same node keeps
    its cadence (congestion would stall them all)."""
    cfg = view.cfg
    out = []
    rows = view.rows("fabric")
    per: dict[int, list[int]] = {}
    for t, _n, flow, *_ in rows:
        per.setdefault(flow, []).append(t)
    by_node: dict[int, list[int]] = {}
    for flow in view.base.fabric_gap:
        by_node.setdefault(view.base.fabric_node[flow], []).append(flow)
    for n in sorted(by_node):
        flows = by_node[n]
        if len(flows) < 2:
            continue
        gaps = {}
        for flow in flows:
            gaps[flow] = view.gap_with_carryin(per.get(flow, []), view.track.fabric_last.get(flow))
        for flow in sorted(flows):
            g0 = view.base.fabric_gap[flow]
            if gaps[flow] <= cfg.gap_factor * g0:
                continue
            siblings_ok = any(
                gaps[sib] <= 2.0 * view.base.fabric_gap[sib]
                for sib in flows
                if sib != flow
            )
            if siblings_ok:
                out.append(
                    Finding(
                        kind=entry.kind,
                        start=view.ws,
                        end=view.we,
                        location=Location(node=n, flow=flow),
                        severity=severity_from_ratio(
                            gaps[flow], cfg.gap_factor * g0, cfg.ceiling_factor
                        ),
                        evidence={"observed_gap_ns": gaps[flow], "baseline_gap_ns": g0},
                    )
                )
    return out


def detect_fragmentation(view: WindowView, entry) -> list[Finding]:
    """Many small DMAs where large coalesced ones used to be, with the
    per-window DMA count well above baseline."""
    cfg = view.cfg
    out = []
    sizes: dict[int, list[int]] = {}
    for _t, n, _g, nbytes in view.rows("h2d"):
        sizes.setdefault(n, []).append(nbytes)
    for _t, n, _g, nbytes, _lat in view.rows("d2h"):
        sizes.setdefault(n, []).append(nbytes)
    for n in sorted(sizes):
        vals = sizes[n]
        base_count = view.base.dma_count.get(n)
        if len(vals) < cfg.min_events or not base_count:
            continue
        small = sum(1 for v in vals if v < cfg.small_dma_bytes)
        frac = small / len(vals)
        if frac > cfg.small_dma_frac and len(vals) > cfg.gap_factor * base_count:
            out.append(
                Finding(
                    kind=entry.kind,
                    start=view.ws,
                    end=view.we,
                    location=Location(node=n),
                    severity=severity_from_ratio(
                        len(vals), cfg.gap_factor * base_count, cfg.ceiling_factor
                    ),
                    evidence={
                        "small_dma_frac": frac,
                        "dma_count": len(vals),
                        "baseline_dma_count": base_count,
                    },
                )
            )
    return out


def detect_host_bottleneck(view: WindowView, entry) -> list[Finding]:
    """Low PCIe utilization, delayed doorbells on several of the node's
    GPUs at once, and pending ingress: bandwidth is there, the host is
    not feeding it.  The multi-GPU doorbell quorum separates node-wide
    host lag from a single GPU's launch latency."""
    cfg = view.cfg
    out = []
    cap = view.topology.pcie_capacity_bytes_per_s
    per: dict[int, int] = {}
    for _t, n, _g, nbytes in view.rows("h2d"):
        per[n] = per.get(n, 0) + nbytes
    for _t, n, _g, nbytes, _lat in view.rows("d2h"):
        per[n] = per.get(n, 0) + nbytes
    bells: dict[tuple, list[int]] = {}
    for t, n, g, _tag in view.rows("bell"):
        bells.setdefault((n, g), []).append(t)
    gpus_by_node: dict[int, list[tuple]] = {}
    for key in view.base.bell_gap:
        gpus_by_node.setdefault(key[0], []).append(key)
    lookback = cfg.ingress_lookback_windows * view.length_ns
    for n in sorted(gpus_by_node):
        keys = gpus_by_node[n]
        util = utilization(per.get(n, 0), view.length_ns, cap)
        if util >= (1.0 - cfg.utilization_frac):
            continue
        lagging = []
        for key in keys:
            g0 = view.base.bell_gap[key]
            obs = view.gap_with_carryin(bells.get(key, []), view.track.bell_last.get(key))
            if obs > cfg.gap_factor * g0:
                lagging.append((obs / (cfg.gap_factor * g0), key[1]))
        if len(lagging) < min(2, len(keys)):
            continue
        last_ingress = view.track.ingress_node_last.get(n)
        for t, nn, *_ in view.rows("ingress"):
            if nn == n:
                last_ingress = max(last_ingress or 0, t)
        if last_ingress is None or last_ingress < view.we - lookback:
            continue
        worst = max(r for r, _g in lagging)
        out.append(
            Finding(
                kind=entry.kind,
                start=view.ws,
                end=view.we,
                location=Location(node=n),
                severity=severity_from_ratio(
                    worst * cfg.gap_factor, cfg.gap_factor, cfg.ceiling_factor
                ),
                evidence={
                    "pcie_utilization": util,
                    "lagging_gpus": len(lagging),
                    "worst_gap_over_threshold": worst,
                },
            )
        )
    return out


def detect_registration_churn(view: WindowView, entry) -> list[Finding]:
    """Map/unmap traffic disproportionate to the DMAs it serves."""
    cfg = view.cfg
    out = []
    dmas: dict[int, int] = {}
    for _t, n, *_ in view.rows("h2d"):
        dmas[n] = dmas.get(n, 0) + 1
    for _t, n, *_ in view.rows("d2h"):
        dmas[n] = dmas.get(n, 0) + 1
    regs: dict[int, int] = {}
    for _t, n, _b, _dir in view.rows("mem"):
        regs[n] = regs.get(n, 0) + 1
    for n in sorted(dmas):
        count = dmas[n]
        if count < cfg.min_events:
            continue
        ratio = regs.get(n, 0) / count
        if ratio > cfg.churn_rate:
            out.append(
                Finding(
                    kind=entry.kind,
                    start=view.ws,
                    end=view.we,
                    location=Location(node=n),
                    severity=severity_from_ratio(ratio, cfg.churn_rate, cfg.ceiling_factor),
                    evidence={"registrations_per_dma": ratio, "dma_count": count},
                )
            )
    return out


def detect_p2p_throttle(view: WindowView, entry) -> list[Finding]:
    """Peer-to-peer DMAs slow down or turn erratic."""
    cfg = view.cfg
    out = []
    per: dict[int, list[float]] = {}
    for _t, n, _s, _d, nbytes, dur in view.rows("p2p"):
        per.setdefault(n, []).append(nbytes * 1e9 / dur)
    for n in sorted(per):
        tputs = per[n]
        base_tput = view.base.p2p_tput.get(n)
        if len(tputs) < 2 or not base_tput:
            continue
        med = median(tputs)
        slow = med < base_tput / cfg.gap_factor
        try:
            cv = jitter_cv(tputs)
        except InsufficientData:
            cv = 0.0
        erratic = cv > cfg.jitter_cv
        if slow or erratic:
            sev = (
                severity_from_ratio(base_tput / med if med else cfg.ceiling_factor * cfg.gap_factor, cfg.gap_factor, cfg.ceiling_factor)
                if slow
                else severity_from_ratio(cv, cfg.jitter_cv, cfg.ceiling_factor)
            )
            out.append(
                Finding(
                    kind=entry.kind,
                    start=view.ws,
                    end=view.we,
                    location=Location(node=n),
                    severity=sev,
                    evidence={
                        "median_throughput_bytes_per_s": med,
                        "baseline_throughput_bytes_per_s": base_tput,
                        "throughput_cv": cv,
                    },
                )
            )
    return out


def detect_kv_burst_imbalance(view: WindowView, entry) -> list[Finding]:
    """Some token tags hog the handoff with repeated oversized bursts."""
    cfg = view.cfg
    out = []
    rows = view.rows("hand")
    per_boundary: dict[int, dict[int, list[int]]] = {}
    for _t, _n, fs, _ts2, _mb, nbytes, tag in rows:
        per_boundary.setdefault(fs, {}).setdefault(tag, []).append(nbytes)
    for fs in sorted(per_boundary):
        sizes_by_tag = per_boundary[fs]
        if len(sizes_by_tag) < 2:
            continue
        mean_by_tag = {tag: sum(v) / len(v) for tag, v in sizes_by_tag.items()}
        try:
            ratio, heavy = group_skew(mean_by_tag)
        except InsufficientData:
            continue
        if ratio > cfg.skew_ratio and len(sizes_by_tag[heavy]) >= 3:
            # location anchors at the boundary; the heavy tag itself is
            # request-scoped and rotates, so it rides in the evidence
            out.append(
                Finding(
                    kind=entry.kind,
                    start=view.ws,
                    end=view.we,
                    location=Location(stage=fs),
                    severity=severity_from_ratio(ratio, cfg.skew_ratio, cfg.ceiling_factor),
                    evidence={
                        "mean_burst_skew": ratio,
                        "heavy_token_tag": heavy,
                        "heavy_tag_bursts": len(sizes_by_tag[heavy]),
                        "tags_in_window": len(sizes_by_tag),
                    },
                )
            )
    return out


FAMILY_FNS = {
    "rate_spike": detect_rate_spike,
    "gap_starvation": detect_gap_starvation,
    "group_skew": detect_group_skew_window,
    "retransmit": detect_retransmit,
    "backlog": detect_backlog,
    "jitter": detect_jitter_window,
    "saturation": detect_saturation_window,
    "early_stop": detect_early_stop,
    "arrival_spread": detect_arrival_spread_window,
    "stage_bubble": detect_stage_bubble,
    "hol_blocking": detect_hol_blocking,
    "fragmentation": detect_fragmentation,
    "host_bottleneck": detect_host_bottleneck,
    "registration_churn": detect_registration_churn,
    "p2p_throttle": detect_p2p_throttle,
    "kv_burst_imbalance": detect_kv_burst_imbalance,
}


def _e(kind, vantage, selector, predicate, threshold_key, location_rule, signal, root_cause, directives):
    return DetectorCatalogEntry(
        kind=kind,
        vantage=vantage,
        event_selector=selector,
        predicate=predicate,
        threshold_key=threshold_key,
        location_rule=location_rule,
        signal=signal,
        root_cause=root_cause,
        directives=directives,
    )


CATALOG: tuple[DetectorCatalogEntry, ...] = (
    # --- NIC north-south ---------------------------------------------------
    _e(
        K.BURST_ADMISSION_BACKLOG, NS, ("IngressPacket", "NicQueueSample"),
        "rate_spike", "gap_factor", "node with the spike",
        "Sudden spikes of ingress requests followed by queueing delay",
        "Load spike from clients, front-end batching, NIC queue limits",
        ("Smooth input batching", "rate-limit clients", "increase NIC queue depth"),
    ),
    _e(
        K.INGRESS_STARVATION, NS, ("IngressPacket",),
        "gap_starvation", "gap_factor", "starved flow and its home node",
        "Long gaps between ingress packets for some tokens",
        "Upstream service jitter, uneven client distribution",
        ("Balance load balancer hashing", "check NIC RSS/flow steering"),
    ),
    _e(
        K.FLOW_SKEW, NS, ("IngressPacket",),
        "group_skew", "skew_ratio", "heaviest flow and its home node",
        "Some ingress flows high-volume, others sparse",
        "Session affinity mismatch, QUIC stream imbalance",
        ("Verify flow hashing", "rebalance RPC streams"),
    ),
    _e(
        K.INGRESS_DROP_RETRANSMIT, NS, ("IngressPacket",),
        "retransmit", "retransmit_frac", "node receiving the retransmits",
        "Missing or retransmitted initial packets (e.g., handshake retries)",
        "Congestion, MTU mismatch, link errors",
        ("Enable NIC offloads (TSO/GRO)", "verify MTU settings", "check cabling"),
    ),
    _e(
        K.EGRESS_BACKLOG, NS, ("NicQueueSample",),
        "backlog", "gap_factor", "node whose TX queue grows",
        "Responses accumulate in NIC queues before send",
        "CPU copy bottleneck, NIC buffer exhaustion",
        ("Offload checksums", "use zero-copy send", "increase NIC buffer size"),
    ),
    _e(
        K.EGRESS_JITTER, NS, ("EgressPacket",),
        "jitter", "jitter_cv", "node and worst-cadence stream",
        "Outgoing packets for a token are spread unevenly over time",
        "Scheduler variance, CPU/NIC contention",
        ("Isolate runtime threads", "pin NIC IRQs", "increase batching window"),
    ),
    _e(
        K.EGRESS_DROP_RETRANSMIT, NS, ("EgressPacket",),
        "retransmit", "retransmit_frac", "node sending the retransmits",
        "Retransmissions or gaps in final response streams",
        "NIC offload misconfig, fabric congestion, buffer underrun",
        ("Check offload settings", "enable congestion control (ECN/PFC)"),
    ),
    _e(
        K.EARLY_COMPLETION_SKEW, NS, ("EgressPacket",),
        "early_stop", "gap_factor", "node whose egress fell silent",
        "Some egress flows terminate far earlier than peers",
        "Early-stop on short sequences; no remap of freed resources",
        ("Enable inflight remapping / load stealing for decode",),
    ),
    _e(
        K.BANDWIDTH_SATURATION, NS, ("IngressPacket", "EgressPacket"),
        "saturation", "utilization_frac", "saturated node",
        "NIC RX/TX at or near link capacity; queue buildup",
        "Shared NIC with storage/other jobs; insufficient link",
        ("Upgrade NIC", "QoS partitioning", "stagger workloads"),
    ),
    # --- PCIe observer -------------------------------------------------------
    _e(
        K.H2D_STARVATION, PCIE, ("DmaH2D",),
        "gap_starvation", "gap_factor", "starved GPU's H2D stream",
        "Large/clustered H2D DMAs followed by long gaps before doorbells/kernels",
        "PCIe BW cap, NUMA miss, pageable (unpinned) host buffers",
        ("Pin memory", "bind to correct NUMA socket", "verify PCIe link width/speed"),
    ),
    _e(
        K.D2H_BOTTLENECK, PCIE, ("DmaD2H",),
        "backlog", "gap_factor", "node with lingering D2H completions",
        "D2H DMAs linger / complete slowly; backlog after kernels",
        "PCIe saturation, IOMMU contention, CPU copy hotspots",
        ("Enable large pinned buffers", "reduce copies", "check IOMMU/ATS config"),
    ),
    _e(
        K.KERNEL_LAUNCH_LATENCY, PCIE, ("DoorbellWrite",),
        "gap_starvation", "gap_factor", "GPU with sporadic doorbells",
        "Doorbells sporadic; long idle gaps between small H2D bursts and next launch",
        "Runtime overhead, CPU scheduler delays, too many tiny kernels",
        ("Batch ops", "fuse kernels", "raise runtime launch queues", "isolate CPU cores"),
    ),
    _e(
        K.INTRA_NODE_GPU_SKEW, PCIE, ("DmaH2D", "DmaD2H"),
        "group_skew", "skew_ratio", "thin GPU within its node",
        "One GPU shows thin/irregular DMA; peers steady",
        "Uneven microbatching, memory pressure on a single GPU",
        ("Rebalance microbatches", "unify stream priorities", "check that GPU's memory and clocks"),
    ),
    _e(
        K.PCIE_LINK_SATURATION, PCIE, ("DmaH2D", "DmaD2H", "DmaP2P", "DoorbellWrite"),
        "saturation", "utilization_frac", "saturated node",
        "Sustained near-peak PCIe throughput; compute stalls periodically",
        "Oversubscribed PCIe switch / x8 link, competing DMAs (storage/NIC)",
        ("Verify x16 Gen/lanes", "move devices off shared switch", "stagger I/O"),
    ),
    _e(
        K.P2P_THROTTLING, PCIE, ("DmaP2P",),
        "p2p_throttle", "gap_factor", "node whose P2P path throttles",
        "P2P DMAs slow/variable; no NVLink path",
        "Shared uplink on PCIe switch; ACS/ATS settings",
        ("Prefer NVLink/NVSwitch", "if PCIe, place GPUs under same switch", "tune ACS/ATS"),
    ),
    _e(
        K.PINNED_MEMORY_FRAGMENTATION, PCIE, ("DmaH2D", "DmaD2H"),
        "fragmentation", "small_dma_frac", "node with fragmented DMA",
        "Many small DMAs vs large coalesced; rising DMA count",
        "Insufficient pinned pools; fallback to pageable",
        ("Pre-allocate larger pinned pools", "coalesce transfers"),
    ),
    _e(
        K.HOST_CPU_BOTTLENECK, PCIE, ("DmaH2D", "DmaD2H", "DoorbellWrite", "IngressPacket"),
        "host_bottleneck", "gap_factor", "node whose host lags",
        "Low DMA rate despite available PCIe BW; delayed doorbells",
        "CPU contention, IRQ affinity, polling disabled",
        ("Isolate IRQs/threads", "enable busy-poll where appropriate", "pin runtime threads"),
    ),
    _e(
        K.REGISTRATION_CHURN, PCIE, ("MemRegister", "MemUnregister", "DmaH2D", "DmaD2H"),
        "registration_churn", "churn_rate", "node with map/unmap churn",
        "Frequent map/unmap patterns around DMAs",
        "Repeated registration due to short-lived buffers",
        ("Reuse registered buffers", "RDMA/GPUDirect with persistent MR"),
    ),
    _e(
        K.DECODE_EARLY_STOP_SKEW, PCIE, ("DmaD2H",),
        "early_stop", "gap_factor", "GPU whose D2H dropped off",
        "D2H drops off early on some streams/GPUs",
        "Sequence length variance; scheduler not rebalancing",
        ("Enable inflight request remapping/packing", "speculative decode policies"),
    ),
    # --- East-west fabric ----------------------------------------------------
    _e(
        K.TP_STRAGGLER, EW, ("CollectiveBurst",),
        "arrival_spread", "spread_factor", "rank with the latest median arrival",
        "Wide arrival spread of collective bursts (max-min arrival gap rising)",
        "Skewed GPU load, PCIe starvation, memory imbalance on one node",
        ("Rebalance shards", "check PCIe feeds per node", "adjust affinity"),
    ),
    _e(
        K.PP_BUBBLE, EW, ("StageHandoff",),
        "stage_bubble", "gap_factor", "stage boundary with the bubble",
        "Large or growing gaps between stage handoff bursts",
        "Load imbalance across pipeline stages, early token exit variance",
        ("Adjust microbatch partitioning", "reassign stages", "speculative fill"),
    ),
    _e(
        K.CROSS_NODE_LOAD_SKEW, EW, ("CollectiveBurst",),
        "group_skew", "skew_ratio", "heaviest node",
        "Uneven traffic volume per node for same collective",
        "Shard imbalance, misaligned activation partitioning",
        ("Validate shard sizes", "rebalance across nodes"),
    ),
    _e(
        K.NETWORK_CONGESTION, EW, ("LinkSample",),
        "jitter", "gap_factor", "cluster-wide (no single location)",
        "Periodic spikes in latency + jitter across many links",
        "Fat-tree oversubscription, ToR link hot spot",
        ("Check fabric counters", "enable adaptive routing", "spread ranks"),
    ),
    _e(
        K.HEAD_OF_LINE_BLOCKING, EW, ("FabricPacket",),
        "hol_blocking", "gap_factor", "stalled stream and its source node",
        "Some streams stall while others flow; out-of-order bursts",
        "Shared queue depth exhaustion, RoCE/NIC queue imbalance",
        ("Increase NIC queue depth", "enable QoS/ECN", "verify fair sharing"),
    ),
    _e(
        K.RETRANSMISSION_STORM, EW, ("FabricPacket",),
        "retransmit", "retransmit_frac", "node emitting the storm",
        "Gaps + duplicate traffic or sudden retransmit storms",
        "Fabric errors, congestion collapse, misconfigured PFC",
        ("Verify lossless config", "tune buffer thresholds", "check optics/cabling"),
    ),
    _e(
        K.CREDIT_STARVATION, EW, ("RdmaCreditUpdate",),
        "gap_starvation", "gap_factor", "queue pair awaiting credit",
        "Long silence periods until remote credit update",
        "Too-small RDMA window, NIC credit depletion",
        ("Increase QP window", "tune flow control params"),
    ),
    _e(
        K.KV_CACHE_TRANSFER_BOTTLENECK, EW, ("StageHandoff",),
        "kv_burst_imbalance", "skew_ratio", "boundary and the heavy token tag",
        "Repeated large bursts for some tokens, others silent",
        "Sharded KV too large for link budget; non-uniform length",
        ("Compress KV", "shard differently", "apply caching policies"),
    ),
    _e(
        K.EARLY_STOP_SKEW_ACROSS_NODES, EW, ("CollectiveBurst",),
        "early_stop", "gap_factor", "node that stopped sending",
        "Some nodes stop sending mid-iteration while others continue",
        "Sequence length divergence; scheduler not masking early exits",
        ("Enable dynamic remapping", "mask early-stop ranks"),
    ),
)

CATALOG_BY_KIND: dict[PathologyKind, DetectorCatalogEntry] = {e.kind: e for e in CATALOG}

assert len(CATALOG) == 28 and len(CATALOG_BY_KIND) == 28, "catalog must cover all 28 kinds"
