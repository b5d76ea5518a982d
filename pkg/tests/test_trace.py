"""Trace container: validation, merge, slicing, file round-trip."""

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from skewscope.events import (
    VANTAGE_ORDER,
    CollectiveBurst,
    DmaD2H,
    DmaH2D,
    DoorbellWrite,
    EgressPacket,
    IngressPacket,
    LinkSample,
    NicQueueSample,
    PathologyKind,
    StageHandoff,
    TelemetryEvent,
    VantagePoint,
)
from skewscope.trace import (
    ClusterTopology,
    InjectionRecord,
    Location,
    Trace,
    TopologyError,
    merge_traces,
    validate_trace,
    window_slice,
)
from skewscope.traceio import TraceFormatError, read_trace, write_trace

NS = VantagePoint.NORTH_SOUTH_NIC
PCIE = VantagePoint.PCIE_OBSERVER
EW = VantagePoint.EAST_WEST_FABRIC

TOPO = ClusterTopology(
    num_nodes=2,
    gpus_per_node=2,
    tp_degree=2,
    pp_stages=2,
    nic_capacity_bytes_per_s=10**10,
    pcie_capacity_bytes_per_s=16 * 10**9,
    fabric_base_latency_ns=2000,
    fabric_jitter_ns=200,
)


def ev(ts, vantage, node, payload):
    return TelemetryEvent(ts=ts, vantage=vantage, node_id=node, payload=payload)


_payloads = st.one_of(
    st.builds(
        IngressPacket,
        flow_id=st.integers(0, 7),
        bytes=st.integers(1, 10**6),
        is_retransmit=st.booleans(),
        is_handshake=st.booleans(),
    ).map(lambda p: (NS, p)),
    st.builds(
        EgressPacket,
        flow_id=st.integers(0, 7),
        bytes=st.integers(1, 10**6),
        is_retransmit=st.booleans(),
        stream_id=st.integers(0, 99),
    ).map(lambda p: (NS, p)),
    st.builds(
        NicQueueSample,
        rx_depth_pkts=st.integers(0, 100),
        tx_depth_pkts=st.integers(0, 100),
        rx_bytes_per_s=st.integers(0, 10**9),
        tx_bytes_per_s=st.integers(0, 10**9),
    ).map(lambda p: (NS, p)),
    st.builds(DmaH2D, gpu_id=st.integers(0, 1), bytes=st.integers(1, 10**7)).map(
        lambda p: (PCIE, p)
    ),
    st.builds(
        DmaD2H,
        gpu_id=st.integers(0, 1),
        bytes=st.integers(1, 10**7),
        completion_latency_ns=st.integers(0, 10**6),
    ).map(lambda p: (PCIE, p)),
    st.builds(DoorbellWrite, gpu_id=st.integers(0, 1), stream_tag=st.integers(0, 7)).map(
        lambda p: (PCIE, p)
    ),
    st.builds(
        CollectiveBurst,
        collective_id=st.integers(0, 999),
        rank=st.integers(0, 1),
        bytes=st.integers(1, 10**7),
    ).map(lambda p: (EW, p)),
    st.builds(
        StageHandoff,
        from_stage=st.integers(0, 1),
        to_stage=st.integers(0, 1),
        microbatch_id=st.integers(0, 999),
        bytes=st.integers(1, 10**7),
        token_tag=st.integers(0, 99),
    ).map(lambda p: (EW, p)),
    st.builds(
        LinkSample,
        peer_node=st.integers(0, 1),
        latency_ns=st.integers(0, 10**6),
        jitter_ns=st.integers(0, 10**5),
    ).map(lambda p: (EW, p)),
)


@st.composite
def traces(draw):
    n = draw(st.integers(0, 60))
    raw = [
        (draw(st.integers(0, 10**6)), draw(st.integers(0, 1)), draw(_payloads))
        for _ in range(n)
    ]
    keyed = sorted(
        (ts, VANTAGE_ORDER[vp], i, node, payload)
        for i, (ts, node, (vp, payload)) in enumerate(raw)
    )
    events = [
        TelemetryEvent(ts=ts, vantage=list(VANTAGE_ORDER)[vo], node_id=node, payload=p)
        for ts, vo, _i, node, p in keyed
    ]
    injections = []
    if draw(st.booleans()):
        injections.append(
            InjectionRecord(
                kind=draw(st.sampled_from(list(PathologyKind))),
                start=draw(st.integers(0, 10**5)),
                end=draw(st.integers(2 * 10**5, 10**6)),
                location=Location(node=draw(st.integers(0, 1))),
                magnitude=draw(st.floats(1.0, 10.0, allow_nan=False)),
            )
        )
    return Trace(topology=TOPO, epoch_ns=draw(st.integers(0, 10**9)), events=events, injections=injections)


class TestValidate:
    def test_empty_trace_valid(self):
        assert validate_trace(Trace(TOPO, 0, [])).ok

    def test_vantage_payload_mismatch(self):
        t = Trace(TOPO, 0, [ev(5, NS, 0, DmaH2D(gpu_id=0, bytes=10))])
        report = validate_trace(t)
        assert len(report.violations) == 1
        assert "payload/vantage mismatch at index 0" in report.violations[0].message

    def test_non_monotonic_timestamp(self):
        t = Trace(
            TOPO, 0,
            [
                ev(5, PCIE, 0, DmaH2D(gpu_id=0, bytes=10)),
                ev(3, PCIE, 0, DmaH2D(gpu_id=0, bytes=10)),
            ],
        )
        report = validate_trace(t)
        assert len(report.violations) == 1
        assert "non-monotonic timestamp at index 1" in report.violations[0].message

    def test_id_bounds(self):
        t = Trace(TOPO, 0, [ev(1, PCIE, 0, DmaH2D(gpu_id=9, bytes=10))])
        assert any("gpu_id" in v.message for v in validate_trace(t).violations)
        t = Trace(TOPO, 0, [ev(1, EW, 0, CollectiveBurst(collective_id=0, rank=5, bytes=1))])
        assert any("rank" in v.message for v in validate_trace(t).violations)

    def test_nonpositive_bytes(self):
        t = Trace(TOPO, 0, [ev(1, PCIE, 0, DmaH2D(gpu_id=0, bytes=0))])
        assert any("bytes" in v.message for v in validate_trace(t).violations)

    def test_infeasible_topology_rejected(self):
        with pytest.raises(TopologyError):
            ClusterTopology(
                num_nodes=1, gpus_per_node=2, tp_degree=4, pp_stages=2,
                nic_capacity_bytes_per_s=1, pcie_capacity_bytes_per_s=1,
                fabric_base_latency_ns=1, fabric_jitter_ns=0,
            )


class TestMerge:
    def test_identity_with_empty(self):
        a = Trace(TOPO, 0, [ev(1, NS, 0, IngressPacket(0, 10, False, True))])
        merged = merge_traces([a, Trace(TOPO, 0, [])])
        assert merged.events == a.events

    def test_time_order(self):
        a = Trace(TOPO, 0, [
            ev(10, NS, 0, IngressPacket(0, 10, False, True)),
            ev(30, NS, 0, IngressPacket(0, 10, False, False)),
        ])
        b = Trace(TOPO, 0, [ev(20, PCIE, 0, DmaH2D(gpu_id=0, bytes=5))])
        merged = merge_traces([a, b])
        assert [e.ts for e in merged.events] == [10, 20, 30]

    def test_vantage_tiebreak(self):
        a = Trace(TOPO, 0, [ev(10, PCIE, 0, DmaH2D(gpu_id=0, bytes=5))])
        b = Trace(TOPO, 0, [ev(10, NS, 0, IngressPacket(0, 10, False, True))])
        merged = merge_traces([a, b])
        assert merged.events[0].vantage is NS

    def test_topology_mismatch_names_field(self):
        other = ClusterTopology(
            num_nodes=4, gpus_per_node=2, tp_degree=2, pp_stages=2,
            nic_capacity_bytes_per_s=10**10, pcie_capacity_bytes_per_s=16 * 10**9,
            fabric_base_latency_ns=2000, fabric_jitter_ns=200,
        )
        with pytest.raises(ValueError, match="num_nodes"):
            merge_traces([Trace(TOPO, 0, []), Trace(other, 0, [])])

    @settings(max_examples=60, suppress_health_check=[HealthCheck.too_slow])
    @given(traces())
    def test_merge_of_vantage_split_reproduces(self, trace):
        parts = []
        for vp in VANTAGE_ORDER:
            sub = [e for e in trace.events if e.vantage is vp]
            parts.append(Trace(TOPO, trace.epoch_ns, sub))
        merged = merge_traces(parts)
        assert merged.events == trace.events
        assert validate_trace(merged).ok


class TestWindowSlice:
    def test_whole_trace(self):
        t = Trace(TOPO, 0, [ev(i, NS, 0, IngressPacket(0, 1, False, False)) for i in (5, 10, 15)])
        assert window_slice(t, 0, 10**9) == t.events

    def test_empty_window(self):
        t = Trace(TOPO, 0, [ev(5, NS, 0, IngressPacket(0, 1, False, False))])
        assert window_slice(t, 5, 5) == []

    def test_half_open(self):
        t = Trace(TOPO, 0, [ev(i, NS, 0, IngressPacket(0, 1, False, False)) for i in (5, 10, 15)])
        assert [e.ts for e in window_slice(t, 5, 15)] == [5, 10]

    def test_reversed_bounds(self):
        t = Trace(TOPO, 0, [])
        with pytest.raises(ValueError):
            window_slice(t, 10, 5)

    @settings(max_examples=60, suppress_health_check=[HealthCheck.too_slow])
    @given(traces(), st.lists(st.integers(0, 10**6), min_size=0, max_size=6))
    def test_partition_property(self, trace, cuts):
        bounds = sorted({0, *cuts, 10**6 + 1})
        rebuilt = []
        for lo, hi in zip(bounds, bounds[1:]):
            rebuilt.extend(window_slice(trace, lo, hi))
        assert rebuilt == trace.events


class TestRoundTrip:
    @settings(max_examples=50, suppress_health_check=[HealthCheck.too_slow])
    @given(trace=traces())
    def test_write_read_identity(self, trace, tmp_path_factory):
        path = tmp_path_factory.mktemp("rt") / "t.trace"
        write_trace(trace, path)
        back = read_trace(path)
        assert back.topology == trace.topology
        assert back.epoch_ns == trace.epoch_ns
        assert back.events == trace.events
        assert back.injections == trace.injections

    def test_garbled_input_is_format_error(self, tmp_path):
        p = tmp_path / "bad.trace"
        p.write_text("this is not json\n")
        with pytest.raises(TraceFormatError):
            read_trace(p)

    def test_unknown_field_strict_vs_lenient(self, tmp_path, golden_trace):
        path = tmp_path / "t.trace"
        write_trace(Trace(golden_trace.topology, 0, golden_trace.events[:3]), path)
        lines = path.read_text().splitlines()
        import json

        rec = json.loads(lines[1])
        rec["mystery_field"] = 1
        lines[1] = json.dumps(rec)
        path.write_text("\n".join(lines) + "\n")
        read_trace(path, strict=False)  # warns, parses
        with pytest.raises(TraceFormatError):
            read_trace(path, strict=True)
