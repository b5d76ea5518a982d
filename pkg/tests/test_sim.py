"""Simulator: lifecycle shape, determinism, injection semantics."""

from collections import Counter
from dataclasses import replace

import pytest

from skewscope.events import CollectiveBurst, PathologyKind, VantagePoint
from skewscope.inject import effect_factor, inject
from skewscope.rng import CounterRng
from skewscope.sim import (
    TICK_NS,
    ConfigError,
    DistSpec,
    FaultSpec,
    SimConfig,
    SimContext,
    WorkloadSpec,
    build_placement,
    simulate,
)
from skewscope.trace import ClusterTopology, Location, validate_trace
from skewscope.events import TelemetryEvent

K = PathologyKind
SEC = 1_000_000_000

#: kinds whose injections only move timestamps: event counts and byte
#: totals per vantage must match the healthy trace exactly
TIMING_ONLY = (
    K.INGRESS_STARVATION,
    K.EGRESS_JITTER,
    K.H2D_STARVATION,
    K.KERNEL_LAUNCH_LATENCY,
    K.HOST_CPU_BOTTLENECK,
    K.TP_STRAGGLER,
    K.PP_BUBBLE,
    K.HEAD_OF_LINE_BLOCKING,
    K.CREDIT_STARVATION,
)


def one_node_topo():
    return ClusterTopology(
        num_nodes=1, gpus_per_node=2, tp_degree=2, pp_stages=1,
        nic_capacity_bytes_per_s=10**10, pcie_capacity_bytes_per_s=16 * 10**9,
        fabric_base_latency_ns=2000, fabric_jitter_ns=200,
    )


class TestLifecycle:
    def test_zero_horizon_empty(self, single_node_workload):
        trace = simulate(one_node_topo(), single_node_workload, [], SimConfig(seed=1, horizon_ns=0))
        assert trace.events == []

    def test_collective_count_per_request(self, single_node_workload):
        # one request, prompt 8, decode 2, TP=2, PP=1: one burst per rank
        # per decode step -> 2 ranks x 2 steps = 4 bursts
        trace = simulate(one_node_topo(), single_node_workload, [], SimConfig(seed=0, horizon_ns=2 * SEC))
        requests = sum(1 for e in trace.events if e.kind == "MemRegister")
        assert requests == 1
        colls = [e for e in trace.events if e.kind == "CollectiveBurst"]
        assert len(colls) == 4
        assert Counter(e.payload.rank for e in colls) == {0: 2, 1: 2}

    def test_simulation_validates(self, golden_trace):
        assert validate_trace(golden_trace).ok

    def test_prefill_and_decode_shapes(self, golden_trace):
        kinds = Counter(e.kind for e in golden_trace.events)
        for kind in (
            "IngressPacket", "EgressPacket", "NicQueueSample", "DmaH2D", "DmaD2H",
            "DmaP2P", "DoorbellWrite", "MemRegister", "MemUnregister",
            "CollectiveBurst", "StageHandoff", "RdmaCreditUpdate", "FabricPacket",
            "LinkSample",
        ):
            assert kinds[kind] > 0, f"healthy trace must exercise {kind}"

    def test_infeasible_topology_fails_before_events(self):
        with pytest.raises(Exception):
            ClusterTopology(
                num_nodes=1, gpus_per_node=1, tp_degree=4, pp_stages=2,
                nic_capacity_bytes_per_s=1, pcie_capacity_bytes_per_s=1,
                fabric_base_latency_ns=1, fabric_jitter_ns=0,
            )

    def test_fault_beyond_horizon_rejected(self, single_node_workload):
        fault = FaultSpec(K.D2H_BOTTLENECK, start=0, end=5 * SEC, location=Location(node=0), magnitude=2.0)
        with pytest.raises(ConfigError):
            simulate(one_node_topo(), single_node_workload, [fault], SimConfig(seed=1, horizon_ns=2 * SEC))


class TestPlacement:
    def test_spreads_stages_across_nodes(self, small_topology):
        placement = build_placement(small_topology)
        assert len(placement) == 4
        nodes = {placement[(s, r)][0] for s in range(2) for r in range(2)}
        assert nodes == {0, 1}
        # no slot used twice
        assert len(set(placement.values())) == 4


class TestDeterminism:
    def test_same_seed_byte_identical(self, golden_spec, tmp_path):
        from skewscope.traceio import write_trace

        p1, p2 = tmp_path / "a.trace", tmp_path / "b.trace"
        write_trace(golden_spec.run(), p1)
        write_trace(golden_spec.run(), p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert (tmp_path / "a.faults").read_bytes() == (tmp_path / "b.faults").read_bytes()

    def test_different_seed_differs(self, golden_spec):
        t1 = golden_spec.run()
        t2 = simulate(
            golden_spec.topology, golden_spec.workload, [],
            replace(golden_spec.sim, seed=golden_spec.sim.seed + 1),
        )
        assert [e.ts for e in t1.events] != [e.ts for e in t2.events]


def _vantage_totals(trace):
    counts = Counter()
    nbytes = Counter()
    for e in trace.events:
        counts[e.vantage] += 1
        b = getattr(e.payload, "bytes", 0)
        nbytes[e.vantage] += b
    return counts, nbytes


# a 20 s run with the golden fault locations rescaled into [8, 16)
# keeps these sweeps cheap without changing what they prove
@pytest.fixture(scope="module")
def short_pair(golden_spec):
    sim = replace(golden_spec.sim, horizon_ns=20 * SEC)
    healthy = simulate(golden_spec.topology, golden_spec.workload, [], sim)
    return golden_spec, sim, healthy


class TestInjectionProperties:
    @pytest.mark.parametrize("kind", TIMING_ONLY, ids=lambda k: k.value)
    def test_conservation_under_timing_only_faults(self, short_pair, kind):
        spec, sim, healthy = short_pair
        fault = _golden_fault(kind, 8 * SEC, 16 * SEC)
        faulted = simulate(spec.topology, spec.workload, [fault], sim)
        hc, hb = _vantage_totals(healthy)
        fc, fb = _vantage_totals(faulted)
        assert hc == fc, "timing-only faults must not add or drop events"
        assert hb == fb, "timing-only faults must not change byte totals"

    @pytest.mark.parametrize("kind", list(PathologyKind), ids=lambda k: k.value)
    def test_injection_never_vacuous(self, short_pair, kind):
        spec, sim, healthy = short_pair
        fault = _golden_fault(kind, 8 * SEC, 16 * SEC)
        faulted = simulate(spec.topology, spec.workload, [fault], sim)
        h = [(e.ts, e.kind, e.node_id, repr(e.payload)) for e in healthy.events]
        f = [(e.ts, e.kind, e.node_id, repr(e.payload)) for e in faulted.events]
        assert h != f, "every injected fault must perturb at least one event"
        assert faulted.injections and faulted.injections[0].kind is kind

    def test_events_only_perturbed_inside_window(self, short_pair):
        spec, sim, healthy = short_pair
        fault = _golden_fault(K.D2H_BOTTLENECK, 8 * SEC, 16 * SEC)
        faulted = simulate(spec.topology, spec.workload, [fault], sim)
        before_h = [e for e in healthy.events if e.ts < fault.start]
        before_f = [e for e in faulted.events if e.ts < fault.start]
        assert [(e.ts, repr(e.payload)) for e in before_h] == [
            (e.ts, repr(e.payload)) for e in before_f
        ]


def _golden_fault(kind, start, end):
    from skewscope.scenario import golden_dir, load_scenario
    import re

    name = re.sub(r"(?<!^)(?=[A-Z])", "_", kind.value).lower()
    spec = load_scenario(golden_dir() / f"{name}.yaml")
    f = spec.faults[0]
    return FaultSpec(kind=f.kind, start=start, end=end, location=f.location, magnitude=f.magnitude)


class TestInjectUnit:
    def _ctx(self, topo):
        return SimContext(
            topology=topo,
            workload=None,
            placement=build_placement(topo),
            tick_ns=10_000_000,  # 10 ms step for the shift arithmetic below
            horizon_ns=10 * SEC,
            rng=CounterRng(7),
        )

    def test_unit_magnitude_is_identity(self, small_topology):
        events = [
            TelemetryEvent(ts=SEC + i * 10_000_000, vantage=VantagePoint.EAST_WEST_FABRIC,
                           node_id=0, payload=CollectiveBurst(collective_id=i, rank=0, bytes=100))
            for i in range(20)
        ]
        fault = FaultSpec(K.TP_STRAGGLER, start=SEC, end=2 * SEC, location=Location(rank=0), magnitude=1.0)
        out = inject(list(events), fault, CounterRng(7), self._ctx(small_topology))
        assert out == events

    def test_straggler_shift_is_magnitude_times_step(self, small_topology):
        # ranks 0 and 3... rank 3 does not exist on a 2-wide group; use rank 1
        events = [
            TelemetryEvent(ts=SEC + i * 10_000_000, vantage=VantagePoint.EAST_WEST_FABRIC,
                           node_id=0, payload=CollectiveBurst(collective_id=i, rank=1, bytes=100))
            for i in range(10)
        ]
        fault = FaultSpec(K.TP_STRAGGLER, start=SEC, end=5 * SEC, location=Location(rank=1), magnitude=5.0)
        out = inject(list(events), fault, CounterRng(7), self._ctx(small_topology))
        # baseline step 10 ms, magnitude 5 -> every burst shifted +50 ms
        for before, after in zip(events, out):
            assert after.ts - before.ts == 50_000_000

    def test_disjoint_window_leaves_trace_unchanged(self, small_topology):
        events = [
            TelemetryEvent(ts=SEC, vantage=VantagePoint.EAST_WEST_FABRIC,
                           node_id=0, payload=CollectiveBurst(collective_id=0, rank=0, bytes=100))
        ]
        fault = FaultSpec(K.TP_STRAGGLER, start=8 * SEC, end=9 * SEC, location=Location(rank=0), magnitude=5.0)
        out = inject(list(events), fault, CounterRng(7), self._ctx(small_topology))
        assert out == events

    def test_effect_factor_normalization(self):
        assert effect_factor(1.0) == 1.0
        assert effect_factor(3.0) == 5.0
        assert effect_factor(5.0) == 9.0
