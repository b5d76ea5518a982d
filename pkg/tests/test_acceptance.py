"""Acceptance suite: one test per release criterion.

Each test prints a single PASS line once its assertions hold; run with
`pytest tests/test_acceptance.py -v -s` to see the checklist.
"""

import random
import statistics
import time
from dataclasses import replace

import pytest

from skewscope.attribution import CONF_ABSENCE, attribute, directives_for
from skewscope.catalog import CATALOG
from skewscope.cli import main
from skewscope.detect import run_detectors
from skewscope.evalharness import IOU_THRESHOLD, load_scenario_dir, run_eval, window_iou
from skewscope.events import PathologyKind, VantagePoint
from skewscope.scenario import golden_dir, load_scenario
from skewscope.sim import FaultSpec, simulate
from skewscope.stats import (
    arrival_spread,
    group_skew,
    jitter_cv,
    max_gap,
    utilization,
)
from skewscope.trace import Location, Trace, merge_traces, validate_trace, window_slice
from skewscope.traceio import read_trace, write_trace

K = PathologyKind
SEC = 1_000_000_000

SUITE_WALL_LIMIT_S = 60.0
CATALOG_WALL_LIMIT_S = 1.0

#: kinds in the gap/spread/skew/utilization statistic families, checked
#: for severity monotonicity over magnitudes {2, 3, 5}
MONOTONE_KINDS = (
    K.INGRESS_STARVATION,
    K.H2D_STARVATION,
    K.KERNEL_LAUNCH_LATENCY,
    K.CREDIT_STARVATION,
    K.PP_BUBBLE,
    K.HEAD_OF_LINE_BLOCKING,
    K.TP_STRAGGLER,
    K.FLOW_SKEW,
    K.CROSS_NODE_LOAD_SKEW,
    K.INTRA_NODE_GPU_SKEW,
    K.KV_CACHE_TRANSFER_BOTTLENECK,
    K.BANDWIDTH_SATURATION,
    K.PCIE_LINK_SATURATION,
)


def ok(line: str) -> None:
    print(f"ACCEPTANCE {line}: PASS")


@pytest.fixture(scope="module")
def eval_run():
    scenarios = load_scenario_dir(golden_dir())
    t0 = time.perf_counter()
    result = run_eval(scenarios)
    wall = time.perf_counter() - t0
    return result, wall, scenarios


class TestCriterion1Catalog:
    def test_catalog_completeness(self, capsys):
        t0 = time.perf_counter()
        assert len(CATALOG) == 28
        assert {e.kind for e in CATALOG} == set(PathologyKind)
        by_vantage = {}
        for e in CATALOG:
            by_vantage[e.vantage] = by_vantage.get(e.vantage, 0) + 1
        assert by_vantage == {
            VantagePoint.NORTH_SOUTH_NIC: 9,
            VantagePoint.PCIE_OBSERVER: 10,
            VantagePoint.EAST_WEST_FABRIC: 9,
        }
        assert main(["list-pathologies"]) == 0
        out = capsys.readouterr().out
        assert sum(1 for k in PathologyKind if k.value in out) == 28
        wall = time.perf_counter() - t0
        assert wall < CATALOG_WALL_LIMIT_S
        ok(f"1 catalog-completeness (28 rows, {wall:.2f}s)")


class TestCriterion2Soundness:
    def test_every_kind_detected_at_magnitude_3(self, eval_run):
        result, wall, scenarios = eval_run
        assert len(scenarios) == 29
        missing = []
        for kind in PathologyKind:
            s = result.per_kind[kind]
            if s.true_positives < 1 or s.false_negatives > 0:
                missing.append(kind.value)
            elif s.ious and min(s.ious) < IOU_THRESHOLD:
                missing.append(f"{kind.value} (iou)")
        assert not missing, f"undetected or mislocated kinds: {missing}"
        assert result.recall == 1.0
        assert wall < SUITE_WALL_LIMIT_S, f"eval suite took {wall:.1f}s"
        ok(f"2 injection-detection-soundness (recall 1.0, suite {wall:.1f}s)")


class TestCriterion3HealthySpecificity:
    def test_no_fault_scenario_is_clean(self, eval_run):
        result, _wall, _scenarios = eval_run
        assert result.healthy_findings == 0
        ok("3 healthy-specificity (0 findings)")


class TestCriterion4SeverityMonotonicity:
    @pytest.mark.parametrize("kind", MONOTONE_KINDS, ids=lambda k: k.value)
    def test_non_decreasing_severity(self, kind):
        import re

        name = re.sub(r"(?<!^)(?=[A-Z])", "_", kind.value).lower()
        spec = load_scenario(golden_dir() / f"{name}.yaml")
        f0 = spec.faults[0]
        # the sparse per-flow baseline wants the full-length leading
        # segment; denser streams are checked on a faster 30 s run
        if kind is K.INGRESS_STARVATION:
            horizon, start, end = 60 * SEC, 20 * SEC, 50 * SEC
        else:
            horizon, start, end = 30 * SEC, 10 * SEC, 25 * SEC
        sevs = []
        for mag in (2.0, 3.0, 5.0):
            fault = FaultSpec(kind=f0.kind, start=start, end=end, location=f0.location, magnitude=mag)
            sim = replace(spec.sim, horizon_ns=horizon)
            trace = simulate(spec.topology, spec.workload, [fault], sim)
            own = [
                f
                for f in run_detectors(trace)
                if f.kind is kind and fault.location.covers(f.location)
            ]
            sevs.append(max((f.severity for f in own), default=0.0))
        assert sevs[0] <= sevs[1] <= sevs[2], f"{kind.value}: {sevs}"
        assert sevs[1] > 0.0, f"{kind.value} must fire at magnitude 3"
        ok(f"4 severity-monotonicity {kind.value} {['%.3f' % s for s in sevs]}")


class TestCriterion5StatOracles:
    def test_randomized_oracle_equivalence(self):
        rnd = random.Random(99)
        for _ in range(1000):
            n = rnd.randint(2, 50)
            stamps = sorted(rnd.randrange(10**9) for _ in range(n))
            assert max_gap(stamps) == max(b - a for a, b in zip(stamps, stamps[1:]))

            arrivals = {i: rnd.randrange(10**9) for i in range(rnd.randint(1, 32))}
            assert arrival_spread(arrivals) == max(arrivals.values()) - min(arrivals.values())

            gaps = [rnd.uniform(0.1, 1e6) for _ in range(rnd.randint(2, 30))]
            expect = statistics.pstdev(gaps) / statistics.fmean(gaps)
            assert abs(jitter_cv(gaps) - expect) <= 1e-9 * abs(expect)

            nbytes = rnd.randrange(1, 10**12)
            win = rnd.randrange(1, 10**10)
            cap = rnd.uniform(1e6, 1e11)
            expect = (nbytes / (win / 1e9)) / cap
            assert abs(utilization(nbytes, win, cap) - expect) <= 1e-9 * abs(expect)

            vols = {i: rnd.randrange(1, 10**9) for i in range(rnd.randint(2, 20))}
            ratio, heavy = group_skew(vols)
            expect = max(vols.values()) / statistics.fmean(vols.values())
            assert abs(ratio - expect) <= 1e-9 * abs(expect)
            assert vols[heavy] == max(vols.values())
        ok("5 statistics-oracle-equivalence (1000 randomized inputs)")


class TestCriterion6Attribution:
    def test_r1_combined_scenario(self, golden_spec):
        faults = [
            FaultSpec(K.TP_STRAGGLER, 20 * SEC, 50 * SEC, Location(rank=2), 3.0),
            FaultSpec(K.H2D_STARVATION, 20 * SEC, 50 * SEC, Location(node=2, gpu=0), 3.0),
        ]
        trace = simulate(golden_spec.topology, golden_spec.workload, faults, golden_spec.sim)
        reports = attribute(run_detectors(trace), trace.topology)
        r1 = [r for r in reports if r.rule_id == "R1"]
        assert r1, "combined straggler + starved feed must merge"
        for r in r1:
            assert r.primary.kind is K.H2D_STARVATION
            assert r.root_cause_label == "local PCIe feed starvation"
            assert any(f.kind is K.TP_STRAGGLER for f in r.linked)
        ok(f"6a attribution R1 (primary H2dStarvation, {len(r1)} merged reports)")

    def test_r2_network_side(self, eval_run):
        result, _wall, _scenarios = eval_run
        res = next(s for s in result.scenarios if s.name == "egress_backlog")
        assert all(
            f.location is not None for f in res.findings
        )
        reports = attribute(res.findings)
        net = [r for r in reports if r.root_cause_label == "network-side"]
        assert net, "egress backlog with clean PCIe must attribute network-side"
        assert all(r.confidence == CONF_ABSENCE for r in net)
        ok("6b attribution R2 (network-side, corroborated-by-absence)")


class TestCriterion7Determinism:
    def test_simulate_and_detect_reproduce(self, tmp_path):
        spec = load_scenario(golden_dir() / "tp_straggler.yaml")
        p1, p2 = tmp_path / "a.trace", tmp_path / "b.trace"
        write_trace(spec.run(), p1)
        write_trace(spec.run(), p2)
        assert p1.read_bytes() == p2.read_bytes()
        trace = read_trace(p1)
        assert run_detectors(trace) == run_detectors(trace)
        ok("7 determinism (byte-identical traces, identical findings)")


class TestCriterion8DirectiveFidelity:
    def test_snapshot_all_28(self):
        from tests.test_attribution import DIRECTIVES

        for kind in PathologyKind:
            assert directives_for(kind) == DIRECTIVES[kind], kind.value
        # spot checks, verbatim rows
        assert directives_for(K.BURST_ADMISSION_BACKLOG) == [
            "Smooth input batching", "rate-limit clients", "increase NIC queue depth",
        ]
        assert directives_for(K.TP_STRAGGLER) == [
            "Rebalance shards", "check PCIe feeds per node", "adjust affinity",
        ]
        assert directives_for(K.CREDIT_STARVATION) == [
            "Increase QP window", "tune flow control params",
        ]
        ok("8 directive-fidelity (28 kinds snapshot)")


class TestCriterion9TraceIntegrity:
    def _random_trace(self, rnd, topo):
        from skewscope.events import (
            VANTAGE_ORDER,
            CollectiveBurst,
            DmaH2D,
            IngressPacket,
            TelemetryEvent,
        )

        raw = []
        for _ in range(rnd.randint(0, 80)):
            roll = rnd.random()
            if roll < 0.4:
                vp, p = VantagePoint.NORTH_SOUTH_NIC, IngressPacket(
                    rnd.randrange(8), rnd.randrange(1, 10**6), False, False)
            elif roll < 0.7:
                vp, p = VantagePoint.PCIE_OBSERVER, DmaH2D(rnd.randrange(2), rnd.randrange(1, 10**6))
            else:
                vp, p = VantagePoint.EAST_WEST_FABRIC, CollectiveBurst(
                    rnd.randrange(100), rnd.randrange(2), rnd.randrange(1, 10**6))
            raw.append((rnd.randrange(10**6), vp, rnd.randrange(2), p))
        keyed = sorted(
            (ts, VANTAGE_ORDER[vp], i) for i, (ts, vp, _n, _p) in enumerate(raw)
        )
        events = [
            TelemetryEvent(ts=raw[i][0], vantage=raw[i][1], node_id=raw[i][2], payload=raw[i][3])
            for _ts, _vo, i in keyed
        ]
        return Trace(topology=topo, epoch_ns=rnd.randrange(10**9), events=events)

    def test_randomized_integrity_properties(self, tmp_path, small_topology):
        rnd = random.Random(7)
        for i in range(60):
            trace = self._random_trace(rnd, small_topology)
            assert validate_trace(trace).ok

            path = tmp_path / f"t{i}.trace"
            write_trace(trace, path)
            back = read_trace(path)
            assert back.events == trace.events
            assert back.topology == trace.topology
            assert back.epoch_ns == trace.epoch_ns

            cuts = sorted({0, *(rnd.randrange(10**6) for _ in range(4)), 10**6 + 1})
            rebuilt = []
            for lo, hi in zip(cuts, cuts[1:]):
                rebuilt.extend(window_slice(trace, lo, hi))
            assert rebuilt == trace.events

            parts = [
                Trace(small_topology, trace.epoch_ns, [e for e in trace.events if e.vantage is vp])
                for vp in VantagePoint
            ]
            assert merge_traces(parts).events == trace.events
        ok("9 trace-integrity (round-trip, partition, merge; 60 randomized traces)")
