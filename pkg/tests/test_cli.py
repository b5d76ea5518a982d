"""CLI exit codes and file outputs."""

import json

import pytest
import yaml

from skewscope.cli import main
from skewscope.events import PathologyKind
from skewscope.trace import validate_trace
from skewscope.traceio import read_trace

SEC = 1_000_000_000


def small_scenario(fault_kind=None, **extra):
    doc = {
        "name": "small",
        "topology": {
            "num_nodes": 4, "gpus_per_node": 4, "tp_degree": 4, "pp_stages": 2,
            "nic_capacity_bytes_per_s": 10_000_000_000,
            "pcie_capacity_bytes_per_s": 16_000_000_000,
            "fabric_base_latency_ns": 2000, "fabric_jitter_ns": 200,
        },
        "workload": {
            "request_rate_per_s": 4.0,
            "prompt_len_dist": {"min": 128, "max": 256, "shape": 1.0},
            "decode_len_dist": {"min": 14, "max": 22, "shape": 1.0},
            "bytes_per_prompt_token": 512,
            "bytes_per_decode_step": 16384,
            "kv_handoff_bytes_per_step": 32768,
            "probe_period_s": 0.2,
        },
        "sim": {"seed": 7, "horizon_ns": 12 * SEC, "rng": "splitmix-counter-v1"},
        "faults": [],
    }
    if fault_kind:
        doc["faults"] = [
            {
                "kind": fault_kind,
                "start": 4 * SEC,
                "end": 10 * SEC,
                "magnitude": 3.0,
                "location": {"node": 1},
            }
        ]
    doc.update(extra)
    return doc


@pytest.fixture()
def scenario_file(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(yaml.safe_dump(small_scenario()))
    return path


@pytest.fixture()
def faulted_scenario_file(tmp_path):
    path = tmp_path / "fault.yaml"
    path.write_text(yaml.safe_dump(small_scenario("D2hBottleneck")))
    return path


class TestSimulate:
    def test_writes_trace_and_sidecar(self, scenario_file, tmp_path):
        out = tmp_path / "out.trace"
        assert main(["simulate", "--scenario", str(scenario_file), "--out", str(out)]) == 0
        assert out.exists() and (tmp_path / "out.faults").exists()
        assert validate_trace(read_trace(out)).ok

    def test_infeasible_topology_exit_2(self, tmp_path):
        doc = small_scenario()
        doc["topology"]["tp_degree"] = 32
        path = tmp_path / "bad.yaml"
        path.write_text(yaml.safe_dump(doc))
        assert main(["simulate", "--scenario", str(path), "--out", str(tmp_path / "x")]) == 2

    def test_unreadable_scenario_exit_2(self, tmp_path):
        path = tmp_path / "garbled.yaml"
        path.write_text("topology: [не a mapping")
        assert main(["simulate", "--scenario", str(path), "--out", str(tmp_path / "x")]) == 2

    def test_same_scenario_twice_identical(self, scenario_file, tmp_path):
        a, b = tmp_path / "a.trace", tmp_path / "b.trace"
        main(["simulate", "--scenario", str(scenario_file), "--out", str(a)])
        main(["simulate", "--scenario", str(scenario_file), "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_seed_override_changes_trace(self, scenario_file, tmp_path):
        a, b = tmp_path / "a.trace", tmp_path / "b.trace"
        main(["simulate", "--scenario", str(scenario_file), "--out", str(a)])
        main(["simulate", "--scenario", str(scenario_file), "--out", str(b), "--seed", "99"])
        assert a.read_bytes() != b.read_bytes()


class TestDetect:
    def test_healthy_clean_exit_0(self, scenario_file, tmp_path):
        trace = tmp_path / "h.trace"
        main(["simulate", "--scenario", str(scenario_file), "--out", str(trace)])
        code = main(["detect", "--trace", str(trace), "--fail-on-findings"])
        assert code == 0

    def test_faulted_exit_1_and_findings_file(self, faulted_scenario_file, tmp_path):
        trace = tmp_path / "f.trace"
        main(["simulate", "--scenario", str(faulted_scenario_file), "--out", str(trace)])
        out = tmp_path / "findings.jsonl"
        code = main(["detect", "--trace", str(trace), "--fail-on-findings", "--out", str(out)])
        assert code == 1
        recs = [json.loads(l) for l in out.read_text().splitlines()]
        assert recs and all(r["kind"] == "D2hBottleneck" for r in recs)

    def test_only_filter(self, faulted_scenario_file, tmp_path):
        trace = tmp_path / "f.trace"
        main(["simulate", "--scenario", str(faulted_scenario_file), "--out", str(trace)])
        out = tmp_path / "findings.jsonl"
        code = main([
            "detect", "--trace", str(trace), "--only", "TpStraggler",
            "--fail-on-findings", "--out", str(out),
        ])
        assert code == 0
        assert out.read_text() == ""

    def test_missing_file_exit_2(self, tmp_path):
        assert main(["detect", "--trace", str(tmp_path / "nope.trace")]) == 2

    def test_records_format(self, faulted_scenario_file, tmp_path, capsys):
        trace = tmp_path / "f.trace"
        main(["simulate", "--scenario", str(faulted_scenario_file), "--out", str(trace)])
        capsys.readouterr()
        main(["detect", "--trace", str(trace), "--format", "records"])
        lines = capsys.readouterr().out.splitlines()
        recs = [json.loads(l) for l in lines if l.startswith("{")]
        assert recs and all("severity" in r for r in recs)

    def test_config_from_env_var(self, faulted_scenario_file, tmp_path, monkeypatch):
        trace = tmp_path / "f.trace"
        main(["simulate", "--scenario", str(faulted_scenario_file), "--out", str(trace)])
        cfg = tmp_path / "numb.yaml"
        cfg.write_text(yaml.safe_dump({"gap_factor": 1000.0}))
        monkeypatch.setenv("SKEWSCOPE_CONFIG", str(cfg))
        code = main(["detect", "--trace", str(trace), "--fail-on-findings"])
        assert code == 0, "absurd thresholds from $SKEWSCOPE_CONFIG suppress findings"

    def test_detect_twice_identical_findings(self, faulted_scenario_file, tmp_path):
        trace = tmp_path / "f.trace"
        main(["simulate", "--scenario", str(faulted_scenario_file), "--out", str(trace)])
        o1, o2 = tmp_path / "f1.jsonl", tmp_path / "f2.jsonl"
        main(["detect", "--trace", str(trace), "--out", str(o1)])
        main(["detect", "--trace", str(trace), "--out", str(o2)])
        assert o1.read_bytes() == o2.read_bytes()


class TestAttribute:
    def test_reports_written(self, faulted_scenario_file, tmp_path):
        trace = tmp_path / "f.trace"
        main(["simulate", "--scenario", str(faulted_scenario_file), "--out", str(trace)])
        findings = tmp_path / "findings.jsonl"
        main(["detect", "--trace", str(trace), "--out", str(findings)])
        reports = tmp_path / "reports.jsonl"
        code = main([
            "attribute", "--findings", str(findings), "--trace", str(trace),
            "--out", str(reports),
        ])
        assert code == 0
        recs = [json.loads(l) for l in reports.read_text().splitlines()]
        assert recs and all(r["directives"] for r in recs)


class TestEval:
    def test_tiny_suite_exit_0(self, tmp_path, scenario_file, faulted_scenario_file):
        d = tmp_path / "suite"
        d.mkdir()
        (d / "healthy.yaml").write_text(scenario_file.read_text())
        (d / "fault.yaml").write_text(faulted_scenario_file.read_text())
        assert main(["eval", "--scenarios", str(d)]) == 0

    def test_absurd_thresholds_exit_1(self, tmp_path, faulted_scenario_file):
        d = tmp_path / "suite"
        d.mkdir()
        (d / "fault.yaml").write_text(faulted_scenario_file.read_text())
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text(yaml.safe_dump({"gap_factor": 1000.0}))
        assert main(["eval", "--scenarios", str(d), "--config", str(cfg)]) == 1

    def test_empty_dir_exit_2(self, tmp_path):
        d = tmp_path / "empty"
        d.mkdir()
        assert main(["eval", "--scenarios", str(d)]) == 2


class TestListPathologies:
    def test_prints_28_rows(self, capsys):
        assert main(["list-pathologies"]) == 0
        out = capsys.readouterr().out
        for kind in PathologyKind:
            assert kind.value in out
        assert "28 pathologies" in out

    def test_vantage_order(self, capsys):
        main(["list-pathologies"])
        out = capsys.readouterr().out
        assert out.index("BurstAdmissionBacklog") < out.index("H2dStarvation") < out.index("TpStraggler")
        assert "PcieObserver" in out.splitlines()[
            [i for i, l in enumerate(out.splitlines()) if "H2dStarvation" in l][0]
        ]


class TestValidateCmd:
    def test_valid_trace_exit_0(self, scenario_file, tmp_path):
        trace = tmp_path / "h.trace"
        main(["simulate", "--scenario", str(scenario_file), "--out", str(trace)])
        assert main(["validate", "--trace", str(trace)]) == 0

    def test_garbled_exit_2(self, tmp_path):
        p = tmp_path / "garbage.trace"
        p.write_text("}{ nope\n")
        assert main(["validate", "--trace", str(p)]) == 2

    def test_semantic_violation_exit_1(self, scenario_file, tmp_path):
        trace = tmp_path / "h.trace"
        main(["simulate", "--scenario", str(scenario_file), "--out", str(trace)])
        lines = trace.read_text().splitlines()
        rec = json.loads(lines[1])
        rec["node"] = 99
        lines[1] = json.dumps(rec)
        trace.write_text("\n".join(lines) + "\n")
        assert main(["validate", "--trace", str(trace)]) == 1
