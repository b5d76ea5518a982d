"""Command-line interface.

Exit codes are a stable contract: 0 success/clean, 1 findings present
(with --fail-on-findings) or eval failure, 2 usage/input error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import fields as dc_fields
from pathlib import Path

import yaml

from . import __version__
from .attribution import attribute
from .catalog import CATALOG
from .detect import DetectorConfig, WindowPlan, run_detectors
from .evalharness import load_scenario_dir, run_eval
from .events import PathologyKind
from .scenario import load_scenario
from .sim import ConfigError
from .trace import validate_trace
from .traceio import (
    TraceFormatError,
    read_findings,
    read_trace,
    write_findings,
    write_reports,
    write_trace,
)

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_USAGE = 2

CONFIG_ENV = "SKEWSCOPE_CONFIG"


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_USAGE


def _load_config(path: str | None) -> DetectorConfig:
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return DetectorConfig()
    doc = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    known = {f.name for f in dc_fields(DetectorConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown threshold keys: {sorted(unknown)}")
    return DetectorConfig(**doc)


def _parse_kinds(arg: str | None) -> set[PathologyKind] | None:
    if not arg:
        return None
    out = set()
    for name in arg.split(","):
        try:
            out.add(PathologyKind(name.strip()))
        except ValueError:
            raise ConfigError(f"unknown pathology kind {name.strip()!r}")
    return out


def cmd_simulate(args) -> int:
    try:
        spec = load_scenario(args.scenario)
        if args.seed is not None:
            from dataclasses import replace

            spec = type(spec)(
                name=spec.name,
                topology=spec.topology,
                workload=spec.workload,
                faults=spec.faults,
                sim=replace(spec.sim, seed=args.seed),
            )
        trace = spec.run()
    except (ConfigError, OSError) as exc:
        return _fail(str(exc))
    write_trace(trace, args.out)
    print(f"wrote {len(trace.events)} events to {args.out}")
    return EXIT_OK


def cmd_detect(args) -> int:
    try:
        cfg = _load_config(args.config)
        enabled = _parse_kinds(args.only)
        trace = read_trace(args.trace, strict=args.strict)
        plan = WindowPlan(length_ns=args.window_ns, hop_ns=args.hop_ns or args.window_ns)
        findings = run_detectors(trace, plan, cfg, enabled)
    except (ConfigError, TraceFormatError, ValueError, OSError) as exc:
        return _fail(str(exc))
    if args.out:
        write_findings(findings, args.out)
    if args.format == "records":
        import json

        from .traceio import finding_to_record

        for f in findings:
            print(json.dumps(finding_to_record(f), separators=(",", ":")))
    else:
        for f in findings:
            print(
                f"{f.kind.value}\t[{f.start},{f.end})\t{f.location.to_dict()}\t"
                f"severity={f.severity:.3f}"
            )
    print(f"{len(findings)} findings")
    if args.fail_on_findings and findings:
        return EXIT_FINDINGS
    return EXIT_OK


def cmd_attribute(args) -> int:
    try:
        findings = read_findings(args.findings)
        trace = read_trace(args.trace, strict=False) if args.trace else None
        reports = attribute(findings, trace.topology if trace else None)
    except (TraceFormatError, ValueError, OSError) as exc:
        return _fail(str(exc))
    if args.out:
        write_reports(reports, args.out)
    header = f"{'root cause':<45} {'confidence':<24} {'kind':<26} linked"
    print(header)
    print("-" * len(header))
    for r in reports:
        linked = ",".join(f.kind.value for f in r.linked) or "-"
        print(
            f"{r.root_cause_label:<45.45} {r.confidence:<24} "
            f"{r.primary.kind.value:<26} {linked}"
        )
    print(f"{len(reports)} reports")
    return EXIT_OK


def cmd_eval(args) -> int:
    import json

    try:
        cfg = _load_config(args.config)
        scenarios = load_scenario_dir(args.scenarios)
        if not scenarios:
            return _fail(f"no scenario files in {args.scenarios}")
        result = run_eval(scenarios, cfg=cfg)
    except (ConfigError, ValueError, OSError) as exc:
        return _fail(str(exc))
    if args.format == "records":
        for kind in PathologyKind:
            s = result.per_kind[kind]
            if s.true_positives or s.false_negatives or s.false_positives:
                print(json.dumps({
                    "kind": kind.value,
                    "true_positives": s.true_positives,
                    "false_negatives": s.false_negatives,
                    "false_positives": s.false_positives,
                    "mean_window_iou": s.mean_window_iou,
                }, separators=(",", ":")))
        print(json.dumps({
            "recall": result.recall,
            "precision": result.precision,
            "post_attribution_precision": result.post_attribution_precision,
            "healthy_findings": result.healthy_findings,
        }, separators=(",", ":")))
    else:
        print(f"{'kind':<28} {'tp':>3} {'fn':>3} {'fp':>3} {'mean_iou':>9}")
        for kind in PathologyKind:
            s = result.per_kind[kind]
            if s.true_positives or s.false_negatives or s.false_positives:
                print(
                    f"{kind.value:<28} {s.true_positives:>3} {s.false_negatives:>3} "
                    f"{s.false_positives:>3} {s.mean_window_iou:>9.3f}"
                )
        print(
            f"recall={result.recall:.3f} precision={result.precision:.3f} "
            f"post_attribution_precision={result.post_attribution_precision:.3f} "
            f"healthy_findings={result.healthy_findings}"
        )
    return EXIT_OK if result.passed else EXIT_FINDINGS


def cmd_list_pathologies(_args) -> int:
    print(f"{'kind':<28} {'vantage':<16} signal / directives")
    print("-" * 100)
    for e in CATALOG:
        print(f"{e.kind.value:<28} {e.vantage.value:<16} {e.signal}")
        print(f"{'':<28} {'':<16} -> {'; '.join(e.directives)}")
    print(f"{len(CATALOG)} pathologies")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        trace = read_trace(args.trace, strict=args.strict)
    except (TraceFormatError, OSError) as exc:
        return _fail(str(exc))
    report = validate_trace(trace)
    for v in report.violations:
        print(f"index {v.index}: {v.message}")
    print(f"{len(report.violations)} violations in {len(trace.events)} events")
    return EXIT_OK if report.ok else EXIT_FINDINGS


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="skewscope",
        description="Simulate, detect, and attribute DPU-visible inference pathologies.",
    )
    p.add_argument("--version", action="version", version=f"skewscope {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", help="generate a telemetry trace from a scenario file")
    ps.add_argument("--scenario", required=True)
    ps.add_argument("--out", required=True)
    ps.add_argument("--seed", type=int, help="override the scenario seed")
    ps.set_defaults(fn=cmd_simulate)

    pd = sub.add_parser("detect", help="run the runbook detectors over a trace")
    pd.add_argument("--trace", required=True)
    pd.add_argument("--config", help=f"thresholds YAML (default ${CONFIG_ENV})")
    pd.add_argument("--only", help="comma-separated pathology kinds")
    pd.add_argument("--out", help="findings file to write")
    pd.add_argument("--window-ns", type=int, default=1_000_000_000)
    pd.add_argument("--hop-ns", type=int)
    pd.add_argument("--strict", action="store_true")
    pd.add_argument("--fail-on-findings", action="store_true")
    pd.add_argument("--format", choices=("records", "table"), default="table")
    pd.set_defaults(fn=cmd_detect)

    pa = sub.add_parser("attribute", help="fuse findings into root-cause reports")
    pa.add_argument("--findings", required=True)
    pa.add_argument("--trace", help="trace file (topology context)")
    pa.add_argument("--out", help="reports file to write")
    pa.set_defaults(fn=cmd_attribute)

    pe = sub.add_parser("eval", help="score detectors against injected ground truth")
    pe.add_argument("--scenarios", required=True, help="directory of scenario YAML files")
    pe.add_argument("--config")
    pe.add_argument("--format", choices=("records", "table"), default="table")
    pe.set_defaults(fn=cmd_eval)

    pl = sub.add_parser("list-pathologies", help="print the 28 runbook rows")
    pl.set_defaults(fn=cmd_list_pathologies)

    pv = sub.add_parser("validate", help="check a trace file's invariants")
    pv.add_argument("--trace", required=True)
    pv.add_argument("--strict", action="store_true")
    pv.set_defaults(fn=cmd_validate)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
