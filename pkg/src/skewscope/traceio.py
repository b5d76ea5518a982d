"""Line-delimited file formats.

Trace files carry one JSON object per line: a header line with topology
and epoch, then one event per line with fields ``ts``, ``vantage``,
``node``, ``kind`` plus the kind-specific fields under their canonical
names.  Ground-truth injections live in a sidecar next to the trace
(same stem, ``.faults`` suffix).  Findings and root-cause reports use
the same one-record-per-line convention.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

from .events import (
    PAYLOAD_FIELDS,
    PathologyKind,
    TelemetryEvent,
    VantagePoint,
    payload_type,
)
from .trace import (
    ClusterTopology,
    InjectionRecord,
    Location,
    Trace,
    location_from_dict,
)

log = logging.getLogger(__name__)

_HEADER_KEYS = {"format", "topology", "epoch_ns"}
_EVENT_BASE_KEYS = ("ts", "vantage", "node", "kind")

TRACE_FORMAT = "skewscope-trace-v1"


class TraceFormatError(ValueError):
    """Unreadable or garbled input, as opposed to a semantic violation."""


def faults_path(trace_path: str | Path) -> Path:
    return Path(trace_path).with_suffix(".faults")


def _topology_dict(topo: ClusterTopology) -> dict:
    return {
        "num_nodes": topo.num_nodes,
        "gpus_per_node": topo.gpus_per_node,
        "tp_degree": topo.tp_degree,
        "pp_stages": topo.pp_stages,
        "nic_capacity_bytes_per_s": topo.nic_capacity_bytes_per_s,
        "pcie_capacity_bytes_per_s": topo.pcie_capacity_bytes_per_s,
        "fabric_base_latency_ns": topo.fabric_base_latency_ns,
        "fabric_jitter_ns": topo.fabric_jitter_ns,
    }


def topology_from_dict(d: dict) -> ClusterTopology:
    try:
        return ClusterTopology(**d)
    except TypeError as exc:
        raise TraceFormatError(f"bad topology header: {exc}") from exc


def event_to_record(ev: TelemetryEvent) -> dict:
    rec = {
        "ts": ev.ts,
        "vantage": ev.vantage.value,
        "node": ev.node_id,
        "kind": ev.kind,
    }
    for name in PAYLOAD_FIELDS[ev.kind]:
        rec[name] = getattr(ev.payload, name)
    return rec


def event_from_record(rec: dict, strict: bool) -> TelemetryEvent:
    try:
        kind = rec["kind"]
        vantage = VantagePoint(rec["vantage"])
        ts = int(rec["ts"])
        node = int(rec["node"])
    except (KeyError, ValueError) as exc:
        raise TraceFormatError(f"bad event record: {exc}") from exc
    cls = payload_type(kind)
    if cls is None:
        raise TraceFormatError(f"unknown event kind {kind!r}")
    wanted = PAYLOAD_FIELDS[kind]
    unknown = set(rec) - set(_EVENT_BASE_KEYS) - set(wanted)
    if unknown:
        if strict:
            raise TraceFormatError(
                f"unknown fields {sorted(unknown)} on {kind} record"
            )
        log.warning("ignoring unknown fields %s on %s record", sorted(unknown), kind)
    try:
        payload = cls(**{name: rec[name] for name in wanted})
    except KeyError as exc:
        raise TraceFormatError(f"{kind} record missing field {exc}") from exc
    return TelemetryEvent(ts=ts, vantage=vantage, node_id=node, payload=payload)


def write_trace(trace: Trace, path: str | Path, sidecar: bool = True) -> None:
    """Write a trace file and (by default) its .faults sidecar."""
    path = Path(path)
    header = {
        "format": TRACE_FORMAT,
        "topology": _topology_dict(trace.topology),
        "epoch_ns": trace.epoch_ns,
    }
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for ev in trace.events:
            fh.write(json.dumps(event_to_record(ev), separators=(",", ":")) + "\n")
    if sidecar:
        write_faults(trace.injections, faults_path(path))


def read_trace(path: str | Path, strict: bool = False, sidecar: bool = True) -> Trace:
    """Parse a trace file; raises TraceFormatError on garbled input."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise TraceFormatError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise TraceFormatError(f"{path} is empty (missing header line)")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise TraceFormatError(f"garbled header line: {exc}") from exc
    if not isinstance(header, dict) or "topology" not in header:
        raise TraceFormatError("header line must carry topology metadata")
    unknown = set(header) - _HEADER_KEYS
    if unknown:
        if strict:
            raise TraceFormatError(f"unknown header fields {sorted(unknown)}")
        log.warning("ignoring unknown header fields %s", sorted(unknown))
    topo = topology_from_dict(header["topology"])
    epoch = int(header.get("epoch_ns", 0))

    events = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceFormatError(f"garbled record on line {lineno}: {exc}") from exc
        events.append(event_from_record(rec, strict))

    injections: list[InjectionRecord] = []
    fpath = faults_path(path)
    if sidecar and fpath.exists():
        injections = read_faults(fpath)
    return Trace(topology=topo, epoch_ns=epoch, events=events, injections=injections)


def write_faults(injections: list[InjectionRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for inj in injections:
            rec = {
                "kind": inj.kind.value,
                "start": inj.start,
                "end": inj.end,
                "magnitude": inj.magnitude,
                "location": inj.location.to_dict(),
            }
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def read_faults(path: str | Path) -> list[InjectionRecord]:
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            out.append(
                InjectionRecord(
                    kind=PathologyKind(rec["kind"]),
                    start=int(rec["start"]),
                    end=int(rec["end"]),
                    location=location_from_dict(rec.get("location", {})),
                    magnitude=float(rec["magnitude"]),
                )
            )
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise TraceFormatError(f"garbled fault record on line {lineno}: {exc}") from exc
    return out


# --- findings -------------------------------------------------------------


def finding_to_record(f) -> dict:
    return {
        "kind": f.kind.value,
        "start": f.start,
        "end": f.end,
        "location": f.location.to_dict(),
        "severity": f.severity,
        "evidence": f.evidence,
    }


def write_findings(findings, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for f in findings:
            fh.write(json.dumps(finding_to_record(f), separators=(",", ":")) + "\n")


def read_findings(path: str | Path):
    from .detect import Finding  # local import to avoid a cycle

    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            out.append(
                Finding(
                    kind=PathologyKind(rec["kind"]),
                    start=int(rec["start"]),
                    end=int(rec["end"]),
                    location=location_from_dict(rec.get("location", {})),
                    severity=float(rec["severity"]),
                    evidence=dict(rec.get("evidence", {})),
                )
            )
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise TraceFormatError(f"garbled finding on line {lineno}: {exc}") from exc
    return out


def write_reports(reports, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in reports:
            rec = {
                "root_cause": r.root_cause_label,
                "confidence": r.confidence,
                "primary": finding_to_record(r.primary),
                "linked": [finding_to_record(f) for f in r.linked],
                "directives": list(r.directives),
            }
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
