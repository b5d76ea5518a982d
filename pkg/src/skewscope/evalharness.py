"""Scores detectors against ground-truth fault injections.

For each scenario: simulate, detect, attribute.  Findings of one kind
at one location are merged into a detection span (first window start to
last window end) and matched to an injection of the same kind when the
span/injection IoU reaches the threshold and every location field the
injection pins agrees.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .attribution import attribute
from .detect import DetectorConfig, Finding, WindowPlan, run_detectors
from .events import PathologyKind
from .scenario import ScenarioSpec, load_scenario
from .trace import InjectionRecord, Trace

IOU_THRESHOLD = 0.5


def window_iou(a_start: int, a_end: int, b_start: int, b_end: int) -> float:
    """Intersection-over-union of two half-open time windows."""
    inter = min(a_end, b_end) - max(a_start, b_start)
    if inter <= 0:
        return 0.0
    union = max(a_end, b_end) - min(a_start, b_start)
    return inter / union


@dataclass
class DetectionSpan:
    kind: PathologyKind
    location: object
    start: int
    end: int
    findings: list[Finding]


def merge_findings(findings: list[Finding]) -> list[DetectionSpan]:
    """Group same-kind same-location findings into first-to-last spans."""
    groups: dict[tuple, list[Finding]] = {}
    for f in findings:
        groups.setdefault((f.kind, f.location), []).append(f)
    spans = [
        DetectionSpan(
            kind=kind,
            location=loc,
            start=min(f.start for f in fs),
            end=max(f.end for f in fs),
            findings=fs,
        )
        for (kind, loc), fs in groups.items()
    ]
    spans.sort(key=lambda s: (s.start, s.kind.value, s.location.sort_key()))
    return spans


@dataclass
class KindScore:
    true_positives: int = 0
    false_negatives: int = 0
    false_positives: int = 0
    ious: list[float] = field(default_factory=list)

    @property
    def mean_window_iou(self) -> float:
        return sum(self.ious) / len(self.ious) if self.ious else 0.0


@dataclass
class ScenarioResult:
    name: str
    injections: list[InjectionRecord]
    findings: list[Finding]
    matched_spans: list[DetectionSpan]
    unmatched_spans: list[DetectionSpan]
    missed: list[InjectionRecord]
    report_count: int
    matched_report_count: int


@dataclass
class EvalResult:
    per_kind: dict[PathologyKind, KindScore]
    scenarios: list[ScenarioResult]
    healthy_findings: int

    @staticmethod
    def _rate(num: int, den: int) -> float:
        return 1.0 if den == 0 else num / den

    @property
    def recall(self) -> float:
        tp = sum(s.true_positives for s in self.per_kind.values())
        fn = sum(s.false_negatives for s in self.per_kind.values())
        return self._rate(tp, tp + fn)

    @property
    def precision(self) -> float:
        tp = sum(s.true_positives for s in self.per_kind.values())
        fp = sum(s.false_positives for s in self.per_kind.values())
        return self._rate(tp, tp + fp)

    @property
    def post_attribution_precision(self) -> float:
        matched = sum(s.matched_report_count for s in self.scenarios)
        total = sum(s.report_count for s in self.scenarios)
        return self._rate(matched, total)

    @property
    def passed(self) -> bool:
        return self.recall == 1.0 and self.healthy_findings == 0


def match_scenario(
    trace: Trace, findings: list[Finding]
) -> tuple[list[DetectionSpan], list[DetectionSpan], list[InjectionRecord], set[int]]:
    """Match detection spans against the trace's injection log.

    Returns (matched spans, unmatched spans, missed injections, and the
    ids of matched Finding objects).
    """
    spans = merge_findings(findings)
    matched: list[DetectionSpan] = []
    missed: list[InjectionRecord] = []
    used: set[int] = set()
    matched_finding_ids: set[int] = set()
    for inj in trace.injections:
        hit = None
        for si, span in enumerate(spans):
            if si in used or span.kind is not inj.kind:
                continue
            if not inj.location.covers(span.location):
                continue
            if window_iou(span.start, span.end, inj.start, inj.end) >= IOU_THRESHOLD:
                hit = si
                break
        if hit is None:
            missed.append(inj)
        else:
            used.add(hit)
            matched.append(spans[hit])
            matched_finding_ids.update(id(f) for f in spans[hit].findings)
    unmatched = [s for si, s in enumerate(spans) if si not in used]
    return matched, unmatched, missed, matched_finding_ids


def evaluate_trace(name: str, trace: Trace, plan: WindowPlan, cfg: DetectorConfig) -> ScenarioResult:
    findings = run_detectors(trace, plan, cfg)
    matched, unmatched, missed, matched_ids = match_scenario(trace, findings)
    reports = attribute(findings, trace.topology)
    matched_reports = sum(
        1
        for r in reports
        if id(r.primary) in matched_ids or any(id(f) in matched_ids for f in r.linked)
    )
    return ScenarioResult(
        name=name,
        injections=list(trace.injections),
        findings=findings,
        matched_spans=matched,
        unmatched_spans=unmatched,
        missed=missed,
        report_count=len(reports),
        matched_report_count=matched_reports,
    )


def run_eval(
    scenarios: list[ScenarioSpec],
    plan: WindowPlan | None = None,
    cfg: DetectorConfig | None = None,
) -> EvalResult:
    """Simulate, detect, attribute, and score every scenario."""
    plan = plan or WindowPlan()
    cfg = cfg or DetectorConfig()
    per_kind: dict[PathologyKind, KindScore] = {k: KindScore() for k in PathologyKind}
    results = []
    healthy_findings = 0
    for spec in sorted(scenarios, key=lambda s: s.name):
        trace = spec.run()
        res = evaluate_trace(spec.name, trace, plan, cfg)
        results.append(res)
        if not trace.injections:
            healthy_findings += len(res.findings)
        for span in res.matched_spans:
            score = per_kind[span.kind]
            score.true_positives += 1
            inj = next(i for i in trace.injections if i.kind is span.kind)
            score.ious.append(window_iou(span.start, span.end, inj.start, inj.end))
        for inj in res.missed:
            per_kind[inj.kind].false_negatives += 1
        for span in res.unmatched_spans:
            per_kind[span.kind].false_positives += 1
    return EvalResult(per_kind=per_kind, scenarios=results, healthy_findings=healthy_findings)


def load_scenario_dir(path: str | Path) -> list[ScenarioSpec]:
    files = sorted(Path(path).glob("*.yaml"))
    return [load_scenario(f) for f in files]
