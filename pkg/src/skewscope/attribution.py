"""Root-cause attribution: fuse findings across vantage points.

Rules are data applied in priority order (ties broken by rule id).
Every input finding lands in exactly one report, as primary or linked;
findings no rule claims become single-signal reports of their own kind.
Suppression is soft: linked findings stay visible in the report.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .catalog import CATALOG_BY_KIND
from .detect import Finding
from .events import KIND_ORDER, PathologyKind, VantagePoint
from .trace import ClusterTopology

K = PathologyKind

CONF_SINGLE = "single-signal"
CONF_CORROBORATED = "corroborated"
#: R2 infers "network-side" from healthy PCIe, i.e. from negative
#: evidence; reports expose that distinctly.
CONF_ABSENCE = "corroborated-by-absence"

_PCIE_KINDS = frozenset(
    e.kind for e in CATALOG_BY_KIND.values() if e.vantage is VantagePoint.PCIE_OBSERVER
)


@dataclass(frozen=True)
class AttributionRule:
    """One fusion pattern over overlapping findings."""

    id: str
    priority: int
    #: "pair": primary_kind + linked_kind co-located and overlapping;
    #: "absence": trigger kinds with no PCIe finding at the node;
    #: "hub": hub kind overlapping >= 2 other findings at its node.
    mode: str
    primary_kinds: frozenset
    linked_kinds: frozenset
    root_cause: str
    confidence: str
    same_node: bool = True


BUILTIN_RULES: tuple[AttributionRule, ...] = (
    AttributionRule(
        id="R1", priority=30, mode="pair",
        primary_kinds=frozenset({K.H2D_STARVATION}),
        linked_kinds=frozenset({K.TP_STRAGGLER}),
        root_cause="local PCIe feed starvation",
        confidence=CONF_CORROBORATED,
    ),
    AttributionRule(
        id="R2", priority=30, mode="absence",
        primary_kinds=frozenset({K.EGRESS_BACKLOG, K.EGRESS_JITTER}),
        linked_kinds=frozenset(),
        root_cause="network-side",
        confidence=CONF_ABSENCE,
    ),
    AttributionRule(
        id="R3", priority=20, mode="hub",
        primary_kinds=frozenset({K.BANDWIDTH_SATURATION, K.PCIE_LINK_SATURATION}),
        linked_kinds=frozenset(PathologyKind),
        root_cause="link saturation elongating downstream phases",
        confidence=CONF_CORROBORATED,
    ),
    AttributionRule(
        id="R4", priority=20, mode="pair",
        primary_kinds=frozenset({K.DECODE_EARLY_STOP_SKEW, K.EARLY_COMPLETION_SKEW}),
        linked_kinds=frozenset({K.PP_BUBBLE}),
        root_cause="early token exit variance",
        confidence=CONF_CORROBORATED,
        same_node=False,
    ),
    AttributionRule(
        id="R5", priority=10, mode="pair",
        primary_kinds=frozenset({K.HOST_CPU_BOTTLENECK}),
        linked_kinds=frozenset({K.KERNEL_LAUNCH_LATENCY}),
        root_cause="CPU-side orchestration lag",
        confidence=CONF_CORROBORATED,
    ),
    AttributionRule(
        id="R6", priority=10, mode="pair",
        primary_kinds=frozenset({K.DECODE_EARLY_STOP_SKEW}),
        linked_kinds=frozenset({K.EARLY_STOP_SKEW_ACROSS_NODES}),
        root_cause="decode early-stop skew seen at host and fabric vantages",
        confidence=CONF_CORROBORATED,
    ),
)


@dataclass
class RootCauseReport:
    primary: Finding
    linked: list[Finding]
    root_cause_label: str
    directives: list[str]
    confidence: str
    rule_id: str | None = None

    def __post_init__(self) -> None:
        if not self.directives:
            raise ValueError("every report must carry at least one directive")


def directives_for(kind: PathologyKind) -> list[str]:
    """Ordered mitigation directives for a pathology, verbatim from the
    runbook row.  Total over all 28 kinds."""
    return list(CATALOG_BY_KIND[kind].directives)


def _overlap(a: Finding, b: Finding) -> bool:
    return a.start < b.end and b.start < a.end


def _merged_directives(primary: Finding, linked: list[Finding]) -> list[str]:
    out = list(CATALOG_BY_KIND[primary.kind].directives)
    seen = set(out)
    for f in linked:
        for d in CATALOG_BY_KIND[f.kind].directives:
            if d not in seen:
                out.append(d)
                seen.add(d)
    return out


def _finding_order(f: Finding):
    return (f.start, KIND_ORDER[f.kind], f.location.sort_key())


def attribute(
    findings: list[Finding],
    topology: ClusterTopology | None = None,
    rules: tuple[AttributionRule, ...] = BUILTIN_RULES,
) -> list[RootCauseReport]:
    """Fuse findings into root-cause reports.

    Applies rules by descending priority (rule id breaks ties); each
    finding is claimed at most once.  Unclaimed findings become
    single-signal reports carrying their runbook row's root cause and
    directives.
    """
    order = sorted(range(len(findings)), key=lambda i: _finding_order(findings[i]))
    claimed: set[int] = set()
    reports: list[RootCauseReport] = []

    for rule in sorted(rules, key=lambda r: (-r.priority, r.id)):
        if rule.mode == "pair":
            for i in order:
                if i in claimed or findings[i].kind not in rule.primary_kinds:
                    continue
                prim = findings[i]
                links = []
                for j in order:
                    if j in claimed or j == i:
                        continue
                    cand = findings[j]
                    if cand.kind not in rule.linked_kinds:
                        continue
                    if rule.same_node and cand.location.node != prim.location.node:
                        continue
                    if _overlap(prim, cand):
                        links.append(j)
                if links:
                    claimed.add(i)
                    claimed.update(links)
                    linked = [findings[j] for j in links]
                    reports.append(
                        RootCauseReport(
                            primary=prim,
                            linked=linked,
                            root_cause_label=rule.root_cause,
                            directives=_merged_directives(prim, linked),
                            confidence=rule.confidence,
                            rule_id=rule.id,
                        )
                    )
        elif rule.mode == "absence":
            for i in order:
                if i in claimed or findings[i].kind not in rule.primary_kinds:
                    continue
                prim = findings[i]
                pcie_here = any(
                    f.kind in _PCIE_KINDS
                    and f.location.node == prim.location.node
                    and _overlap(prim, f)
                    for f in findings
                )
                if not pcie_here:
                    claimed.add(i)
                    reports.append(
                        RootCauseReport(
                            primary=prim,
                            linked=[],
                            root_cause_label=rule.root_cause,
                            directives=directives_for(prim.kind),
                            confidence=rule.confidence,
                            rule_id=rule.id,
                        )
                    )
        elif rule.mode == "hub":
            for i in order:
                if i in claimed or findings[i].kind not in rule.primary_kinds:
                    continue
                prim = findings[i]
                links = [
                    j
                    for j in order
                    if j != i
                    and j not in claimed
                    and findings[j].kind is not prim.kind
                    and findings[j].location.node == prim.location.node
                    and _overlap(prim, findings[j])
                ]
                if len(links) >= 2:
                    claimed.add(i)
                    claimed.update(links)
                    linked = [findings[j] for j in links]
                    reports.append(
                        RootCauseReport(
                            primary=prim,
                            linked=linked,
                            root_cause_label=rule.root_cause,
                            directives=_merged_directives(prim, linked),
                            confidence=rule.confidence,
                            rule_id=rule.id,
                        )
                    )
        else:  # pragma: no cover - rules are built-in data
            raise ValueError(f"unknown rule mode {rule.mode!r}")

    for i in order:
        if i in claimed:
            continue
        f = findings[i]
        entry = CATALOG_BY_KIND[f.kind]
        reports.append(
            RootCauseReport(
                primary=f,
                linked=[],
                root_cause_label=entry.root_cause,
                directives=directives_for(f.kind),
                confidence=CONF_SINGLE,
            )
        )

    reports.sort(key=lambda r: _finding_order(r.primary))
    return reports
