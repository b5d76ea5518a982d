"""skewscope: DPU-vantage telemetry simulation, pathology detection,
and root-cause attribution for LLM inference clusters."""

__version__ = "0.1.0"

from .attribution import RootCauseReport, attribute, directives_for
from .catalog import CATALOG, CATALOG_BY_KIND, DetectorCatalogEntry
from .detect import DetectorConfig, Finding, WindowPlan, run_detectors
from .events import PathologyKind, TelemetryEvent, VantagePoint
from .scenario import ScenarioSpec, load_scenario
from .sim import FaultSpec, SimConfig, WorkloadSpec, simulate
from .trace import (
    ClusterTopology,
    InjectionRecord,
    Location,
    Trace,
    merge_traces,
    validate_trace,
    window_slice,
)

__all__ = [
    "CATALOG",
    "CATALOG_BY_KIND",
    "ClusterTopology",
    "DetectorCatalogEntry",
    "DetectorConfig",
    "FaultSpec",
    "Finding",
    "InjectionRecord",
    "Location",
    "PathologyKind",
    "RootCauseReport",
    "ScenarioSpec",
    "SimConfig",
    "TelemetryEvent",
    "Trace",
    "VantagePoint",
    "WindowPlan",
    "WorkloadSpec",
    "attribute",
    "directives_for",
    "load_scenario",
    "merge_traces",
    "run_detectors",
    "simulate",
    "validate_trace",
    "window_slice",
]
