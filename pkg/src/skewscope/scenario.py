"""Scenario files: topology + workload + faults + sim config in YAML.

Field names mirror the in-code specs; times are integer nanoseconds.
The golden scenario library shipped under ``skewscope/scenarios/``
drives the eval harness and the acceptance suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import yaml

from .events import PathologyKind
from .rng import RNG_SCHEME
from .sim import ConfigError, DistSpec, FaultSpec, SimConfig, WorkloadSpec
from .trace import ClusterTopology, Location, Trace, location_from_dict


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    topology: ClusterTopology
    workload: WorkloadSpec
    faults: tuple[FaultSpec, ...]
    sim: SimConfig

    def run(self) -> Trace:
        from .sim import simulate

        return simulate(self.topology, self.workload, list(self.faults), self.sim)


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ConfigError(f"scenario field missing: {where}.{key}")
    return mapping[key]


def _dist(d: dict, where: str) -> DistSpec:
    return DistSpec(
        min=int(_require(d, "min", where)),
        max=int(_require(d, "max", where)),
        shape=float(d.get("shape", 1.0)),
    )


def scenario_from_dict(doc: dict, name: str = "scenario") -> ScenarioSpec:
    if not isinstance(doc, dict):
        raise ConfigError("scenario file must contain a mapping")
    topo_d = _require(doc, "topology", name)
    try:
        topology = ClusterTopology(
            num_nodes=int(_require(topo_d, "num_nodes", "topology")),
            gpus_per_node=int(_require(topo_d, "gpus_per_node", "topology")),
            tp_degree=int(_require(topo_d, "tp_degree", "topology")),
            pp_stages=int(_require(topo_d, "pp_stages", "topology")),
            nic_capacity_bytes_per_s=int(_require(topo_d, "nic_capacity_bytes_per_s", "topology")),
            pcie_capacity_bytes_per_s=int(_require(topo_d, "pcie_capacity_bytes_per_s", "topology")),
            fabric_base_latency_ns=int(_require(topo_d, "fabric_base_latency_ns", "topology")),
            fabric_jitter_ns=int(_require(topo_d, "fabric_jitter_ns", "topology")),
        )
    except ValueError as exc:
        raise ConfigError(f"topology: {exc}") from exc

    wl_d = _require(doc, "workload", name)
    workload = WorkloadSpec(
        request_rate_per_s=float(_require(wl_d, "request_rate_per_s", "workload")),
        prompt_len_dist=_dist(_require(wl_d, "prompt_len_dist", "workload"), "workload.prompt_len_dist"),
        decode_len_dist=_dist(_require(wl_d, "decode_len_dist", "workload"), "workload.decode_len_dist"),
        bytes_per_prompt_token=int(_require(wl_d, "bytes_per_prompt_token", "workload")),
        bytes_per_decode_step=int(_require(wl_d, "bytes_per_decode_step", "workload")),
        kv_handoff_bytes_per_step=int(_require(wl_d, "kv_handoff_bytes_per_step", "workload")),
        probe_period_s=float(wl_d.get("probe_period_s", 0.2)),
    )

    sim_d = _require(doc, "sim", name)
    sim = SimConfig(
        seed=int(_require(sim_d, "seed", "sim")),
        horizon_ns=int(_require(sim_d, "horizon_ns", "sim")),
        rng=str(sim_d.get("rng", RNG_SCHEME)),
    )

    faults = []
    for i, f_d in enumerate(doc.get("faults") or []):
        try:
            kind = PathologyKind(_require(f_d, "kind", f"faults[{i}]"))
        except ValueError as exc:
            raise ConfigError(f"faults[{i}].kind: {exc}") from exc
        faults.append(
            FaultSpec(
                kind=kind,
                start=int(_require(f_d, "start", f"faults[{i}]")),
                end=int(_require(f_d, "end", f"faults[{i}]")),
                location=location_from_dict(f_d.get("location") or {}),
                magnitude=float(_require(f_d, "magnitude", f"faults[{i}]")),
            )
        )

    return ScenarioSpec(
        name=str(doc.get("name", name)),
        topology=topology,
        workload=workload,
        faults=tuple(faults),
        sim=sim,
    )


def load_scenario(path: str | Path) -> ScenarioSpec:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse scenario {path}: {exc}") from exc
    return scenario_from_dict(doc, name=path.stem)


def golden_dir() -> Path:
    """Directory holding the shipped golden scenario files."""
    return Path(resources.files("skewscope") / "scenarios")
