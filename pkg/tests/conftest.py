import pytest

from skewscope.scenario import golden_dir, load_scenario
from skewscope.sim import DistSpec, SimConfig, WorkloadSpec
from skewscope.trace import ClusterTopology

SEC = 1_000_000_000


@pytest.fixture(scope="session")
def golden_scenarios():
    return sorted(golden_dir().glob("*.yaml"))


@pytest.fixture(scope="session")
def golden_spec():
    """The healthy golden scenario (4 nodes x 4 GPUs, TP=4, PP=2, 60 s)."""
    return load_scenario(golden_dir() / "healthy.yaml")


@pytest.fixture(scope="session")
def golden_trace(golden_spec):
    return golden_spec.run()


@pytest.fixture()
def small_topology():
    return ClusterTopology(
        num_nodes=2,
        gpus_per_node=2,
        tp_degree=2,
        pp_stages=2,
        nic_capacity_bytes_per_s=10_000_000_000,
        pcie_capacity_bytes_per_s=16_000_000_000,
        fabric_base_latency_ns=2000,
        fabric_jitter_ns=200,
    )


@pytest.fixture()
def single_node_workload():
    return WorkloadSpec(
        request_rate_per_s=0.5,
        prompt_len_dist=DistSpec(8, 8),
        decode_len_dist=DistSpec(2, 2),
        bytes_per_prompt_token=512,
        bytes_per_decode_step=16384,
        kv_handoff_bytes_per_step=32768,
        probe_period_s=0.0,
    )


@pytest.fixture()
def sim_config():
    return SimConfig(seed=0, horizon_ns=2 * SEC)
