import pytest

from antcloud.domain import NodeRecord, NodeState, SlamCode
from antcloud.errors import DegenerateVmError, DomainError, EngineOrderingError, PolicyViolationError
from antcloud.power import EnergyAccumulator, complete_transition, instantaneous_power, transition_node
from antcloud.sla import SlaObservation, breaches, compute_slam, mm1, observe

from conftest import profile, request


def node(state=NodeState.ACTIVE, **kw):
    return NodeRecord(1, 4.0, 8.0, profile(**kw), state=state)


def test_active_power_idle_and_peak():
    n = node(base=60.0, cpu=100.0, mem=8.0, standby=5.0)
    assert instantaneous_power(n, 0.0, 0.0) == 60.0
    assert instantaneous_power(n, 1.0, 1.0) == 168.0


def test_standby_off_failed_power():
    n = node(NodeState.STANDBY, standby=5.0)
    assert instantaneous_power(n, 0.0, 0.0) == 5.0
    n.state = NodeState.OFF
    assert instantaneous_power(n, 0.0, 0.0) == 0.0
    n.state = NodeState.FAILED
    assert instantaneous_power(n, 0.0, 0.0) == 0.0


def test_transitional_power_is_the_larger_endpoint():
    n = node(NodeState.WAKING, base=60.0, standby=5.0)
    assert instantaneous_power(n, 0.0, 0.0) == 60.0
    n.state = NodeState.BOOTING
    assert instantaneous_power(n, 0.0, 0.0) == 5.0


def test_crashed_node_draws_nothing():
    n = node()
    n.responding = False
    assert instantaneous_power(n, 0.5, 0.5) == 0.0


@pytest.mark.parametrize("u", [-0.1, 1.2])
def test_utilisation_outside_unit_interval(u):
    with pytest.raises(DomainError):
        instantaneous_power(node(), u, 0.0)


def test_energy_accumulates():
    acc = EnergyAccumulator()
    n = node(base=60.0)
    assert acc.accumulate(n, 0.0, 10.0, 0.0, 0.0) == 600.0
    assert acc.accumulate(n, 10.0, 10.0, 0.0, 0.0) == 0.0
    with pytest.raises(EngineOrderingError):
        acc.accumulate(n, 5.0, 4.0, 0.0, 0.0)


def test_fleet_total_sums_nodes():
    acc = EnergyAccumulator()
    for i in range(3):
        n = NodeRecord(i + 1, 1.0, 1.0, profile(base=100.0), state=NodeState.ACTIVE)
        acc.accumulate(n, 0.0, 1.0, 0.0, 0.0)
    assert acc.total == 300.0
    assert sorted(acc.per_node) == [1, 2, 3]


def test_wake_takes_latency():
    n = node(NodeState.STANDBY, wake=30.0)
    assert transition_node(n, NodeState.ACTIVE, 100.0) == 130.0
    assert n.state == NodeState.WAKING
    complete_transition(n)
    assert n.state == NodeState.ACTIVE


def test_boot_takes_latency():
    n = node(NodeState.OFF, boot=120.0)
    assert transition_node(n, NodeState.STANDBY, 10.0) == 130.0
    assert complete_transition(n) == NodeState.STANDBY


def test_sleep_is_immediate_when_empty():
    n = node()
    assert transition_node(n, NodeState.STANDBY, 7.0) == 7.0
    assert n.state == NodeState.STANDBY
    assert transition_node(n, NodeState.OFF, 7.0) == 7.0


def test_sleep_with_vms_is_refused():
    n = node()
    n.hosted_vms.append(1)
    with pytest.raises(PolicyViolationError):
        transition_node(n, NodeState.STANDBY, 0.0)


@pytest.mark.parametrize("src,dst", [(NodeState.OFF, NodeState.ACTIVE), (NodeState.ACTIVE, NodeState.OFF),
                                     (NodeState.FAILED, NodeState.STANDBY)])
def test_illegal_transitions(src, dst):
    with pytest.raises(PolicyViolationError):
        transition_node(node(src), dst, 0.0)


# -- performance model -------------------------------------------------------


def test_mm1_stable():
    obs = mm1(8.0, 10.0, 60.0)
    assert obs.observed_thput == 1.0
    assert obs.observed_rtime == pytest.approx(0.5)


def test_mm1_overload():
    obs = mm1(12.0, 10.0, 60.0)
    assert obs.observed_thput == pytest.approx(10 / 12)
    assert obs.observed_rtime == 60.0


def test_mm1_idle():
    obs = mm1(0.0, 10.0, 60.0)
    assert obs.observed_thput == 1.0
    assert obs.observed_rtime == pytest.approx(0.1)


def test_observe_uses_share_and_entitlement():
    from antcloud.domain import VmInstance

    vm = VmInstance(1, 1, 1, cpu_entitlement=1.0, mem_entitlement=1.0, traffic_share=0.5)
    obs = observe(vm, 16.0, 0.1, saturation_rtime=60.0)  # lambda 8, mu 10
    assert obs.observed_rtime == pytest.approx(0.5)
    vm.cpu_entitlement = 0.0
    with pytest.raises(DegenerateVmError):
        observe(vm, 16.0, 0.1, saturation_rtime=60.0)


def test_observation_validation():
    with pytest.raises(ValueError):
        SlaObservation(-1.0, 0.5)
    with pytest.raises(ValueError):
        SlaObservation(1.0, 1.5)


# -- SLAM codes --------------------------------------------------------------


@pytest.mark.parametrize("rt,th,code", [
    (0.80, 0.95, 0), (0.92, 0.95, 12), (0.5, 0.82, 21),
    (0.96, 0.95, 22), (0.5, 0.86, 11), (0.92, 0.86, 12), (0.96, 0.5, 22), (0.92, 0.83, 21),
])
def test_slam_examples(rt, th, code):
    assert compute_slam(1.0, 0.8, SlaObservation(rt, th)) == code


def test_slam_band_edges_lean_to_the_worse_band():
    assert compute_slam(1.0, 0.8, SlaObservation(0.95, 0.99)) == SlamCode.CRIT_CLONE
    assert compute_slam(1.0, 0.8, SlaObservation(0.90, 0.99)) == SlamCode.REC_CLONE
    assert compute_slam(1.0, 0.8, SlaObservation(0.5, 0.8 * 1.05)) == SlamCode.CRIT_MIGRATE


def test_breaches_uses_raw_targets():
    req = request(thput=0.8, rtime=1.0)
    assert not breaches(req, SlaObservation(0.99, 0.81))  # code 22, still within target
    assert breaches(req, SlaObservation(1.01, 0.95))
    assert breaches(req, SlaObservation(0.1, 0.79))
