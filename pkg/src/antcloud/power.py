"""Node power model, energy integration and power-state transitions."""

from __future__ import annotations

from collections import defaultdict

from .domain import EPS, NodeState
from .errors import DomainError, EngineOrderingError, PolicyViolationError


def _check_fraction(name, u):
    if u < -EPS or u > 1 + EPS:
        raise DomainError(f"{name}={u} outside [0, 1]")
    return min(1.0, max(0.0, u))


def active_power(profile, u_cpu, u_mem):
    return profile.p_base + u_cpu * profile.p_cpu_peak + u_mem * profile.p_mem_peak


def instantaneous_power(node, u_cpu, u_mem):
    """Watts drawn by ``node`` at the given utilisation.

    Linear in utilisation while Active. A transitioning node is billed at the
    larger of its two endpoint powers. A crashed node draws nothing.
    """
    u_cpu = _check_fraction("u_cpu", u_cpu)
    u_mem = _check_fraction("u_mem", u_mem)
    p = node.power_profile
    if not node.responding:
        return 0.0
    state = node.state
    if state == NodeState.ACTIVE:
        return active_power(p, u_cpu, u_mem)
    if state == NodeState.WAKING:
        return max(p.p_standby, active_power(p, u_cpu, u_mem))
    if state in (NodeState.STANDBY, NodeState.BOOTING):
        # Off -> Standby: max(0, p_standby)
        return p.p_standby
    return 0.0


class EnergyAccumulator:
    """Per-node and fleet energy in joules, piecewise-constant power."""

    def __init__(self):
        self.per_node = defaultdict(float)
        self.total = 0.0

    def accumulate(self, node, from_t, to_t, u_cpu, u_mem):
        if to_t < from_t:
            raise EngineOrderingError(f"negative interval [{from_t}, {to_t}]")
        joules = instantaneous_power(node, u_cpu, u_mem) * (to_t - from_t)
        self.per_node[node.node_id] += joules
        self.total += joules
        return joules


def transition_node(node, target, now):
    """Start a power-state change; return the time it completes.

    Active->Standby and Standby->Off happen at once. Standby->Active and
    Off->Standby pass through Waking / Booting for the profile's latency;
    call :func:`complete_transition` at the returned time.
    """
    src = node.state
    p = node.power_profile
    if target == NodeState.STANDBY and src == NodeState.ACTIVE:
        if node.hosted_vms:
            raise PolicyViolationError(f"node {node.node_id} hosts VMs; cannot leave Active")
        node.state = NodeState.STANDBY
        return now
    if target == NodeState.OFF and src == NodeState.STANDBY:
        node.state = NodeState.OFF
        return now
    if target == NodeState.ACTIVE and src == NodeState.STANDBY:
        node.state = NodeState.WAKING
        node.transition_done_at = now + p.wake_latency
        return node.transition_done_at
    if target == NodeState.STANDBY and src == NodeState.OFF:
        node.state = NodeState.BOOTING
        node.transition_done_at = now + p.boot_latency
        return node.transition_done_at
    raise PolicyViolationError(
        f"illegal transition {src.value} -> {target.value} on node {node.node_id}"
    )


def complete_transition(node):
    if node.state == NodeState.WAKING:
        node.state = NodeState.ACTIVE
    elif node.state == NodeState.BOOTING:
        node.state = NodeState.STANDBY
    else:
        raise PolicyViolationError(f"node {node.node_id} is not transitioning")
    node.transition_done_at = None
    return node.state
