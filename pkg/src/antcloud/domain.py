"""Core data model shared by every agent.

The :class:`Cluster` owns nodes, VMs and the :class:`AvailableResourceTable`.
All placement mutations go through it so the table's remaining-capacity
columns never drift from the hosted entitlements.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, fields
from enum import Enum, IntEnum
from typing import Iterable, Optional

from .errors import InvalidProfileError, NotFoundError, PolicyViolationError

EPS = 1e-9
DAY = 86400.0


class NodeState(str, Enum):
    ACTIVE = "Active"
    STANDBY = "Standby"
    OFF = "Off"
    FAILED = "Failed"
    # transitioning sub-states
    WAKING = "Waking"  # Standby -> Active
    BOOTING = "Booting"  # Off -> Standby


EMPTY_STATES = (NodeState.STANDBY, NodeState.OFF, NodeState.FAILED)


class SlamCode(IntEnum):
    OK = 0
    REC_MIGRATE = 11
    REC_CLONE = 12
    CRIT_MIGRATE = 21
    CRIT_CLONE = 22

    @property
    def is_critical(self):
        return self.value >= 20

    @property
    def is_recommended(self):
        return 10 <= self.value < 20


@dataclass(frozen=True)
class Tunables:
    """Every knob of the colony, with its default."""

    # SLA monitor bands, as multiples of RTIME / THPUT
    rtime_ok: float = 0.90
    rtime_critical: float = 0.95
    thput_ok: float = 1.10
    thput_critical: float = 1.05
    # node utilisation bounds
    peak_util: float = 0.90
    desirable_util: float = 0.80
    low_util: float = 0.50
    # remediation sizing
    clone_fraction: float = 0.5
    migrate_headroom: float = 1.3
    cleaner_margin: float = 0.3
    basic_vm_cpu: float = 1.0
    basic_vm_mem: float = 1.0
    warm_pool_size: int = 3
    # cleaner
    lease_warning_s: float = 7 * DAY
    failure_timeout_s: float = 30.0
    # performance model
    saturation_rtime_s: float = 60.0
    # table ordering
    sort_weight_ppw: float = 0.5
    sort_weight_mpw: float = 0.5
    # ant cadence
    tester_per_min: float = 1.0
    cleaner_per_min: float = 1.0
    scout_per_min: float = 1.0
    hop_interval_s: float = 1.0
    tour_hops: Optional[int] = None  # None: one hop per known node
    sample_interval_s: float = 10.0
    migration_latency_s: float = 0.0

    @property
    def basic_vm(self):
        return (self.basic_vm_cpu, self.basic_vm_mem)

    @property
    def sort_weights(self):
        return (self.sort_weight_ppw, self.sort_weight_mpw)

    @classmethod
    def names(cls):
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class PowerProfile:
    p_base: float
    p_cpu_peak: float
    p_mem_peak: float
    p_standby: float
    wake_latency: float = 30.0
    boot_latency: float = 120.0

    def __post_init__(self):
        for name in ("p_base", "p_cpu_peak", "p_mem_peak", "p_standby"):
            if getattr(self, name) < 0:
                raise InvalidProfileError(f"{name} must be >= 0")
        if not self.p_standby < self.p_base:
            raise InvalidProfileError("p_standby must be below p_base")
        if not 0 <= self.wake_latency < self.boot_latency:
            raise InvalidProfileError("wake_latency must be shorter than boot_latency")


@dataclass
class NodeRecord:
    node_id: int
    cpu_capacity: float
    mem_capacity: float
    power_profile: PowerProfile
    state: NodeState = NodeState.OFF
    hosted_vms: list = field(default_factory=list)
    neighbor_ids: list = field(default_factory=list)
    last_seen: float = 0.0
    responding: bool = True
    transition_done_at: Optional[float] = None
    wake_after_boot: bool = False
    pending_joins: list = field(default_factory=list)

    def __post_init__(self):
        if self.cpu_capacity < 0 or self.mem_capacity < 0:
            raise InvalidProfileError(f"node {self.node_id}: negative capacity")
        if self.node_id in self.neighbor_ids:
            raise ValueError(f"node {self.node_id} lists itself as a neighbour")

    @property
    def can_host(self):
        """Powered, or on its way to powered, so placements are allowed."""
        if self.state in (NodeState.ACTIVE, NodeState.WAKING):
            return True
        return self.state == NodeState.BOOTING and self.wake_after_boot

    @property
    def is_ready(self):
        return self.state == NodeState.ACTIVE and self.responding


@dataclass(frozen=True)
class ServiceRequest:
    request_id: int
    thput_target: float
    rtime_target: float
    lease_duration: float
    arrival_time: float = 0.0
    app_label: str = "app"
    os_label: str = "linux"
    demand_profile: str = "default"

    def __post_init__(self):
        if not 0 < self.thput_target <= 1:
            raise ValueError("thput_target must be in (0, 1]")
        if self.rtime_target <= 0:
            raise ValueError("rtime_target must be positive")
        if self.lease_duration <= 0:
            raise ValueError("lease_duration must be positive")

    @property
    def lease_expiry(self):
        return self.arrival_time + self.lease_duration


@dataclass
class VmInstance:
    vm_id: int
    request_id: int
    host_id: int
    cpu_entitlement: float
    mem_entitlement: float
    is_clone: bool = False
    parent_vm: Optional[int] = None
    traffic_share: float = 1.0
    lease_expiry: float = math.inf
    slam: SlamCode = SlamCode.OK
    # last measurement taken by a probe (ant visit or monitor sample)
    cpu_used: float = 0.0
    mem_used: float = 0.0
    observation: object = None
    ready_at: float = 0.0


@dataclass
class TableEntry:
    node_id: int
    ppw: float
    mpw: float
    score: float = 0.0
    current_power_w: float = 0.0
    remaining_cpu: float = 0.0
    remaining_mem: float = 0.0
    state: NodeState = NodeState.OFF
    u_cpu: float = 0.0
    u_mem: float = 0.0


def compute_ppw(cpu_capacity, p_cpu_peak):
    if p_cpu_peak <= 0:
        raise InvalidProfileError("p_cpu_peak must be positive")
    return cpu_capacity / p_cpu_peak


def compute_mpw(mem_capacity, p_mem_peak):
    if p_mem_peak <= 0:
        raise InvalidProfileError("p_mem_peak must be positive")
    return mem_capacity / p_mem_peak


def _check_weights(weights):
    w_ppw, w_mpw = weights
    if w_ppw < 0 or w_mpw < 0 or abs(w_ppw + w_mpw - 1.0) > 1e-9:
        raise ValueError(f"sort weights must be non-negative and sum to 1, got {weights}")


class AvailableResourceTable:
    """Efficiency-sorted node list plus the allocation pointer.

    ``allocation_ptr`` is an index into ``entries`` or ``None`` (the Invalid
    sentinel). The order only changes when a node is inserted or removed;
    the pointer is re-anchored to the node it pointed at.
    """

    def __init__(self, entries=(), weights=(0.5, 0.5)):
        _check_weights(weights)
        self.weights = tuple(weights)
        self.entries: list[TableEntry] = list(entries)
        self.allocation_ptr: Optional[int] = None
        self.epoch = 0
        self._resort(anchor=None)
        self.allocation_ptr = 0 if self.entries else None

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __contains__(self, node_id):
        return any(e.node_id == node_id for e in self.entries)

    def node_ids(self):
        return [e.node_id for e in self.entries]

    def index_of(self, node_id):
        for i, e in enumerate(self.entries):
            if e.node_id == node_id:
                return i
        raise NotFoundError(f"node {node_id} is not in the table")

    def entry(self, node_id):
        return self.entries[self.index_of(node_id)]

    def pointed(self):
        if self.allocation_ptr is None:
            return None
        return self.entries[self.allocation_ptr]

    def _resort(self, anchor):
        max_ppw = max((e.ppw for e in self.entries), default=0.0)
        max_mpw = max((e.mpw for e in self.entries), default=0.0)
        w_ppw, w_mpw = self.weights
        for e in self.entries:
            score = 0.0
            if max_ppw > 0:
                score += w_ppw * e.ppw / max_ppw
            if max_mpw > 0:
                score += w_mpw * e.mpw / max_mpw
            e.score = score
        self.entries.sort(key=lambda e: (-e.score, e.node_id))
        self.epoch += 1
        if anchor is not None:
            self.allocation_ptr = self.index_of(anchor)

    def insert(self, entry):
        if entry.node_id in self:
            raise ValueError(f"node {entry.node_id} already registered")
        anchor = self.pointed().node_id if self.allocation_ptr is not None else None
        self.entries.append(entry)
        self._resort(anchor)

    def remove(self, node_id):
        """Drop a node. Returns True when it was the pointed node.

        In that case the pointer falls through to whichever node now occupies
        the same index (or becomes Invalid past the end).
        """
        idx = self.index_of(node_id)
        was_pointed = idx == self.allocation_ptr
        anchor = None
        if self.allocation_ptr is not None and not was_pointed:
            anchor = self.pointed().node_id
        del self.entries[idx]
        self._resort(anchor)
        if was_pointed:
            self.allocation_ptr = idx if idx < len(self.entries) else None
        return was_pointed

    def is_sorted(self):
        keys = [(-e.score, e.node_id) for e in self.entries]
        return all(a < b for a, b in zip(keys, keys[1:]))


def sort_nodes(nodes: Iterable[NodeRecord], weights=(0.5, 0.5)):
    """Build a table ordered by weighted, max-normalised PPW and MPW."""
    _check_weights(weights)
    entries = []
    for n in nodes:
        p = n.power_profile
        entries.append(
            TableEntry(
                node_id=n.node_id,
                ppw=compute_ppw(n.cpu_capacity, p.p_cpu_peak),
                mpw=compute_mpw(n.mem_capacity, p.p_mem_peak),
                remaining_cpu=n.cpu_capacity,
                remaining_mem=n.mem_capacity,
                state=n.state,
            )
        )
    return AvailableResourceTable(entries, weights)


def remaining_capacity(table, node_id):
    e = table.entry(node_id)
    return (e.remaining_cpu, e.remaining_mem)


def advance_pointer(table):
    """Move the pointer one entry down; past the end it becomes Invalid.

    Waking the newly pointed node is the caller's job (it needs the engine).
    """
    if table.allocation_ptr is None:
        return None
    nxt = table.allocation_ptr + 1
    table.allocation_ptr = nxt if nxt < len(table.entries) else None
    return table.allocation_ptr


class Cluster:
    """Nodes, VMs, requests and the resource table, kept mutually consistent."""

    def __init__(self, nodes: Iterable[NodeRecord] = (), weights=(0.5, 0.5)):
        nodes = list(nodes)
        self.nodes: dict[int, NodeRecord] = {n.node_id: n for n in nodes}
        if len(self.nodes) != len(nodes):
            raise ValueError("duplicate node ids")
        self.vms: dict[int, VmInstance] = {}
        self.requests: dict[int, ServiceRequest] = {}
        self._app_vms: dict[int, list] = {}
        self.table = sort_nodes(nodes, weights)
        self._vm_ids = itertools.count(1)
        self._node_ids = itertools.count(max(self.nodes, default=0) + 1)
        for nid in self.nodes:
            self.sync(nid)

    # -- lookups -----------------------------------------------------------

    def node(self, node_id):
        try:
            return self.nodes[node_id]
        except KeyError:
            raise NotFoundError(f"unknown node {node_id}") from None

    def app_vms(self, request_id):
        return [self.vms[v] for v in self._app_vms.get(request_id, ())]

    def node_vms(self, node_id):
        return [self.vms[v] for v in self.node(node_id).hosted_vms]

    def allocated(self, node_id):
        cpu = mem = 0.0
        for vm in self.node_vms(node_id):
            cpu += vm.cpu_entitlement
            mem += vm.mem_entitlement
        return cpu, mem

    def remaining(self, node_id):
        n = self.node(node_id)
        cpu, mem = self.allocated(node_id)
        return max(0.0, n.cpu_capacity - cpu), max(0.0, n.mem_capacity - mem)

    def fits(self, node_id, cpu, mem):
        rc, rm = self.remaining(node_id)
        return rc >= cpu - EPS and rm >= mem - EPS

    def utilization(self, node_id):
        """Measured (probe) utilisation, not entitlement."""
        n = self.node(node_id)
        cpu = sum(vm.cpu_used for vm in self.node_vms(node_id))
        mem = sum(vm.mem_used for vm in self.node_vms(node_id))
        u_cpu = cpu / n.cpu_capacity if n.cpu_capacity > 0 else 0.0
        u_mem = mem / n.mem_capacity if n.mem_capacity > 0 else 0.0
        return u_cpu, u_mem

    def sync(self, node_id):
        if node_id not in self.table:
            return
        e = self.table.entry(node_id)
        e.remaining_cpu, e.remaining_mem = self.remaining(node_id)
        e.state = self.nodes[node_id].state

    def next_node_id(self):
        nid = next(self._node_ids)
        while nid in self.nodes:
            nid = next(self._node_ids)
        return nid

    # -- node membership ---------------------------------------------------

    def add_node(self, record):
        if record.node_id in self.nodes:
            raise ValueError(f"node {record.node_id} already exists")
        self.nodes[record.node_id] = record
        p = record.power_profile
        self.table.insert(
            TableEntry(
                node_id=record.node_id,
                ppw=compute_ppw(record.cpu_capacity, p.p_cpu_peak),
                mpw=compute_mpw(record.mem_capacity, p.p_mem_peak),
            )
        )
        self.sync(record.node_id)

    def drop_node(self, node_id):
        """Remove a node from the table. Returns True if it was pointed at."""
        return self.table.remove(node_id)

    # -- placements --------------------------------------------------------

    def place_vm(self, request, node_id, cpu, mem, *, parent=None, share=1.0, now=0.0):
        node = self.node(node_id)
        if not node.can_host:
            raise PolicyViolationError(f"node {node_id} is {node.state.value}; cannot host")
        if not self.fits(node_id, cpu, mem):
            raise PolicyViolationError(f"node {node_id} lacks room for ({cpu}, {mem})")
        vm = VmInstance(
            vm_id=next(self._vm_ids),
            request_id=request.request_id,
            host_id=node_id,
            cpu_entitlement=cpu,
            mem_entitlement=mem,
            is_clone=parent is not None,
            parent_vm=parent,
            traffic_share=share,
            lease_expiry=request.lease_expiry,
            ready_at=now,
        )
        self.requests.setdefault(request.request_id, request)
        self.vms[vm.vm_id] = vm
        self._app_vms.setdefault(request.request_id, []).append(vm.vm_id)
        node.hosted_vms.append(vm.vm_id)
        self.sync(node_id)
        return vm

    def remove_vm(self, vm_id):
        vm = self.vms.pop(vm_id)
        self.nodes[vm.host_id].hosted_vms.remove(vm_id)
        app = self._app_vms[vm.request_id]
        app.remove(vm_id)
        if not app:
            del self._app_vms[vm.request_id]
        self.sync(vm.host_id)
        return vm

    def move_vm(self, vm_id, dst, cpu=None, mem=None):
        vm = self.vms[vm_id]
        cpu = vm.cpu_entitlement if cpu is None else cpu
        mem = vm.mem_entitlement if mem is None else mem
        if not self.node(dst).can_host:
            raise PolicyViolationError(f"node {dst} cannot host")
        if not self.fits(dst, cpu, mem):
            raise PolicyViolationError(f"node {dst} lacks room for VM {vm_id}")
        src = vm.host_id
        self.nodes[src].hosted_vms.remove(vm_id)
        self.nodes[dst].hosted_vms.append(vm_id)
        vm.host_id = dst
        vm.cpu_entitlement, vm.mem_entitlement = cpu, mem
        self.sync(src)
        self.sync(dst)

    def equalize_shares(self, request_id):
        vms = self.app_vms(request_id)
        for vm in vms:
            vm.traffic_share = 1.0 / len(vms)

    # -- invariants ---------------------------------------------------------

    def check_invariants(self):
        """Return a list of human-readable violations (empty when healthy)."""
        problems = []
        for nid, n in self.nodes.items():
            cpu, mem = self.allocated(nid)
            if cpu > n.cpu_capacity + 1e-7 or mem > n.mem_capacity + 1e-7:
                problems.append(f"node {nid} over capacity ({cpu}, {mem})")
            if n.hosted_vms and (n.state in EMPTY_STATES or (n.state == NodeState.BOOTING and not n.wake_after_boot)):
                problems.append(f"node {nid} is {n.state.value} but hosts VMs")
            if nid in n.neighbor_ids:
                problems.append(f"node {nid} is its own neighbour")
        for vm in self.vms.values():
            if vm.vm_id not in self.nodes[vm.host_id].hosted_vms:
                problems.append(f"VM {vm.vm_id} missing from host {vm.host_id}")
            if vm.is_clone != (vm.parent_vm is not None):
                problems.append(f"VM {vm.vm_id} clone flag disagrees with parent")
            if vm.parent_vm is not None:
                parent = self.vms.get(vm.parent_vm)
                if parent is None or parent.is_clone or parent.request_id != vm.request_id:
                    problems.append(f"VM {vm.vm_id} has a bad parent {vm.parent_vm}")
        for rid, ids in self._app_vms.items():
            total = sum(self.vms[v].traffic_share for v in ids)
            if abs(total - 1.0) > 1e-9:
                problems.append(f"request {rid} traffic shares sum to {total}")
        t = self.table
        ids = t.node_ids()
        if len(set(ids)) != len(ids):
            problems.append("duplicate table entries")
        if not t.is_sorted():
            problems.append("table out of order")
        if t.allocation_ptr is not None:
            if not 0 <= t.allocation_ptr < len(t):
                problems.append("allocation pointer out of range")
            else:
                pointed = self.nodes[t.pointed().node_id]
                if not pointed.can_host and pointed.responding:
                    problems.append(f"allocation pointer rests on {pointed.state.value} node")
        for e in t.entries:
            rc, rm = self.remaining(e.node_id)
            if abs(rc - e.remaining_cpu) > 1e-9 or abs(rm - e.remaining_mem) > 1e-9:
                problems.append(f"table entry {e.node_id} stale remaining capacity")
        return problems
