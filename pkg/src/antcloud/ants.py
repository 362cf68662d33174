"""The colony: queen/controller, worker, tester, scout and cleaner behaviours.

Every behaviour mutates the shared :class:`~antcloud.domain.Cluster` and
appends typed :class:`Action` records to ``Colony.log``. Actions are logged
only after the state they describe is complete, so invariant checks hooked
on ``on_action`` always see a consistent cluster.
"""

from __future__ import annotations

import itertools
import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from . import power
from .domain import EPS, NodeRecord, NodeState, SlamCode, Tunables

log = logging.getLogger(__name__)

RESOURCE_SCARCITY = "ResourceScarcity"
FEW_RESOURCES = "FewResources"


class AntKind(str, Enum):
    WORKER = "Worker"
    TESTER = "Tester"
    SCOUT = "Scout"
    CLEANER = "Cleaner"


class ActionKind(str, Enum):
    DEPLOY = "Deploy"
    REJECT = "Reject"
    MIGRATE = "Migrate"
    CLONE = "Clone"
    CONSOLIDATE = "Consolidate"
    STATE_CHANGE = "StateChange"
    NOTIFY = "Notify"
    REGISTER = "Register"
    REMOVE_CLONE = "RemoveClone"
    NOTIFY_USER = "NotifyUser"
    REMOVE_VM = "RemoveVm"
    MARK_FAILED = "MarkFailed"
    REQUEUE = "Requeue"


@dataclass(frozen=True)
class Action:
    time: float
    kind: ActionKind
    node_id: Optional[int] = None
    vm_id: Optional[int] = None
    target_id: Optional[int] = None
    request_id: Optional[int] = None
    detail: str = ""
    cpu: Optional[float] = None
    mem: Optional[float] = None

    def key(self, ndigits=9):
        """Comparable tuple with floats rounded, used for replay checks."""
        r = lambda x: None if x is None else round(x, ndigits)  # noqa: E731
        return (
            self.kind.value, self.node_id, self.vm_id, self.target_id,
            self.request_id, self.detail, r(self.cpu), r(self.mem),
        )


@dataclass
class AntAgent:
    ant_id: int
    kind: AntKind
    current_node: Optional[int] = None
    spawn_time: float = 0.0
    visited: set = field(default_factory=set)
    hops_left: int = 0


@dataclass
class JoinRequest:
    """A machine asking to join, parked at some cloud node until a scout passes."""

    key: str
    cpu_capacity: float
    mem_capacity: float
    power_profile: object


@dataclass
class ControllerState:
    request_queue: deque = field(default_factory=deque)
    spawn_rates: dict = field(default_factory=dict)
    admin_log: list = field(default_factory=list)
    user_log: list = field(default_factory=list)


def ant_next_hop(ant, adjacency, known, rng):
    """Pick the ant's next node.

    Unvisited neighbours first; failing that, any unvisited known node; once
    every known node is visited the list is cleared and the choice repeats.
    A lone node keeps the ant in place.
    """
    known = sorted(known)
    if not known:
        return ant.current_node
    for _ in range(2):
        neighbours = [n for n in adjacency.get(ant.current_node, ()) if n in known]
        fresh = sorted(n for n in neighbours if n not in ant.visited and n != ant.current_node)
        if fresh:
            return rng.choice(fresh)
        anywhere = [n for n in known if n not in ant.visited and n != ant.current_node]
        if anywhere:
            return rng.choice(anywhere)
        if ant.visited >= set(known):
            ant.visited.clear()
        else:
            break
    return ant.current_node


class Colony:
    """Controller state plus the agent behaviours over one cluster."""

    def __init__(self, cluster, tunables=None, *, scheduler=None, now=0.0):
        self.cluster = cluster
        self.tun = tunables or Tunables()
        self.controller = ControllerState()
        self.log: list[Action] = []
        self.now = now
        # scheduler(node_id, done_at) lets the engine queue TransitionComplete
        self.scheduler = scheduler
        self.on_action = None
        self._notified_leases: set = set()
        self._join_keys: set = set()
        self._ant_ids = itertools.count(1)

    # -- bookkeeping ---------------------------------------------------------

    def _log(self, kind, **kw):
        action = Action(self.now, kind, **kw)
        self.log.append(action)
        if self.on_action is not None:
            self.on_action(action)
        return action

    def notify_admin(self, reason):
        self.controller.admin_log.append((self.now, reason))
        self._log(ActionKind.NOTIFY, detail=reason)

    def spawn(self, kind, start_node):
        return AntAgent(next(self._ant_ids), kind, start_node, self.now)

    def _node(self, node_id):
        return self.cluster.nodes[node_id]

    def _transition(self, node_id, target, *, wake_after=False):
        node = self._node(node_id)
        src = node.state
        done_at = power.transition_node(node, target, self.now)
        node.wake_after_boot = wake_after and node.state == NodeState.BOOTING
        self.cluster.sync(node_id)
        self._log(ActionKind.STATE_CHANGE, node_id=node_id, detail=f"{src.value}->{node.state.value}")
        if node.state in (NodeState.WAKING, NodeState.BOOTING) and self.scheduler is not None:
            self.scheduler(node_id, done_at)

    def complete_transition(self, node_id):
        node = self._node(node_id)
        src = node.state
        power.complete_transition(node)
        mid = node.state
        done_at = None
        if mid == NodeState.STANDBY and node.wake_after_boot:
            # chain straight into the wake so no action sees a Standby host
            node.wake_after_boot = False
            done_at = power.transition_node(node, NodeState.ACTIVE, self.now)
        self.cluster.sync(node_id)
        self._log(ActionKind.STATE_CHANGE, node_id=node_id, detail=f"{src.value}->{mid.value}")
        if done_at is not None:
            self._log(ActionKind.STATE_CHANGE, node_id=node_id, detail=f"{mid.value}->{node.state.value}")
            if self.scheduler is not None:
                self.scheduler(node_id, done_at)

    def bootstrap(self):
        """Initial power layout: pointer node Active, warm pool Standby, rest Off.

        Applied without latency because it is the starting condition, not a
        transition.
        """
        table = self.cluster.table
        for i, e in enumerate(table.entries):
            node = self._node(e.node_id)
            if table.allocation_ptr is not None and i == table.allocation_ptr:
                node.state = NodeState.ACTIVE
            elif table.allocation_ptr is not None and i <= table.allocation_ptr + self.tun.warm_pool_size:
                node.state = NodeState.STANDBY
            else:
                node.state = NodeState.OFF
            self.cluster.sync(e.node_id)
        if table.allocation_ptr is not None:
            short = table.allocation_ptr + self.tun.warm_pool_size - (len(table) - 1)
            if short > 0:
                self.notify_admin(FEW_RESOURCES)

    # -- allocation pointer and warm pool ------------------------------------

    def _wake_for_hosting(self, node_id):
        node = self._node(node_id)
        if node.state == NodeState.STANDBY:
            self._transition(node_id, NodeState.ACTIVE)
        elif node.state == NodeState.OFF:
            self._transition(node_id, NodeState.STANDBY, wake_after=True)
        elif node.state == NodeState.BOOTING:
            node.wake_after_boot = True

    def advance_pointer(self):
        """Move the allocation pointer on, wake its node, refill the warm pool."""
        table = self.cluster.table
        if table.allocation_ptr is None:
            return None
        table.allocation_ptr = table.allocation_ptr + 1
        if table.allocation_ptr >= len(table):
            table.allocation_ptr = None
            return None
        self._wake_for_hosting(table.pointed().node_id)
        self.maintain_warm_pool()
        return table.allocation_ptr

    def maintain_warm_pool(self):
        """Keep ``warm_pool_size`` Standby nodes right after the pointer.

        Powered nodes after the pointer are left alone and do not count.
        Nodes beyond the pool go Off.
        """
        table = self.cluster.table
        if table.allocation_ptr is None:
            return
        pooled = 0
        for e in table.entries[table.allocation_ptr + 1:]:
            node = self._node(e.node_id)
            if node.can_host or not node.responding:
                continue
            if pooled < self.tun.warm_pool_size:
                if node.state == NodeState.OFF:
                    self._transition(e.node_id, NodeState.STANDBY)
                pooled += 1
            elif node.state == NodeState.STANDBY:
                self._transition(e.node_id, NodeState.OFF)
        if pooled < self.tun.warm_pool_size:
            self.notify_admin(FEW_RESOURCES)

    # -- worker ---------------------------------------------------------------

    def _fits_basic(self, node_id):
        node = self._node(node_id)
        return node.can_host and self.cluster.fits(node_id, *self.tun.basic_vm)

    def process_queue(self):
        """Workers drain Q in FIFO order; each request is deployed or rejected."""
        placed = []
        q = self.controller.request_queue
        while q:
            placed.append(self.worker_allocate(q.popleft()))
        return placed

    def worker_allocate(self, request, _retry=False):
        table = self.cluster.table
        self.cluster.requests.setdefault(request.request_id, request)
        if table.allocation_ptr is None:
            self._log(ActionKind.REJECT, request_id=request.request_id)
            return None
        node_id = table.pointed().node_id
        if self._fits_basic(node_id):
            cpu, mem = self.tun.basic_vm
            vm = self.cluster.place_vm(request, node_id, cpu, mem, now=self.now)
            self._log(ActionKind.DEPLOY, node_id=node_id, vm_id=vm.vm_id,
                      request_id=request.request_id, cpu=cpu, mem=mem)
            if not self._fits_basic(node_id):
                if self.advance_pointer() is None:
                    self.notify_admin(RESOURCE_SCARCITY)
            return vm
        self.advance_pointer()
        if not _retry and table.allocation_ptr is not None and self._fits_basic(table.pointed().node_id):
            return self.worker_allocate(request, _retry=True)
        self._log(ActionKind.REJECT, request_id=request.request_id)
        return None

    # -- tester ---------------------------------------------------------------

    def _responsive_hosts(self):
        for idx, e in enumerate(self.cluster.table.entries):
            node = self._node(e.node_id)
            if node.responding:
                yield idx, node

    def tester_visit(self, node_id):
        """Load balancing and consolidation decisions for one Active node."""
        node = self._node(node_id)
        start = len(self.log)
        if node.state != NodeState.ACTIVE or not node.responding:
            return []
        tun = self.tun
        u_cpu, u_mem = self.cluster.utilization(node_id)
        entry = self.cluster.table.entry(node_id)
        entry.u_cpu, entry.u_mem = u_cpu, u_mem
        if u_cpu > tun.peak_util or u_mem > tun.peak_util:
            ranked = sorted(self.cluster.node_vms(node_id), key=lambda v: (-v.cpu_used, v.vm_id))
            for code in (SlamCode.CRIT_CLONE, SlamCode.CRIT_MIGRATE):
                vm = next((v for v in ranked if v.slam == code), None)
                if vm is not None and vm.vm_id in self.cluster.vms:
                    self.handle_critical(vm)
            for code in (SlamCode.REC_MIGRATE, SlamCode.REC_CLONE):
                vm = next((v for v in ranked if v.slam == code), None)
                if vm is not None and vm.vm_id in self.cluster.vms:
                    self.handle_recommended(vm)
        if u_cpu < tun.low_util and u_mem < tun.low_util:
            self.consolidate(node_id)
        return self.log[start:]

    def consolidate(self, node_id):
        """All-or-nothing evacuation to nodes above this one, then Standby."""
        table = self.cluster.table
        if table.allocation_ptr is not None and table.pointed().node_id == node_id:
            return False
        idx = table.index_of(node_id)
        targets = []
        for i, n in self._responsive_hosts():
            if i >= idx:
                break
            if n.can_host:
                rc, rm = self.cluster.remaining(n.node_id)
                targets.append([rc, rm, i, n.node_id])
        targets.sort(key=lambda t: (-t[0], -t[1], t[2]))
        vms = sorted(self.cluster.node_vms(node_id), key=lambda v: (-v.cpu_used, v.vm_id))
        plan = []
        for vm in vms:
            for t in targets:
                if t[0] >= vm.cpu_entitlement - EPS and t[1] >= vm.mem_entitlement - EPS:
                    t[0] -= vm.cpu_entitlement
                    t[1] -= vm.mem_entitlement
                    plan.append((vm.vm_id, t[3]))
                    break
            else:
                return False
        self._log(ActionKind.CONSOLIDATE, node_id=node_id, detail=f"{len(plan)} vms")
        for vm_id, dst in plan:
            self._migrate(vm_id, dst)
        self._transition(node_id, NodeState.STANDBY)
        for e in reversed(table.entries):
            if e.node_id != node_id and self._node(e.node_id).state == NodeState.STANDBY:
                self._transition(e.node_id, NodeState.OFF)
                break
        return True

    def _migrate(self, vm_id, dst, cpu=None, mem=None):
        vm = self.cluster.vms[vm_id]
        src = vm.host_id
        self.cluster.move_vm(vm_id, dst, cpu, mem)
        vm.ready_at = self.now + self.tun.migration_latency_s
        self._log(ActionKind.MIGRATE, node_id=src, vm_id=vm_id, target_id=dst,
                  request_id=vm.request_id, cpu=vm.cpu_entitlement, mem=vm.mem_entitlement)

    def _clone(self, vm, dst, cpu, mem):
        parent_id = vm.parent_vm if vm.is_clone else vm.vm_id
        request = self.cluster.requests[vm.request_id]
        clone = self.cluster.place_vm(request, dst, cpu, mem, parent=parent_id, share=0.0, now=self.now)
        self.cluster.equalize_shares(vm.request_id)
        self._log(ActionKind.CLONE, node_id=dst, vm_id=clone.vm_id, target_id=parent_id,
                  request_id=vm.request_id, cpu=cpu, mem=mem)
        return clone

    def _migration_size(self, vm):
        h = self.tun.migrate_headroom
        return max(vm.cpu_entitlement, h * vm.cpu_used), max(vm.mem_entitlement, h * vm.mem_used)

    def _first_target(self, vm, cpu, mem, *, above_only):
        """First node in table order with room for (cpu, mem).

        ``above_only`` limits the search to powered nodes above the VM's
        host; otherwise Standby nodes qualify too (they get woken).
        """
        host_idx = self.cluster.table.index_of(vm.host_id)
        for i, n in self._responsive_hosts():
            if above_only and i >= host_idx:
                return None
            if n.node_id == vm.host_id:
                continue
            if n.can_host or (not above_only and n.state == NodeState.STANDBY):
                if self.cluster.fits(n.node_id, cpu, mem):
                    return n.node_id
        return None

    def _wake_selected(self, node_id):
        """Wake a Standby pick and turn the next Off node into Standby."""
        if self._node(node_id).state != NodeState.STANDBY:
            return
        self._transition(node_id, NodeState.ACTIVE)
        table = self.cluster.table
        for e in table.entries[table.index_of(node_id) + 1:]:
            nxt = self._node(e.node_id)
            if nxt.state == NodeState.OFF and nxt.responding:
                self._transition(e.node_id, NodeState.STANDBY)
                return
        self.notify_admin(FEW_RESOURCES)

    def handle_critical(self, vm):
        frac = self.tun.clone_fraction
        half = (frac * vm.cpu_used, frac * vm.mem_used)
        if vm.slam == SlamCode.CRIT_CLONE:
            dst = self._first_target(vm, *half, above_only=False) if half[0] > 0 else None
            if dst is None:
                self.notify_admin(RESOURCE_SCARCITY)
                return None
            self._wake_selected(dst)
            return self._clone(vm, dst, *half)
        if vm.slam == SlamCode.CRIT_MIGRATE:
            size = self._migration_size(vm)
            dst = self._first_target(vm, *size, above_only=False)
            if dst is not None:
                self._wake_selected(dst)
                self._migrate(vm.vm_id, dst, *size)
                return vm
            dst = self._first_target(vm, *half, above_only=False) if half[0] > 0 else None
            if dst is not None:
                self._wake_selected(dst)
                return self._clone(vm, dst, *half)
            self.notify_admin(RESOURCE_SCARCITY)
        return None

    def handle_recommended(self, vm):
        """Migrate or clone upstream only; never wakes anything, never notifies."""
        if vm.slam == SlamCode.REC_MIGRATE:
            size = self._migration_size(vm)
            dst = self._first_target(vm, *size, above_only=True)
            if dst is not None:
                self._migrate(vm.vm_id, dst, *size)
                return vm
        elif vm.slam == SlamCode.REC_CLONE:
            frac = self.tun.clone_fraction
            half = (frac * vm.cpu_used, frac * vm.mem_used)
            dst = self._first_target(vm, *half, above_only=True) if half[0] > 0 else None
            if dst is not None:
                return self._clone(vm, dst, *half)
        return None

    # -- scout ----------------------------------------------------------------

    def scout_visit(self, node_id):
        node = self._node(node_id)
        start = len(self.log)
        if not node.responding or node_id not in self.cluster.table:
            return []
        joins, node.pending_joins = node.pending_joins, []
        for join in joins:
            self.register(join, contact=node_id)
        return self.log[start:]

    def register(self, join, contact=None):
        """Give a joining machine a fresh id and slot it into the table."""
        if join.key in self._join_keys:
            return None
        self._join_keys.add(join.key)
        nid = self.cluster.next_node_id()
        record = NodeRecord(nid, join.cpu_capacity, join.mem_capacity, join.power_profile,
                            state=NodeState.STANDBY, last_seen=self.now)
        if contact is not None:
            record.neighbor_ids.append(contact)
            self._node(contact).neighbor_ids.append(nid)
        self.cluster.add_node(record)
        self._log(ActionKind.REGISTER, node_id=nid, target_id=contact, detail=join.key)
        return nid

    # -- cleaner --------------------------------------------------------------

    def cleaner_visit(self, node_id):
        node = self._node(node_id)
        start = len(self.log)
        if node_id not in self.cluster.table:
            return []
        if not node.responding:
            if self.now - node.last_seen > self.tun.failure_timeout_s:
                self.mark_failed(node_id)
            return self.log[start:]
        node.last_seen = self.now
        tun = self.tun
        for vm in self.cluster.node_vms(node_id):
            if not vm.is_clone:
                continue
            parent = self.cluster.vms[vm.parent_vm]
            request = self.cluster.requests[vm.request_id]
            parent_util = parent.cpu_used / parent.cpu_entitlement if parent.cpu_entitlement > 0 else 0.0
            below_peak = parent_util < tun.peak_util
            idle = vm.cpu_used <= EPS
            obs = vm.observation
            comfortable = (
                obs is not None
                and obs.observed_rtime <= (1 - tun.cleaner_margin) * request.rtime_target
                and obs.observed_thput >= (1 + tun.cleaner_margin) * request.thput_target
            )
            if below_peak and (idle or comfortable):
                self.remove_clone(vm.vm_id)
        for vm in self.cluster.node_vms(node_id):
            remaining = vm.lease_expiry - self.now
            if 0 < remaining < tun.lease_warning_s and vm.request_id not in self._notified_leases:
                self._notified_leases.add(vm.request_id)
                self.controller.user_log.append((self.now, vm.request_id))
                self._log(ActionKind.NOTIFY_USER, node_id=node_id, vm_id=vm.vm_id, request_id=vm.request_id)
        for vm in self.cluster.node_vms(node_id):
            if vm.vm_id in self.cluster.vms and vm.lease_expiry <= self.now:
                self.remove_application(vm.request_id)
        return self.log[start:]

    def remove_clone(self, vm_id):
        clone = self.cluster.remove_vm(vm_id)
        self.cluster.vms[clone.parent_vm].traffic_share += clone.traffic_share
        self._log(ActionKind.REMOVE_CLONE, node_id=clone.host_id, vm_id=vm_id,
                  target_id=clone.parent_vm, request_id=clone.request_id)

    def remove_application(self, request_id):
        """Lease over: every VM of the application goes, clones first."""
        vms = sorted(self.cluster.app_vms(request_id), key=lambda v: (not v.is_clone, v.vm_id))
        for vm in vms:
            self.cluster.remove_vm(vm.vm_id)
        for vm in vms:
            self._log(ActionKind.REMOVE_VM, node_id=vm.host_id, vm_id=vm.vm_id, request_id=request_id)

    def mark_failed(self, node_id):
        """Declare a silent node dead, drop it from the table, re-queue its work."""
        cluster = self.cluster
        node = self._node(node_id)
        lost = cluster.node_vms(node_id)
        requeue = []
        for vm in lost:
            if vm.vm_id not in cluster.vms:
                continue
            if vm.is_clone:
                cluster.remove_vm(vm.vm_id)
                cluster.vms[vm.parent_vm].traffic_share += vm.traffic_share
            else:
                for v in cluster.app_vms(vm.request_id):
                    cluster.remove_vm(v.vm_id)
                if cluster.requests[vm.request_id].lease_expiry > self.now:
                    requeue.append(vm.request_id)
        node.state = NodeState.FAILED
        node.transition_done_at = None
        # adjacency is left alone; ants skip nodes absent from the table
        pointed = cluster.drop_node(node_id)
        if pointed:
            table = cluster.table
            if table.allocation_ptr is not None:
                self._wake_for_hosting(table.pointed().node_id)
        self._log(ActionKind.MARK_FAILED, node_id=node_id)
        if pointed:
            if cluster.table.allocation_ptr is None:
                self.notify_admin(RESOURCE_SCARCITY)
            else:
                self.maintain_warm_pool()
        for rid in reversed(requeue):
            self.controller.request_queue.appendleft(cluster.requests[rid])
        for rid in requeue:
            self._log(ActionKind.REQUEUE, node_id=node_id, request_id=rid)
