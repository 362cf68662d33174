"""Deterministic discrete-event core.

One clock, one heap ordered by ``(time, seq)``, one ``random.Random`` seeded
from the scenario and consumed in dispatch order. Energy for the interval
ending at an event is billed before that event runs, at the utilisation that
held during the interval.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, NamedTuple, Optional

from . import metrics
from .ants import ActionKind, AntKind, Colony, JoinRequest, ant_next_hop
from .domain import Cluster, NodeRecord, NodeState
from .errors import EngineOrderingError, NotFoundError
from .metrics import MetricsRecorder
from .power import EnergyAccumulator, instantaneous_power
from .scenario import config_hash
from .sla import SlaObservation, breaches, compute_slam, observe

log = logging.getLogger(__name__)


class EventKind(str, Enum):
    REQUEST_ARRIVAL = "RequestArrival"
    ANT_SPAWN = "AntSpawn"
    ANT_HOP = "AntHop"
    SAMPLE_METRICS = "SampleMetrics"
    NODE_JOIN = "NodeJoin"
    NODE_FAIL = "NodeFail"
    LEASE_EXPIRY = "LeaseExpiry"
    TRANSITION_COMPLETE = "TransitionComplete"
    DEMAND_CHANGE = "DemandChange"


@dataclass(frozen=True, order=True)
class SimEvent:
    time: float
    seq: int
    kind: EventKind = field(compare=False)
    payload: Any = field(compare=False, default=None)


class EventQueue:
    def __init__(self):
        self._heap = []
        self._seq = itertools.count()

    def push(self, time, kind, payload=None):
        ev = SimEvent(float(time), next(self._seq), kind, payload)
        heapq.heappush(self._heap, ev)
        return ev

    def pop(self):
        return heapq.heappop(self._heap)

    def peek(self):
        return self._heap[0] if self._heap else None

    def __len__(self):
        return len(self._heap)


class StepResult(NamedTuple):
    event: SimEvent
    billed_j: float


_SPAWN_RATES = (
    (AntKind.TESTER, "tester_per_min"),
    (AntKind.CLEANER, "cleaner_per_min"),
    (AntKind.SCOUT, "scout_per_min"),
)


class Simulation:
    def __init__(self, config, *, check_invariants=False):
        self.config = config
        self.tun = tun = config.tunables
        self.horizon = config.horizon
        self.rng = random.Random(config.seed)
        self.events = EventQueue()
        self.clock = 0.0
        self.ant_policy = config.policy == "ant"
        self.cluster = Cluster(
            (NodeRecord(n.node_id, n.cpu, n.mem, n.power, neighbor_ids=list(n.neighbors)) for n in config.nodes),
            tun.sort_weights,
        )
        self.trace = config.build_trace()
        self.energy = EnergyAccumulator()
        self.recorder = MetricsRecorder()
        self.colony = Colony(self.cluster, tun, scheduler=self._schedule_transition)
        self.colony.on_action = self._on_action
        self.check_invariants = check_invariants
        self.violations: list = []
        self._rr_last = None
        self._load = {name: (0.0, pts[0].demand) for name, pts in self.trace.profiles.items()}
        self._setup()

    @property
    def actions(self):
        return self.colony.log

    # -- setup ----------------------------------------------------------------

    def _setup(self):
        if self.ant_policy:
            self.colony.bootstrap()
        else:
            # baselines never sleep anything
            for nid, node in self.cluster.nodes.items():
                node.state = NodeState.ACTIVE
                self.cluster.sync(nid)
        used = {r.demand_profile for r in self.config.requests}
        for name, bp in self.trace.breakpoints():
            if name in used and bp.time < self.horizon:
                self.events.push(bp.time, EventKind.DEMAND_CHANGE, (name, bp.rate, bp.demand))
        for req in self.config.requests:
            self.events.push(req.arrival_time, EventKind.REQUEST_ARRIVAL, req)
        for join in self.config.joins:
            self.events.push(join.at, EventKind.NODE_JOIN, join)
        for fault in self.config.faults:
            self.inject_fault(fault.node_id, fault.at, fault.kind)
        if self.ant_policy:
            for kind, attr in _SPAWN_RATES:
                if getattr(self.tun, attr) > 0:
                    self.events.push(0.0, EventKind.ANT_SPAWN, kind)
        self.events.push(0.0, EventKind.SAMPLE_METRICS)

    def inject_fault(self, node_id, at_time, kind="crash"):
        if node_id not in self.cluster.nodes:
            raise NotFoundError(f"unknown node {node_id}")
        if at_time < self.clock:
            raise ValueError(f"fault time {at_time} is in the past (now {self.clock})")
        if kind != "crash":
            raise ValueError(f"unsupported fault kind {kind!r}")
        return self.events.push(at_time, EventKind.NODE_FAIL, node_id)

    def _schedule_transition(self, node_id, done_at):
        self.events.push(done_at, EventKind.TRANSITION_COMPLETE, (node_id, done_at))

    def _on_action(self, action):
        if action.kind == ActionKind.MIGRATE and self.tun.migration_latency_s > 0:
            # the VM resumes service mid-interval; bound the interval
            self.events.push(self.clock + self.tun.migration_latency_s, EventKind.DEMAND_CHANGE, None)
        if self.check_invariants:
            for problem in self.cluster.check_invariants():
                self.violations.append((action, problem))

    # -- performance model ----------------------------------------------------

    def _load_of(self, vm):
        return self._load[self.cluster.requests[vm.request_id].demand_profile]

    def _vm_usage(self, vm):
        node = self.cluster.nodes[vm.host_id]
        if not node.is_ready or vm.ready_at > self.clock:
            return 0.0, 0.0
        rate, demand = self._load_of(vm)
        cpu = min(vm.traffic_share * rate * demand, vm.cpu_entitlement)
        mem = vm.mem_entitlement * cpu / vm.cpu_entitlement if vm.cpu_entitlement > 0 else 0.0
        return cpu, mem

    def _node_usage(self, node):
        cpu = mem = 0.0
        for vid in node.hosted_vms:
            c, m = self._vm_usage(self.cluster.vms[vid])
            cpu += c
            mem += m
        return min(1.0, cpu / node.cpu_capacity), min(1.0, mem / node.mem_capacity)

    def _observe(self, vm):
        node = self.cluster.nodes[vm.host_id]
        if not node.responding:
            return SlaObservation(self.tun.saturation_rtime_s, 0.0, self.tun.sample_interval_s)
        if node.state != NodeState.ACTIVE or vm.ready_at > self.clock:
            return None  # still provisioning
        rate, demand = self._load_of(vm)
        return observe(vm, rate, demand, saturation_rtime=self.tun.saturation_rtime_s,
                       window=self.tun.sample_interval_s)

    def _probe_node(self, node):
        for vid in node.hosted_vms:
            vm = self.cluster.vms[vid]
            vm.cpu_used, vm.mem_used = self._vm_usage(vm)
        if node.node_id in self.cluster.table:
            u_cpu, u_mem = self._node_usage(node)
            entry = self.cluster.table.entry(node.node_id)
            entry.u_cpu, entry.u_mem = u_cpu, u_mem
            entry.current_power_w = instantaneous_power(node, u_cpu, u_mem)

    def _monitor(self, vm):
        """SLA monitor report for one VM; returns the observation or None."""
        obs = self._observe(vm)
        if obs is None:
            return None
        req = self.cluster.requests[vm.request_id]
        code = compute_slam(req.rtime_target, req.thput_target, obs, self.tun)
        self.recorder.observe(code)
        if self.cluster.nodes[vm.host_id].responding:
            vm.observation, vm.slam = obs, code
        return obs

    # -- stepping -------------------------------------------------------------

    def _bill(self, to_t):
        if to_t < self.clock:
            raise EngineOrderingError(f"time regression {self.clock} -> {to_t}")
        if to_t == self.clock:
            return 0.0
        billed = 0.0
        for nid in sorted(self.cluster.nodes):
            node = self.cluster.nodes[nid]
            u_cpu, u_mem = self._node_usage(node)
            billed += self.energy.accumulate(node, self.clock, to_t, u_cpu, u_mem)
        return billed

    def step(self):
        """Dispatch the next event before the horizon; None when there is none."""
        ev = self.events.peek()
        if ev is None or ev.time >= self.horizon:
            return None
        ev = self.events.pop()
        billed = self._bill(ev.time)
        self.clock = self.colony.now = ev.time
        getattr(self, "_on_" + ev.kind.name.lower())(ev.payload)
        if self.colony.controller.request_queue:
            self._drain_queue()
        if self.check_invariants:
            for problem in self.cluster.check_invariants():
                self.violations.append((ev, problem))
        return StepResult(ev, billed)

    def run(self):
        while self.step() is not None:
            pass
        self._bill(self.horizon)
        self.clock = self.horizon
        return self.report()

    def report(self):
        return self.recorder.build(
            policy=self.config.policy,
            seed=self.config.seed,
            config_hash=config_hash(self.config),
            horizon=self.horizon,
            energy=self.energy,
            actions=self.colony.log,
            admin_log=self.colony.controller.admin_log,
            node_ids=self.cluster.nodes,
        )

    # -- handlers -------------------------------------------------------------

    def _drain_queue(self):
        if self.ant_policy:
            self.colony.process_queue()
            return
        colony = self.colony
        q = colony.controller.request_queue
        basic = self.tun.basic_vm
        while q:
            req = q.popleft()
            if self.config.policy == "first_fit":
                nid = metrics.first_fit_allocate(self.cluster, req, basic)
            else:
                nid = metrics.round_robin_allocate(self.cluster, req, basic, self._rr_last)
            if nid is None:
                colony._log(ActionKind.REJECT, request_id=req.request_id)
                continue
            vm = self.cluster.place_vm(req, nid, *basic, now=self.clock)
            self._rr_last = nid
            colony._log(ActionKind.DEPLOY, node_id=nid, vm_id=vm.vm_id, request_id=req.request_id,
                        cpu=basic[0], mem=basic[1])

    def _on_request_arrival(self, req):
        self.cluster.requests[req.request_id] = req
        self.colony.controller.request_queue.append(req)
        self.events.push(req.lease_expiry, EventKind.LEASE_EXPIRY, req.request_id)

    def _on_demand_change(self, payload):
        if payload is not None:
            name, rate, demand = payload
            self._load[name] = (rate, demand)

    def _on_sample_metrics(self, _):
        t = self.clock
        breach = False
        for vid in sorted(self.cluster.vms):
            vm = self.cluster.vms[vid]
            if self.cluster.nodes[vm.host_id].responding:
                vm.cpu_used, vm.mem_used = self._vm_usage(vm)
            obs = self._monitor(vm)
            if obs is not None and breaches(self.cluster.requests[vm.request_id], obs):
                breach = True
        active = 0
        fleet_w = 0.0
        utils = {}
        for nid in sorted(self.cluster.nodes):
            node = self.cluster.nodes[nid]
            u_cpu, u_mem = self._node_usage(node)
            utils[nid] = u_cpu
            fleet_w += instantaneous_power(node, u_cpu, u_mem)
            if node.responding and node.state in (NodeState.ACTIVE, NodeState.WAKING):
                active += 1
        held = min(self.tun.sample_interval_s, self.horizon - t)
        self.recorder.sample(t, held, active, fleet_w, utils, breach)
        self.events.push(t + self.tun.sample_interval_s, EventKind.SAMPLE_METRICS)

    def _on_ant_spawn(self, kind):
        table = self.cluster.table
        if len(table):
            start = self.rng.choice(sorted(table.node_ids()))
            ant = self.colony.spawn(kind, start)
            ant.hops_left = self.tun.tour_hops or len(table)
            self.events.push(self.clock, EventKind.ANT_HOP, ant)
        rate = getattr(self.tun, dict(_SPAWN_RATES)[kind])
        self.events.push(self.clock + 60.0 / rate, EventKind.ANT_SPAWN, kind)

    def _on_ant_hop(self, ant):
        nid = ant.current_node
        table = self.cluster.table
        if nid in table:
            self._visit(ant, nid)
            ant.visited.add(nid)
        ant.hops_left -= 1
        if ant.hops_left <= 0:
            return
        known = table.node_ids()
        adjacency = {n: self.cluster.nodes[n].neighbor_ids for n in known}
        if ant.current_node not in adjacency and ant.current_node in self.cluster.nodes:
            adjacency[ant.current_node] = self.cluster.nodes[ant.current_node].neighbor_ids
        ant.current_node = ant_next_hop(ant, adjacency, known, self.rng)
        self.events.push(self.clock + self.tun.hop_interval_s, EventKind.ANT_HOP, ant)

    def _visit(self, ant, nid):
        node = self.cluster.nodes[nid]
        if node.responding:
            node.last_seen = self.clock
            self._probe_node(node)
            if ant.kind == AntKind.TESTER:
                for vid in list(node.hosted_vms):
                    self._monitor(self.cluster.vms[vid])
                self.colony.tester_visit(nid)
            elif ant.kind == AntKind.SCOUT:
                self.colony.scout_visit(nid)
            elif ant.kind == AntKind.CLEANER:
                self.colony.cleaner_visit(nid)
        elif ant.kind == AntKind.CLEANER:
            self.colony.cleaner_visit(nid)

    def _on_transition_complete(self, payload):
        node_id, done_at = payload
        node = self.cluster.nodes[node_id]
        if node.transition_done_at == done_at and node.state in (NodeState.WAKING, NodeState.BOOTING):
            self.colony.complete_transition(node_id)

    def _on_lease_expiry(self, request_id):
        # the colony's cleaner handles expiry on its own rounds
        if not self.ant_policy and self.cluster.app_vms(request_id):
            self.colony.remove_application(request_id)

    def _first_responsive(self, exclude=None):
        for nid in self.cluster.table.node_ids():
            if nid != exclude and self.cluster.nodes[nid].responding:
                return nid
        return None

    def _on_node_fail(self, node_id):
        node = self.cluster.nodes[node_id]
        if not node.responding or node.state == NodeState.FAILED:
            return
        node.responding = False
        node.last_seen = self.clock
        if node.pending_joins:
            # the joining machine gives up on this contact and tries another
            other = self._first_responsive(exclude=node_id)
            if other is not None:
                self.cluster.nodes[other].pending_joins.extend(node.pending_joins)
            node.pending_joins = []
        if not self.ant_policy:
            self._fail_baseline(node_id)

    def _fail_baseline(self, node_id):
        """Baselines learn about crashes instantly and re-queue the lost work."""
        cluster, colony = self.cluster, self.colony
        node = cluster.nodes[node_id]
        requeue = []
        for vm in cluster.node_vms(node_id):
            if vm.vm_id in cluster.vms:
                for v in cluster.app_vms(vm.request_id):
                    cluster.remove_vm(v.vm_id)
                requeue.append(vm.request_id)
        node.state = NodeState.FAILED
        cluster.drop_node(node_id)
        colony._log(ActionKind.MARK_FAILED, node_id=node_id)
        for rid in reversed(requeue):
            colony.controller.request_queue.appendleft(cluster.requests[rid])
        for rid in requeue:
            colony._log(ActionKind.REQUEUE, node_id=node_id, request_id=rid)

    def _on_node_join(self, spec):
        join = JoinRequest(spec.key, spec.cpu, spec.mem, spec.power)
        if spec.via == "admin" or not self.ant_policy:
            nid = self.colony.register(join, contact=spec.contact or self._first_responsive())
            if nid is not None and not self.ant_policy:
                self.cluster.nodes[nid].state = NodeState.ACTIVE
                self.cluster.sync(nid)
            return
        contact = spec.contact
        if contact not in self.cluster.table or not self.cluster.nodes[contact].responding:
            contact = self._first_responsive()
        if contact is not None:
            self.cluster.nodes[contact].pending_joins.append(join)


def run(scenario, **kw):
    return Simulation(scenario, **kw).run()
