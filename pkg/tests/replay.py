"""Random event streams run through both the real colony and the oracle."""

import heapq
import random

from antcloud.ants import Colony, JoinRequest
from antcloud.domain import Cluster, NodeRecord, NodeState, PowerProfile, ServiceRequest, SlamCode, Tunables
from antcloud.sla import SlaObservation

from oracle import Oracle

EVENT_KINDS = ("arrive", "load", "tester", "cleaner", "tick", "crash", "join", "scout")
WEIGHTS = (6, 8, 10, 6, 3, 1, 1, 2)


def random_profile(rng):
    base = rng.choice([60.0, 90.0, 120.0, 150.0])
    wake = rng.choice([0.0, 5.0, 20.0, 30.0])
    return dict(base=base, cpu_peak=rng.choice([40.0, 80.0, 120.0]), mem_peak=rng.choice([10.0, 20.0, 35.0]),
                standby=rng.choice([5.0, 10.0]), wake=wake, boot=wake + rng.choice([30.0, 90.0]))


def random_nodes(rng, n):
    nodes = []
    for i in range(1, n + 1):
        nodes.append(dict(id=i, cpu=rng.choice([2.0, 3.0, 4.0, 6.0]), mem=rng.choice([4.0, 8.0, 16.0]),
                          **random_profile(rng), nbrs=[]))
    ids = [d["id"] for d in nodes]
    adj = {i: set() for i in ids}
    for a, b in zip(ids, ids[1:] + ids[:1]):
        if a != b:
            adj[a].add(b)
            adj[b].add(a)
    for d in nodes:
        d["nbrs"] = sorted(adj[d["id"]])
    return nodes


def random_events(rng, n_events):
    return [rng.choices(EVENT_KINDS, WEIGHTS)[0] for _ in range(n_events)]


def _profile(d):
    return PowerProfile(d["base"], d["cpu_peak"], d["mem_peak"], d["standby"], d["wake"], d["boot"])


class RealHarness:
    """Drives a Colony the way the engine would, without ants or the load model."""

    def __init__(self, nodes, tun):
        self.pending = []
        self.seq = 0
        records = [NodeRecord(d["id"], d["cpu"], d["mem"], _profile(d), neighbor_ids=list(d["nbrs"])) for d in nodes]
        self.cluster = Cluster(records, tun.sort_weights)
        self.colony = Colony(self.cluster, tun, scheduler=self._sched)
        self.colony.bootstrap()

    def _sched(self, nid, done):
        self.seq += 1
        heapq.heappush(self.pending, (done, self.seq, nid))

    def tick(self, dt):
        end = self.colony.now + dt
        while self.pending and self.pending[0][0] <= end:
            done, _, nid = heapq.heappop(self.pending)
            self.colony.now = done
            node = self.cluster.nodes[nid]
            if node.state in (NodeState.WAKING, NodeState.BOOTING) and node.transition_done_at == done:
                self.colony.complete_transition(nid)
        self.colony.now = end


def replay(seed, n_nodes=None, n_events=None, check=None):
    """Run one random scenario on both sides; return (real_keys, oracle_keys)."""
    rng = random.Random(seed)
    tun = Tunables(failure_timeout_s=rng.choice([5.0, 30.0]), lease_warning_s=rng.choice([50.0, 604800.0]))
    n_nodes = n_nodes or rng.randint(1, 10)
    n_events = n_events or rng.randint(1, 50)
    nodes = random_nodes(rng, n_nodes)
    o = Oracle(nodes, dict(weights=tun.sort_weights, basic_cpu=tun.basic_vm_cpu, basic_mem=tun.basic_vm_mem,
                           pool=tun.warm_pool_size, peak=tun.peak_util, low=tun.low_util,
                           clone_frac=tun.clone_fraction, headroom=tun.migrate_headroom,
                           margin=tun.cleaner_margin, timeout=tun.failure_timeout_s, warn=tun.lease_warning_s))
    h = RealHarness(nodes, tun)
    colony, cluster = h.colony, h.cluster
    if check is not None:
        colony.on_action = lambda a: check(cluster, a)
    rid = 0
    for kind in random_events(rng, n_events):
        all_ids = sorted(cluster.nodes)
        if kind == "arrive":
            rid += 1
            thput, rtime = rng.choice([0.5, 0.8]), rng.choice([0.2, 1.0])
            lease = rng.choice([20.0, 200.0, 5000.0, 1e7])
            req = ServiceRequest(rid, thput, rtime, lease, arrival_time=colony.now)
            o.arrive(rid, thput, rtime, lease)
            colony.controller.request_queue.append(req)
            colony.process_queue()
        elif kind == "load":
            if not cluster.vms:
                continue
            if rng.random() < 0.5:
                targets = [rng.choice(sorted(cluster.vms))]
            else:
                hosts = sorted({v.host_id for v in cluster.vms.values()})
                targets = list(cluster.nodes[rng.choice(hosts)].hosted_vms)
            f = rng.choice([0.0, 0.2, 0.5, 0.95, 1.0, 1.0, rng.random()])
            for vid in targets:
                vm = cluster.vms[vid]
                g = rng.choice([f, rng.random()])
                code = rng.choice(list(SlamCode))
                obs = rng.choice([None, (0.01, 1.0), (0.5, 0.6), (rng.random(), rng.random())])
                vm.cpu_used, vm.mem_used = f * vm.cpu_entitlement, g * vm.mem_entitlement
                vm.slam = code
                vm.observation = None if obs is None else SlaObservation(*obs)
                ov = o.V[vid]
                ov["used_c"], ov["used_m"], ov["slam"], ov["obs"] = vm.cpu_used, vm.mem_used, int(code), obs
        elif kind == "tick":
            dt = rng.choice([1.0, 10.0, 40.0, 150.0])
            h.tick(dt)
            o.tick(dt)
        elif kind == "join":
            live = [n for n in cluster.table.node_ids() if cluster.nodes[n].responding]
            if not live:
                continue
            at = rng.choice(live)
            key = f"k{rng.randint(1, 4)}"
            d = random_profile(rng)
            cpu, mem = rng.choice([2.0, 4.0, 8.0]), rng.choice([4.0, 16.0])
            cluster.nodes[at].pending_joins.append(JoinRequest(key, cpu, mem, _profile(d)))
            o.park_join(at, key, cpu, mem, d)
        else:
            hosts = sorted({v.host_id for v in cluster.vms.values()})
            # visits that land on loaded nodes exercise far more of the rules
            nid = rng.choice(hosts) if hosts and kind != "scout" and rng.random() < 0.7 else rng.choice(all_ids)
            if kind == "tester":
                colony.tester_visit(nid)
                o.tester(nid)
            elif kind == "cleaner":
                colony.cleaner_visit(nid)
                colony.process_queue()
                o.cleaner(nid)
            elif kind == "scout":
                colony.scout_visit(nid)
                o.scout(nid)
            elif kind == "crash":
                node = cluster.nodes[nid]
                node.responding = False
                node.last_seen = colony.now
                o.crash(nid)
    return [a.key() for a in colony.log], o.log
