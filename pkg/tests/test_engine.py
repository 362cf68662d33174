import pytest

from antcloud.ants import ActionKind
from antcloud.domain import NodeState
from antcloud.engine import EventKind, EventQueue, Simulation
from antcloud.errors import NotFoundError
from antcloud.report import emit_report
from antcloud.scenario import config_from_dict

POWER = {"base": 100, "cpu_peak": 80, "mem_peak": 20, "standby": 10, "wake_latency": 30, "boot_latency": 120}


def scenario(n_nodes=3, requests=(), horizon=100.0, **extra):
    doc = {
        "seed": 42,
        "horizon": horizon,
        "nodes": [{"count": n_nodes, "cpu": 4.0, "mem": 16.0, "power": POWER}],
        "workloads": {"steady": {"kind": "constant", "rate": 80, "demand": 0.01}},
        "requests": list(requests),
    }
    doc.update(extra)
    return config_from_dict(doc)


def req(**kw):
    base = {"thput": 0.8, "rtime": 0.2, "lease": 1e7, "workload": "steady"}
    base.update(kw)
    return base


def test_queue_ties_break_by_insertion():
    q = EventQueue()
    q.push(5.0, EventKind.REQUEST_ARRIVAL, "A")
    q.push(5.0, EventKind.REQUEST_ARRIVAL, "B")
    q.push(1.0, EventKind.SAMPLE_METRICS)
    assert [q.pop().payload for _ in range(3)] == [None, "A", "B"]


def test_step_bills_the_gap_before_dispatch():
    sim = Simulation(scenario(n_nodes=1, horizon=10.0, tunables={"tester_per_min": 0, "cleaner_per_min": 0,
                                                                  "scout_per_min": 0}))
    sim.step()  # t=0 sample
    sim.clock = 1.0
    sim.colony.now = 1.0
    sim.events.push(3.0, EventKind.DEMAND_CHANGE, None)
    while sim.events.peek().time < 3.0:
        sim.events.pop()
    res = sim.step()
    assert res.event.time == 3.0
    assert sim.clock == 3.0
    assert res.billed_j == pytest.approx(2.0 * 100.0)


def test_run_terminates_on_empty_queue():
    sim = Simulation(scenario(horizon=50.0))
    while sim.events:
        sim.events.pop()
    assert sim.step() is None
    rep = sim.run()
    assert rep.horizon == 50.0


def test_no_load_closed_form():
    rep = Simulation(scenario(n_nodes=3, horizon=100.0)).run()
    assert rep.fleet_energy_j == pytest.approx(100.0 * (100 + 2 * 10), rel=1e-9)
    assert rep.sla_violation_seconds == 0.0
    assert rep.deployments == 0


def test_same_seed_same_report():
    cfg = scenario(requests=[req(count=5, every=7)], horizon=600.0)
    a = emit_report(Simulation(cfg).run(), "json")
    b = emit_report(Simulation(cfg).run(), "json")
    assert a == b


def test_exact_fit_single_node():
    cfg = scenario(n_nodes=1, requests=[req()], horizon=60.0,
                   tunables={"basic_vm_cpu": 4.0, "basic_vm_mem": 16.0})
    rep = Simulation(cfg).run()
    assert (rep.deployments, rep.rejections) == (1, 0)


def test_inject_fault_unknown_node():
    sim = Simulation(scenario())
    with pytest.raises(NotFoundError):
        sim.inject_fault(99, 10.0)


def test_crash_detection_respects_timeout():
    cfg = scenario(n_nodes=2, requests=[req(count=2)], horizon=200.0,
                   tunables={"tester_per_min": 0, "cleaner_per_min": 0, "scout_per_min": 0})
    sim = Simulation(cfg)
    sim.inject_fault(1, 50.0)
    while sim.clock < 60.0:
        sim.step()
    sim.clock = sim.colony.now = 70.0
    assert sim.colony.cleaner_visit(1) == []
    sim.clock = sim.colony.now = 90.0
    acts = sim.colony.cleaner_visit(1)
    # the pointer's new node is woken before the failure is logged
    assert [(a.kind, a.detail) for a in acts][:2] == [(ActionKind.STATE_CHANGE, "Standby->Waking"),
                                                      (ActionKind.MARK_FAILED, "")]
    assert sorted(a.request_id for a in acts if a.kind == ActionKind.REQUEUE) == [1, 2]


def test_crash_is_detected_by_cleaners_during_a_run():
    cfg = scenario(n_nodes=4, requests=[req(count=2)], horizon=900.0, faults=[{"node": 1, "at": 50.0}])
    sim = Simulation(cfg, check_invariants=True)
    rep = sim.run()
    marks = [a for a in sim.actions if a.kind == ActionKind.MARK_FAILED]
    assert [a.node_id for a in marks] == [1]
    assert marks[0].time > 50.0 + cfg.tunables.failure_timeout_s
    redeployed = [a for a in sim.actions if a.kind == ActionKind.DEPLOY and a.time > 50.0]
    assert sorted(a.request_id for a in redeployed) == [1, 2]
    assert sim.violations == []
    assert rep.per_node_energy_j[1] == pytest.approx(50.0 * (100 + 2 * 0.8 * 80 / 4 + 2 * 0.8 / 16 * 20))


def test_join_moves_when_contact_crashes():
    cfg = scenario(n_nodes=3, horizon=400.0,
                   joins=[{"at": 10.0, "key": "new", "cpu": 8.0, "mem": 16.0, "power": POWER, "contact": 2}],
                   faults=[{"node": 2, "at": 5.0}],
                   tunables={"tester_per_min": 0, "cleaner_per_min": 0})
    sim = Simulation(cfg)
    sim.run()
    regs = [a for a in sim.actions if a.kind == ActionKind.REGISTER]
    assert len(regs) == 1 and regs[0].target_id != 2


def test_admin_join_registers_immediately():
    cfg = scenario(n_nodes=2, horizon=30.0,
                   joins=[{"at": 10.0, "key": "n", "cpu": 4.0, "mem": 16.0, "power": POWER, "via": "admin"}])
    sim = Simulation(cfg)
    sim.run()
    regs = [a for a in sim.actions if a.kind == ActionKind.REGISTER]
    assert regs and regs[0].time == 10.0
    assert sim.cluster.nodes[regs[0].node_id].state in (NodeState.STANDBY, NodeState.OFF, NodeState.BOOTING)


def test_baselines_keep_every_node_active():
    for policy in ("round_robin", "first_fit"):
        rep = Simulation(scenario(n_nodes=3, horizon=100.0, policy=policy)).run()
        assert rep.fleet_energy_j == pytest.approx(3 * 100 * 100.0)
        assert all(n == 3 for _, n in rep.active_nodes)


def test_round_robin_spreads_first_fit_packs():
    reqs = [req(count=4, every=1)]
    rr = Simulation(scenario(n_nodes=3, requests=reqs, horizon=20.0, policy="round_robin"))
    rr.run()
    ff = Simulation(scenario(n_nodes=3, requests=reqs, horizon=20.0, policy="first_fit"))
    ff.run()
    assert [a.node_id for a in rr.actions if a.kind == ActionKind.DEPLOY] == [1, 2, 3, 1]
    assert [a.node_id for a in ff.actions if a.kind == ActionKind.DEPLOY] == [1, 1, 1, 1]


def test_every_request_reaches_a_terminal_state():
    cfg = scenario(n_nodes=2, requests=[req(count=12, every=3)], horizon=300.0)
    sim = Simulation(cfg)
    rep = sim.run()
    assert rep.deployments + rep.rejections == 12
    assert not sim.colony.controller.request_queue


def test_energy_partition_holds():
    cfg = scenario(n_nodes=5, requests=[req(count=9, every=20)], horizon=1200.0)
    rep = Simulation(cfg).run()
    assert sum(rep.per_node_energy_j.values()) == pytest.approx(rep.fleet_energy_j, rel=1e-12)


def test_migration_latency_bounds_the_billing_interval():
    cfg = scenario(n_nodes=4, requests=[req(count=6)], horizon=300.0, tunables={"migration_latency_s": 5.0})
    sim = Simulation(cfg, check_invariants=True)
    sim.run()
    assert sim.violations == []
