import os
import sys

import pytest

from antcloud.domain import Cluster, NodeRecord, NodeState, PowerProfile, ServiceRequest, Tunables

sys.path.insert(0, os.path.dirname(__file__))

SCENARIOS = os.path.join(os.path.dirname(os.path.dirname(__file__)), "scenarios")


def profile(base=100.0, cpu=80.0, mem=20.0, standby=10.0, wake=30.0, boot=120.0):
    return PowerProfile(base, cpu, mem, standby, wake, boot)


def make_cluster(specs, tun=None):
    """``specs``: list of (id, cpu, mem) or (id, cpu, mem, PowerProfile)."""
    tun = tun or Tunables()
    records = []
    for s in specs:
        prof = s[3] if len(s) > 3 else profile()
        records.append(NodeRecord(s[0], s[1], s[2], prof))
    ids = [r.node_id for r in records]
    for r in records:
        r.neighbor_ids = [i for i in ids if i != r.node_id]
    return Cluster(records, tun.sort_weights)


def request(rid=1, thput=0.8, rtime=1.0, lease=1e7, at=0.0):
    return ServiceRequest(rid, thput, rtime, lease, arrival_time=at)


@pytest.fixture
def tun():
    return Tunables()


def activate(cluster, *ids):
    for nid in ids:
        cluster.nodes[nid].state = NodeState.ACTIVE
        cluster.sync(nid)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    lines = getattr(acceptance, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
