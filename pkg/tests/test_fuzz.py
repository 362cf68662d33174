"""Capacity and traffic-share safety under random event sequences."""

import random

import pytest

from antcloud.engine import Simulation
from antcloud.scenario import config_from_dict

from replay import replay

POWER = {"base": 100, "cpu_peak": 80, "mem_peak": 20, "standby": 10, "wake_latency": 10, "boot_latency": 40}


def colony_fuzz(seeds):
    checked, violations = 0, []

    def check(cluster, action):
        nonlocal checked
        checked += 1
        violations.extend((action.kind, p) for p in cluster.check_invariants())

    for seed in seeds:
        replay(seed, check=check)
    return checked, violations


def test_thousand_colony_sequences_keep_invariants():
    checked, violations = colony_fuzz(range(1000))
    assert checked > 5_000
    assert violations == []


def random_scenario(seed):
    rng = random.Random(seed)
    n = rng.randint(2, 8)
    step_at = rng.uniform(100, 600)
    doc = {
        "seed": seed,
        "horizon": rng.choice([600.0, 1200.0]),
        "nodes": [{"count": n, "cpu": rng.choice([2.0, 4.0]), "mem": 8.0, "power": POWER}],
        "workloads": {
            "flat": {"kind": "constant", "rate": rng.choice([0.0, 20.0, 80.0]), "demand": 0.01},
            "spike": {"kind": "step", "demand": 0.01,
                      "points": [[0, 20.0], [step_at, rng.choice([0.0, 150.0, 400.0])]]},
        },
        "requests": [
            {"count": rng.randint(1, 6), "every": rng.choice([1.0, 15.0]), "thput": 0.8, "rtime": 0.2,
             "lease": rng.choice([300.0, 1e7]), "workload": rng.choice(["flat", "spike"])}
            for _ in range(rng.randint(1, 3))
        ],
        "faults": [{"node": rng.randint(1, n), "at": rng.uniform(0, 500)}] if rng.random() < 0.3 else [],
        "tunables": {"migration_latency_s": rng.choice([0.0, 5.0]), "failure_timeout_s": 30.0},
    }
    return config_from_dict(doc)


@pytest.mark.parametrize("seed", range(20))
def test_engine_runs_keep_invariants(seed):
    sim = Simulation(random_scenario(seed), check_invariants=True)
    sim.run()
    assert sim.violations == []
