"""Run accounting, the two baseline allocators, and report comparison."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Optional

from .domain import SlamCode
from .errors import ComparisonError


@dataclass(frozen=True)
class MetricsReport:
    policy: str
    seed: int
    config_hash: str
    horizon: float
    fleet_energy_j: float
    per_node_energy_j: dict
    sla_violation_seconds: float
    slam_histogram: dict
    observations: int
    deployments: int
    rejections: int
    migrations: int
    clones_created: int
    clones_reclaimed: int
    admin_notifications: dict
    user_notifications: int
    mean_util: dict
    peak_util: dict
    active_nodes: tuple  # ((t, count), ...)
    fleet_power: tuple  # ((t, watts), ...)

    SCALARS = (
        "fleet_energy_j", "sla_violation_seconds", "observations", "deployments", "rejections",
        "migrations", "clones_created", "clones_reclaimed", "user_notifications",
    )

    def to_dict(self):
        return {
            "policy": self.policy,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "horizon": self.horizon,
            **{k: getattr(self, k) for k in self.SCALARS},
            "per_node_energy_j": {str(k): v for k, v in sorted(self.per_node_energy_j.items())},
            "slam_histogram": {str(int(k)): v for k, v in sorted(self.slam_histogram.items())},
            "admin_notifications": dict(sorted(self.admin_notifications.items())),
            "mean_util": {str(k): v for k, v in sorted(self.mean_util.items())},
            "peak_util": {str(k): v for k, v in sorted(self.peak_util.items())},
            "series": [
                {"time": t, "active_nodes": n, "fleet_power_w": p}
                for (t, n), (_, p) in zip(self.active_nodes, self.fleet_power)
            ],
        }


class MetricsRecorder:
    """Accumulates samples while the engine runs."""

    def __init__(self):
        self.slam_histogram = Counter({code: 0 for code in SlamCode})
        self.observations = 0
        self.sla_violation_seconds = 0.0
        self.active_nodes = []
        self.fleet_power = []
        self._util_sum = defaultdict(float)
        self._util_peak = defaultdict(float)
        self._samples = 0

    def observe(self, code):
        self.slam_histogram[SlamCode(code)] += 1
        self.observations += 1

    def sample(self, t, held_for, active, fleet_w, utils, breach):
        self._samples += 1
        self.active_nodes.append((t, active))
        self.fleet_power.append((t, fleet_w))
        for nid, u in utils.items():
            self._util_sum[nid] += u
            self._util_peak[nid] = max(self._util_peak[nid], u)
        if breach:
            self.sla_violation_seconds += held_for

    def build(self, *, policy, seed, config_hash, horizon, energy, actions, admin_log, node_ids):
        kinds = Counter(a.kind.value for a in actions)
        admin = Counter(reason for _, reason in admin_log)
        n = max(self._samples, 1)
        return MetricsReport(
            policy=policy,
            seed=seed,
            config_hash=config_hash,
            horizon=horizon,
            fleet_energy_j=energy.total,
            per_node_energy_j={nid: energy.per_node.get(nid, 0.0) for nid in sorted(node_ids)},
            sla_violation_seconds=self.sla_violation_seconds,
            slam_histogram={int(c): self.slam_histogram[c] for c in SlamCode},
            observations=self.observations,
            deployments=kinds["Deploy"],
            rejections=kinds["Reject"],
            migrations=kinds["Migrate"],
            clones_created=kinds["Clone"],
            clones_reclaimed=kinds["RemoveClone"],
            admin_notifications=dict(admin),
            user_notifications=kinds["NotifyUser"],
            mean_util={nid: self._util_sum[nid] / n for nid in sorted(node_ids)},
            peak_util={nid: self._util_peak[nid] for nid in sorted(node_ids)},
            active_nodes=tuple(self.active_nodes),
            fleet_power=tuple(self.fleet_power),
        )


# -- baselines ---------------------------------------------------------------


def _candidates(cluster):
    return [nid for nid in sorted(cluster.nodes) if cluster.nodes[nid].can_host and nid in cluster.table]


def first_fit_allocate(cluster, request, basic_vm):
    """Lowest-id node with room for a basic VM, or None."""
    for nid in _candidates(cluster):
        if cluster.fits(nid, *basic_vm):
            return nid
    return None


def round_robin_allocate(cluster, request, basic_vm, last=None):
    """Next node after ``last`` in cyclic id order that has room, or None."""
    ids = _candidates(cluster)
    if not ids:
        return None
    start = 0
    if last is not None:
        start = next((i for i, nid in enumerate(ids) if nid > last), 0)
    for k in range(len(ids)):
        nid = ids[(start + k) % len(ids)]
        if cluster.fits(nid, *basic_vm):
            return nid
    return None


# -- comparison ---------------------------------------------------------------


@dataclass(frozen=True)
class ComparisonSummary:
    policy_a: str
    policy_b: str
    deltas: dict = field(default_factory=dict)
    ratios: dict = field(default_factory=dict)
    energy_dominant: Optional[str] = None
    sla_dominant: Optional[str] = None
    dominates: Optional[str] = None

    def to_dict(self):
        return {
            "policy_a": self.policy_a,
            "policy_b": self.policy_b,
            "deltas": self.deltas,
            "ratios": self.ratios,
            "energy_dominant": self.energy_dominant,
            "sla_dominant": self.sla_dominant,
            "dominates": self.dominates,
        }


def _better(a, b, name_a, name_b):
    if a < b:
        return name_a
    if b < a:
        return name_b
    return None


def compare(a, b):
    """Deltas (a - b) and ratios (a / b) per scalar metric, plus dominance flags."""
    if a.horizon != b.horizon:
        raise ComparisonError(f"horizons differ: {a.horizon} vs {b.horizon}")
    if a.seed != b.seed:
        raise ComparisonError(f"seeds differ: {a.seed} vs {b.seed}")
    deltas, ratios = {}, {}
    for k in MetricsReport.SCALARS:
        x, y = getattr(a, k), getattr(b, k)
        deltas[k] = x - y
        ratios[k] = (x / y) if y else (1.0 if x == y else None)
    name_a, name_b = a.policy, b.policy
    if name_a == name_b:
        name_a, name_b = "a", "b"
    energy = _better(a.fleet_energy_j, b.fleet_energy_j, name_a, name_b)
    sla = _better(a.sla_violation_seconds, b.sla_violation_seconds, name_a, name_b)
    dominates = None
    if energy and sla in (None, energy):
        dominates = energy
    elif sla and energy is None:
        dominates = sla
    return ComparisonSummary(name_a, name_b, deltas, ratios, energy, sla, dominates)
