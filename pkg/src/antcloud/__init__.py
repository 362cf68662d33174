"""Discrete-event simulator of an ant-colony controller for energy-aware clouds."""

from .domain import (
    AvailableResourceTable,
    Cluster,
    NodeRecord,
    NodeState,
    PowerProfile,
    ServiceRequest,
    SlamCode,
    Tunables,
    VmInstance,
)
from .engine import Simulation, run
from .metrics import MetricsReport, compare
from .report import emit_report
from .scenario import ScenarioConfig, load_scenario
from .sla import SlaObservation, compute_slam

__all__ = [
    "AvailableResourceTable", "Cluster", "MetricsReport", "NodeRecord", "NodeState", "PowerProfile",
    "ScenarioConfig", "ServiceRequest", "Simulation", "SlaObservation", "SlamCode", "Tunables",
    "VmInstance", "compare", "compute_slam", "emit_report", "load_scenario", "run",
]
__version__ = "0.1.0"
