"""Per-VM performance observation and SLAM classification."""

from __future__ import annotations

from dataclasses import dataclass

from .domain import SlamCode, Tunables
from .errors import DegenerateVmError

_DEFAULT = Tunables()


@dataclass(frozen=True)
class SlaObservation:
    observed_rtime: float
    observed_thput: float
    window: float = 0.0

    def __post_init__(self):
        if self.observed_rtime < 0:
            raise ValueError("observed_rtime must be >= 0")
        if not 0 <= self.observed_thput <= 1:
            raise ValueError("observed_thput must be in [0, 1]")


def mm1(offered_rate, service_rate, saturation_rtime, window=0.0):
    """M/M/1 view of one VM: throughput ratio and mean response time."""
    if service_rate <= 0:
        raise DegenerateVmError("service rate is zero")
    lam, mu = offered_rate, service_rate
    thput = 1.0 if lam <= 0 else min(lam, mu) / lam
    rtime = 1.0 / (mu - lam) if lam < mu else saturation_rtime
    return SlaObservation(min(rtime, saturation_rtime), thput, window)


def observe(vm, offered_rate, per_request_demand, *, saturation_rtime, window=0.0):
    """Observation for ``vm`` given its application's total offered rate.

    The VM receives ``traffic_share`` of the load and serves it at
    ``cpu_entitlement / per_request_demand`` requests per second.
    """
    if per_request_demand <= 0:
        raise DegenerateVmError("per-request demand must be positive")
    mu = vm.cpu_entitlement / per_request_demand
    if mu <= 0:
        raise DegenerateVmError(f"VM {vm.vm_id} has no CPU entitlement")
    return mm1(vm.traffic_share * offered_rate, mu, saturation_rtime, window)


def compute_slam(rtime_target, thput_target, obs, bands=_DEFAULT):
    rt, th = obs.observed_rtime, obs.observed_thput
    if rt < bands.rtime_ok * rtime_target and th > bands.thput_ok * thput_target:
        return SlamCode.OK
    # critical wins whenever either metric is in its critical band
    crit_rt = rt >= bands.rtime_critical * rtime_target
    crit_th = th <= bands.thput_critical * thput_target
    if crit_rt or crit_th:
        return SlamCode.CRIT_CLONE if crit_rt else SlamCode.CRIT_MIGRATE
    rec_rt = rt >= bands.rtime_ok * rtime_target
    return SlamCode.REC_CLONE if rec_rt else SlamCode.REC_MIGRATE


def breaches(request, obs):
    """Raw SLA breach, independent of the banding."""
    return obs.observed_rtime > request.rtime_target or obs.observed_thput < request.thput_target
