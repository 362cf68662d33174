"""Scenario files: YAML in, fully validated :class:`ScenarioConfig` out.

A minimal scenario::

    seed: 42
    horizon: 3600
    nodes:
      - {count: 4, cpu: 4, mem: 16,
         power: {base: 60, cpu_peak: 100, mem_peak: 8, standby: 5}}
    workloads:
      web: {kind: constant, rate: 80, demand: 0.01}
    requests:
      - {id: 1, arrival: 0, thput: 0.8, rtime: 0.2, lease: 86400, workload: web}

Everything else (policy, topology, tunables, faults, joins) has defaults.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import yaml

from . import workload as wl
from .domain import PowerProfile, ServiceRequest, Tunables
from .errors import ConfigError, ConfigParseError, InvalidProfileError

POLICIES = ("ant", "round_robin", "first_fit")
TOPOLOGIES = ("ring", "full", "explicit")
WORKLOAD_KINDS = ("constant", "step", "diurnal")

_POWER_KEYS = {
    "base": "p_base",
    "cpu_peak": "p_cpu_peak",
    "mem_peak": "p_mem_peak",
    "standby": "p_standby",
    "wake_latency": "wake_latency",
    "boot_latency": "boot_latency",
}
_POWER_DEFAULTS = {"wake_latency": 30.0, "boot_latency": 120.0}


@dataclass(frozen=True)
class NodeSpec:
    node_id: int
    cpu: float
    mem: float
    power: PowerProfile
    neighbors: tuple = ()


@dataclass(frozen=True)
class FaultSpec:
    node_id: int
    at: float
    kind: str = "crash"


@dataclass(frozen=True)
class JoinSpec:
    at: float
    key: str
    cpu: float
    mem: float
    power: PowerProfile
    contact: Optional[int] = None
    via: str = "scout"


@dataclass(frozen=True)
class ScenarioConfig:
    nodes: tuple
    requests: tuple = ()
    workloads: dict = field(default_factory=dict)
    trace_path: Optional[str] = None
    policy: str = "ant"
    tunables: Tunables = Tunables()
    seed: int = 0
    horizon: float = 3600.0
    faults: tuple = ()
    joins: tuple = ()

    def with_(self, **changes):
        return dataclasses.replace(self, **changes)

    def build_trace(self):
        trace = wl.read_trace(self.trace_path) if self.trace_path else wl.WorkloadTrace()
        for name, spec in sorted(self.workloads.items()):
            trace.add(name, _generate(spec, self.horizon))
        return trace


def _generate(spec, horizon):
    kind = spec["kind"]
    if kind == "constant":
        return wl.constant(spec["rate"], spec["demand"], spec.get("start", 0.0))
    if kind == "step":
        return wl.step(spec["points"], spec["demand"])
    return wl.diurnal(
        spec["base"], spec["amplitude"], spec["period"], spec["demand"], horizon,
        spec.get("resolution", 300.0), spec.get("phase", 0.0),
    )


# -- parsing ----------------------------------------------------------------


def _num(value, fld, *, positive=False, nonneg=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(fld, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(fld, f"expected an integer, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(fld, "must be positive")
    if nonneg and value < 0:
        raise ConfigError(fld, "must be non-negative")
    return int(value) if integer else float(value)


def _mapping(value, fld):
    if not isinstance(value, dict):
        raise ConfigError(fld, "expected a mapping")
    return value


def _only(mapping, allowed, fld):
    extra = sorted(set(mapping) - set(allowed))
    if extra:
        raise ConfigError(f"{fld}.{extra[0]}", "unknown key")


def _power(raw, fld):
    raw = _mapping(raw, fld)
    _only(raw, _POWER_KEYS, fld)
    kw = {}
    for key, attr in _POWER_KEYS.items():
        if key in raw:
            kw[attr] = _num(raw[key], f"{fld}.{key}", nonneg=True)
        elif key in _POWER_DEFAULTS:
            kw[attr] = _POWER_DEFAULTS[key]
        else:
            raise ConfigError(f"{fld}.{key}", "missing")
    try:
        return PowerProfile(**kw)
    except InvalidProfileError as exc:
        raise ConfigError(fld, str(exc)) from None


def _tunables(raw):
    raw = _mapping(raw or {}, "tunables")
    defaults = Tunables()
    kw = {}
    for key, value in raw.items():
        if key not in Tunables.names():
            raise ConfigError(f"tunables.{key}", "unknown tunable")
        fld = f"tunables.{key}"
        if key == "tour_hops":
            kw[key] = None if value is None else _num(value, fld, positive=True, integer=True)
        elif key == "warm_pool_size":
            kw[key] = _num(value, fld, nonneg=True, integer=True)
        else:
            kw[key] = _num(value, fld, nonneg=True)
    t = dataclasses.replace(defaults, **kw)
    w = t.sort_weight_ppw + t.sort_weight_mpw
    if abs(w - 1.0) > 1e-9:
        raise ConfigError("tunables.sort_weight_ppw", "sort weights must sum to 1")
    if not t.rtime_ok <= t.rtime_critical:
        raise ConfigError("tunables.rtime_ok", "must not exceed rtime_critical")
    if not t.thput_critical <= t.thput_ok:
        raise ConfigError("tunables.thput_critical", "must not exceed thput_ok")
    if not t.low_util < t.peak_util:
        raise ConfigError("tunables.low_util", "must be below peak_util")
    for key in ("hop_interval_s", "sample_interval_s", "basic_vm_cpu", "basic_vm_mem"):
        if getattr(t, key) <= 0:
            raise ConfigError(f"tunables.{key}", "must be positive")
    return t


def _nodes(raw, topology):
    if not isinstance(raw, list) or not raw:
        raise ConfigError("nodes", "at least one node is required")
    specs = []
    explicit = {}
    next_id = 1
    for i, item in enumerate(raw):
        fld = f"nodes[{i}]"
        item = _mapping(item, fld)
        _only(item, ("id", "count", "cpu", "mem", "power", "neighbors"), fld)
        count = _num(item.get("count", 1), f"{fld}.count", positive=True, integer=True)
        if count > 1 and ("id" in item or "neighbors" in item):
            raise ConfigError(fld, "'count' cannot be combined with 'id' or 'neighbors'")
        cpu = _num(item.get("cpu"), f"{fld}.cpu", positive=True)
        mem = _num(item.get("mem"), f"{fld}.mem", positive=True)
        prof = _power(item.get("power"), f"{fld}.power")
        if prof.p_cpu_peak <= 0 or prof.p_mem_peak <= 0:
            raise ConfigError(f"{fld}.power", "cpu_peak and mem_peak must be positive")
        for _ in range(count):
            nid = _num(item["id"], f"{fld}.id", integer=True) if "id" in item else next_id
            if any(s[0] == nid for s in specs):
                raise ConfigError(f"{fld}.id", f"duplicate node id {nid}")
            next_id = max(next_id, nid) + 1
            specs.append((nid, cpu, mem, prof))
            if "neighbors" in item:
                nbrs = item["neighbors"]
                if not isinstance(nbrs, list):
                    raise ConfigError(f"{fld}.neighbors", "expected a list")
                explicit[nid] = [_num(n, f"{fld}.neighbors", integer=True) for n in nbrs]
    ids = sorted(s[0] for s in specs)
    adj = {nid: set() for nid in ids}
    if topology == "ring" and not explicit:
        for a, b in zip(ids, ids[1:] + ids[:1]):
            if a != b:
                adj[a].add(b)
                adj[b].add(a)
    elif topology == "full" and not explicit:
        for a in ids:
            adj[a] = set(ids) - {a}
    else:
        for nid, nbrs in explicit.items():
            for n in nbrs:
                if n not in adj:
                    raise ConfigError(f"nodes.{nid}.neighbors", f"unknown node {n}")
                if n == nid:
                    raise ConfigError(f"nodes.{nid}.neighbors", "node cannot neighbour itself")
                # nodes without their own list inherit back-edges
                if n in explicit and nid not in explicit[n]:
                    raise ConfigError(f"nodes.{n}.neighbors", f"adjacency not symmetric with node {nid}")
                adj[nid].add(n)
                adj[n].add(nid)
    _check_connected(adj)
    return tuple(NodeSpec(nid, cpu, mem, prof, tuple(sorted(adj[nid]))) for nid, cpu, mem, prof in sorted(specs, key=lambda s: s[0]))


def _check_connected(adj):
    ids = sorted(adj)
    seen = {ids[0]}
    todo = deque([ids[0]])
    while todo:
        for n in adj[todo.popleft()]:
            if n not in seen:
                seen.add(n)
                todo.append(n)
    if len(seen) != len(ids):
        missing = sorted(set(ids) - seen)
        raise ConfigError("nodes", f"topology is not connected (unreachable: {missing})")


def _workloads(raw):
    out = {}
    for name, spec in _mapping(raw or {}, "workloads").items():
        fld = f"workloads.{name}"
        spec = dict(_mapping(spec, fld))
        kind = spec.get("kind")
        if kind not in WORKLOAD_KINDS:
            raise ConfigError(f"{fld}.kind", f"expected one of {', '.join(WORKLOAD_KINDS)}")
        allowed = {
            "constant": ("kind", "rate", "demand", "start"),
            "step": ("kind", "points", "demand"),
            "diurnal": ("kind", "base", "amplitude", "period", "demand", "resolution", "phase"),
        }[kind]
        _only(spec, allowed, fld)
        clean = {"kind": kind, "demand": _num(spec.get("demand"), f"{fld}.demand", positive=True)}
        if kind == "constant":
            clean["rate"] = _num(spec.get("rate"), f"{fld}.rate", nonneg=True)
            if "start" in spec:
                clean["start"] = _num(spec["start"], f"{fld}.start", nonneg=True)
        elif kind == "step":
            pts = spec.get("points")
            if not isinstance(pts, list) or not pts:
                raise ConfigError(f"{fld}.points", "expected a non-empty list of [time, rate]")
            clean_pts = []
            for j, p in enumerate(pts):
                if not isinstance(p, list) or len(p) != 2:
                    raise ConfigError(f"{fld}.points[{j}]", "expected [time, rate]")
                clean_pts.append([_num(p[0], f"{fld}.points[{j}]", nonneg=True),
                                  _num(p[1], f"{fld}.points[{j}]", nonneg=True)])
            if any(b[0] <= a[0] for a, b in zip(clean_pts, clean_pts[1:])):
                raise ConfigError(f"{fld}.points", "times must strictly increase")
            clean["points"] = clean_pts
        else:
            clean["base"] = _num(spec.get("base"), f"{fld}.base", nonneg=True)
            clean["amplitude"] = _num(spec.get("amplitude"), f"{fld}.amplitude", nonneg=True)
            clean["period"] = _num(spec.get("period"), f"{fld}.period", positive=True)
            for opt in ("resolution", "phase"):
                if opt in spec:
                    clean[opt] = _num(spec[opt], f"{fld}.{opt}", positive=opt == "resolution")
        out[name] = clean
    return out


def _requests(raw, profiles, tun):
    if raw is None:
        return ()
    if not isinstance(raw, list):
        raise ConfigError("requests", "expected a list")
    out = []
    next_id = 1
    for i, item in enumerate(raw):
        fld = f"requests[{i}]"
        item = _mapping(item, fld)
        _only(item, ("id", "count", "every", "arrival", "thput", "rtime", "lease", "workload", "app", "os"), fld)
        count = _num(item.get("count", 1), f"{fld}.count", positive=True, integer=True)
        every = _num(item.get("every", 0.0), f"{fld}.every", nonneg=True)
        if count > 1 and "id" in item:
            raise ConfigError(fld, "'count' cannot be combined with 'id'")
        thput = _num(item.get("thput"), f"{fld}.thput", positive=True)
        if thput > 0.9 or thput * tun.thput_ok > 1.0:
            raise ConfigError(f"{fld}.thput", f"{thput} is above 0.9; the Ok band would be unreachable")
        rtime = _num(item.get("rtime"), f"{fld}.rtime", positive=True)
        if rtime >= tun.saturation_rtime_s:
            raise ConfigError(f"{fld}.rtime", "must be below tunables.saturation_rtime_s")
        lease = _num(item.get("lease"), f"{fld}.lease", positive=True)
        arrival = _num(item.get("arrival", 0.0), f"{fld}.arrival", nonneg=True)
        profile = item.get("workload")
        if profile not in profiles:
            raise ConfigError(f"{fld}.workload", f"unknown workload {profile!r}")
        for k in range(count):
            rid = _num(item["id"], f"{fld}.id", integer=True) if "id" in item else next_id
            if any(r.request_id == rid for r in out):
                raise ConfigError(f"{fld}.id", f"duplicate request id {rid}")
            next_id = max(next_id, rid) + 1
            out.append(ServiceRequest(
                request_id=rid, thput_target=thput, rtime_target=rtime, lease_duration=lease,
                arrival_time=arrival + k * every, app_label=str(item.get("app", profile)),
                os_label=str(item.get("os", "linux")), demand_profile=profile,
            ))
    return tuple(out)


def _faults(raw, node_ids):
    out = []
    for i, item in enumerate(raw or ()):
        fld = f"faults[{i}]"
        item = _mapping(item, fld)
        _only(item, ("node", "at", "kind"), fld)
        nid = _num(item.get("node"), f"{fld}.node", integer=True)
        if nid not in node_ids:
            raise ConfigError(f"{fld}.node", f"unknown node {nid}")
        kind = item.get("kind", "crash")
        if kind != "crash":
            raise ConfigError(f"{fld}.kind", "only 'crash' is supported")
        out.append(FaultSpec(nid, _num(item.get("at"), f"{fld}.at", nonneg=True), kind))
    return tuple(out)


def _joins(raw, node_ids):
    out = []
    for i, item in enumerate(raw or ()):
        fld = f"joins[{i}]"
        item = _mapping(item, fld)
        _only(item, ("at", "key", "cpu", "mem", "power", "contact", "via"), fld)
        via = item.get("via", "scout")
        if via not in ("scout", "admin"):
            raise ConfigError(f"{fld}.via", "expected 'scout' or 'admin'")
        contact = item.get("contact")
        if via == "scout":
            contact = _num(contact, f"{fld}.contact", integer=True)
            if contact not in node_ids:
                raise ConfigError(f"{fld}.contact", f"unknown node {contact}")
        prof = _power(item.get("power"), f"{fld}.power")
        out.append(JoinSpec(
            at=_num(item.get("at"), f"{fld}.at", nonneg=True),
            key=str(item.get("key", f"join-{i}")),
            cpu=_num(item.get("cpu"), f"{fld}.cpu", positive=True),
            mem=_num(item.get("mem"), f"{fld}.mem", positive=True),
            power=prof, contact=contact, via=via,
        ))
    return tuple(out)


def config_from_dict(doc, base_dir="."):
    doc = _mapping(doc, "<root>")
    _only(doc, ("seed", "horizon", "policy", "topology", "nodes", "workloads", "trace",
                "requests", "tunables", "faults", "joins"), "<root>")
    policy = doc.get("policy", "ant")
    if policy not in POLICIES:
        raise ConfigError("policy", f"expected one of {', '.join(POLICIES)}")
    topology = doc.get("topology", "ring")
    if topology not in TOPOLOGIES:
        raise ConfigError("topology", f"expected one of {', '.join(TOPOLOGIES)}")
    tun = _tunables(doc.get("tunables"))
    nodes = _nodes(doc.get("nodes"), topology)
    workloads = _workloads(doc.get("workloads"))
    trace_path = doc.get("trace")
    profiles = set(workloads)
    if trace_path is not None:
        trace_path = os.path.normpath(os.path.join(base_dir, str(trace_path)))
        profiles |= set(wl.read_trace(trace_path).profiles)
    node_ids = {n.node_id for n in nodes}
    return ScenarioConfig(
        nodes=nodes,
        requests=_requests(doc.get("requests"), profiles, tun),
        workloads=workloads,
        trace_path=trace_path,
        policy=policy,
        tunables=tun,
        seed=_num(doc.get("seed", 0), "seed", integer=True),
        horizon=_num(doc.get("horizon", 3600.0), "horizon", positive=True),
        faults=_faults(doc.get("faults"), node_ids),
        joins=_joins(doc.get("joins"), node_ids),
    )


def parse_scenario(text, source="<string>", base_dir="."):
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line, col = (mark.line + 1, mark.column + 1) if mark else (0, 0)
        raise ConfigParseError(source, line, col, exc.problem or str(exc)) from None
    except yaml.YAMLError as exc:
        raise ConfigParseError(source, 0, 0, str(exc)) from None
    return config_from_dict(doc, base_dir)


def load_scenario(path):
    """Read and validate a scenario file. OSError propagates with the path."""
    with open(path) as fh:
        text = fh.read()
    return parse_scenario(text, source=str(path), base_dir=os.path.dirname(os.path.abspath(path)))


# -- emitting ---------------------------------------------------------------


def _power_dict(p):
    return {key: getattr(p, attr) for key, attr in _POWER_KEYS.items()}


def config_to_dict(cfg):
    doc = {
        "seed": cfg.seed,
        "horizon": cfg.horizon,
        "policy": cfg.policy,
        "topology": "explicit",
        "nodes": [
            {"id": n.node_id, "cpu": n.cpu, "mem": n.mem, "power": _power_dict(n.power),
             "neighbors": list(n.neighbors)}
            for n in cfg.nodes
        ],
        "workloads": {k: dict(v) for k, v in sorted(cfg.workloads.items())},
        "requests": [
            {"id": r.request_id, "arrival": r.arrival_time, "thput": r.thput_target,
             "rtime": r.rtime_target, "lease": r.lease_duration, "workload": r.demand_profile,
             "app": r.app_label, "os": r.os_label}
            for r in cfg.requests
        ],
        "tunables": dataclasses.asdict(cfg.tunables),
        "faults": [{"node": f.node_id, "at": f.at, "kind": f.kind} for f in cfg.faults],
        "joins": [
            {"at": j.at, "key": j.key, "cpu": j.cpu, "mem": j.mem, "power": _power_dict(j.power),
             "contact": j.contact, "via": j.via}
            for j in cfg.joins
        ],
    }
    if cfg.trace_path is not None:
        doc["trace"] = cfg.trace_path
    return doc


def dump_scenario(cfg):
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def config_hash(cfg):
    """Digest of the scenario minus the run knobs (seed, policy)."""
    doc = config_to_dict(cfg)
    doc.pop("seed")
    doc.pop("policy")
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
