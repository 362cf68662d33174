"""Piecewise-constant load signatures: inline generators and trace files.

Trace file format (comma separated, header required)::

    time,app,rate,demand
    0,web,80,0.01
    600,web,120,0.01

``rate`` is offered requests per second from ``time`` until the app's next
row; ``demand`` is GHz-seconds of CPU per request.
"""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass

from .errors import TraceFormatError

TRACE_COLUMNS = ("time", "app", "rate", "demand")


@dataclass(frozen=True)
class Breakpoint:
    time: float
    rate: float
    demand: float


class WorkloadTrace:
    """Per-application breakpoints. Before the first breakpoint the rate is 0."""

    def __init__(self, profiles=None):
        self.profiles: dict[str, list] = {}
        for name, points in (profiles or {}).items():
            self.add(name, points)

    def add(self, name, points):
        points = [p if isinstance(p, Breakpoint) else Breakpoint(*map(float, p)) for p in points]
        if not points:
            raise TraceFormatError(f"profile {name!r} has no breakpoints")
        for a, b in zip(points, points[1:]):
            if not b.time > a.time:
                raise TraceFormatError(f"profile {name!r}: breakpoint times must strictly increase")
        for p in points:
            if p.rate < 0 or not math.isfinite(p.rate):
                raise TraceFormatError(f"profile {name!r}: negative rate at t={p.time}")
            if p.demand <= 0:
                raise TraceFormatError(f"profile {name!r}: demand must be positive at t={p.time}")
        self.profiles[name] = points

    def __contains__(self, name):
        return name in self.profiles

    def at(self, name, t):
        """(rate, demand) in force at time ``t``."""
        points = self.profiles[name]
        i = bisect.bisect_right([p.time for p in points], t) - 1
        if i < 0:
            return 0.0, points[0].demand
        return points[i].rate, points[i].demand

    def breakpoints(self):
        for name in sorted(self.profiles):
            for p in self.profiles[name]:
                yield name, p


def constant(rate, demand, start=0.0):
    return [Breakpoint(start, rate, demand)]


def step(points, demand):
    """``points`` is a list of (time, rate) pairs."""
    return [Breakpoint(float(t), float(r), demand) for t, r in points]


def diurnal(base, amplitude, period, demand, horizon, resolution=300.0, phase=0.0):
    """Sinusoid sampled every ``resolution`` seconds and held constant, floored at 0."""
    if resolution <= 0 or period <= 0:
        raise ValueError("period and resolution must be positive")
    out = []
    n = max(1, math.ceil(horizon / resolution))
    for k in range(n):
        t = k * resolution
        rate = base + amplitude * math.sin(2 * math.pi * (t - phase) / period)
        out.append(Breakpoint(t, max(0.0, rate), demand))
    return out


def read_trace(path):
    """Parse a trace file into a :class:`WorkloadTrace`. Raises TraceFormatError."""
    rows: dict[str, list] = {}
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise TraceFormatError(f"{path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRACE_COLUMNS:
            raise TraceFormatError(f"{path}:1: header must be {','.join(TRACE_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise TraceFormatError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
            try:
                t, rate, demand = float(row[0]), float(row[2]), float(row[3])
            except ValueError:
                raise TraceFormatError(f"{path}:{lineno}: non-numeric field") from None
            rows.setdefault(row[1].strip(), []).append((lineno, Breakpoint(t, rate, demand)))
    trace = WorkloadTrace()
    for app, points in rows.items():
        for (_, a), (ln, b) in zip(points, points[1:]):
            if not b.time > a.time:
                raise TraceFormatError(f"{path}:{ln}: time for {app!r} does not increase")
        for ln, p in points:
            if p.rate < 0:
                raise TraceFormatError(f"{path}:{ln}: negative rate")
            if p.demand <= 0:
                raise TraceFormatError(f"{path}:{ln}: demand must be positive")
        trace.add(app, [p for _, p in points])
    return trace


def write_trace(trace, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for name, p in trace.breakpoints():
            w.writerow([repr(p.time), name, repr(p.rate), repr(p.demand)])
