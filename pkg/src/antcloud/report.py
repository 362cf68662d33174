"""Report serialisation: aligned text, CSV rows and JSON, plus an SVG plot.

All three formats walk the same ordered view of the report, so the numbers
they carry are identical; floats are written with ``repr`` to round-trip.
"""

from __future__ import annotations

import csv
import io
import json

FORMATS = ("text", "csv", "json")
CSV_COLUMNS = ("record", "key", "time", "value")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def report_rows(report):
    """(record, key, time, value) tuples in a fixed order."""
    d = report.to_dict()
    rows = [("meta", k, None, d[k]) for k in ("policy", "seed", "config_hash", "horizon")]
    rows += [("scalar", k, None, d[k]) for k in report.SCALARS]
    for record in ("per_node_energy_j", "slam_histogram", "admin_notifications", "mean_util", "peak_util"):
        rows += [(record, k, None, v) for k, v in d[record].items()]
    for s in d["series"]:
        rows.append(("active_nodes", "", s["time"], s["active_nodes"]))
        rows.append(("fleet_power_w", "", s["time"], s["fleet_power_w"]))
    return rows


def _csv(rows, columns):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(c) for c in row])
    return buf.getvalue()


def _text(report):
    d = report.to_dict()
    lines = [f"policy       {d['policy']}", f"seed         {d['seed']}",
             f"config_hash  {d['config_hash']}", f"horizon_s    {_fmt(d['horizon'])}", ""]
    width = max(len(k) for k in report.SCALARS)
    lines += [f"{k:<{width}}  {_fmt(d[k])}" for k in report.SCALARS]
    lines.append("")
    lines.append("node  energy_j  mean_util  peak_util")
    for nid, e in d["per_node_energy_j"].items():
        lines.append(f"{nid}  {_fmt(e)}  {_fmt(d['mean_util'][nid])}  {_fmt(d['peak_util'][nid])}")
    lines.append("")
    lines.append("slam  count")
    lines += [f"{code}  {n}" for code, n in d["slam_histogram"].items()]
    if d["admin_notifications"]:
        lines.append("")
        lines.append("admin_notification  count")
        lines += [f"{r}  {n}" for r, n in d["admin_notifications"].items()]
    lines.append("")
    lines.append("time  active_nodes  fleet_power_w")
    lines += [f"{_fmt(s['time'])}  {s['active_nodes']}  {_fmt(s['fleet_power_w'])}" for s in d["series"]]
    return "\n".join(lines) + "\n"


def emit_report(report, fmt="text"):
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2) + "\n"
    if fmt == "csv":
        return _csv(report_rows(report), CSV_COLUMNS)
    if fmt == "text":
        return _text(report)
    raise ValueError(f"unknown report format {fmt!r}; expected one of {', '.join(FORMATS)}")


def emit_comparison(summary, reports, fmt="text"):
    """``reports`` maps policy name to MetricsReport, in run order."""
    if fmt == "json":
        doc = {"comparison": summary.to_dict(), "reports": {k: r.to_dict() for k, r in reports.items()}}
        return json.dumps(doc, indent=2) + "\n"
    if fmt == "csv":
        rows = []
        for metric in summary.deltas:
            rows.append(("delta", metric, summary.deltas[metric]))
            rows.append(("ratio", metric, summary.ratios[metric]))
        for flag in ("energy_dominant", "sla_dominant", "dominates"):
            rows.append(("flag", flag, getattr(summary, flag)))
        for name, r in reports.items():
            rows += [(f"{name}.{k}", "", getattr(r, k)) for k in r.SCALARS]
        return _csv(rows, ("record", "key", "value"))
    if fmt == "text":
        lines = [f"{summary.policy_a} vs {summary.policy_b}", "",
                 "metric  " + "  ".join(reports) + "  delta  ratio"]
        for metric in summary.deltas:
            vals = "  ".join(_fmt(getattr(r, metric)) for r in reports.values())
            lines.append(f"{metric}  {vals}  {_fmt(summary.deltas[metric])}  {_fmt(summary.ratios[metric])}")
        lines.append("")
        lines.append(f"energy_dominant  {summary.energy_dominant or 'none'}")
        lines.append(f"sla_dominant     {summary.sla_dominant or 'none'}")
        lines.append(f"dominates        {summary.dominates or 'none'}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}; expected one of {', '.join(FORMATS)}")


def write_text(text, path):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def plot_report(report, path):
    """Active-node count and fleet power over time, as SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # fixed metadata keeps the file byte-stable across runs
    matplotlib.rcParams["svg.hashsalt"] = "antcloud"
    t = [p[0] for p in report.active_nodes]
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(8, 5))
    ax1.step(t, [p[1] for p in report.active_nodes], where="post")
    ax1.set_ylabel("active nodes")
    ax2.step(t, [p[1] for p in report.fleet_power], where="post", color="tab:red")
    ax2.set_ylabel("fleet power (W)")
    ax2.set_xlabel("time (s)")
    ax1.set_title(f"{report.policy}, seed {report.seed}")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
