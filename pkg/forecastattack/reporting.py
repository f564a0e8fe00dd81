"""Static report rendering and run audits.

Reports are a pure function of the JSON artifacts in a run directory; the SVG
figures and the text summary are rendered through Django templates.
"""
import logging
from dataclasses import dataclass

import numpy as np
from django.template.loader import render_to_string

from .exceptions import MissingArtifacts
from .experiment import summarize_rows
from .fileio import atomic_write_text, read_json, read_jsonl

logger = logging.getLogger(__name__)

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")
STRATEGY_COLORS = {"clean": "#7f7f7f", "best_first": "#d62728", "random": "#1f77b4"}


@dataclass(frozen=True)
class Plot:
    width: int = 720
    height: int = 360
    left: int = 70
    right_margin: int = 150
    top: int = 30
    bottom_margin: int = 40

    @property
    def right(self):
        return self.width - self.right_margin

    @property
    def bottom(self):
        return self.height - self.bottom_margin

    @property
    def center(self):
        return (self.left + self.right) // 2

    @property
    def middle(self):
        return (self.top + self.bottom) // 2

    @property
    def legend_x(self):
        return self.right + 12

    def x(self, value, lo, hi):
        span = hi - lo or 1.0
        return round(self.left + (value - lo) / span * (self.right - self.left), 2)

    def y(self, value, lo, hi):
        span = hi - lo or 1.0
        return round(self.bottom - (value - lo) / span * (self.bottom - self.top), 2)

    def points(self, xs, ys, x_range, y_range):
        return " ".join(f"{self.x(a, *x_range)},{self.y(b, *y_range)}" for a, b in zip(xs, ys))


def _ticks(lo, hi, count=5, fmt="{:.0f}"):
    return [{"value": v, "label": fmt.format(v)} for v in np.linspace(lo, hi, count)]


def _padded(values, pad=0.05):
    lo, hi = float(np.min(values)), float(np.max(values))
    margin = (hi - lo) * pad or 1.0
    return lo - margin, hi + margin


def _line_chart(title, x_label, y_label, series, x_range, y_range, x_ticks, marker=None, y_fmt="{:.0f}"):
    plot = Plot()
    series_list = []
    for k, item in enumerate(series):
        series_list.append(
            {
                "name": item["name"],
                "color": item.get("color", PALETTE[k % len(PALETTE)]),
                "dashed": item.get("dashed", False),
                "points": plot.points(item["x"], item["y"], x_range, y_range),
                "legend_y": plot.top + 14 * (k + 1),
            }
        )
    y_ticks = [{"position": plot.y(t["value"], *y_range) + 4, "label": t["label"]} for t in _ticks(*y_range, fmt=y_fmt)]
    x_ticks = [{"position": plot.x(value, *x_range), "label": label} for value, label in x_ticks]
    return render_to_string(
        "forecastattack/line_chart.svg",
        {
            "plot": plot,
            "title": title,
            "x_label": x_label,
            "y_label": y_label,
            "series_list": series_list,
            "y_ticks": y_ticks,
            "x_ticks": x_ticks,
            "marker": plot.x(marker, *x_range) if marker is not None else None,
        },
    )


def overlay_figure(overlay):
    """Actual, clean and attacked aggregate forecasts; the marker shows where the attack switches direction."""
    n = len(overlay["hours"])
    xs = list(range(n))
    values = overlay["actual_mw"] + overlay["clean_mw"] + overlay["attacked_mw"]
    step = max(1, n // 6)
    ticks = [(i, overlay["hours"][i][5:10]) for i in range(0, n, step)]
    series = [
        {"name": "actual", "x": xs, "y": overlay["actual_mw"], "color": "#000000"},
        {"name": "clean forecast", "x": xs, "y": overlay["clean_mw"], "color": "#1f77b4"},
        {"name": f"attacked (eps {overlay['epsilon']:g})", "x": xs, "y": overlay["attacked_mw"], "color": "#d62728",
         "dashed": True},
    ]
    return _line_chart(
        "Aggregate load forecast under attack", "hour", "MW", series, (0, max(n - 1, 1)), _padded(values), ticks,
        marker=overlay["switch_index"],
    )


def sweep_figure(sweep):
    rows = [r for r in sweep["rows"] if r["attacker"] != "clean"]
    epsilons = sorted({r["epsilon"] for r in rows}) or [0.0]
    clean = sweep["clean"]["mape"]
    series = []
    for attacker in ("whitebox", "blackbox", "transfer"):
        for direction in ("decrease", "increase"):
            points = sorted((r["epsilon"], r["mape"]) for r in rows if r["attacker"] == attacker and r["direction"] == direction)
            if not points:
                continue
            series.append(
                {
                    "name": f"{attacker} {direction}",
                    "x": [0.0] + [p[0] for p in points],
                    "y": [clean] + [p[1] for p in points],
                    "dashed": direction == "increase",
                }
            )
    mapes = [clean] + [r["mape"] for r in rows]
    ticks = [(e, f"{e:g}") for e in [0.0] + epsilons]
    return _line_chart(
        "Forecast error vs attack budget", "epsilon (degrees)", "MAPE (%)", series, (0.0, max(epsilons[-1], 1e-9)),
        (0.0, max(mapes) * 1.1 or 1.0), ticks, y_fmt="{:.1f}",
    )


def shed_days_figure(aggregates):
    plot = Plot()
    groups = aggregates["groups"]
    epsilons = sorted({g["epsilon"] for g in groups if g["strategy"] != "clean"})
    strategies = sorted({g["strategy"] for g in groups if g["strategy"] != "clean"})
    clean = [g for g in groups if g["strategy"] == "clean"]
    top = max([g["days"] for g in groups] + [1])
    slots = len(epsilons) + (1 if clean else 0)
    slot_width = (plot.right - plot.left) / max(slots, 1)
    bar_width = max(4, int(slot_width * 0.8 / max(len(strategies), 1)))
    rendered = []
    slot = 0
    if clean:
        rendered.append(_bar_group(plot, slot, slot_width, bar_width, "clean", [("clean", clean[0]["shed_days"])], top))
        slot += 1
    for epsilon in epsilons:
        bars = []
        for strategy in strategies:
            match = [g for g in groups if g["strategy"] == strategy and g["epsilon"] == epsilon]
            bars.append((strategy, match[0]["shed_days"] if match else 0))
        rendered.append(_bar_group(plot, slot, slot_width, bar_width, f"eps {epsilon:g}", bars, top))
        slot += 1
    names = (["clean"] if clean else []) + strategies
    legend = [{"name": name, "color": STRATEGY_COLORS.get(name, PALETTE[k % len(PALETTE)]), "y": plot.top + 16 * k}
              for k, name in enumerate(names)]
    y_ticks = [{"position": plot.y(t["value"], 0, top) + 4, "label": t["label"]} for t in _ticks(0, top)]
    return render_to_string(
        "forecastattack/bar_chart.svg",
        {
            "plot": plot,
            "title": f"Days with load shedding (of {aggregates['days']})",
            "x_label": "attack budget",
            "y_label": "shed days",
            "groups": rendered,
            "legend": legend,
            "y_ticks": y_ticks,
        },
    )


def _bar_group(plot, slot, slot_width, bar_width, label, bars, top):
    start = plot.left + slot * slot_width + (slot_width - bar_width * len(bars)) / 2
    rendered = []
    for k, (name, value) in enumerate(bars):
        y = plot.y(value, 0, top)
        rendered.append(
            {
                "name": name,
                "value": value,
                "x": round(start + k * bar_width, 2),
                "y": y,
                "width": bar_width,
                "height": round(plot.bottom - y, 2),
                "color": STRATEGY_COLORS.get(name, PALETTE[k % len(PALETTE)]),
            }
        )
    return {"label": label, "center": round(plot.left + (slot + 0.5) * slot_width, 2), "bars": rendered}


def _optional(path):
    return read_json(path) if path.exists() else None


def write_report(out):
    """Render every figure whose inputs exist, plus summary.txt; returns the written paths."""
    report = _optional(out / "run_report.json")
    sweep = _optional(out / "attack_sweep.json")
    overlay = _optional(out / "forecast_overlay.json")
    metrics = _optional(out / "models" / "metrics.json")
    if not any((report, sweep, overlay, metrics)):
        raise MissingArtifacts(f"{out} holds no run artifacts to report on", path=str(out))
    written = []
    if overlay:
        written.append(atomic_write_text(out / "forecast_overlay.svg", overlay_figure(overlay)))
    if sweep:
        written.append(atomic_write_text(out / "attack_sweep.svg", sweep_figure(sweep)))
    if report:
        written.append(atomic_write_text(out / "shed_days.svg", shed_days_figure(report["aggregates"])))
    summary = render_to_string(
        "forecastattack/summary.txt",
        {
            "provenance": report["provenance"] if report else None,
            "aggregates": report["aggregates"] if report else None,
            "sweep": sweep,
            "metrics": [{"label": label, **values} for label, values in sorted((metrics or {}).items())],
        },
    )
    written.append(atomic_write_text(out / "summary.txt", summary))
    logger.info("Rendered %d report files in %s", len(written), out)
    return written


def audit(out):
    """Recompute a RunReport's aggregates from its rows and the per-day records; returns discrepancies."""
    report_path = out / "run_report.json"
    days_path = out / "days.jsonl"
    for path in (report_path, days_path):
        if not path.exists():
            raise MissingArtifacts(f"{path} is missing", path=str(path))
    report = read_json(report_path)
    problems = []
    if summarize_rows(report["rows"]) != report["aggregates"]:
        problems.append("aggregates differ from the values recomputed from the rows")

    shed = {}
    for record in read_jsonl(days_path):
        shed[(record["day"], "clean", 0.0)] = _shed_total(record["clean"])
        for attack in record["attacks"]:
            shed[(record["day"], attack["plan"]["strategy"], float(attack["epsilon"]))] = _shed_total(attack["result"])
    for row in report["rows"]:
        key = (row["day"], row["strategy"], float(row["epsilon"]))
        if key not in shed:
            problems.append(f"{key}: no per-day record")
        elif abs(shed[key] - row["shed_mwh"]) > 1e-4:
            problems.append(f"{key}: row says {row['shed_mwh']} MWh shed, hours sum to {shed[key]:.6f}")
    return problems


def _shed_total(day):
    return sum(sum(hour["shed"].values()) for hour in day["hours"])
