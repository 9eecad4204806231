"""CSV export of trajectory logs and dependency-free SVG line charts."""
from __future__ import annotations

import csv
import math
from xml.sax.saxutils import escape

import numpy as np

from .evaluation import LOG_COLUMNS, TrajectoryLog

PALETTE = ("#2ca02c", "#e6b800", "#1f77b4", "#d62728", "#9467bd", "#8c564b", "#17becf")
KINDS = ("timespace", "timespeed", "spacing")


def export_csv(log: TrajectoryLog, path) -> None:
    if len(log.rows) == 0:
        raise ValueError("cannot export an empty log")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
        for row in log.rows:
            writer.writerow([int(row[0]), repr(float(row[1])), int(row[2]),
                             *(repr(float(v)) for v in row[3:])])


def read_csv(path) -> TrajectoryLog:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != LOG_COLUMNS:
            raise ValueError(f"unexpected CSV header {header}")
        rows = np.array([[float(v) for v in r] for r in reader])
    rows = rows.reshape(-1, len(LOG_COLUMNS))
    log = TrajectoryLog(rows)
    log.lengths = _infer_lengths(log)
    return log


def _infer_lengths(log: TrajectoryLog) -> list:
    # length of vehicle i follows from its follower's gap; the last one is unknown
    n = log.n_vehicles
    lengths = []
    for i in range(n - 1):
        x_i = log.column("x", i)[0]
        x_next = log.column("x", i + 1)[0]
        g = log.column("gap_ahead", i + 1)[0]
        lengths.append(float(x_i - x_next - g))
    lengths.append(math.nan)
    return lengths


def _nice_ticks(lo, hi, n=5):
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 10))
        t += step
    return ticks


def line_chart_svg(series, title="", xlabel="", ylabel="", width=640, height=400,
                   hline=None) -> str:
    """Render ``series`` (dicts with x, y, label, color, dashed) as an SVG string."""
    margin_l, margin_r, margin_t, margin_b = 64, 130, 36, 48
    pw, ph = width - margin_l - margin_r, height - margin_t - margin_b
    xs = np.concatenate([np.asarray(s["x"], float) for s in series]) if series else np.zeros(1)
    ys = np.concatenate([np.asarray(s["y"], float) for s in series]) if series else np.zeros(1)
    finite = np.isfinite(xs) & np.isfinite(ys)
    x_lo, x_hi = (float(xs[finite].min()), float(xs[finite].max())) if finite.any() else (0.0, 1.0)
    y_lo, y_hi = (float(ys[finite].min()), float(ys[finite].max())) if finite.any() else (0.0, 1.0)
    if hline is not None:
        y_lo, y_hi = min(y_lo, hline), max(y_hi, hline)
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def px(x):
        return margin_l + (x - x_lo) / (x_hi - x_lo) * pw

    def py(y):
        return margin_t + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{margin_l + pw / 2}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>']
    for t in _nice_ticks(x_lo, x_hi):
        X = px(t)
        out.append(f'<line x1="{X:.1f}" y1="{margin_t}" x2="{X:.1f}" y2="{margin_t + ph}" stroke="#eee"/>')
        out.append(f'<text x="{X:.1f}" y="{margin_t + ph + 14}" text-anchor="middle">{t:g}</text>')
    for t in _nice_ticks(y_lo, y_hi):
        Y = py(t)
        out.append(f'<line x1="{margin_l}" y1="{Y:.1f}" x2="{margin_l + pw}" y2="{Y:.1f}" stroke="#eee"/>')
        out.append(f'<text x="{margin_l - 6}" y="{Y + 4:.1f}" text-anchor="end">{t:g}</text>')
    out.append(f'<rect x="{margin_l}" y="{margin_t}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    if hline is not None:
        Y = py(hline)
        out.append(f'<line class="zero" x1="{margin_l}" y1="{Y:.1f}" x2="{margin_l + pw}" y2="{Y:.1f}" '
                   f'stroke="black" stroke-width="0.8"/>')
    for s in series:
        x = np.asarray(s["x"], float)
        y = np.asarray(s["y"], float)
        ok = np.isfinite(x) & np.isfinite(y)
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[ok], y[ok]))
        dash = ' stroke-dasharray="5,3"' if s.get("dashed") else ""
        out.append(f'<polyline data-label="{escape(s["label"])}" fill="none" stroke="{s["color"]}" '
                   f'stroke-width="1.5"{dash} points="{pts}"/>')
    legend = [s for s in series if not s.get("dashed")]
    for k, s in enumerate(legend):
        Y = margin_t + 12 + 16 * k
        X = margin_l + pw + 12
        out.append(f'<line x1="{X}" y1="{Y}" x2="{X + 18}" y2="{Y}" stroke="{s["color"]}" stroke-width="2"/>')
        out.append(f'<text x="{X + 24}" y="{Y + 4}">{escape(s["label"])}</text>')
    out.append(f'<text x="{margin_l + pw / 2}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text transform="translate(16 {margin_t + ph / 2}) rotate(-90)" '
               f'text-anchor="middle">{escape(ylabel)}</text>')
    out.append("</svg>")
    return "\n".join(out)


def _vehicle_label(log, i):
    n = log.n_vehicles
    if i == 0:
        return "vehicle 0 (lead)"
    if i == n - 1:
        return f"vehicle {i} (follower)"
    return f"vehicle {i}"


def chart_series(log: TrajectoryLog, kind: str) -> tuple[list, dict]:
    kind = kind.lower().replace("-", "").replace("_", "")
    if kind not in KINDS:
        raise ValueError(f"unknown chart kind {kind!r}; expected one of {KINDS}")
    n = log.n_vehicles
    series = []
    if kind == "timespace":
        for i in range(n):
            t, x = log.column("t", i), log.column("x", i)
            color = PALETTE[i % len(PALETTE)]
            series.append({"x": t, "y": x, "label": _vehicle_label(log, i), "color": color})
            length = log.lengths[i] if i < len(log.lengths) else math.nan
            if math.isfinite(length):
                series.append({"x": t, "y": x - length, "label": f"vehicle {i} rear",
                               "color": color, "dashed": True})
        meta = {"title": "Time-space diagram", "xlabel": "time (s)", "ylabel": "position (m)"}
    elif kind == "timespeed":
        for i in range(n):
            series.append({"x": log.column("t", i), "y": log.column("v", i),
                           "label": _vehicle_label(log, i), "color": PALETTE[i % len(PALETTE)]})
        meta = {"title": "Time-speed diagram", "xlabel": "time (s)", "ylabel": "speed (m/s)"}
    else:
        for i in range(1, n):
            series.append({"x": log.column("t", i), "y": log.column("gap_ahead", i),
                           "label": f"gap {i - 1}-{i}", "color": PALETTE[i % len(PALETTE)]})
        meta = {"title": "Spacing", "xlabel": "time (s)", "ylabel": "gap (m)", "hline": 0.0}
    return series, meta


def export_svg(log: TrajectoryLog, kind: str, path) -> None:
    if len(log.rows) == 0:
        raise ValueError("cannot plot an empty log")
    series, meta = chart_series(log, kind)
    svg = line_chart_svg(series, meta["title"], meta["xlabel"], meta["ylabel"],
                         hline=meta.get("hline"))
    with open(path, "w") as fh:
        fh.write(svg)
