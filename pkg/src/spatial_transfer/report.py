"""MSE report rows, CSV round trip, SVG chart and text summary."""

from __future__ import annotations

import csv
import io
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import METHODS
from .surfaces import PROCESSES

CSV_HEADER = ("process", "method", "target_n", "replicate", "seed", "mse")


@dataclass(frozen=True)
class MseRow:
    process: str
    method: str
    target_n: int
    replicate: int
    seed: int
    mse: float
    fallback: bool = False


@dataclass
class MseReport:
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def sorted(self) -> "MseReport":
        proc_rank = {p: i for i, p in enumerate(PROCESSES)}
        meth_rank = {m: i for i, m in enumerate(METHODS)}
        key = lambda r: (proc_rank.get(r.process, 99), r.target_n, r.replicate, meth_rank.get(r.method, 99))
        return MseReport(sorted(self.rows, key=key), list(self.failures))

    def values(self, process: str, method: str, n: int) -> np.ndarray:
        """MSEs for one cell, ordered by replicate."""
        sel = sorted((r.replicate, r.mse) for r in self.rows
                     if r.process == process and r.method == method and r.target_n == n)
        return np.array([m for _, m in sel])

    def aggregate(self) -> dict:
        """``(process, method, n) -> (mean, standard error, count)``."""
        cells = {}
        for r in self.rows:
            cells.setdefault((r.process, r.method, r.target_n), []).append(r.mse)
        out = {}
        for key, vals in cells.items():
            v = np.asarray(vals)
            se = float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
            out[key] = (float(np.mean(v)), se, len(v))
        return out

    @property
    def fallback_count(self) -> int:
        return sum(r.fallback for r in self.rows)


def csv_text(report: MseReport) -> str:
    lines = [",".join(CSV_HEADER)]
    for r in report.rows:
        lines.append(f"{r.process},{r.method},{r.target_n},{r.replicate},{r.seed},{r.mse:.17g}")
    return "\n".join(lines) + "\n"


def write_csv(report: MseReport, path) -> None:
    if not report.rows:
        raise ValueError("refusing to write an empty report")
    with open(path, "w", newline="\n") as fh:
        fh.write(csv_text(report))


def read_csv(path) -> MseReport:
    report = MseReport()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}")
        for rec in reader:
            report.rows.append(MseRow(rec["process"], rec["method"], int(rec["target_n"]),
                                      int(rec["replicate"]), int(rec["seed"]), float(rec["mse"])))
    return report


# --------------------------------------------------------------------------
# SVG

_COLORS = {"transfer": "#1b7837", "target_only": "#2166ac", "kriging": "#b2182b"}
_PANEL_W, _PANEL_H = 420, 320
_MARGIN = dict(left=70, right=20, top=40, bottom=50)


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def render_plot_svg(report: MseReport, path) -> None:
    """One panel per process: mean MSE (log axis) against target size, one line per method.

    Whiskers span one standard error either side of the mean.
    """
    if not report.rows:
        raise ValueError("refusing to plot an empty report")
    agg = report.aggregate()
    processes = [p for p in PROCESSES if any(k[0] == p for k in agg)]
    processes += sorted({k[0] for k in agg} - set(processes))
    width = _PANEL_W * len(processes)
    height = _PANEL_H + 30
    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", version="1.1",
                     width=str(width), height=str(height), viewBox=f"0 0 {width} {height}")
    ET.SubElement(svg, "rect", x="0", y="0", width=str(width), height=str(height), fill="white")

    for pi, process in enumerate(processes):
        _panel(svg, pi * _PANEL_W, process, {k: v for k, v in agg.items() if k[0] == process})

    legend = ET.SubElement(svg, "g", {"class": "legend", "font-family": "sans-serif", "font-size": "12"})
    for i, method in enumerate(METHODS):
        x = 20 + 130 * i
        ET.SubElement(legend, "line", x1=str(x), y1=str(height - 12), x2=str(x + 20), y2=str(height - 12),
                      stroke=_COLORS[method], **{"stroke-width": "2"})
        ET.SubElement(legend, "text", x=str(x + 25), y=str(height - 8)).text = method
    if report.failures:
        ET.SubElement(legend, "text", x=str(width - 10), y=str(height - 8), **{"text-anchor": "end"}).text = \
            f"{len(report.failures)} replicate(s) failed and were excluded"

    ET.indent(svg)
    Path(path).write_text(ET.tostring(svg, encoding="unicode") + "\n")


def _panel(svg, x0, process, cells):
    g = ET.SubElement(svg, "g", {"class": "panel", "data-process": process,
                                 "font-family": "sans-serif", "font-size": "11"})
    left, top = x0 + _MARGIN["left"], _MARGIN["top"]
    right, bottom = x0 + _PANEL_W - _MARGIN["right"], _PANEL_H - _MARGIN["bottom"]
    sizes = sorted({k[2] for k in cells})
    lo_vals = [max(m - s, m * 1e-3) for (m, s, _) in cells.values() if m > 0]
    hi_vals = [m + s for (m, s, _) in cells.values() if m > 0]
    if lo_vals:
        ylo, yhi = math.floor(math.log10(min(lo_vals))), math.ceil(math.log10(max(hi_vals)))
    else:
        ylo, yhi = -1, 0
    if yhi <= ylo:
        yhi = ylo + 1

    def px(n):
        if len(sizes) == 1:
            return (left + right) / 2
        return left + (right - left) * sizes.index(n) / (len(sizes) - 1)

    def py(v):
        v = max(v, 10.0**ylo)
        return bottom - (bottom - top) * (math.log10(v) - ylo) / (yhi - ylo)

    ET.SubElement(g, "text", x=_fmt((left + right) / 2), y=str(top - 15),
                  **{"text-anchor": "middle", "font-size": "14"}).text = f"{process} process MSE"
    ET.SubElement(g, "rect", x=_fmt(left), y=_fmt(top), width=_fmt(right - left), height=_fmt(bottom - top),
                  fill="none", stroke="black")
    for e in range(ylo, yhi + 1):
        y = py(10.0**e)
        ET.SubElement(g, "line", x1=_fmt(left - 4), y1=_fmt(y), x2=_fmt(left), y2=_fmt(y), stroke="black")
        ET.SubElement(g, "text", x=_fmt(left - 6), y=_fmt(y + 4), **{"text-anchor": "end"}).text = f"1e{e}"
    for n in sizes:
        x = px(n)
        ET.SubElement(g, "line", x1=_fmt(x), y1=_fmt(bottom), x2=_fmt(x), y2=_fmt(bottom + 4), stroke="black")
        ET.SubElement(g, "text", x=_fmt(x), y=_fmt(bottom + 16), **{"text-anchor": "middle"}).text = str(n)
    ET.SubElement(g, "text", x=_fmt((left + right) / 2), y=_fmt(bottom + 34),
                  **{"text-anchor": "middle"}).text = "target sample size"

    for method in METHODS:
        pts = [(n, cells[(process, method, n)]) for n in sizes if (process, method, n) in cells]
        if not pts:
            continue
        color = _COLORS[method]
        coords = " ".join(f"{_fmt(px(n))},{_fmt(py(m))}" for n, (m, _, _) in pts)
        ET.SubElement(g, "polyline", points=coords, fill="none", stroke=color,
                      **{"stroke-width": "2", "data-method": method})
        for n, (m, s, _) in pts:
            x = px(n)
            ET.SubElement(g, "line", x1=_fmt(x), y1=_fmt(py(m - s if m - s > 0 else 10.0**ylo)),
                          x2=_fmt(x), y2=_fmt(py(m + s)), stroke=color, **{"class": "whisker"})
            ET.SubElement(g, "circle", cx=_fmt(x), cy=_fmt(py(m)), r="3", fill=color)


# --------------------------------------------------------------------------
# text summary


def summary_text(report: MseReport) -> str:
    agg = report.aggregate()
    out = io.StringIO()
    out.write(f"{'process':<14}{'n':>5}  {'method':<12}{'mean mse':>14}{'std err':>12}{'count':>7}\n")
    for key in sorted(agg, key=lambda k: (k[0], k[2], METHODS.index(k[1]) if k[1] in METHODS else 9)):
        m, s, c = agg[key]
        out.write(f"{key[0]:<14}{key[2]:>5}  {key[1]:<12}{m:>14.6g}{s:>12.3g}{c:>7}\n")
    out.write("\ntransfer wins over target_only (paired replicates):\n")
    for proc in sorted({k[0] for k in agg}):
        for n in sorted({k[2] for k in agg if k[0] == proc}):
            a, b = report.values(proc, "transfer", n), report.values(proc, "target_only", n)
            if len(a) and len(a) == len(b):
                out.write(f"  {proc:<14}n={n:<4} {int(np.sum(a < b))}/{len(a)}\n")
    out.write(f"\nkriging ML-fit fallbacks: {report.fallback_count}\n")
    out.write(f"failed replicates excluded: {len(report.failures)}\n")
    for fail in report.failures:
        out.write(f"  {fail}\n")
    return out.getvalue()


def write_summary(report: MseReport, path) -> None:
    Path(path).write_text(summary_text(report))
