"""Result surfaces: accuracy-vs-horizon curves, hand-off latency, heatmaps.

The latency model is the one the whole exercise exists for. A reactive
link re-establishes after a blockage at a fixed 222.8 ms cost; a
proactive hand-off triggered by a correct prediction costs 11.4 ms.
With prediction accuracy p the expected switch latency is the mixture

    delta(p) = p * 11.4 + (1 - p) * 222.8   [milliseconds]

so delta falls linearly from the reactive cost at p=0 to the proactive
cost at p=1. Everything else in this module is bookkeeping that turns
trained models and test windows into CSV tables and SVG figures.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import svgplot
from .model import evaluate

REACTIVE_MS = 222.8
PROACTIVE_MS = 11.4

CURVE_COLUMNS = ["variant", "t_p", "seconds", "top1",
                 "recall_clear", "recall_blocked", "n_test"]
LATENCY_COLUMNS = ["variant", "t_p", "seconds", "p_hat",
                   "delta_ms", "speedup"]


def latency(p_hat: float) -> float:
    """Expected hand-off latency in ms at prediction accuracy p_hat."""
    if not 0.0 <= p_hat <= 1.0:
        raise ValueError(f"p_hat must be in [0, 1], got {p_hat}")
    return p_hat * PROACTIVE_MS + (1.0 - p_hat) * REACTIVE_MS


@dataclass
class CurveRow:
    variant: str
    t_p: int
    seconds: float
    top1: float
    recall_clear: float
    recall_blocked: float
    n_test: int


@dataclass
class AccuracyCurve:
    """Top-1 accuracy per (variant, prediction horizon)."""

    rows: list[CurveRow] = field(default_factory=list)

    def variants(self) -> list[str]:
        return sorted({r.variant for r in self.rows})

    def row(self, variant: str, t_p: int) -> CurveRow:
        for r in self.rows:
            if r.variant == variant and r.t_p == t_p:
                return r
        raise KeyError(f"no curve row for variant {variant!r} at t_p={t_p}")


@dataclass
class LatencyRow:
    variant: str
    t_p: int
    seconds: float
    p_hat: float
    delta_ms: float
    speedup: float                      # reactive cost / delta


@dataclass
class LatencyReport:
    rows: list[LatencyRow] = field(default_factory=list)
    reactive_ms: float = REACTIVE_MS
    proactive_ms: float = PROACTIVE_MS


def accuracy_curve(entries, sample_rate: float = 10.0) -> AccuracyCurve:
    """Evaluate one model per (variant, horizon) into a curve.

    `entries` maps (variant, t_p) to (model, test_windows). Rows come
    out sorted by variant then horizon so the CSV is stable.
    """
    if not entries:
        raise ValueError("no (variant, t_p) entries to evaluate")
    rows = []
    for (variant, t_p) in sorted(entries):
        model, windows = entries[(variant, t_p)]
        res = evaluate(model, windows)
        rows.append(CurveRow(variant=variant, t_p=int(t_p),
                             seconds=t_p / sample_rate, top1=res.top1,
                             recall_clear=res.recall[0],
                             recall_blocked=res.recall[1], n_test=res.n))
    return AccuracyCurve(rows=rows)


def latency_report(curve: AccuracyCurve,
                   picks=(1, 5, 10)) -> LatencyReport:
    """Latency table at the picked horizons, one row per variant plus
    the reactive baseline. Raises KeyError when a pick is missing."""
    rows = []
    for t_p in sorted(picks):
        first = None
        for variant in curve.variants():
            r = curve.row(variant, t_p)      # KeyError names the gap
            first = first or r
            delta = latency(r.top1)
            rows.append(LatencyRow(variant=variant, t_p=r.t_p,
                                   seconds=r.seconds, p_hat=r.top1,
                                   delta_ms=delta,
                                   speedup=REACTIVE_MS / delta))
        rows.append(LatencyRow(variant="reactive", t_p=t_p,
                               seconds=first.seconds, p_hat=0.0,
                               delta_ms=REACTIVE_MS, speedup=1.0))
    return LatencyReport(rows=rows)


def write_accuracy_curve(curve: AccuracyCurve, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(CURVE_COLUMNS) + "\n")
        for r in curve.rows:
            fh.write(f"{r.variant},{r.t_p},{r.seconds:.6g},{r.top1:.6f},"
                     f"{r.recall_clear:.6f},{r.recall_blocked:.6f},"
                     f"{r.n_test}\n")


def read_accuracy_curve(path) -> AccuracyCurve:
    frame = pd.read_csv(path)
    if list(frame.columns) != CURVE_COLUMNS:
        raise ValueError(f"unexpected curve columns {list(frame.columns)}")
    rows = [CurveRow(variant=str(rec.variant), t_p=int(rec.t_p),
                     seconds=float(rec.seconds), top1=float(rec.top1),
                     recall_clear=float(rec.recall_clear),
                     recall_blocked=float(rec.recall_blocked),
                     n_test=int(rec.n_test))
            for rec in frame.itertuples()]
    return AccuracyCurve(rows=rows)


def write_latency_report(report: LatencyReport, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(LATENCY_COLUMNS) + "\n")
        for r in report.rows:
            fh.write(f"{r.variant},{r.t_p},{r.seconds:.6g},{r.p_hat:.6f},"
                     f"{r.delta_ms:.4f},{r.speedup:.4f}\n")


def plot_accuracy_curve(curve: AccuracyCurve, path):
    series = []
    for variant in curve.variants():
        rows = sorted((r for r in curve.rows if r.variant == variant),
                      key=lambda r: r.t_p)
        series.append((variant, [r.seconds for r in rows],
                       [r.top1 for r in rows]))
    svgplot.line_chart(path, series, "top-1 accuracy vs prediction horizon",
                       "horizon [s]", "top-1 accuracy", ylim=(0.0, 1.0))


def plot_latency_report(report: LatencyReport, path):
    picks = sorted({r.t_p for r in report.rows})
    seconds = {r.t_p: r.seconds for r in report.rows}
    groups = [f"{seconds[t_p]:.1f} s" for t_p in picks]
    variants = sorted({r.variant for r in report.rows})
    by_key = {(r.variant, r.t_p): r.delta_ms for r in report.rows}
    series = [(v, [by_key[(v, t_p)] for t_p in picks]) for v in variants]
    svgplot.bar_chart(path, groups, series, "expected hand-off latency",
                      "latency [ms]")


def _raw_grid(scans) -> np.ndarray:
    """Angle-sorted distance rows from raw scans, one column per scan."""
    cols = []
    for scan in scans:
        order = np.argsort(scan.samples[:, 0], kind="stable")
        cols.append(scan.samples[order, 1])
    return np.stack(cols, axis=1)


def emit_heatmap(seq, path, status=None, title: str = "scan distance map"):
    """Angle-by-time distance heatmap with an optional link-status strip.

    Accepts a ScanSequence (status comes from the sequence), a list of
    raw scans (samples get angle-sorted per column), or a list of binned
    scans whose rows are already the angle axis.
    """
    scans = getattr(seq, "scans", seq)
    if len(scans) == 0:
        raise ValueError("cannot render an empty sequence")
    if status is None:
        status = getattr(seq, "link_status", None)
    if hasattr(scans[0], "bins"):
        grid = np.stack([s.bins[:, 1] for s in scans], axis=1)
    else:
        grid = _raw_grid(scans)
    svgplot.heatmap(path, grid, title, status=status)
