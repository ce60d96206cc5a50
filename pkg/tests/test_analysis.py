from __future__ import annotations

import re

import numpy as np
import pytest

from lidar_blockage import analysis as an
from lidar_blockage import svgplot
from lidar_blockage.dataset import ObservationWindow
from lidar_blockage.preproc import (FovConfig, QuantConfig, build_dictionary,
                                    scr_pipeline)
from lidar_blockage.scene import SceneConfig, simulate_sequence


def test_latency_endpoints_exact():
    assert an.latency(1.0) == 11.4
    assert an.latency(0.0) == 222.8


def test_latency_quoted_operating_points():
    assert abs(an.latency(0.9561) - 20.68) < 0.01
    assert abs(an.latency(0.9919) - 13.12) < 0.01
    assert abs(an.latency(0.9523) - 21.48) < 0.01
    assert 222.8 / an.latency(0.9561) > 10.0


def test_latency_domain_and_monotonicity(rng):
    for bad in (-0.01, 1.01, 2.0):
        with pytest.raises(ValueError):
            an.latency(bad)
    ps = np.sort(rng.random(200))
    ds = np.array([an.latency(p) for p in ps])
    assert np.all(np.diff(ds) < 0)
    assert np.all((ds >= 11.4) & (ds <= 222.8))


class _Stub:
    """Fixed-width evaluation stub; the vote rule is injected."""

    def __init__(self, vote, shape=(4, 6, 2)):
        self.input_shape = shape
        self._vote = vote

    def logits(self, x):
        out = np.zeros((x.shape[0], 2))
        for i in range(x.shape[0]):
            out[i, self._vote(x[i])] = 1.0
        return out


def _windows(labels, encode=True, seq_id=0):
    out = []
    for i, lab in enumerate(labels):
        fill = float(lab) if encode else 0.0
        x = np.full((4, 6, 2), fill, dtype=np.float32)
        out.append(ObservationWindow(x=x, label=lab, origin=(seq_id, i)))
    return out


def _perfect():
    return _Stub(lambda x: int(x.mean() > 0.5))


def _majority0():
    return _Stub(lambda x: 0)


def test_accuracy_curve_perfect_classifier_is_flat():
    wins = _windows([0, 1, 0, 1, 1, 0])
    entries = {("toy", t): (_perfect(), wins) for t in (1, 5, 10)}
    curve = an.accuracy_curve(entries)
    assert [r.top1 for r in curve.rows] == [1.0, 1.0, 1.0]
    assert [r.t_p for r in curve.rows] == [1, 5, 10]
    assert [r.seconds for r in curve.rows] == [0.1, 0.5, 1.0]


def test_accuracy_curve_majority_predictor_tracks_prevalence():
    wins = _windows([0, 0, 0, 1, 1, 0, 0, 1, 0, 0])
    curve = an.accuracy_curve({("toy", 1): (_majority0(), wins)})
    row = curve.rows[0]
    assert row.top1 == 0.7
    assert row.recall_clear == 1.0
    assert row.recall_blocked == 0.0
    assert row.n_test == 10


def test_accuracy_curve_rows_sorted_and_lookup():
    wins = _windows([0, 1])
    entries = {("b", 5): (_perfect(), wins), ("a", 10): (_perfect(), wins),
               ("a", 1): (_perfect(), wins)}
    curve = an.accuracy_curve(entries)
    assert [(r.variant, r.t_p) for r in curve.rows] == [
        ("a", 1), ("a", 10), ("b", 5)]
    assert curve.row("b", 5).variant == "b"
    with pytest.raises(KeyError):
        curve.row("a", 5)
    with pytest.raises(ValueError):
        an.accuracy_curve({})


def _toy_curve(top1_by_variant_tp):
    rows = [an.CurveRow(variant=v, t_p=t, seconds=t / 10.0, top1=p,
                        recall_clear=1.0, recall_blocked=1.0, n_test=100)
            for (v, t), p in sorted(top1_by_variant_tp.items())]
    return an.AccuracyCurve(rows=rows)


def test_latency_report_perfect_curve():
    curve = _toy_curve({("m", t): 1.0 for t in (1, 5, 10)})
    rep = an.latency_report(curve)
    model_rows = [r for r in rep.rows if r.variant == "m"]
    assert all(r.delta_ms == 11.4 for r in model_rows)
    reactive = [r for r in rep.rows if r.variant == "reactive"]
    assert len(reactive) == 3
    assert all(r.delta_ms == 222.8 and r.speedup == 1.0 for r in reactive)


def test_latency_report_exact_affine_identity(rng):
    acc = {(v, t): float(rng.random())
           for v in ("a", "b") for t in (1, 5, 10)}
    rep = an.latency_report(_toy_curve(acc))
    for r in rep.rows:
        assert r.delta_ms == r.p_hat * 11.4 + (1.0 - r.p_hat) * 222.8
        assert r.speedup == 222.8 / r.delta_ms


def test_latency_report_speedup_threshold():
    curve = _toy_curve({("m", 1): 0.9561})
    rep = an.latency_report(curve, picks=(1,))
    row = next(r for r in rep.rows if r.variant == "m")
    assert abs(row.delta_ms - 20.68) < 0.01
    assert row.speedup > 10.0
    assert abs(row.speedup - 10.8) < 0.1


def test_latency_report_missing_pick():
    curve = _toy_curve({("m", 1): 0.9, ("m", 5): 0.8})
    with pytest.raises(KeyError):
        an.latency_report(curve, picks=(1, 5, 10))


def test_curve_csv_round_trip(tmp_path):
    curve = _toy_curve({("scr-216", t): 0.25 * t / 10 + 0.7
                        for t in (1, 5, 10)})
    path = tmp_path / "curve.csv"
    an.write_accuracy_curve(curve, path)
    first = path.read_bytes()
    assert first.decode().splitlines()[0] == ",".join(an.CURVE_COLUMNS)
    back = an.read_accuracy_curve(path)
    assert back == curve
    an.write_accuracy_curve(back, path)
    assert path.read_bytes() == first


def test_latency_csv_schema(tmp_path):
    rep = an.latency_report(_toy_curve({("m", 1): 0.5}), picks=(1,))
    path = tmp_path / "latency.csv"
    an.write_latency_report(rep, path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(an.LATENCY_COLUMNS)
    assert len(lines) == 1 + len(rep.rows)
    an.write_latency_report(rep, tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()


def test_plot_outputs_deterministic(tmp_path):
    curve = _toy_curve({("a", t): 0.9 - 0.02 * t for t in (1, 5, 10)})
    rep = an.latency_report(curve)
    for render, name in ((an.plot_accuracy_curve, "curve"),
                         (an.plot_latency_report, "latency")):
        a, b = tmp_path / f"{name}_a.svg", tmp_path / f"{name}_b.svg"
        render(curve if name == "curve" else rep, a)
        render(curve if name == "curve" else rep, b)
        blob = a.read_bytes()
        assert blob == b.read_bytes()
        assert blob.startswith(b"<svg ")
        assert blob.rstrip().endswith(b"</svg>")


def _grid_fills(path, rows, cols):
    lines = path.read_text().splitlines()
    rects = lines[3:3 + rows * cols]
    fills = [re.search(r'fill="(#[0-9a-f]{6})"', ln).group(1) for ln in rects]
    return np.array(fills).reshape(rows, cols)


def test_heatmap_constant_rows_render_as_bands(tmp_path):
    class FakeScan:
        def __init__(self, samples):
            self.samples = samples

    base = np.stack([np.linspace(-3, 3, 12),
                     np.linspace(1.0, 9.0, 12)], axis=1).astype(np.float32)
    scans = [FakeScan(base.copy()) for _ in range(7)]
    path = tmp_path / "static.svg"
    an.emit_heatmap(scans, path, status=np.zeros(7, dtype=np.uint8))
    fills = _grid_fills(path, 12, 7)
    for r in range(12):
        assert len(set(fills[r])) == 1
    assert len({fills[r][0] for r in range(12)}) > 3


def test_heatmap_zero_grid_uniform(tmp_path):
    class FakeScan:
        def __init__(self):
            self.samples = np.zeros((5, 2), dtype=np.float32)

    path = tmp_path / "zero.svg"
    an.emit_heatmap([FakeScan() for _ in range(4)], path)
    fills = _grid_fills(path, 5, 4)
    assert set(fills.ravel()) == {svgplot.ramp(0.0)}


def test_heatmap_moving_trace_varies_over_time(tmp_path):
    class FakeScan:
        def __init__(self, dist):
            s = np.zeros((8, 2), dtype=np.float32)
            s[:, 0] = np.linspace(-1, 1, 8)
            s[:, 1] = 9.0
            s[4, 1] = dist
            self.samples = s

    scans = [FakeScan(8.0 - t) for t in range(6)]
    path = tmp_path / "trace.svg"
    an.emit_heatmap(scans, path)
    fills = _grid_fills(path, 8, 6)
    assert len(set(fills[4])) == 6
    assert len(set(fills[0])) == 1


def test_heatmap_from_simulated_and_binned_scans(tmp_path, quiet_config):
    seq = simulate_sequence(quiet_config, duration=1.0)
    out = tmp_path / "seq.svg"
    an.emit_heatmap(seq, out)
    text = out.read_text()
    assert text.count(svgplot.STATUS_CLEAR) == len(seq)

    fov, quant = FovConfig(), QuantConfig()
    binned = [scr_pipeline(s, fov, quant, None) for s in seq.scans]
    dictionary = build_dictionary(binned, n_d=len(binned))
    cleaned = [scr_pipeline(s, fov, quant, dictionary) for s in seq.scans]
    out2 = tmp_path / "binned.svg"
    an.emit_heatmap(cleaned, out2, status=seq.link_status)
    fills = _grid_fills(out2, 216, len(seq))
    assert set(fills.ravel()) == {svgplot.ramp(0.0)}


def test_heatmap_input_validation(tmp_path):
    with pytest.raises(ValueError):
        an.emit_heatmap([], tmp_path / "x.svg")
    with pytest.raises(ValueError):
        svgplot.heatmap(tmp_path / "y.svg", np.zeros((3, 3)),
                        "t", status=[0, 1])


def test_bar_chart_validation(tmp_path):
    with pytest.raises(ValueError):
        svgplot.bar_chart(tmp_path / "b.svg", ["a"], [("s", [1.0, 2.0])],
                          "t", "y")
    with pytest.raises(ValueError):
        svgplot.line_chart(tmp_path / "l.svg", [], "t", "x", "y")
