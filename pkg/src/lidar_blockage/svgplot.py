"""Tiny deterministic SVG emitters for the report figures.

No plotting stack. Every figure this pipeline produces is a few hundred
rects and polylines, and writing them out directly keeps the artifacts
byte-for-byte reproducible, which the determinism gate diffs against.
All coordinates are printed with two decimals so float noise below a
hundredth of a pixel cannot leak into the files.
"""

from __future__ import annotations

import numpy as np

WIDTH = 640
HEIGHT = 400
MARGIN = {"left": 64, "right": 150, "top": 40, "bottom": 48}

PALETTE = ["#1f6fb4", "#d1495b", "#3a7d44", "#8c6bb1", "#c77f2e"]

STATUS_CLEAR = "#2e7d32"
STATUS_BLOCKED = "#c62828"


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _esc(text: str) -> str:
    return (str(text).replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;"))


def ramp(v: float) -> str:
    """Two-segment dark-to-bright color ramp over [0, 1]."""
    v = min(1.0, max(0.0, float(v)))
    stops = ((13, 8, 84), (196, 58, 90), (240, 249, 33))
    if v < 0.5:
        a, b, u = stops[0], stops[1], v * 2.0
    else:
        a, b, u = stops[1], stops[2], (v - 0.5) * 2.0
    rgb = [int(round(a[i] + (b[i] - a[i]) * u)) for i in range(3)]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def _open(title: str, width: int = WIDTH, height: int = HEIGHT) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}" '
        'font-family="monospace" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
        f'<text x="{width // 2}" y="22" text-anchor="middle" '
        f'font-size="14">{_esc(title)}</text>',
    ]


def _axes(parts: list[str], x0, y0, x1, y1, xlabel, ylabel):
    parts.append(f'<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}" '
                 'stroke="#333333"/>')
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" '
                 'stroke="#333333"/>')
    parts.append(f'<text x="{(x0 + x1) // 2}" y="{y1 + 36}" '
                 f'text-anchor="middle">{_esc(xlabel)}</text>')
    parts.append(f'<text x="16" y="{(y0 + y1) // 2}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {(y0 + y1) // 2})">'
                 f'{_esc(ylabel)}</text>')


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, n)


def line_chart(path, series, title: str, xlabel: str, ylabel: str,
               ylim: tuple[float, float] | None = None):
    """Polyline chart; `series` is a list of (label, xs, ys) triples."""
    if not series:
        raise ValueError("need at least one series")
    x0, y0 = MARGIN["left"], MARGIN["top"]
    x1, y1 = WIDTH - MARGIN["right"], HEIGHT - MARGIN["bottom"]
    all_x = np.concatenate([np.asarray(xs, dtype=float) for _, xs, _ in series])
    all_y = np.concatenate([np.asarray(ys, dtype=float) for _, _, ys in series])
    xlo, xhi = float(all_x.min()), float(all_x.max())
    ylo, yhi = (float(all_y.min()), float(all_y.max())) if ylim is None else ylim
    if xhi <= xlo:
        xhi = xlo + 1.0
    if yhi <= ylo:
        yhi = ylo + 1.0

    def sx(v):
        return x0 + (v - xlo) / (xhi - xlo) * (x1 - x0)

    def sy(v):
        return y1 - (v - ylo) / (yhi - ylo) * (y1 - y0)

    parts = _open(title)
    for tv in _ticks(ylo, yhi):
        y = sy(tv)
        parts.append(f'<line x1="{x0 - 4}" y1="{_fmt(y)}" x2="{x1}" '
                     f'y2="{_fmt(y)}" stroke="#dddddd"/>')
        parts.append(f'<text x="{x0 - 8}" y="{_fmt(y + 4)}" '
                     f'text-anchor="end">{tv:.2f}</text>')
    for tv in _ticks(xlo, xhi):
        x = sx(tv)
        parts.append(f'<line x1="{_fmt(x)}" y1="{y1}" x2="{_fmt(x)}" '
                     f'y2="{y1 + 4}" stroke="#333333"/>')
        parts.append(f'<text x="{_fmt(x)}" y="{y1 + 18}" '
                     f'text-anchor="middle">{tv:.2f}</text>')
    _axes(parts, x0, y0, x1, y1, xlabel, ylabel)

    for i, (label, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{_fmt(sx(float(x)))},{_fmt(sy(float(y)))}"
                       for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" '
                     f'stroke="{color}" stroke-width="2"/>')
        for x, y in zip(xs, ys):
            parts.append(f'<circle cx="{_fmt(sx(float(x)))}" '
                         f'cy="{_fmt(sy(float(y)))}" r="3" fill="{color}"/>')
        ly = y0 + 16 * i
        parts.append(f'<line x1="{x1 + 8}" y1="{ly}" x2="{x1 + 28}" '
                     f'y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{x1 + 34}" y="{ly + 4}">{_esc(label)}</text>')
    parts.append("</svg>")
    _write(path, parts)


def bar_chart(path, groups, series, title: str, ylabel: str):
    """Grouped bars; `groups` labels the x slots, `series` is a list of
    (label, values) with one value per group."""
    if not groups or not series:
        raise ValueError("need groups and at least one series")
    for label, values in series:
        if len(values) != len(groups):
            raise ValueError(f"series {label!r} has {len(values)} values "
                             f"for {len(groups)} groups")
    x0, y0 = MARGIN["left"], MARGIN["top"]
    x1, y1 = WIDTH - MARGIN["right"], HEIGHT - MARGIN["bottom"]
    top = max(max(v) for _, v in series)
    if top <= 0:
        top = 1.0
    top *= 1.1

    def sy(v):
        return y1 - v / top * (y1 - y0)

    parts = _open(title)
    for tv in _ticks(0.0, top):
        y = sy(tv)
        parts.append(f'<line x1="{x0 - 4}" y1="{_fmt(y)}" x2="{x1}" '
                     f'y2="{_fmt(y)}" stroke="#dddddd"/>')
        parts.append(f'<text x="{x0 - 8}" y="{_fmt(y + 4)}" '
                     f'text-anchor="end">{tv:.1f}</text>')
    _axes(parts, x0, y0, x1, y1, "", ylabel)

    slot = (x1 - x0) / len(groups)
    bar = slot * 0.8 / len(series)
    for gi, gname in enumerate(groups):
        gx = x0 + slot * (gi + 0.1)
        for si, (label, values) in enumerate(series):
            color = PALETTE[si % len(PALETTE)]
            h = y1 - sy(values[gi])
            bx = gx + bar * si
            parts.append(f'<rect x="{_fmt(bx)}" y="{_fmt(y1 - h)}" '
                         f'width="{_fmt(bar)}" height="{_fmt(h)}" '
                         f'fill="{color}"/>')
            parts.append(f'<text x="{_fmt(bx + bar / 2)}" '
                         f'y="{_fmt(y1 - h - 4)}" text-anchor="middle" '
                         f'font-size="10">{values[gi]:.1f}</text>')
        parts.append(f'<text x="{_fmt(gx + slot * 0.4)}" y="{y1 + 18}" '
                     f'text-anchor="middle">{_esc(gname)}</text>')
    for si, (label, _) in enumerate(series):
        color = PALETTE[si % len(PALETTE)]
        ly = y0 + 16 * si
        parts.append(f'<rect x="{x1 + 8}" y="{ly - 8}" width="12" '
                     f'height="12" fill="{color}"/>')
        parts.append(f'<text x="{x1 + 26}" y="{ly + 2}">{_esc(label)}</text>')
    parts.append("</svg>")
    _write(path, parts)


def heatmap(path, grid, title: str, status=None, scale: float | None = None):
    """Color grid, rows bottom-up on the y axis, columns on the x axis.

    `grid` is (rows, cols) nonnegative; `status` is an optional per-column
    0/1 strip drawn underneath. `scale` fixes the color normalization so
    several heatmaps can share it; the default is the grid maximum, and a
    flat zero grid renders as a uniform field of the ramp's zero color.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 2 or grid.size == 0:
        raise ValueError("grid must be a nonempty 2-D array")
    rows, cols = grid.shape
    if status is not None and len(status) != cols:
        raise ValueError("status strip length must match grid columns")
    if scale is None:
        scale = float(grid.max())
    norm = grid / scale if scale > 0 else np.zeros_like(grid)

    x0, y0 = MARGIN["left"], MARGIN["top"]
    x1 = WIDTH - 24
    strip = 14 if status is not None else 0
    y1 = HEIGHT - MARGIN["bottom"] - strip
    cw = (x1 - x0) / cols
    ch = (y1 - y0) / rows

    parts = _open(title)
    for r in range(rows):
        # row 0 is the lowest angle, drawn at the bottom
        y = y1 - (r + 1) * ch
        for c in range(cols):
            parts.append(f'<rect x="{_fmt(x0 + c * cw)}" y="{_fmt(y)}" '
                         f'width="{_fmt(cw + 0.5)}" height="{_fmt(ch + 0.5)}" '
                         f'fill="{ramp(norm[r, c])}"/>')
    if status is not None:
        sy = y1 + 4
        for c, flag in enumerate(status):
            color = STATUS_BLOCKED if flag else STATUS_CLEAR
            parts.append(f'<rect x="{_fmt(x0 + c * cw)}" y="{sy}" '
                         f'width="{_fmt(cw + 0.5)}" height="10" '
                         f'fill="{color}"/>')
        parts.append(f'<text x="{x0 - 8}" y="{sy + 9}" text-anchor="end" '
                     'font-size="10">link</text>')
    _axes(parts, x0, y0, x1, y1 + strip, "scan index", "angle")
    parts.append("</svg>")
    _write(path, parts)


def _write(path, parts: list[str]):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts))
        fh.write("\n")
