"""Planar geometry helpers: angle wrapping, ray casting against line
segments, and segment-vs-rectangle intersection tests."""

from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi


def wrap_angle(theta):
    """Wrap angle(s) to the half-open interval (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(theta, dtype=np.float64), TWO_PI)


def ray_cast(origin: np.ndarray, angles: np.ndarray, segments: np.ndarray) -> np.ndarray:
    """Distance from `origin` to the nearest segment along each ray.

    `segments` is an (S, 4) array of (x1, y1, x2, y2) rows. Returns an
    array of shape (len(angles),) holding the smallest positive ray
    parameter per ray, or +inf where nothing is hit.
    """
    angles = np.asarray(angles, dtype=np.float64)
    out = np.full(angles.shape, np.inf)
    if segments.size == 0:
        return out
    ox, oy = float(origin[0]), float(origin[1])
    dx = np.cos(angles)[:, None]
    dy = np.sin(angles)[:, None]
    x1 = segments[:, 0][None, :]
    y1 = segments[:, 1][None, :]
    ex = (segments[:, 2] - segments[:, 0])[None, :]
    ey = (segments[:, 3] - segments[:, 1])[None, :]
    denom = dx * ey - dy * ex
    # Rays parallel to a segment never register a hit on it.
    safe = np.where(np.abs(denom) < 1e-12, 1.0, denom)
    t = ((x1 - ox) * ey - (y1 - oy) * ex) / safe
    s = ((x1 - ox) * dy - (y1 - oy) * dx) / safe
    valid = (np.abs(denom) >= 1e-12) & (t > 1e-9) & (s >= 0.0) & (s <= 1.0)
    t = np.where(valid, t, np.inf)
    np.minimum.reduce(t, axis=1, out=out)
    return out


def rect_segments(center: np.ndarray, heading: float, half_length: float,
                  half_width: float) -> np.ndarray:
    """Four edges of an oriented rectangle as an (4, 4) segment array."""
    c, s = np.cos(heading), np.sin(heading)
    # Corner order: front-left, front-right, back-right, back-left.
    local = np.array([
        [half_length, half_width],
        [half_length, -half_width],
        [-half_length, -half_width],
        [-half_length, half_width],
    ])
    world = np.empty_like(local)
    world[:, 0] = center[0] + local[:, 0] * c - local[:, 1] * s
    world[:, 1] = center[1] + local[:, 0] * s + local[:, 1] * c
    nxt = np.roll(world, -1, axis=0)
    return np.concatenate([world, nxt], axis=1)


def segment_intersects_rect(p0, p1, center, heading: float,
                            half_length: float, half_width: float) -> bool:
    """True when the segment p0-p1 touches an oriented rectangle.

    The segment is clipped against the rectangle in its local frame
    (Liang-Barsky slab test), so containment of either endpoint also
    counts as an intersection.
    """
    c, s = np.cos(heading), np.sin(heading)
    # Rotate into the rectangle frame (inverse rotation by heading).
    ax = (p0[0] - center[0]) * c + (p0[1] - center[1]) * s
    ay = -(p0[0] - center[0]) * s + (p0[1] - center[1]) * c
    bx = (p1[0] - center[0]) * c + (p1[1] - center[1]) * s
    by = -(p1[0] - center[0]) * s + (p1[1] - center[1]) * c
    t0, t1 = 0.0, 1.0
    for pos, delta, half in ((ax, bx - ax, half_length), (ay, by - ay, half_width)):
        if abs(delta) < 1e-15:
            if abs(pos) > half:
                return False
            continue
        lo = (-half - pos) / delta
        hi = (half - pos) / delta
        if lo > hi:
            lo, hi = hi, lo
        t0 = max(t0, lo)
        t1 = min(t1, hi)
        if t0 > t1:
            return False
    return True
