"""Brute-force reference implementations used to check the package.

Everything here trades speed for obviousness: plain loops, dicts and
sets, no vectorization. These stay frozen; the package must match them,
not the other way around.
"""

from __future__ import annotations

import math

import numpy as np


def scr_oracle(samples: np.ndarray, phi1: float, phi2: float, q_bins: int,
               qd_levels: int, step: float, keys: set[tuple[int, int]]):
    """Set-membership route through FoV filter, sort, quantize, erase.

    `samples` is the raw (P, 2) float32 scan. Returns (bins, levels):
    bins (Q, 2) float32 and levels (Q,) int32, matching the package's
    BinnedScan layout entry for entry.
    """
    f1 = np.float32(phi1)
    f2 = np.float32(phi2)
    kept = [(float(a), float(d)) for a, d in samples if f1 <= a <= f2]

    nonzero = sorted([s for s in kept if s[1] != 0.0], key=lambda s: s[0])

    dphi = (phi2 - phi1) / q_bins
    per_bin: dict[int, list[tuple[float, float]]] = {}
    for ang, dist in nonzero:
        b = math.floor((ang - phi1) / dphi)
        b = min(max(b, 0), q_bins - 1)
        per_bin.setdefault(b, []).append((ang, dist))

    bins = np.zeros((q_bins, 2), dtype=np.float32)
    levels = np.zeros(q_bins, dtype=np.int32)
    for b in range(q_bins):
        if b not in per_bin:
            bins[b, 0] = np.float32(phi1 + (b + 0.5) * dphi)
            continue
        run = per_bin[b]
        ang, dist = run[(len(run) - 1) // 2]
        level = min(math.floor(dist / step), qd_levels - 1)
        bins[b, 0] = np.float32(ang)
        if (b, level) not in keys:
            bins[b, 1] = np.float32(level * step)
            levels[b] = level
    return bins, levels


def dictionary_oracle(list_of_bins, list_of_levels) -> set[tuple[int, int]]:
    """Keys of every nonzero entry across the given binned scans."""
    keys = set()
    for bins, levels in zip(list_of_bins, list_of_levels):
        for b in range(len(bins)):
            if bins[b, 1] != 0.0:
                keys.add((b, int(levels[b])))
    return keys


def future_blockage_oracle(status, t: int, horizon: int) -> int:
    """1 unless every status in (t, t+horizon] is 0."""
    for n in range(1, horizon + 1):
        if status[t + n] != 0:
            return 1
    return 0
