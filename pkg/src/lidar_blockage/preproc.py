"""Field-of-view filtering and static-cluster removal.

Moving objects are isolated by erasing everything a static world keeps
producing: scans are angle-sorted, quantized onto a (angle bin,
distance level) lattice, and any entry whose key appears in a
dictionary built from mover-free scans is zeroed out.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .scene import Scan


@dataclass
class FovConfig:
    """Closed angular interval kept by the filter."""

    phi1: float = -np.pi / 6
    phi2: float = np.pi

    def __post_init__(self):
        if not (-np.pi < self.phi1 < self.phi2 <= np.pi):
            raise ValueError("require -pi < phi1 < phi2 <= pi")


@dataclass
class QuantConfig:
    """Lattice resolution: Q angle bins, Qd distance levels."""

    q_bins: int = 216
    qd_levels: int = 500
    distance_step: float = 0.034    # m; Qd * step spans 17 m

    def __post_init__(self):
        if self.q_bins < 1 or self.qd_levels < 1 or self.distance_step <= 0:
            raise ValueError("q_bins, qd_levels >= 1 and distance_step > 0")


def quant_digest(fov: FovConfig, quant: QuantConfig) -> str:
    """Digest binding the full lattice geometry, bin edges included."""
    blob = json.dumps([fov.phi1, fov.phi2, quant.q_bins, quant.qd_levels,
                       quant.distance_step])
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


@dataclass
class BinnedScan:
    """Fixed-width scan: one (angle, distance) entry per angle bin.

    `levels` holds the integer distance level per bin (0 for empty or
    erased bins) once quantize_distance has run, else None. Keeping the
    integers around makes re-quantization and erasure exact; distances
    are the redundant float view level * distance_step.
    """

    time_index: int
    bins: np.ndarray                 # (Q, 2) float32
    quant: str                       # quant_digest of the producing configs
    levels: np.ndarray | None = None  # (Q,) int32


@dataclass
class StaticDictionary:
    """Set of (angle_bin, distance_level) keys regarded as clutter."""

    keys: set[tuple[int, int]]
    quant: str
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self._packed = np.sort(np.fromiter(
            (b << 16 | lv for b, lv in self.keys), dtype=np.int64,
            count=len(self.keys)))

    def contains(self, bins: np.ndarray, levels: np.ndarray) -> np.ndarray:
        """Vectorized membership for parallel (bin, level) arrays."""
        packed = (bins.astype(np.int64) << 16) | levels.astype(np.int64)
        idx = np.searchsorted(self._packed, packed)
        idx = np.minimum(idx, max(len(self._packed) - 1, 0))
        if len(self._packed) == 0:
            return np.zeros(len(packed), dtype=bool)
        return self._packed[idx] == packed


def fov_filter(scan: Scan, fov: FovConfig) -> Scan:
    """Keep samples with angle in [phi1, phi2], bounds included.

    Comparison happens at the scan's float32 precision so that a sample
    sitting exactly on a bound survives the filter.
    """
    lo = np.float32(fov.phi1)
    hi = np.float32(fov.phi2)
    keep = (scan.samples[:, 0] >= lo) & (scan.samples[:, 0] <= hi)
    return Scan(time_index=scan.time_index, samples=scan.samples[keep])


def sort_scan(scan: Scan) -> Scan:
    """Angle-sort the returns, then append the zero-distance samples.

    Stable throughout, so equal angles and the zero block keep their
    original relative order; the output is a permutation of the input.
    """
    dist = scan.samples[:, 1]
    nonzero = scan.samples[dist != 0.0]
    zero = scan.samples[dist == 0.0]
    order = np.argsort(nonzero[:, 0], kind="stable")
    return Scan(time_index=scan.time_index,
                samples=np.concatenate([nonzero[order], zero], axis=0))


def quantize_angles(scan: Scan, fov: FovConfig, quant: QuantConfig) -> BinnedScan:
    """Collapse an angle-sorted scan to one sample per angle bin.

    Each bin keeps the sample at the median index of its run (lower
    median on even counts); zero-distance samples contribute nothing;
    empty bins read (bin center, 0).
    """
    q = quant.q_bins
    dphi = (fov.phi2 - fov.phi1) / q
    bins = np.zeros((q, 2), dtype=np.float32)
    bins[:, 0] = (fov.phi1 + (np.arange(q, dtype=np.float64) + 0.5) * dphi
                  ).astype(np.float32)

    samples = scan.samples[scan.samples[:, 1] != 0.0]
    if len(samples):
        idx = np.floor((samples[:, 0].astype(np.float64) - fov.phi1) / dphi)
        idx = np.clip(idx, 0, q - 1).astype(np.int64)
        occupied, starts, counts = np.unique(idx, return_index=True,
                                             return_counts=True)
        median = starts + (counts - 1) // 2
        bins[occupied] = samples[median]
    return BinnedScan(time_index=scan.time_index, bins=bins,
                      quant=quant_digest(fov, quant))


def quantize_distance(scan: BinnedScan, quant: QuantConfig) -> BinnedScan:
    """Snap distances to level * distance_step, levels in [0, Qd-1].

    Already-quantized scans (levels present) pass through unchanged,
    which makes the operation idempotent despite float rounding.
    """
    if scan.levels is not None:
        return scan
    dist = scan.bins[:, 1].astype(np.float64)
    levels = np.minimum(np.floor(dist / quant.distance_step),
                        quant.qd_levels - 1).astype(np.int32)
    out = scan.bins.copy()
    out[:, 1] = (levels.astype(np.float64) * quant.distance_step
                 ).astype(np.float32)
    return BinnedScan(time_index=scan.time_index, bins=out, quant=scan.quant,
                      levels=levels)


def build_dictionary(clean_scans: list[BinnedScan], n_d: int = 5000) -> StaticDictionary:
    """Collect the keys of every nonzero entry in the first n_d scans.

    Callers certify the scans are free of moving objects; the simulator
    provides such an epoch by scheduling no blockers.
    """
    if len(clean_scans) < n_d:
        raise ValueError(f"need at least {n_d} mover-free scans, got {len(clean_scans)}")
    keys: set[tuple[int, int]] = set()
    digest = clean_scans[0].quant
    for scan in clean_scans[:n_d]:
        if scan.levels is None:
            raise ValueError("dictionary scans must be distance-quantized")
        if scan.quant != digest:
            raise ValueError("dictionary scans mix quantization lattices")
        nz = np.nonzero(scan.bins[:, 1])[0]
        keys.update(zip(nz.tolist(), scan.levels[nz].tolist()))
    return StaticDictionary(keys=keys, quant=digest,
                            provenance={"n_d": n_d, "source_digest": digest})


def remove_static(scan: BinnedScan, dictionary: StaticDictionary) -> BinnedScan:
    """Zero the distance of every entry whose key is in the dictionary.

    Angles stay untouched; entries off the dictionary are returned
    bitwise unchanged. Idempotent: erased entries have level 0 and the
    dictionary holds no key a second pass could match on them.
    """
    if scan.levels is None:
        raise ValueError("remove_static requires a distance-quantized scan")
    if scan.quant != dictionary.quant:
        raise ValueError("quantization digest mismatch between scan and dictionary")
    nz = np.nonzero(scan.bins[:, 1])[0]
    hit = dictionary.contains(nz, scan.levels[nz])
    bins = scan.bins.copy()
    levels = scan.levels.copy()
    erased = nz[hit]
    bins[erased, 1] = 0.0
    levels[erased] = 0
    return BinnedScan(time_index=scan.time_index, bins=bins, quant=scan.quant,
                      levels=levels)


def scr_pipeline(scan: Scan, fov: FovConfig, quant: QuantConfig,
                 dictionary: StaticDictionary | None) -> BinnedScan:
    """Filter, sort, quantize, erase: raw scan in, Q-bin scan out.

    Passing dictionary=None skips the erasure step; that is how the
    scans feeding build_dictionary are produced.
    """
    binned = quantize_distance(
        quantize_angles(sort_scan(fov_filter(scan, fov)), fov, quant), quant)
    if dictionary is None:
        return binned
    return remove_static(binned, dictionary)
