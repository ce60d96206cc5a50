"""Sliding-window supervision: cut labeled scan sequences into
observation windows and future-blockage labels, normalize, and split
into leak-free train/test sets at sequence granularity."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .preproc import BinnedScan
from .scene import Scan, ScanSequence

# Distance normalizer: the quantization lattice spans 500 * 0.034 m.
LATTICE_SPAN_M = 17.0

VARIANT_WIDTHS = {"raw-460": 460, "scr-216": 216}


@dataclass
class WindowConfig:
    t_ob: int = 16          # observed instances per window
    t_p: int = 10           # future instances covered by the label
    stride: int = 1
    variant: str = "scr-216"

    def __post_init__(self):
        if self.t_ob < 1 or not (1 <= self.t_p <= 10) or self.stride < 1:
            raise ValueError("require t_ob >= 1, 1 <= t_p <= 10, stride >= 1")
        if self.variant not in VARIANT_WIDTHS:
            raise ValueError(f"unknown variant {self.variant!r}")


@dataclass
class ObservationWindow:
    """x: (t_ob, W, 2) float32, channels (angle/pi, distance/17); the
    array is a view into its trajectory's tensor, so windows are cheap."""

    x: np.ndarray
    label: int
    origin: tuple[int, int]         # (sequence id, anchor time index)


@dataclass
class Trajectory:
    """Maximal unblocked run plus (optionally) its first blockage run."""

    scans: list
    status: np.ndarray
    seq_id: int
    start: int                      # offset of scans[0] in the parent sequence

    def __len__(self) -> int:
        return len(self.scans)


@dataclass
class DevDataset:
    windows: list[ObservationWindow]
    split: tuple[list[int], list[int]]   # (train sequence ids, test sequence ids)
    digest: str

    def _side(self, ids) -> list[ObservationWindow]:
        wanted = set(ids)
        return [w for w in self.windows if w.origin[0] in wanted]

    def train_windows(self) -> list[ObservationWindow]:
        return self._side(self.split[0])

    def test_windows(self) -> list[ObservationWindow]:
        return self._side(self.split[1])


def label_window(status, t: int, t_p: int) -> int:
    """Future-horizon label: 0 iff no blockage occurs in (t, t + t_p]."""
    if t < 0 or t + t_p >= len(status):
        raise IndexError(f"anchor {t} with horizon {t_p} leaves status range")
    return int(np.any(np.asarray(status[t + 1:t + 1 + t_p]) != 0))


def extract_trajectories(seq: ScanSequence, t_ob: int = 16) -> list[Trajectory]:
    """Split a sequence at blockage-event boundaries.

    Each trajectory is a maximal unblocked run together with the
    blockage run that ends it (the event the label must foresee).
    Trajectories shorter than t_ob + 1 carry no usable window and are
    dropped. Leading blocked instances belong to no trajectory.
    """
    status = np.asarray(seq.link_status)
    seq_id = int(seq.metadata.get("sequence_id", 0))
    out: list[Trajectory] = []
    i, n = 0, len(status)
    while i < n:
        if status[i] != 0:
            i += 1
            continue
        start = i
        while i < n and status[i] == 0:
            i += 1
        while i < n and status[i] != 0:   # absorb the first blockage run
            i += 1
        if i - start >= t_ob + 1:
            out.append(Trajectory(scans=seq.scans[start:i], status=status[start:i],
                                  seq_id=seq_id, start=start))
    return out


def normalize(scans: list) -> np.ndarray:
    """Stack scans into a (T, W, 2) float32 tensor on unit scales.

    Angles map to [-1, 1] by 1/pi; distances map to [0, 1] by the 17 m
    lattice span. Accepts raw scans and binned scans alike; all scans
    must share one width.
    """
    rows = []
    for s in scans:
        rows.append(s.bins if isinstance(s, BinnedScan) else s.samples)
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"scan widths differ within a window: {sorted(widths)}")
    x = np.stack(rows, axis=0)
    return x / np.array([np.pi, LATTICE_SPAN_M], dtype=np.float32)


def build_windows(traj: Trajectory, cfg: WindowConfig,
                  preproc=None) -> list[ObservationWindow]:
    """Slide over a trajectory and emit every valid labeled window.

    `preproc` maps a raw scan to the model's input scan (None keeps the
    raw samples). Anchors step by cfg.stride from the earliest full
    observation; an anchor is valid when its whole observation span is
    unblocked and the label horizon stays inside the trajectory.
    """
    n = len(traj)
    if n < cfg.t_ob + cfg.t_p:
        return []
    processed = traj.scans if preproc is None else [preproc(s) for s in traj.scans]
    tensor = normalize(processed)
    width = VARIANT_WIDTHS[cfg.variant]
    if tensor.shape[1] != width:
        raise ValueError(f"variant {cfg.variant} expects width {width}, "
                         f"got {tensor.shape[1]}")
    windows = []
    for t in range(cfg.t_ob - 1, n - cfg.t_p, cfg.stride):
        if np.any(traj.status[t - cfg.t_ob + 1:t + 1] != 0):
            continue
        windows.append(ObservationWindow(
            x=tensor[t - cfg.t_ob + 1:t + 1],
            label=label_window(traj.status, t, cfg.t_p),
            origin=(traj.seq_id, traj.start + t)))
    return windows


def dataset_digest(cfg: WindowConfig, extra: dict | None = None) -> str:
    blob = json.dumps([cfg.t_ob, cfg.t_p, cfg.stride, cfg.variant, extra or {}],
                      sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def split_dataset(windows: list[ObservationWindow], test_fraction: float,
                  seed: int, digest: str = "") -> DevDataset:
    """Deterministic sequence-level split; no source sequence leaks."""
    if not (0 < test_fraction < 1):
        raise ValueError("test_fraction must be in (0, 1)")
    ids = sorted({w.origin[0] for w in windows})
    n_test = round(len(ids) * test_fraction)
    if n_test == 0 or n_test == len(ids):
        raise ValueError(f"{len(ids)} source sequences cannot support "
                         f"a nonempty {test_fraction} split")
    perm = np.random.default_rng(seed).permutation(len(ids))
    test_ids = sorted(ids[i] for i in perm[:n_test])
    train_ids = sorted(ids[i] for i in perm[n_test:])
    return DevDataset(windows=windows, split=(train_ids, test_ids), digest=digest)
