"""Bit-exact file formats: raw and binned sequence CSVs, dictionary
CSV, window container, and parameter checkpoints, plus a CSV adapter
for external sensor dumps. Layouts are documented in docs/formats.md.

Floats are written with 9 significant digits, enough to reproduce any
float32 exactly, so write/read round trips are identities and repeated
runs can be compared byte for byte.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import pandas as pd

from .dataset import DevDataset, ObservationWindow
from .geometry import wrap_angle
from .preproc import BinnedScan, StaticDictionary
from .scene import Scan, ScanSequence

SEQ_MAGIC = "# scanseq v1"
BINNED_MAGIC = "# scrseq v1"
DICT_MAGIC = "# scrdict v1"
WINDS_MAGIC = b"WINDS01\n"
CKPT_MAGIC = b"NNCKPT01"


class FormatError(ValueError):
    """File structure or header is not what the format promises."""


class RowCountError(FormatError):
    """Declared and actual row counts disagree."""


class RangeError(FormatError):
    """A value sits outside its documented range."""


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def _canon_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


# --- scan sequences -----------------------------------------------------

def write_sequence(seq: ScanSequence, path) -> None:
    """Write a `.scanseq.csv` file; see docs/formats.md for the layout."""
    p = len(seq.scans[0].samples) if seq.scans else 0
    meta = seq.metadata
    lines = [SEQ_MAGIC,
             f"# p={p}",
             f"# sample_rate={_fmt(seq.sample_rate)}",
             f"# max_range={_fmt(float(meta.get('max_range', 16.0)))}",
             f"# num_scans={len(seq.scans)}",
             f"# seed={int(meta.get('seed', 0))}",
             f"# config_digest={meta.get('config_digest', '')}"]
    if "sequence_id" in meta:
        lines.append(f"# sequence_id={int(meta['sequence_id'])}")
    lines.append("time_index,sample_index,angle,distance,link_status")
    for scan, status in zip(seq.scans, seq.link_status):
        t = scan.time_index
        s = int(status)
        for i in range(p):
            a, d = scan.samples[i]
            lines.append(f"{t},{i},{_fmt(a)},{_fmt(d)},{s}")
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_header(text_lines, magic: str) -> dict:
    if not text_lines or text_lines[0].strip() != magic:
        raise FormatError(f"missing {magic!r} header line")
    header = {}
    for line in text_lines[1:]:
        if not line.startswith("#"):
            break
        key, _, value = line[1:].strip().partition("=")
        header[key.strip()] = value.strip()
    return header


def read_sequence(path) -> ScanSequence:
    """Read and validate a `.scanseq.csv` file."""
    path = Path(path)
    with path.open() as fh:
        head = [fh.readline() for _ in range(16)]
    header = _parse_header(head, SEQ_MAGIC)
    try:
        p = int(header["p"])
        num_scans = int(header["num_scans"])
        sample_rate = float(header["sample_rate"])
        max_range = float(header["max_range"])
        seed = int(header["seed"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"malformed scanseq header in {path.name}: {exc}") from exc
    if num_scans > 0 and p < 1:
        raise FormatError(f"{path.name}: p={p} cannot carry {num_scans} scans")

    frame = pd.read_csv(path, comment="#")
    expected_cols = ["time_index", "sample_index", "angle", "distance", "link_status"]
    if list(frame.columns) != expected_cols:
        raise FormatError(f"expected columns {expected_cols}, got {list(frame.columns)}")

    times = frame["time_index"].to_numpy()
    if len(times) and (times.min() < 0 or times.max() >= num_scans):
        raise FormatError(f"{path.name}: time_index outside [0, {num_scans})")
    if num_scans:
        counts = np.bincount(times, minlength=num_scans)
        short = np.nonzero(counts != p)[0]
        if len(short):
            raise RowCountError(f"{path.name}: scan t={short[0]} has "
                                f"{counts[short[0]]} samples, expected {p}")
    if len(frame) != num_scans * p:
        raise RowCountError(f"{path.name}: header promises {num_scans * p} rows, "
                            f"found {len(frame)}")

    dist64 = frame["distance"].to_numpy(dtype=np.float64)
    if len(dist64) and (dist64.min() < 0.0 or dist64.max() > max_range):
        bad = frame["time_index"][(dist64 < 0.0) | (dist64 > max_range)].iloc[0]
        raise RangeError(f"{path.name}: distance outside [0, {max_range}] at t={bad}")

    angles = frame["angle"].to_numpy(dtype=np.float64).astype(np.float32)
    dists = dist64.astype(np.float32)
    status_col = frame["link_status"].to_numpy()
    scans = []
    link = np.zeros(num_scans, dtype=np.uint8)
    for t in range(num_scans):
        rows = slice(t * p, (t + 1) * p)
        if not np.all(times[rows] == t):
            raise FormatError(f"{path.name}: rows of t={t} are not contiguous")
        scans.append(Scan(time_index=t,
                          samples=np.stack([angles[rows], dists[rows]], axis=1)))
        link[t] = 1 if status_col[t * p] else 0
    metadata = {"seed": seed, "config_digest": header.get("config_digest", ""),
                "max_range": max_range}
    if "sequence_id" in header:
        metadata["sequence_id"] = int(header["sequence_id"])
    return ScanSequence(scans=scans, link_status=link, sample_rate=sample_rate,
                        metadata=metadata)


def read_external_csv(path, mapping: dict) -> ScanSequence:
    """Adapt a foreign per-sample CSV into a validated ScanSequence.

    `mapping` names the source columns: required keys "time_index",
    "angle", "distance", "link_status"; optional "degrees" (bool,
    convert angles), "max_range" (clamp target, default 16.0) and
    "sample_rate" (default 10.0). Angles are wrapped to (-pi, pi],
    distances clamped to [0, max_range]; anything else is rejected.
    """
    required = ["time_index", "angle", "distance", "link_status"]
    missing = [k for k in required if k not in mapping]
    if missing:
        raise FormatError(f"mapping lacks column names for {missing}")
    frame = pd.read_csv(path)
    for key in required:
        col = mapping[key]
        if col not in frame.columns:
            raise FormatError(f"{Path(path).name} has no column {col!r}")
        if not np.issubdtype(frame[col].dtype, np.number):
            raise FormatError(f"column {col!r} contains non-numeric cells")

    max_range = float(mapping.get("max_range", 16.0))
    angles = frame[mapping["angle"]].to_numpy(dtype=np.float64)
    if mapping.get("degrees", False):
        angles = np.deg2rad(angles)
    angles = wrap_angle(angles)
    dists = np.clip(frame[mapping["distance"]].to_numpy(dtype=np.float64),
                    0.0, max_range)
    times = frame[mapping["time_index"]].to_numpy()
    status_col = frame[mapping["link_status"]].to_numpy()

    uniq = np.unique(times)
    counts = {int(t): int(np.sum(times == t)) for t in uniq}
    widths = set(counts.values())
    if len(widths) > 1:
        raise RowCountError(f"unequal samples per time index: {sorted(widths)}")
    scans = []
    link = np.zeros(len(uniq), dtype=np.uint8)
    for new_t, t in enumerate(uniq):
        rows = times == t
        samples = np.stack([angles[rows], dists[rows]], axis=1).astype(np.float32)
        scans.append(Scan(time_index=new_t, samples=samples))
        link[new_t] = 1 if np.any(status_col[rows] != 0) else 0
    return ScanSequence(scans=scans, link_status=link,
                        sample_rate=float(mapping.get("sample_rate", 10.0)),
                        metadata={"seed": 0, "config_digest": "external",
                                  "max_range": max_range})


# --- binned scan sequences ----------------------------------------------

def write_binned_sequence(seq: ScanSequence, path) -> None:
    """Write a `.scrseq.csv` file of quantized scans.

    Every scan occupies exactly q_bins rows, empty bins included, and
    the integer distance level rides along so the quantization lattice
    survives the round trip without float re-derivation.
    """
    scans = seq.scans
    if not scans:
        raise FormatError("refusing to write a binned sequence with no scans")
    q = len(scans[0].bins)
    meta = seq.metadata
    lines = [BINNED_MAGIC,
             f"# q_bins={q}",
             f"# quant_digest={scans[0].quant}",
             f"# sample_rate={_fmt(seq.sample_rate)}",
             f"# num_scans={len(scans)}",
             f"# seed={int(meta.get('seed', 0))}",
             f"# config_digest={meta.get('config_digest', '')}"]
    if "sequence_id" in meta:
        lines.append(f"# sequence_id={int(meta['sequence_id'])}")
    lines.append("time_index,bin_index,angle,distance,level,link_status")
    for scan, status in zip(scans, seq.link_status):
        if scan.levels is None:
            raise FormatError("binned sequence files need distance levels")
        t, s = scan.time_index, int(status)
        for b in range(q):
            a, d = scan.bins[b]
            lines.append(f"{t},{b},{_fmt(a)},{_fmt(d)},{int(scan.levels[b])},{s}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_binned_sequence(path) -> ScanSequence:
    """Read and validate a `.scrseq.csv` file."""
    path = Path(path)
    with path.open() as fh:
        head = [fh.readline() for _ in range(16)]
    header = _parse_header(head, BINNED_MAGIC)
    try:
        q = int(header["q_bins"])
        num_scans = int(header["num_scans"])
        sample_rate = float(header["sample_rate"])
        quant = header["quant_digest"]
    except (KeyError, ValueError) as exc:
        raise FormatError(f"malformed scrseq header in {path.name}: {exc}") from exc

    frame = pd.read_csv(path, comment="#")
    expected_cols = ["time_index", "bin_index", "angle", "distance",
                     "level", "link_status"]
    if list(frame.columns) != expected_cols:
        raise FormatError(f"expected columns {expected_cols}, got {list(frame.columns)}")
    times = frame["time_index"].to_numpy()
    if len(times) and (times.min() < 0 or times.max() >= num_scans):
        raise FormatError(f"{path.name}: time_index outside [0, {num_scans})")
    if num_scans:
        counts = np.bincount(times, minlength=num_scans)
        short = np.nonzero(counts != q)[0]
        if len(short):
            raise RowCountError(f"{path.name}: scan t={short[0]} has "
                                f"{counts[short[0]]} bins, expected {q}")
    if len(frame) != num_scans * q:
        raise RowCountError(f"{path.name}: header promises {num_scans * q} rows, "
                            f"found {len(frame)}")
    levels = frame["level"].to_numpy()
    dists = frame["distance"].to_numpy(dtype=np.float64)
    if len(frame) and (levels.min() < 0 or dists.min() < 0.0):
        raise RangeError(f"{path.name}: negative level or distance")

    angles = frame["angle"].to_numpy(dtype=np.float64).astype(np.float32)
    status_col = frame["link_status"].to_numpy()
    bin_idx = frame["bin_index"].to_numpy()
    scans = []
    link = np.zeros(num_scans, dtype=np.uint8)
    for t in range(num_scans):
        rows = slice(t * q, (t + 1) * q)
        if not np.all(times[rows] == t) or not np.array_equal(
                bin_idx[rows], np.arange(q)):
            raise FormatError(f"{path.name}: rows of t={t} are not "
                              "contiguous ascending bins")
        bins = np.stack([angles[rows],
                         dists[rows].astype(np.float32)], axis=1)
        scans.append(BinnedScan(time_index=t, bins=bins, quant=quant,
                                levels=levels[rows].astype(np.int32)))
        link[t] = 1 if status_col[t * q] else 0
    metadata = {"seed": int(header.get("seed", 0)),
                "config_digest": header.get("config_digest", "")}
    if "sequence_id" in header:
        metadata["sequence_id"] = int(header["sequence_id"])
    return ScanSequence(scans=scans, link_status=link, sample_rate=sample_rate,
                        metadata=metadata)


# --- static dictionaries ------------------------------------------------

def write_dictionary(d: StaticDictionary, path, q_bins: int = 216,
                     qd_levels: int = 500) -> None:
    """Write a `.scrdict.csv` file with sorted (bin, level) keys."""
    lines = [DICT_MAGIC,
             f"# quant={d.quant}",
             f"# q_bins={q_bins}",
             f"# qd_levels={qd_levels}",
             f"# n_d={int(d.provenance.get('n_d', 0))}",
             f"# source_digest={d.provenance.get('source_digest', '')}",
             "angle_bin,distance_level"]
    for b, lv in sorted(d.keys):
        lines.append(f"{b},{lv}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_dictionary(path) -> StaticDictionary:
    path = Path(path)
    with path.open() as fh:
        head = [fh.readline() for _ in range(8)]
    header = _parse_header(head, DICT_MAGIC)
    try:
        q_bins = int(header["q_bins"])
        qd_levels = int(header["qd_levels"])
        quant = header["quant"]
    except (KeyError, ValueError) as exc:
        raise FormatError(f"malformed scrdict header in {path.name}: {exc}") from exc
    frame = pd.read_csv(path, comment="#")
    if list(frame.columns) != ["angle_bin", "distance_level"]:
        raise FormatError(f"{path.name}: expected angle_bin,distance_level columns")
    bins = frame["angle_bin"].to_numpy()
    levels = frame["distance_level"].to_numpy()
    if len(bins) and (bins.min() < 0 or bins.max() >= q_bins
                      or levels.min() < 0 or levels.max() >= qd_levels):
        raise RangeError(f"{path.name}: key outside [0,{q_bins})x[0,{qd_levels})")
    keys = set(zip(bins.tolist(), levels.tolist()))
    if len(keys) != len(frame):
        raise FormatError(f"{path.name}: duplicate dictionary keys")
    return StaticDictionary(keys=keys, quant=quant,
                            provenance={"n_d": int(header.get("n_d", 0)),
                                        "source_digest": header.get("source_digest", "")})


# --- window datasets ----------------------------------------------------

def _window_groups(windows: list[ObservationWindow]):
    """Map windows onto their backing tensors, first-seen group order.

    Returns (bases, rows): the distinct storage arrays, and one
    (group_idx, local_anchor) pair per window in list order.
    """
    index: dict[int, int] = {}
    bases: list[np.ndarray] = []
    rows: list[tuple[int, int]] = []
    for w in windows:
        base = w.x.base if w.x.base is not None else w.x
        if not (isinstance(base, np.ndarray) and base.dtype == np.float32
                and base.flags.c_contiguous):
            raise FormatError("window tensors must view C-contiguous float32 storage")
        key = id(base)
        if key not in index:
            index[key] = len(bases)
            bases.append(base)
        offset = w.x.__array_interface__["data"][0] - base.__array_interface__["data"][0]
        rows.append((index[key], int(offset // base.strides[0] + len(w.x) - 1)))
    return bases, rows


def write_dataset(ds: DevDataset, path, t_ob: int, t_p: int, stride: int,
                  variant: str) -> None:
    """Write a `.winds.bin` container; see docs/formats.md.

    Window tensors are views into shared per-trajectory storage, which
    is what gets serialized: each distinct backing tensor once, then a
    compact integer window table.
    """
    bases, rows = _window_groups(ds.windows)
    width = int(ds.windows[0].x.shape[1]) if ds.windows else 0
    header = {"format": "winds", "version": 1, "digest": ds.digest,
              "t_ob": t_ob, "t_p": t_p, "stride": stride, "variant": variant,
              "width": width, "n_windows": len(ds.windows),
              "split": [list(map(int, ds.split[0])), list(map(int, ds.split[1]))],
              "groups": [int(len(b)) for b in bases]}
    blob = _canon_json(header)
    table = np.empty((len(ds.windows), 5), dtype=np.int32)
    for i, (w, (g_idx, local)) in enumerate(zip(ds.windows, rows)):
        table[i] = (g_idx, local, int(w.label), int(w.origin[0]), int(w.origin[1]))
    with Path(path).open("wb") as fh:
        fh.write(WINDS_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for base in bases:
            fh.write(np.ascontiguousarray(base, dtype="<f4").tobytes())
        fh.write(table.astype("<i4").tobytes())


def read_dataset(path) -> tuple[DevDataset, dict]:
    """Read a `.winds.bin` container back into views over shared storage."""
    raw = Path(path).read_bytes()
    if raw[:8] != WINDS_MAGIC:
        raise FormatError("not a winds container (bad magic)")
    (hlen,) = struct.unpack_from("<I", raw, 8)
    try:
        header = json.loads(raw[12:12 + hlen])
    except json.JSONDecodeError as exc:
        raise FormatError(f"bad winds header: {exc}") from exc
    if header.get("format") != "winds" or header.get("version") != 1:
        raise FormatError("unsupported winds version")
    width = header["width"]
    t_ob = header["t_ob"]
    pos = 12 + hlen
    bases = []
    for rows in header["groups"]:
        n = rows * width * 2 * 4
        arr = np.frombuffer(raw, dtype="<f4", count=rows * width * 2, offset=pos)
        bases.append(arr.reshape(rows, width, 2).copy())
        pos += n
    n_windows = header["n_windows"]
    if pos + n_windows * 5 * 4 != len(raw):
        raise RowCountError("winds container has trailing or missing bytes")
    table = np.frombuffer(raw, dtype="<i4", count=n_windows * 5, offset=pos
                          ).reshape(n_windows, 5)
    windows = []
    for g_idx, local, label, sid, anchor in table:
        base = bases[g_idx]
        if not (t_ob - 1 <= local < len(base)):
            raise RangeError(f"window anchor {local} outside its group")
        windows.append(ObservationWindow(x=base[local - t_ob + 1:local + 1],
                                         label=int(label),
                                         origin=(int(sid), int(anchor))))
    ds = DevDataset(windows=windows,
                    split=(list(header["split"][0]), list(header["split"][1])),
                    digest=header["digest"])
    return ds, header


# --- checkpoints --------------------------------------------------------

def save_checkpoint(params: list[tuple[str, np.ndarray]], path,
                    meta: dict | None = None) -> None:
    """Write named parameter arrays to a `.ckpt` blob, order preserved."""
    header = {"format": "ckpt", "version": 1, "meta": meta or {},
              "params": [{"name": n, "shape": list(a.shape),
                          "dtype": str(a.dtype)} for n, a in params]}
    blob = _canon_json(header)
    with Path(path).open("wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, a in params:
            fh.write(np.ascontiguousarray(a).astype(a.dtype.newbyteorder("<")).tobytes())


def load_checkpoint(path) -> tuple[list[tuple[str, np.ndarray]], dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != CKPT_MAGIC:
        raise FormatError("not a checkpoint (bad magic)")
    (hlen,) = struct.unpack_from("<I", raw, 8)
    header = json.loads(raw[12:12 + hlen])
    if header.get("format") != "ckpt" or header.get("version") != 1:
        raise FormatError("unsupported checkpoint version")
    pos = 12 + hlen
    params = []
    for spec in header["params"]:
        dtype = np.dtype(spec["dtype"]).newbyteorder("<")
        count = int(np.prod(spec["shape"], dtype=np.int64)) if spec["shape"] else 1
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=pos)
        params.append((spec["name"],
                       arr.reshape(spec["shape"]).astype(spec["dtype"])))
        pos += arr.nbytes
    if pos != len(raw):
        raise RowCountError("checkpoint has trailing or missing bytes")
    return params, header["meta"]
