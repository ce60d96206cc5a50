"""Command-line pipeline driver.

Six subcommands chain into the full experiment:

    simulate    write raw .scanseq.csv files plus a manifest
    preprocess  build a static dictionary, or apply it to sequences
    dataset     slice sequences into a labeled window container
    train       fit one model on a window container
    eval        score a checkpoint on a container's test split
    report      merge eval rows into the accuracy/latency figures

Every stage is deterministic given the config document and seed, and
every artifact path is explicit, so reruns can be diffed byte for byte.
Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import traceback
from dataclasses import replace
from pathlib import Path

from . import analysis, scanio
from .config import PipelineConfig, load_config
from .dataset import build_windows, dataset_digest, extract_trajectories, \
    split_dataset
from .model import build_model, evaluate, param_count, train, \
    write_train_report
from .preproc import build_dictionary, quant_digest, scr_pipeline
from .scene import config_digest, simulate_sequence

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class UsageError(Exception):
    """Bad flags or flag values; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):            # argparse would exit(2)
        raise UsageError(message)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(path: Path, payload: dict) -> None:
    blob = json.dumps(payload, sort_keys=True, indent=1).encode()
    path.write_bytes(blob + b"\n")


def _sorted_inputs(directory, pattern: str) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"input directory {directory} does not exist")
    files = sorted(directory.glob(pattern))
    if not files:
        raise FileNotFoundError(f"no {pattern} files in {directory}")
    return files


def cmd_simulate(cfg: PipelineConfig, args) -> int:
    if args.sequences < 1:
        raise UsageError("sequences must be >= 1")
    if args.duration <= 0:
        raise UsageError("duration must be positive seconds")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(args.sequences):
        scene_cfg = replace(cfg.scene, seed=cfg.scene.seed + i)
        if args.static_only:
            scene_cfg = replace(scene_cfg, blocker_spawn_rate=0.0)
        seq = simulate_sequence(scene_cfg, args.duration)
        seq.metadata["sequence_id"] = i
        name = f"seq_{i:04d}.scanseq.csv"
        scanio.write_sequence(seq, out / name)
        entries.append({"file": name, "scans": len(seq),
                        "seed": scene_cfg.seed,
                        "sha256": _sha256(out / name)})
    _write_manifest(out / "manifest.json", {
        "kind": "simulate", "seed": cfg.scene.seed,
        "duration": args.duration, "static_only": bool(args.static_only),
        "config_digest": config_digest(cfg.scene), "sequences": entries})
    print(f"wrote {len(entries)} sequences to {out}")
    return EXIT_OK


def cmd_preprocess(cfg: PipelineConfig, args) -> int:
    if bool(args.build_dict) == bool(args.dict_path):
        raise UsageError("pass exactly one of --build-dict or --dict")
    files = _sorted_inputs(args.in_dir, "*.scanseq.csv")
    fov, quant = cfg.fov, cfg.quant

    if args.build_dict:
        clean = []
        for f in files:
            seq = scanio.read_sequence(f)
            clean.extend(scr_pipeline(s, fov, quant, None) for s in seq.scans)
            if len(clean) >= cfg.dictionary_scans:
                break
        d = build_dictionary(clean, n_d=cfg.dictionary_scans)
        scanio.write_dictionary(d, args.build_dict, q_bins=quant.q_bins,
                                qd_levels=quant.qd_levels)
        print(f"dictionary: {len(d.keys)} keys from "
              f"{cfg.dictionary_scans} scans -> {args.build_dict}")
        return EXIT_OK

    if not args.out:
        raise UsageError("--out is required when applying a dictionary")
    d = scanio.read_dictionary(args.dict_path)
    expect = quant_digest(fov, quant)
    if d.quant != expect:
        raise ValueError(
            f"dictionary lattice digest {d.quant} does not match the "
            f"configured quantization {expect}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for f in files:
        seq = scanio.read_sequence(f)
        binned = [scr_pipeline(s, fov, quant, d) for s in seq.scans]
        name = f.name.replace(".scanseq.csv", ".scrseq.csv")
        scanio.write_binned_sequence(replace(seq, scans=binned), out / name)
        entries.append({"file": name, "scans": len(binned),
                        "sha256": _sha256(out / name)})
    _write_manifest(out / "manifest.json", {
        "kind": "preprocess", "quant_digest": expect,
        "dictionary_keys": len(d.keys), "sequences": entries})
    print(f"processed {len(entries)} sequences into {out}")
    return EXIT_OK


def _resolved_window(cfg: PipelineConfig, args):
    wcfg = cfg.window
    if getattr(args, "t_p", None):
        wcfg = replace(wcfg, t_p=args.t_p)
    variant = getattr(args, "variant", None) or cfg.model.variant
    return replace(wcfg, variant=variant)


def cmd_dataset(cfg: PipelineConfig, args) -> int:
    wcfg = _resolved_window(cfg, args)
    if wcfg.variant == "scr-216":
        files = _sorted_inputs(args.in_dir, "*.scrseq.csv")
        reader = scanio.read_binned_sequence
    else:
        files = _sorted_inputs(args.in_dir, "*.scanseq.csv")
        reader = scanio.read_sequence
    windows = []
    for f in files:
        seq = reader(f)
        for traj in extract_trajectories(seq, t_ob=wcfg.t_ob):
            windows.extend(build_windows(traj, wcfg))
    if not windows:
        raise ValueError("no usable windows; sequences are too short or "
                         "blocked from the start")
    digest = dataset_digest(wcfg, extra={"seed": cfg.seed,
                                         "n_files": len(files)})
    ds = split_dataset(windows, cfg.test_fraction, cfg.seed, digest=digest)
    scanio.write_dataset(ds, args.out, t_ob=wcfg.t_ob, t_p=wcfg.t_p,
                         stride=wcfg.stride, variant=wcfg.variant)
    print(f"{len(windows)} windows ({wcfg.variant}, t_p={wcfg.t_p}) from "
          f"{len(files)} sequences; {len(ds.split[0])} train / "
          f"{len(ds.split[1])} test sequences -> {args.out}")
    return EXIT_OK


def cmd_train(cfg: PipelineConfig, args) -> int:
    ds, header = scanio.read_dataset(args.data)
    variant = args.variant or cfg.model.variant
    if header["variant"] != variant:
        raise ValueError(f"dataset {args.data} holds {header['variant']} "
                         f"windows but the run wants {variant}")
    mcfg = replace(cfg.model, variant=variant)
    if args.epochs:
        mcfg = replace(mcfg, epochs=args.epochs)
    model = build_model(mcfg)
    print(f"parameters: {param_count(model)}")
    report = train(model, ds)
    scanio.save_checkpoint(model.parameters(), args.out_model, meta={
        "variant": variant, "t_p": header["t_p"], "seed": mcfg.seed,
        "epochs": mcfg.epochs, "params_digest": report.params_digest,
        "dataset_digest": header["digest"]})
    if args.report:
        write_train_report(report, args.report)
    print(f"trained {mcfg.epochs} epochs in {report.wall_clock:.1f}s; "
          f"final test top-1 {report.epoch_top1[-1]:.4f} "
          f"(best {report.best_top1:.4f} at epoch {report.best_epoch}) "
          f"-> {args.out_model}")
    return EXIT_OK


def _load_into(model, params) -> None:
    have = dict(model.parameters())
    if [n for n, _ in params] != list(have):
        raise ValueError("checkpoint parameter names do not match the model")
    for name, arr in params:
        if arr.shape != have[name].shape:
            raise ValueError(f"checkpoint tensor {name} has shape "
                             f"{arr.shape}, model wants {have[name].shape}")
        have[name][:] = arr


def cmd_eval(cfg: PipelineConfig, args) -> int:
    ds, header = scanio.read_dataset(args.data)
    params, meta = scanio.load_checkpoint(args.model)
    variant = meta.get("variant", cfg.model.variant)
    if header["variant"] != variant:
        raise ValueError(f"dataset holds {header['variant']} windows but "
                         f"the checkpoint was trained as {variant}")
    model = build_model(replace(cfg.model, variant=variant))
    _load_into(model, params)
    test = ds.test_windows()
    if not test:
        raise ValueError(f"dataset {args.data} has an empty test split")
    res = evaluate(model, test)
    t_p = int(header["t_p"])
    curve = analysis.AccuracyCurve(rows=[analysis.CurveRow(
        variant=variant, t_p=t_p, seconds=t_p / cfg.scene.sample_rate,
        top1=res.top1, recall_clear=res.recall[0],
        recall_blocked=res.recall[1], n_test=res.n)])
    analysis.write_accuracy_curve(curve, args.out)
    print(f"{variant} t_p={t_p}: top-1 {res.top1:.4f} over {res.n} test "
          f"windows -> {args.out}")
    return EXIT_OK


def _sniff_sequence(path: Path):
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
    if first == scanio.SEQ_MAGIC:
        return scanio.read_sequence(path)
    if first == scanio.BINNED_MAGIC:
        return scanio.read_binned_sequence(path)
    raise scanio.FormatError(f"{path} is neither a scanseq nor a scrseq file")


def cmd_report(cfg: PipelineConfig, args) -> int:
    rows = []
    for cpath in args.curve:
        rows.extend(analysis.read_accuracy_curve(cpath).rows)
    for variant, t_p, top1 in cfg.report.baselines:
        rows.append(analysis.CurveRow(
            variant=variant, t_p=t_p, seconds=t_p / cfg.scene.sample_rate,
            top1=top1, recall_clear=float("nan"),
            recall_blocked=float("nan"), n_test=0))
    if not rows:
        raise ValueError("no curve rows; pass --curve files or configure "
                         "baselines")
    rows.sort(key=lambda r: (r.variant, r.t_p))
    curve = analysis.AccuracyCurve(rows=rows)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    analysis.write_accuracy_curve(curve, out / "accuracy_curve.csv")
    analysis.plot_accuracy_curve(curve, out / "curve.svg")
    lat = analysis.latency_report(curve, picks=cfg.report.picks)
    analysis.write_latency_report(lat, out / "latency.csv")
    analysis.plot_latency_report(lat, out / "latency.svg")
    used: set[str] = set()
    for spath in args.heatmap:
        seq = _sniff_sequence(Path(spath))
        stem = Path(spath).name.split(".")[0]
        # Raw and cleaned twins of one sequence share a stem; suffix repeats
        # so the second rendering cannot silently replace the first.
        name, k = f"heatmap_{stem}", 1
        while name in used:
            k += 1
            name = f"heatmap_{stem}_{k}"
        used.add(name)
        analysis.emit_heatmap(seq, out / f"{name}.svg")
    print(f"report ({len(rows)} curve rows, picks {list(cfg.report.picks)}) "
          f"-> {out}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="lidar-blockage",
                     description="Simulate 2D LiDAR scans of a street link, "
                                 "denoise them, and train a blockage "
                                 "predictor.")
    parser.add_argument("--config", metavar="TOML", default=None,
                        help="pipeline config document (default: built-ins)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate raw scan sequences")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--sequences", type=int, required=True,
                   help="number of sequences to generate")
    p.add_argument("--duration", type=float, required=True,
                   help="seconds of simulated time per sequence")
    p.add_argument("--static-only", action="store_true",
                   help="suppress all moving blockers (dictionary warm-up)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("preprocess", help="build or apply a static dictionary")
    p.add_argument("--in", dest="in_dir", required=True,
                   help="directory of .scanseq.csv files")
    p.add_argument("--build-dict", metavar="PATH",
                   help="collect a dictionary from the inputs, write it here")
    p.add_argument("--dict", dest="dict_path", metavar="PATH",
                   help="apply this dictionary to every input sequence")
    p.add_argument("--out", help="output directory for .scrseq.csv files")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("dataset", help="window sequences into a container")
    p.add_argument("--in", dest="in_dir", required=True,
                   help="directory of processed (or raw) sequences")
    p.add_argument("--out", required=True, help="output .winds.bin path")
    p.add_argument("--t-p", dest="t_p", type=int, default=None,
                   help="prediction horizon override (scans ahead)")
    p.add_argument("--variant", choices=["raw-460", "scr-216"], default=None,
                   help="input width override (default: [model] section)")
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("train", help="fit a model on a window container")
    p.add_argument("--data", required=True, help=".winds.bin container")
    p.add_argument("--out-model", required=True, help="checkpoint path")
    p.add_argument("--report", default=None, help="training-curve CSV path")
    p.add_argument("--epochs", type=int, default=None,
                   help="epoch count override")
    p.add_argument("--variant", choices=["raw-460", "scr-216"], default=None,
                   help="expected dataset variant (default: [model] section)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a test split")
    p.add_argument("--data", required=True, help=".winds.bin container")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--out", required=True, help="single-row curve CSV path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="merge eval rows into figures")
    p.add_argument("--curve", action="append", default=[],
                   help="curve CSV produced by eval (repeatable)")
    p.add_argument("--heatmap", action="append", default=[],
                   help="sequence file to render as a heatmap (repeatable)")
    p.add_argument("--out", required=True, help="report output directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config)
        return args.func(cfg, args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:
        traceback.print_exc()
        print("internal error; the traceback above is a bug report",
              file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
