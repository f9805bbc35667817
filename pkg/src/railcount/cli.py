"""Command-line entry point: simulate, track, evaluate, sweep, report.

Every subcommand writes a manifest next to its outputs recording the resolved
configuration, input paths, and seed, so runs can be reproduced from the
manifest alone. Config file keys can be overridden through environment
variables prefixed with ``RAILCOUNT_`` (upper-cased key name).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np

from . import __version__, io
from .association import AssociationConfig
from .counting import BandConfig, count_sequence
from .geometry import CameraIntrinsics
from .metrics import EvaluationError, counting_metrics, evaluate_sequence
from .motion_models import MotionModel, NoiseScales
from .simulator import NoiseConfig, SceneConfig, generate
from .tracker import FrameOutput, TrackEntry, TrackerConfig, TrackStatus, run_sequence

ENV_PREFIX = "RAILCOUNT_"

TABLE8_COLUMNS = [
    "MOTA", "MOTP", "IDF1", "IDP", "IDR", "IDSW", "Matches", "FP", "Misses",
    "FAF", "Precision", "Recall", "MT", "PT", "ML", "LC", "RC", "TC", "TV", "MAPE",
]

TABLE3_COLUMNS = ["Model", "MAE", "RMSE", "MAPE(%)", "ME"]

MODEL_ORDER = [MotionModel.CV8D, MotionModel.CA12D, MotionModel.PHYS3D]

# Paper-grid defaults for the band sweep.
SWEEP_STARTS = [0.05, 0.1, 0.15, 0.2, 0.3]
SWEEP_ENDS = [0.15, 0.2, 0.25, 0.3, 0.35, 0.4]


# -- config loading ----------------------------------------------------------

_SCENE_FLOAT_KEYS = {
    "x_min", "x_max", "y_min", "y_max", "z_min", "z_max",
    "head_height_mean", "head_height_std", "walk_std",
    "d0", "v0", "decel", "fps", "duration",
    "stop_band_min", "stop_band_max",
    "fx", "fy", "cx", "cy", "image_width", "image_height",
}
_SCENE_INT_KEYS = {"seed", "num_pedestrians"}
_SCENE_STR_KEYS = {"platform_side"}

_NOISE_FLOAT_KEYS = {
    "center_jitter", "height_jitter", "miss_rate", "occlusion_iou",
    "occlusion_miss_rate", "fp_rate", "embedding_noise",
}
_NOISE_INT_KEYS = {"embedding_dim"}

_TRACKER_INT_KEYS = {"n_init", "max_age", "cascade_depth", "gallery_size"}
_TRACKER_FLOAT_KEYS = {
    "min_confidence", "fps", "lambda", "appearance_gate", "depth_jump_max",
    "iou_fallback_threshold", "chi2_gate_cv8d", "chi2_gate_ca12d", "chi2_gate_phys3d",
} | {f.name for f in fields(NoiseScales)}
_TRACKER_BOOL_KEYS = {"use_appearance"}


def _apply_env(values: dict[str, str], keys) -> dict[str, str]:
    for key in keys:
        env = os.environ.get(ENV_PREFIX + key.upper())
        if env is not None:
            values[key] = env
    return values


def _coerce(values: dict[str, str], key: str, kind):
    try:
        if kind is bool:
            return values[key].strip().lower() in ("1", "true", "yes", "on")
        return kind(values[key])
    except ValueError:
        raise ValueError(f"config key {key!r}: cannot parse {values[key]!r}") from None


def load_scene_config(path, seed_override: int | None = None) -> SceneConfig:
    values = io.read_kv(path)
    known = _SCENE_FLOAT_KEYS | _SCENE_INT_KEYS | _SCENE_STR_KEYS
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"{path}: unknown scene keys: {sorted(unknown)}")
    _apply_env(values, known)
    kwargs = {}
    for key in ("seed", "num_pedestrians"):
        if key in values:
            kwargs[key] = _coerce(values, key, int)
    for src, dst in (("y_min", "y_max"), ("z_min", "z_max")):
        if src in values or dst in values:
            if not (src in values and dst in values):
                raise ValueError(f"{path}: {src} and {dst} must be given together")
    if "x_min" in values or "x_max" in values:
        if not ("x_min" in values and "x_max" in values):
            raise ValueError(f"{path}: x_min and x_max must be given together")
        kwargs["x_range"] = (_coerce(values, "x_min", float), _coerce(values, "x_max", float))
    if "y_min" in values:
        kwargs["y_range"] = (_coerce(values, "y_min", float), _coerce(values, "y_max", float))
    if "z_min" in values:
        kwargs["z_range"] = (_coerce(values, "z_min", float), _coerce(values, "z_max", float))
    if "stop_band_min" in values or "stop_band_max" in values:
        kwargs["stop_band"] = (
            _coerce(values, "stop_band_min", float), _coerce(values, "stop_band_max", float)
        )
    for key in ("head_height_mean", "head_height_std", "walk_std", "d0", "v0",
                "decel", "fps", "duration"):
        if key in values:
            kwargs[key] = _coerce(values, key, float)
    if "platform_side" in values:
        kwargs["platform_side"] = values["platform_side"]
    cam_keys = {"fx", "fy", "cx", "cy", "image_width", "image_height"}
    if cam_keys & set(values):
        missing = cam_keys - set(values)
        if missing:
            raise ValueError(f"{path}: incomplete intrinsics, missing {sorted(missing)}")
        kwargs["intrinsics"] = CameraIntrinsics(
            **{k: _coerce(values, k, float) for k in cam_keys}
        )
    scene = SceneConfig(**kwargs)
    if seed_override is not None:
        scene = replace(scene, seed=seed_override)
    return scene


def load_noise_config(path) -> NoiseConfig:
    values = io.read_kv(path)
    known = _NOISE_FLOAT_KEYS | _NOISE_INT_KEYS
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"{path}: unknown noise keys: {sorted(unknown)}")
    _apply_env(values, known)
    kwargs = {}
    for key in _NOISE_FLOAT_KEYS:
        if key in values:
            kwargs[key] = _coerce(values, key, float)
    if "embedding_dim" in values:
        kwargs["embedding_dim"] = _coerce(values, "embedding_dim", int)
    return NoiseConfig(**kwargs)


def load_tracker_config(path, model: str, fps: float | None = None,
                        use_appearance: bool = True) -> TrackerConfig:
    values = io.read_kv(path) if path else {}
    known = _TRACKER_INT_KEYS | _TRACKER_FLOAT_KEYS | _TRACKER_BOOL_KEYS
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"{path}: unknown tracker keys: {sorted(unknown)}")
    _apply_env(values, known)

    noise_kwargs = {}
    for f in fields(NoiseScales):
        if f.name in values:
            noise_kwargs[f.name] = _coerce(values, f.name, float)
    assoc_kwargs = {}
    if "lambda" in values:
        assoc_kwargs["lam"] = _coerce(values, "lambda", float)
    for key, dest in (("appearance_gate", "appearance_gate"),
                      ("depth_jump_max", "depth_jump_max"),
                      ("iou_fallback_threshold", "iou_fallback_threshold")):
        if key in values:
            assoc_kwargs[dest] = _coerce(values, key, float)
    for key, dest in (("cascade_depth", "cascade_depth"),
                      ("gallery_size", "gallery_size")):
        if key in values:
            assoc_kwargs[dest] = _coerce(values, key, int)
    gates = dict()
    for key, kind in (("chi2_gate_cv8d", MotionModel.CV8D),
                      ("chi2_gate_ca12d", MotionModel.CA12D),
                      ("chi2_gate_phys3d", MotionModel.PHYS3D)):
        if key in values:
            gates[kind] = _coerce(values, key, float)
    if gates:
        base = AssociationConfig().chi2_gates
        base.update(gates)
        assoc_kwargs["chi2_gates"] = base

    tracker_kwargs = {}
    for key in ("n_init", "max_age"):
        if key in values:
            tracker_kwargs[key] = _coerce(values, key, int)
    if "min_confidence" in values:
        tracker_kwargs["min_confidence"] = _coerce(values, "min_confidence", float)
    if "fps" in values:
        tracker_kwargs["fps"] = _coerce(values, "fps", float)
    if "use_appearance" in values:
        use_appearance = _coerce(values, "use_appearance", bool)
    if fps is not None:
        tracker_kwargs["fps"] = fps

    return TrackerConfig(
        model=MotionModel(model),
        use_appearance=use_appearance,
        association=AssociationConfig(**assoc_kwargs),
        noise=NoiseScales(**noise_kwargs),
        **tracker_kwargs,
    )


# -- output helpers ----------------------------------------------------------

def format_table(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(header[i]), max((len(r[i]) for r in rows), default=0))
              for i in range(len(header))]
    lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
    for row in rows:
        lines.append("  ".join(c.rjust(w) for c, w in zip(row, widths)))
    return "\n".join(lines) + "\n"


def format_markdown(header: list[str], rows: list[list[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |",
             "|" + "|".join("---" for _ in header) + "|"]
    for row in rows:
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def write_csv(path, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _timestamp() -> str:
    from datetime import datetime, timezone

    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _manifest(subcommand: str, seed, config: dict, inputs: dict, outputs: list,
              extra: dict | None = None) -> dict:
    manifest = {
        "subcommand": subcommand,
        "seed": seed,
        "config": config,
        "inputs": {k: str(v) for k, v in inputs.items()},
        "outputs": [str(p) for p in outputs],
        "timestamp": _timestamp(),
        "version": __version__,
    }
    if extra:
        manifest.update(extra)
    return manifest


# -- subcommands -------------------------------------------------------------

def cmd_simulate(args) -> int:
    scene = load_scene_config(args.scene, args.seed)
    noise = load_noise_config(args.noise)
    seq = generate(scene, noise)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gt_path, det_path = out / "gt.txt", out / "det.txt"
    emb_path, truth_path, cam_path = out / "emb.txt", out / "truth.txt", out / "cam.txt"

    io.write_gt(gt_path, seq.gt)
    io.write_detections(det_path, seq.detections)
    embeddings = {
        frame: np.stack([d.embedding for d in dets])
        for frame, dets in seq.detections.items() if dets
    }
    io.write_embeddings(emb_path, embeddings)
    io.write_kv(truth_path, {
        "true_left": seq.true_left, "true_right": seq.true_right,
        "true_count": seq.true_count,
    })
    io.write_calibration(cam_path, seq.cam)
    io.write_manifest(out / "manifest.json", _manifest(
        "simulate", scene.seed,
        {"scene": asdict(scene), "noise": asdict(noise)},
        {"scene_config": args.scene, "noise_config": args.noise},
        [gt_path, det_path, emb_path, truth_path, cam_path],
    ))
    print(f"simulated {seq.n_frames} frames, {scene.num_pedestrians} pedestrians "
          f"-> {out}")
    return 0


def cmd_track(args) -> int:
    cam = io.read_calibration(args.cam)
    det_frames = io.read_mot(args.det)
    emb_frames = None
    if not args.no_appearance:
        if not args.emb:
            raise ValueError("--emb is required unless --no-appearance is given")
        emb_frames = io.read_embeddings(args.emb)
    detections = io.pair_detections_with_embeddings(det_frames, emb_frames)
    config = load_tracker_config(args.config, args.model, args.fps,
                                 use_appearance=emb_frames is not None)
    band = BandConfig(start=args.band_start, end=args.band_end,
                      persistence_n=args.persistence)

    outputs = run_sequence(detections, config, cam)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_frame_outputs(out, outputs)
    counts = count_sequence(outputs, cam.image_width, band)
    counts_path = out.with_suffix(".counts.txt")
    io.write_counts(counts_path, counts.left, counts.right, counts.final,
                    true_count=args.truth)
    manifest_path = out.with_suffix(".manifest.json")
    io.write_manifest(manifest_path, _manifest(
        "track", None,
        {
            "model": config.model.value,
            "tracker": {
                "n_init": config.n_init, "max_age": config.max_age,
                "min_confidence": config.min_confidence, "fps": config.fps,
                "use_appearance": config.use_appearance,
            },
            "association": {
                "lambda": config.association.lam,
                "appearance_gate": config.association.appearance_gate,
                "cascade_depth": config.association.cascade_depth,
                "depth_jump_max": config.association.depth_jump_max,
                "iou_fallback_threshold": config.association.iou_fallback_threshold,
                "gallery_size": config.association.gallery_size,
                "chi2_gates": {k.value: v for k, v in config.association.chi2_gates.items()},
            },
            "noise": asdict(config.noise),
            "band": asdict(band),
        },
        {"cam": args.cam, "det": args.det, "emb": args.emb or ""},
        [out, counts_path],
        extra={
            "counts": {"left": counts.left, "right": counts.right, "final": counts.final},
            "true_count": args.truth,
        },
    ))
    print(f"tracked {len(outputs)} frames: LC={counts.left} RC={counts.right} "
          f"TC={counts.final} -> {out}")
    return 0


def _mot_frames_to_outputs(frames) -> list[FrameOutput]:
    """Result-file lines as frame outputs for recounting (all confirmed)."""
    if not frames:
        return []
    lo, hi = min(frames), max(frames)
    outputs = []
    for frame in range(lo, hi + 1):
        entries = tuple(
            TrackEntry(e.track_id, e.box, TrackStatus.CONFIRMED, False)
            for e in frames.get(frame, [])
        )
        outputs.append(FrameOutput(frame, entries))
    return outputs


def cmd_evaluate(args) -> int:
    gt_frames = io.read_mot(args.gt)
    res_frames = io.read_mot(args.res)
    report = evaluate_sequence(io.mot_to_id_boxes(gt_frames),
                               io.mot_to_id_boxes(res_frames),
                               iou_threshold=args.iou)
    band = BandConfig(start=args.band_start, end=args.band_end,
                      persistence_n=args.persistence)
    counts = count_sequence(_mot_frames_to_outputs(res_frames), args.image_width, band)
    pair_report = counting_metrics([(counts.final, args.truth_count)])

    row = [
        f"{report.mota:.2f}", f"{report.motp:.2f}", f"{report.idf1:.2f}",
        f"{report.idp:.2f}", f"{report.idr:.2f}", str(report.idsw),
        str(report.matches), str(report.fp), str(report.fn), f"{report.faf:.2f}",
        f"{report.precision:.2f}", f"{report.recall:.2f}",
        str(report.mt), str(report.pt), str(report.ml),
        str(counts.left), str(counts.right), str(counts.final),
        str(args.truth_count), f"{pair_report.mape:.2f}",
    ]
    sys.stdout.write(format_table(TABLE8_COLUMNS, [row]))
    if args.out:
        write_csv(args.out, TABLE8_COLUMNS, [row])
        Path(args.out).with_suffix(".txt").write_text(
            format_table(TABLE8_COLUMNS, [row]), encoding="utf-8")
    return 0


def _parse_grid(tokens) -> tuple[list[float], list[float]]:
    starts, ends = list(SWEEP_STARTS), list(SWEEP_ENDS)
    for token in tokens or []:
        name, _, csv_values = token.partition(":")
        if not csv_values:
            raise ValueError(f"grid token {token!r} must look like start:0.05,0.1")
        values = [float(v) for v in csv_values.strip("{}").split(",")]
        if name == "start":
            starts = values
        elif name == "end":
            ends = values
        else:
            raise ValueError(f"unknown grid dimension {name!r}")
    return starts, ends


def _sweep_worker(seq_dir: str, model: str, bands: tuple, persistence: int):
    """Track one sequence directory once, then count under every band."""
    directory = Path(seq_dir)
    cam = io.read_calibration(directory / "cam.txt")
    det_frames = io.read_mot(directory / "det.txt")
    emb_path = directory / "emb.txt"
    emb_frames = io.read_embeddings(emb_path) if emb_path.exists() else None
    detections = io.pair_detections_with_embeddings(det_frames, emb_frames)
    truth = io.read_counts(directory / "truth.txt")["true_count"]
    config = load_tracker_config(None, model, use_appearance=emb_frames is not None)
    outputs = run_sequence(detections, config, cam)
    finals = {}
    for start, end in bands:
        band = BandConfig(start=start, end=end, persistence_n=persistence)
        finals[(start, end)] = count_sequence(outputs, cam.image_width, band).final
    return seq_dir, truth, finals


def cmd_sweep(args) -> int:
    if args.param != "band":
        raise ValueError(f"unsupported sweep parameter {args.param!r}")
    root = Path(args.sequences)
    seq_dirs = sorted(str(p.parent) for p in root.glob("*/det.txt"))
    if not seq_dirs:
        raise ValueError(f"no sequences found under {root} (need */det.txt)")
    starts, ends = _parse_grid(args.grid)
    bands = [(s, e) for s in starts for e in ends if s < e]
    if args.include_degenerate:
        bands += [(s, s) for s in starts]

    worker_args = [(d, args.model, tuple(bands), args.persistence) for d in seq_dirs]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            raw = list(pool.map(_sweep_worker, *zip(*worker_args)))
    else:
        raw = [_sweep_worker(*wa) for wa in worker_args]
    by_dir = {r[0]: r for r in raw}

    rows = []
    for start, end in bands:
        pairs = []
        for d in seq_dirs:
            _, truth, finals = by_dir[d]
            pairs.append((finals[(start, end)], truth))
        rep = counting_metrics(pairs)
        rows.append((rep.mae, rep.rmse, [
            f"{start:.2f}", f"{end:.2f}", f"{rep.mae:.4f}", f"{rep.rmse:.4f}",
            f"{rep.mape:.2f}", f"{rep.me:.4f}",
        ]))
    rows.sort(key=lambda r: (r[0], r[1], r[2][0], r[2][1]))
    header = ["Start", "End", "MAE", "RMSE", "MAPE(%)", "ME"]
    table_rows = [r[2] for r in rows]
    sys.stdout.write(format_table(header, table_rows))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "sweep.csv", header, table_rows)
        (out / "sweep.txt").write_text(format_table(header, table_rows), encoding="utf-8")
        io.write_manifest(out / "sweep.manifest.json", _manifest(
            "sweep", None,
            {"model": args.model, "starts": starts, "ends": ends,
             "include_degenerate": args.include_degenerate,
             "persistence": args.persistence, "jobs": args.jobs},
            {"sequences": args.sequences},
            [out / "sweep.csv", out / "sweep.txt"],
        ))
    return 0


def cmd_report(args) -> int:
    root = Path(args.runs)
    manifest_paths = sorted(root.rglob("*.manifest.json"))
    runs = []
    for path in manifest_paths:
        manifest = io.read_manifest(path)
        if manifest.get("subcommand") == "track":
            runs.append((path, manifest))
    if not runs:
        raise ValueError(f"no track manifests found under {root}")

    by_model: dict[str, list[tuple[int, int]]] = {}
    for path, manifest in runs:
        truth = manifest.get("true_count")
        if truth is None:
            raise ValueError(f"{path}: run has no true_count; re-run track with --truth")
        counts = manifest["counts"]
        by_model.setdefault(manifest["config"]["model"], []).append(
            (counts["final"], truth)
        )

    order = [m.value for m in MODEL_ORDER]
    models = sorted(by_model, key=lambda m: (order.index(m) if m in order else 99, m))
    table_rows = []
    for model in models:
        rep = counting_metrics(by_model[model])
        table_rows.append([model, f"{rep.mae:.4f}", f"{rep.rmse:.4f}",
                           f"{rep.mape:.2f}", f"{rep.me:.4f}"])
    sys.stdout.write(format_table(TABLE3_COLUMNS, table_rows))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "report.csv", TABLE3_COLUMNS, table_rows)
        (out / "report.md").write_text(format_markdown(TABLE3_COLUMNS, table_rows),
                                       encoding="utf-8")
        (out / "report.txt").write_text(format_table(TABLE3_COLUMNS, table_rows),
                                        encoding="utf-8")
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="railcount",
        description="Track and count platform crowds from a decelerating-camera view.",
    )
    parser.add_argument("--version", action="version", version=f"railcount {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic platform-approach sequence")
    p.add_argument("--scene", required=True, help="scene config (key=value)")
    p.add_argument("--noise", required=True, help="noise config (key=value)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the scene seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("track", help="run the tracker and counting band over detections")
    p.add_argument("--model", required=True, choices=[m.value for m in MotionModel])
    p.add_argument("--cam", required=True, help="calibration file")
    p.add_argument("--det", required=True, help="detections file (MOT format)")
    p.add_argument("--emb", default=None, help="embeddings file")
    p.add_argument("--no-appearance", action="store_true",
                   help="run motion-only (lambda effectively 1)")
    p.add_argument("--out", required=True, help="results file (MOT format)")
    p.add_argument("--config", default=None, help="tracker config (key=value)")
    p.add_argument("--fps", type=float, default=None, help="frame rate override")
    p.add_argument("--band-start", type=float, default=0.05)
    p.add_argument("--band-end", type=float, default=0.20)
    p.add_argument("--persistence", type=int, default=2)
    p.add_argument("--truth", type=int, default=None,
                   help="true count, recorded for report aggregation")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("evaluate", help="evaluate results against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--res", required=True)
    p.add_argument("--truth-count", type=int, required=True)
    p.add_argument("--image-width", type=float, required=True,
                   help="image width in pixels (for band membership)")
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--band-start", type=float, default=0.05)
    p.add_argument("--band-end", type=float, default=0.20)
    p.add_argument("--persistence", type=int, default=2)
    p.add_argument("--out", default=None, help="CSV output path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="band-parameter ablation over a sequence set")
    p.add_argument("--param", required=True, choices=["band"])
    p.add_argument("--grid", nargs="*", default=None,
                   help="e.g. start:0.05,0.1 end:0.15,0.2 (defaults to the full grid)")
    p.add_argument("--sequences", required=True, help="directory of sequence subdirs")
    p.add_argument("--model", default=MotionModel.PHYS3D.value,
                   choices=[m.value for m in MotionModel])
    p.add_argument("--persistence", type=int, default=2)
    p.add_argument("--include-degenerate", action=argparse.BooleanOptionalAction,
                   default=True, help="include start=end rows")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=None, help="output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="cross-model counting comparison from run manifests")
    p.add_argument("--runs", required=True, help="directory holding track outputs")
    p.add_argument("--out", default=None, help="output directory")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, EvaluationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
