"""File formats: MOT boxes, embeddings, calibration, key=value configs,
counts, and run manifests.

All numeric output uses '.' as the decimal separator regardless of locale.
Writers and readers round-trip losslessly at the printed precision; readers
reject invariant violations with a diagnosable error carrying the line number.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geometry import CameraIntrinsics, HeadBox
from .tracker import FrameOutput, TrackStatus


class ParseError(ValueError):
    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


@dataclass(frozen=True)
class MotEntry:
    track_id: int
    box: HeadBox
    conf: float


def _parse_float(path, line_no: int, token: str, what: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(path, line_no, f"invalid {what}: {token!r}") from None


def read_mot(path) -> dict[int, list[MotEntry]]:
    """Parse a MOT-format CSV: frame,id,left,top,w,h,conf[,-1,-1,-1].

    Frames need not be monotone in the file; the result is keyed by frame.
    Boxes are converted from top-left corner form to the internal center form.
    """
    frames: dict[int, list[MotEntry]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) < 7:
                raise ParseError(path, line_no, f"expected >= 7 fields, got {len(parts)}")
            try:
                frame = int(parts[0])
                track_id = int(parts[1])
            except ValueError:
                raise ParseError(path, line_no, "frame and id must be integers") from None
            if frame < 1:
                raise ParseError(path, line_no, "frame numbers are 1-based")
            left = _parse_float(path, line_no, parts[2], "bb_left")
            top = _parse_float(path, line_no, parts[3], "bb_top")
            width = _parse_float(path, line_no, parts[4], "bb_width")
            height = _parse_float(path, line_no, parts[5], "bb_height")
            conf = _parse_float(path, line_no, parts[6], "conf")
            if width <= 0 or height <= 0:
                raise ParseError(path, line_no, "non-positive box dimension")
            box = HeadBox.from_tlwh(left, top, width, height)
            frames.setdefault(frame, []).append(MotEntry(track_id, box, conf))
    return dict(sorted(frames.items()))


def _mot_line(frame: int, track_id: int, box: HeadBox, conf: float) -> str:
    left, top, width, height = box.to_tlwh()
    return (f"{frame},{track_id},{left:.2f},{top:.2f},{width:.2f},{height:.2f},"
            f"{conf:.2f},-1,-1,-1\n")


def write_mot(path, frames: Mapping[int, Sequence[MotEntry]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for frame in sorted(frames):
            for entry in frames[frame]:
                fh.write(_mot_line(frame, entry.track_id, entry.box, entry.conf))


def write_gt(path, gt: Mapping[int, Sequence[tuple[int, HeadBox]]]) -> None:
    """Ground truth in MOT format with confidence 1."""
    with open(path, "w", encoding="utf-8") as fh:
        for frame in sorted(gt):
            for obj_id, box in gt[frame]:
                fh.write(_mot_line(frame, obj_id, box, 1.0))


def write_detections(path, detections: Mapping[int, Sequence]) -> None:
    """Detections in MOT format with id -1 (``detections`` maps frame to
    objects exposing ``box`` and ``confidence``)."""
    with open(path, "w", encoding="utf-8") as fh:
        for frame in sorted(detections):
            for det in detections[frame]:
                fh.write(_mot_line(frame, -1, det.box, det.confidence))


def write_frame_outputs(path, outputs: Iterable[FrameOutput]) -> None:
    """Tracker results in MOT format: confirmed tracks, coasting ones included."""
    with open(path, "w", encoding="utf-8") as fh:
        for out in outputs:
            for entry in out.entries:
                if entry.status is not TrackStatus.CONFIRMED:
                    continue
                fh.write(_mot_line(out.frame, entry.track_id, entry.box, 1.0))


def mot_to_id_boxes(frames: Mapping[int, Sequence[MotEntry]]
                    ) -> dict[int, list[tuple[int, HeadBox]]]:
    return {frame: [(e.track_id, e.box) for e in entries]
            for frame, entries in frames.items()}


# -- embeddings --------------------------------------------------------------

def write_embeddings(path, embeddings: Mapping[int, np.ndarray]) -> None:
    """One record per detection: frame,index,v0,...,v{d-1} at 8 decimals."""
    with open(path, "w", encoding="utf-8") as fh:
        for frame in sorted(embeddings):
            rows = np.atleast_2d(embeddings[frame])
            if rows.size == 0:
                continue
            for index, vec in enumerate(rows):
                values = ",".join(f"{v:.8f}" for v in vec)
                fh.write(f"{frame},{index},{values}\n")


def read_embeddings(path) -> dict[int, np.ndarray]:
    """Parse embedding records; unit norm is enforced to 1e-4.

    Returns frame -> (count, dim) arrays ordered by the per-frame index,
    which must be contiguous from zero.
    """
    per_frame: dict[int, dict[int, np.ndarray]] = {}
    dim: int | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) < 3:
                raise ParseError(path, line_no, "expected frame,index,values...")
            try:
                frame = int(parts[0])
                index = int(parts[1])
            except ValueError:
                raise ParseError(path, line_no, "frame and index must be integers") from None
            vec = np.array([_parse_float(path, line_no, p, "embedding value")
                            for p in parts[2:]])
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise ParseError(path, line_no, "inconsistent embedding dimension")
            norm = float(np.linalg.norm(vec))
            if abs(norm - 1.0) > 1e-4:
                raise ParseError(path, line_no, f"embedding norm {norm:.6f} not unit")
            if index in per_frame.setdefault(frame, {}):
                raise ParseError(path, line_no, f"duplicate index {index} in frame {frame}")
            per_frame[frame][index] = vec
    out: dict[int, np.ndarray] = {}
    for frame, records in sorted(per_frame.items()):
        if sorted(records) != list(range(len(records))):
            raise ParseError(path, 0, f"non-contiguous indices in frame {frame}")
        out[frame] = np.stack([records[i] for i in range(len(records))])
    return out


def pair_detections_with_embeddings(
    det_frames: Mapping[int, Sequence[MotEntry]],
    emb_frames: Mapping[int, np.ndarray] | None,
):
    """Build tracker detections, validating (frame, index) alignment.

    With ``emb_frames`` None the tracker runs appearance-free.
    """
    from .tracker import Detection

    paired: dict[int, list[Detection]] = {}
    if emb_frames is not None:
        det_keys = {f for f, entries in det_frames.items() if entries}
        emb_keys = {f for f, rows in emb_frames.items() if len(rows)}
        if det_keys != emb_keys:
            raise ValueError(
                "embedding frames do not match detection frames: "
                f"{sorted(det_keys ^ emb_keys)[:5]} differ"
            )
    for frame, entries in det_frames.items():
        rows = None
        if emb_frames is not None and entries:
            rows = emb_frames[frame]
            if len(rows) != len(entries):
                raise ValueError(
                    f"frame {frame}: {len(entries)} detections but {len(rows)} embeddings"
                )
        paired[frame] = [
            Detection(e.box, e.conf, None if rows is None else rows[i])
            for i, e in enumerate(entries)
        ]
    return paired


# -- key=value files ---------------------------------------------------------

def read_kv(path) -> dict[str, str]:
    """Parse a key=value file; '#' comments and blank lines are allowed."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(path, line_no, "expected key=value")
            key, _, value = line.partition("=")
            key = key.strip()
            if not key:
                raise ParseError(path, line_no, "empty key")
            if key in values:
                raise ParseError(path, line_no, f"duplicate key {key!r}")
            values[key] = value.strip()
    return values


def write_kv(path, values: Mapping[str, object]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in values.items():
            fh.write(f"{key}={value}\n")


_CALIBRATION_KEYS = ("fx", "fy", "cx", "cy", "image_width", "image_height")


def read_calibration(path) -> CameraIntrinsics:
    """Calibration file: exactly the six intrinsics keys, one per line."""
    values = read_kv(path)
    unknown = set(values) - set(_CALIBRATION_KEYS)
    if unknown:
        raise ParseError(path, 0, f"unknown calibration keys: {sorted(unknown)}")
    missing = set(_CALIBRATION_KEYS) - set(values)
    if missing:
        raise ParseError(path, 0, f"missing calibration keys: {sorted(missing)}")
    numbers = {}
    for key in _CALIBRATION_KEYS:
        numbers[key] = _parse_float(path, 0, values[key], key)
    return CameraIntrinsics(**numbers)


def write_calibration(path, cam: CameraIntrinsics) -> None:
    write_kv(path, {
        "fx": repr(cam.fx), "fy": repr(cam.fy),
        "cx": repr(cam.cx), "cy": repr(cam.cy),
        "image_width": repr(cam.image_width), "image_height": repr(cam.image_height),
    })


def write_counts(path, left: int, right: int, final: int,
                 true_count: int | None = None) -> None:
    values: dict[str, object] = {
        "left_count": left, "right_count": right, "final_count": final,
    }
    if true_count is not None:
        values["true_count"] = true_count
    write_kv(path, values)


def read_counts(path) -> dict[str, int]:
    return {k: int(v) for k, v in read_kv(path).items()}


# -- run manifests -----------------------------------------------------------

def write_manifest(path, manifest: Mapping[str, object]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
