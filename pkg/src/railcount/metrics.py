"""Tracking and counting evaluation.

CLEAR-MOT event accounting with the standard correspondence-continuity rule,
identity-level precision/recall/F1 under a global trajectory matching, and
count-regression statistics. All functions are pure over complete sequences.

Input sequences are mappings ``frame -> [(id, HeadBox), ...]`` with unique
ids per frame.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import HeadBox, iou_matrix

FrameObjects = Mapping[int, Sequence[tuple[int, HeadBox]]]


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class ClearReport:
    """CLEAR-MOT events and scores. MOTP is the mean (1 - IoU) over matches,
    scaled to percent (lower is better)."""

    mota: float
    motp: float
    idsw: int
    matches: int
    fp: int
    fn: int
    faf: float
    precision: float
    recall: float
    mt: int
    pt: int
    ml: int
    total_gt: int
    n_frames: int


@dataclass(frozen=True)
class IdentityReport:
    idp: float
    idr: float
    idf1: float
    idtp: int
    idfp: int
    idfn: int


@dataclass(frozen=True)
class MotReport:
    """One evaluation row: CLEAR-MOT plus identity metrics."""

    mota: float
    motp: float
    idf1: float
    idp: float
    idr: float
    idsw: int
    matches: int
    fp: int
    fn: int
    faf: float
    precision: float
    recall: float
    mt: int
    pt: int
    ml: int


@dataclass(frozen=True)
class CountReport:
    mae: float
    rmse: float
    mape: float
    me: float
    n: int


def _check_frames(gt: FrameObjects, hyp: FrameObjects) -> None:
    if not gt:
        raise EvaluationError("empty ground truth")
    lo, hi = min(gt), max(gt)
    for frame in hyp:
        if frame < lo or frame > hi:
            raise EvaluationError(
                f"hypothesis frame {frame} outside ground-truth range [{lo}, {hi}]"
            )


def _as_arrays(objs: Sequence[tuple[int, HeadBox]]):
    ids = [obj_id for obj_id, _ in objs]
    if len(set(ids)) != len(ids):
        raise EvaluationError("duplicate id within one frame")
    boxes = np.array([[b.x, b.y, b.a, b.h] for _, b in objs]) if objs else np.zeros((0, 4))
    return ids, boxes


def clear_mot(gt: FrameObjects, hyp: FrameObjects, iou_threshold: float = 0.5) -> ClearReport:
    """Frame-by-frame CLEAR-MOT accounting.

    Correspondences from the previous frame are kept while their IoU stays at
    or above the threshold; remaining objects are matched by minimum total
    (1 - IoU) assignment. An id switch is charged when a ground-truth object's
    matched hypothesis id differs from its previous one.
    """
    _check_frames(gt, hyp)
    lo = min(min(gt), min(hyp)) if hyp else min(gt)
    hi = max(max(gt), max(hyp)) if hyp else max(gt)

    correspondence: dict[int, int] = {}
    last_matched: dict[int, int] = {}
    fp = fn = idsw = matches = 0
    distance_sum = 0.0
    total_gt = 0
    gt_frames_per_id: dict[int, int] = {}
    gt_tracked_per_id: dict[int, int] = {}

    for frame in range(lo, hi + 1):
        gt_ids, gt_boxes = _as_arrays(gt.get(frame, []))
        hyp_ids, hyp_boxes = _as_arrays(hyp.get(frame, []))
        total_gt += len(gt_ids)
        for gid in gt_ids:
            gt_frames_per_id[gid] = gt_frames_per_id.get(gid, 0) + 1

        ious = iou_matrix(gt_boxes, hyp_boxes)
        frame_pairs: dict[int, int] = {}

        # Keep surviving correspondences first.
        hyp_index = {hid: j for j, hid in enumerate(hyp_ids)}
        used_gt, used_hyp = set(), set()
        for i, gid in enumerate(gt_ids):
            hid = correspondence.get(gid)
            if hid is None or hid not in hyp_index:
                continue
            j = hyp_index[hid]
            if ious[i, j] >= iou_threshold:
                frame_pairs[i] = j
                used_gt.add(i)
                used_hyp.add(j)

        # Assign the rest by minimal total distance at feasible IoU.
        free_gt = [i for i in range(len(gt_ids)) if i not in used_gt]
        free_hyp = [j for j in range(len(hyp_ids)) if j not in used_hyp]
        if free_gt and free_hyp:
            sub = 1.0 - ious[np.ix_(free_gt, free_hyp)]
            feasible_cap = 1.0 - iou_threshold
            work = np.minimum(sub, feasible_cap + 1e-9)
            rows, cols = linear_sum_assignment(work)
            for r, c in zip(rows, cols):
                if sub[r, c] <= feasible_cap:
                    frame_pairs[free_gt[r]] = free_hyp[c]

        for i, j in sorted(frame_pairs.items()):
            gid, hid = gt_ids[i], hyp_ids[j]
            prev = last_matched.get(gid)
            if prev is not None and prev != hid:
                idsw += 1
            last_matched[gid] = hid
            matches += 1
            distance_sum += 1.0 - ious[i, j]
            gt_tracked_per_id[gid] = gt_tracked_per_id.get(gid, 0) + 1

        matched_gt = set(frame_pairs)
        matched_hyp = set(frame_pairs.values())
        fn += len(gt_ids) - len(matched_gt)
        fp += len(hyp_ids) - len(matched_hyp)
        # Only this frame's pairs carry over as continuity candidates.
        correspondence = {gt_ids[i]: hyp_ids[j] for i, j in frame_pairs.items()}

    n_frames = hi - lo + 1
    mt = pt = ml = 0
    for gid, lifetime in gt_frames_per_id.items():
        ratio = gt_tracked_per_id.get(gid, 0) / lifetime
        if ratio >= 0.8:
            mt += 1
        elif ratio <= 0.2:
            ml += 1
        else:
            pt += 1

    mota = (1.0 - (fp + fn + idsw) / total_gt) * 100.0
    motp = (distance_sum / matches) * 100.0 if matches else 0.0
    precision = matches / (matches + fp) * 100.0 if matches + fp else 0.0
    recall = matches / (matches + fn) * 100.0 if matches + fn else 0.0
    return ClearReport(
        mota=mota, motp=motp, idsw=idsw, matches=matches, fp=fp, fn=fn,
        faf=fp / n_frames, precision=precision, recall=recall,
        mt=mt, pt=pt, ml=ml, total_gt=total_gt, n_frames=n_frames,
    )


def _trajectories(frames: FrameObjects) -> dict[int, dict[int, HeadBox]]:
    out: dict[int, dict[int, HeadBox]] = {}
    for frame, objs in frames.items():
        for obj_id, box in objs:
            out.setdefault(obj_id, {})[frame] = box
    return out


def identity_metrics(gt: FrameObjects, hyp: FrameObjects,
                     iou_threshold: float = 0.5) -> IdentityReport:
    """IDP / IDR / IDF1 under the globally optimal trajectory matching.

    Each ground-truth trajectory is matched to at most one hypothesis
    trajectory (and vice versa) so that the total number of disagreeing
    detection-frames is minimal; co-location in a frame requires IoU at or
    above the threshold.
    """
    _check_frames(gt, hyp)
    gt_traj = _trajectories(gt)
    hyp_traj = _trajectories(hyp)
    gt_ids = sorted(gt_traj)
    hyp_ids = sorted(hyp_traj)
    n_g, n_h = len(gt_ids), len(hyp_ids)
    total_gt = sum(len(t) for t in gt_traj.values())
    total_hyp = sum(len(t) for t in hyp_traj.values())

    overlap = np.zeros((n_g, n_h))
    for i, gid in enumerate(gt_ids):
        for j, hid in enumerate(hyp_ids):
            common = gt_traj[gid].keys() & hyp_traj[hid].keys()
            if not common:
                continue
            g_boxes = np.array([[b.x, b.y, b.a, b.h] for b in
                                (gt_traj[gid][f] for f in common)])
            h_boxes = np.array([[b.x, b.y, b.a, b.h] for b in
                                (hyp_traj[hid][f] for f in common)])
            pair_iou = iou_matrix(g_boxes, h_boxes).diagonal()
            overlap[i, j] = int(np.sum(pair_iou >= iou_threshold))

    # Padded square assignment: unmatched trajectories pay their full length.
    size = n_g + n_h
    big = float(total_gt + total_hyp + 1)
    cost = np.full((size, size), big)
    g_len = np.array([len(gt_traj[g]) for g in gt_ids], dtype=float)
    h_len = np.array([len(hyp_traj[h]) for h in hyp_ids], dtype=float)
    if n_g and n_h:
        cost[:n_g, :n_h] = g_len[:, None] + h_len[None, :] - 2.0 * overlap
    for i in range(n_g):
        cost[i, n_h + i] = g_len[i]
    for j in range(n_h):
        cost[n_g + j, j] = h_len[j]
    cost[n_g:, n_h:] = 0.0

    idtp = 0
    if size:
        rows, cols = linear_sum_assignment(cost)
        for r, c in zip(rows, cols):
            if r < n_g and c < n_h:
                idtp += int(overlap[r, c])

    idfp = total_hyp - idtp
    idfn = total_gt - idtp
    idp = 100.0 * idtp / total_hyp if total_hyp else 0.0
    idr = 100.0 * idtp / total_gt if total_gt else 0.0
    denom = 2 * idtp + idfp + idfn
    idf1 = 100.0 * 2 * idtp / denom if denom else 0.0
    return IdentityReport(idp=idp, idr=idr, idf1=idf1, idtp=idtp, idfp=idfp, idfn=idfn)


def evaluate_sequence(gt: FrameObjects, hyp: FrameObjects,
                      iou_threshold: float = 0.5) -> MotReport:
    """CLEAR-MOT and identity metrics combined into one report row."""
    clear = clear_mot(gt, hyp, iou_threshold)
    ident = identity_metrics(gt, hyp, iou_threshold)
    return MotReport(
        mota=clear.mota, motp=clear.motp,
        idf1=ident.idf1, idp=ident.idp, idr=ident.idr,
        idsw=clear.idsw, matches=clear.matches, fp=clear.fp, fn=clear.fn,
        faf=clear.faf, precision=clear.precision, recall=clear.recall,
        mt=clear.mt, pt=clear.pt, ml=clear.ml,
    )


def counting_metrics(pairs: Sequence[tuple[float, float]]) -> CountReport:
    """Count-regression statistics over (predicted, true) pairs.

    Positive mean error indicates overcounting. True counts must be positive
    because of the percentage term.
    """
    if not pairs:
        raise ValueError("no count pairs")
    pred = np.array([p for p, _ in pairs], dtype=float)
    true = np.array([t for _, t in pairs], dtype=float)
    if np.any(true <= 0):
        raise ValueError("true counts must be positive for MAPE")
    err = pred - true
    return CountReport(
        mae=float(np.mean(np.abs(err))),
        rmse=float(np.sqrt(np.mean(err ** 2))),
        mape=float(np.mean(np.abs(err) / true) * 100.0),
        me=float(np.mean(err)),
        n=len(pairs),
    )
