"""Frame-to-frame association of predicted tracks with detections.

Costs combine a gate-normalized squared Mahalanobis distance with a
min-over-gallery cosine distance; matching runs in cascade rounds ordered
by time since the last update, followed by an IoU fallback for tentative
and just-missed tracks. The module holds no cross-frame state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import geometry
from .motion_models import MotionModel

# 0.95 chi-square quantiles for the 4-dof and 3-dof measurement spaces; the
# 12-dim model uses the stricter 0.90 quantile at 4 dof.
DEFAULT_CHI2_GATES = {
    MotionModel.CV8D: 9.4877,
    MotionModel.CA12D: 7.7794,
    MotionModel.PHYS3D: 7.8147,
}

# Sentinel for gated cost-matrix entries.
GATED = np.inf

# Combined costs are O(1) after gate normalization; gate-passing pairs are
# never dissolved by this ceiling.
_CASCADE_MAX_COST = 1.0


@dataclass(frozen=True)
class AssociationConfig:
    """Thresholds for gating, cascade matching, and the IoU fallback.

    ``depth_jump_max`` is the allowed fractional depth change per frame at a
    25 FPS reference rate and is scaled by the actual frame interval. A
    ``cascade_depth`` of None resolves to the tracker's max_age.
    """

    lam: float = 0.5
    chi2_gates: dict[MotionModel, float] = field(
        default_factory=lambda: dict(DEFAULT_CHI2_GATES)
    )
    appearance_gate: float = 0.4
    cascade_depth: int | None = None
    depth_jump_max: float = 0.25
    iou_fallback_threshold: float = 0.7
    gallery_size: int = 50

    def __post_init__(self) -> None:
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda weight must lie in [0, 1]")


def cosine_distance(query: np.ndarray, gallery: np.ndarray) -> float:
    """Minimum cosine distance from a unit query vector to a gallery of unit
    vectors; an empty gallery never matches (+inf)."""
    gallery = np.atleast_2d(np.asarray(gallery, dtype=float))
    if gallery.size == 0:
        return np.inf
    return float(1.0 - np.max(gallery @ np.asarray(query, dtype=float)))


def appearance_distance_matrix(galleries: list[np.ndarray],
                               embeddings: np.ndarray) -> np.ndarray:
    """Min-over-gallery cosine distances, tracks x detections.

    Galleries are stacked into a single matrix product so the per-frame cost
    is one BLAS call regardless of track count.
    """
    n_tracks = len(galleries)
    embeddings = np.atleast_2d(np.asarray(embeddings, dtype=float))
    n_dets = embeddings.shape[0]
    out = np.full((n_tracks, n_dets), np.inf)
    if n_dets == 0 or n_tracks == 0:
        return out
    sizes = [0 if g is None or len(g) == 0 else len(g) for g in galleries]
    if sum(sizes) == 0:
        return out
    stacked = np.vstack([np.atleast_2d(g) for g, s in zip(galleries, sizes) if s > 0])
    sims = stacked @ embeddings.T
    offset = 0
    for i, size in enumerate(sizes):
        if size == 0:
            continue
        out[i] = 1.0 - sims[offset:offset + size].max(axis=0)
        offset += size
    return out


def combined_cost(d_motion, d_app, lam: float, chi2_gate: float):
    """Mix the motion and appearance terms at comparable magnitudes.

    The squared Mahalanobis distance is normalized by its chi-square gate so
    both terms are O(1) before the lambda weighting.
    """
    return lam * (np.asarray(d_motion) / chi2_gate) + (1.0 - lam) * np.asarray(d_app)


def solve_assignment(costs: np.ndarray, max_cost: float):
    """Minimum-total-cost one-to-one assignment over the finite entries.

    Pairs costing more than ``max_cost`` (including gated +inf entries) are
    dissolved into the unmatched lists.

    Returns
    -------
    (pairs, unmatched_rows, unmatched_cols)
        ``pairs`` is a list of (row, col); the unmatched lists are sorted.
    """
    costs = np.atleast_2d(np.asarray(costs, dtype=float))
    n_rows, n_cols = costs.shape
    if n_rows == 0 or n_cols == 0:
        return [], list(range(n_rows)), list(range(n_cols))
    work = np.minimum(costs, max_cost + 1e-5)
    rows, cols = linear_sum_assignment(work)
    pairs = []
    matched_rows: set[int] = set()
    matched_cols: set[int] = set()
    for r, c in zip(rows, cols):
        if costs[r, c] <= max_cost:
            pairs.append((int(r), int(c)))
            matched_rows.add(int(r))
            matched_cols.add(int(c))
    unmatched_rows = [r for r in range(n_rows) if r not in matched_rows]
    unmatched_cols = [c for c in range(n_cols) if c not in matched_cols]
    return pairs, unmatched_rows, unmatched_cols


def _depth_gate_fractions(box_filter, track, det_heights: np.ndarray) -> np.ndarray:
    """Fractional depth jump each detection implies for a depth-model track."""
    z_pred = track.state.mean[3]
    implied = box_filter.cam.fy * track.state.mean[2] / det_heights
    return np.abs(implied - z_pred) / z_pred


def _gated_cost_row(box_filter, track, det_xyah, embeddings, config, dt, z=None):
    """Combined cost for one track against a detection block, gates applied.

    Appearance distances are evaluated lazily: only entries that already
    survive the motion (and depth) gates pay for the gallery product.
    """
    chi2_gate = config.chi2_gates[box_filter.kind]
    d_motion = box_filter.gating_distance(track.state, det_xyah, z)
    gated = d_motion > chi2_gate
    if box_filter.kind is MotionModel.PHYS3D:
        allowed = config.depth_jump_max * dt * 25.0
        gated |= _depth_gate_fractions(box_filter, track, det_xyah[:, 3]) > allowed
    gallery = track.gallery if embeddings is not None else None
    if gallery is None or len(gallery) == 0:
        cost = d_motion / chi2_gate
        return np.where(gated, GATED, cost)
    cost = np.full(det_xyah.shape[0], GATED)
    open_idx = np.flatnonzero(~gated)
    if open_idx.size:
        d_app = 1.0 - (gallery @ embeddings[open_idx].T).max(axis=0)
        mix = config.lam * (d_motion[open_idx] / chi2_gate) + (1.0 - config.lam) * d_app
        cost[open_idx] = np.where(d_app > config.appearance_gate, GATED, mix)
    return cost


def _gated_cost_block(box_filter, group, det_xyah, z, embeddings, config, dt):
    """Gated combined-cost matrix for a whole cascade round at once."""
    chi2_gate = config.chi2_gates[box_filter.kind]
    d_motion = box_filter.gating_distance_block([t.state for t in group], z)
    gated = d_motion > chi2_gate
    if box_filter.kind is MotionModel.PHYS3D:
        allowed = config.depth_jump_max * dt * 25.0
        heads = np.array([t.state.mean[2] for t in group])
        depths = np.array([t.state.mean[3] for t in group])
        implied = box_filter.cam.fy * heads[:, None] / det_xyah[None, :, 3]
        gated |= np.abs(implied - depths[:, None]) / depths[:, None] > allowed
    cost = np.full(d_motion.shape, GATED)
    normalized = d_motion / chi2_gate
    for i, track in enumerate(group):
        open_idx = np.flatnonzero(~gated[i])
        if not open_idx.size:
            continue
        gallery = track.gallery if embeddings is not None else None
        if gallery is None or len(gallery) == 0:
            cost[i, open_idx] = normalized[i, open_idx]
            continue
        d_app = 1.0 - (gallery @ embeddings[open_idx].T).max(axis=0)
        mix = config.lam * normalized[i, open_idx] + (1.0 - config.lam) * d_app
        cost[i, open_idx] = np.where(d_app > config.appearance_gate, GATED, mix)
    return cost


def gate(box_filter, track, det, config: AssociationConfig, dt: float) -> bool:
    """Whether a single track-detection pair survives every gate.

    ``det`` may be a full detection (box plus embedding) or a bare box, in
    which case only the motion and depth gates apply.
    """
    box = getattr(det, "box", det)
    det_xyah = np.array([[box.x, box.y, box.a, box.h]])
    embedding = getattr(det, "embedding", None)
    embeddings = None if embedding is None else np.atleast_2d(embedding)
    row = _gated_cost_row(box_filter, track, det_xyah, embeddings, config, dt)
    return bool(np.isfinite(row[0]))


def cascade_match(box_filter, tracks, detections, config: AssociationConfig,
                  dt: float, cascade_depth: int):
    """Match tracks to detections in age-ordered rounds plus an IoU fallback.

    Tracks are duck-typed: they expose ``id``, ``state``, ``gallery``,
    ``time_since_update``, and ``is_confirmed()``. Confirmed tracks enter the
    cascade grouped by time since update (most recent first); tentative tracks
    and confirmed tracks missed in the final round compete for the remaining
    detections on IoU alone.

    Returns
    -------
    (matches, unmatched_track_indices, unmatched_detection_indices)
    """
    n_tracks, n_dets = len(tracks), len(detections)
    if n_tracks == 0 or n_dets == 0:
        return [], list(range(n_tracks)), list(range(n_dets))

    det_xyah = np.array([[d.box.x, d.box.y, d.box.a, d.box.h] for d in detections])
    z_full = box_filter.measurements_of(det_xyah)
    embeddings = None
    if all(d.embedding is not None for d in detections):
        embeddings = np.array([d.embedding for d in detections])

    order = sorted(range(n_tracks), key=lambda i: tracks[i].id)
    confirmed = [i for i in order if tracks[i].is_confirmed()]
    tentative = [i for i in order if not tracks[i].is_confirmed()]

    matches: list[tuple[int, int]] = []
    matched_tracks: set[int] = set()
    unmatched_dets = list(range(n_dets))

    for age in range(1, cascade_depth + 1):
        if not unmatched_dets:
            break
        group = [i for i in confirmed if tracks[i].time_since_update == age]
        if not group:
            continue
        block = det_xyah[unmatched_dets]
        block_z = z_full[unmatched_dets]
        block_emb = embeddings[unmatched_dets] if embeddings is not None else None
        cost = _gated_cost_block(box_filter, [tracks[i] for i in group], block,
                                 block_z, block_emb, config, dt)
        pairs, _, _ = solve_assignment(cost, _CASCADE_MAX_COST)
        taken = set()
        for r, c in pairs:
            matches.append((group[r], unmatched_dets[c]))
            matched_tracks.add(group[r])
            taken.add(c)
        unmatched_dets = [d for j, d in enumerate(unmatched_dets) if j not in taken]

    # IoU fallback: tentative tracks plus confirmed ones missed this frame only.
    tentative_set = set(tentative)
    candidates = [i for i in order
                  if i in tentative_set
                  or (tracks[i].is_confirmed() and i not in matched_tracks
                      and tracks[i].time_since_update == 1)]
    if candidates and unmatched_dets:
        track_boxes = []
        for i in candidates:
            b = box_filter.to_box(tracks[i].state)
            track_boxes.append([b.x, b.y, b.a, b.h])
        cost = 1.0 - geometry.iou_matrix(np.array(track_boxes), det_xyah[unmatched_dets])
        pairs, _, _ = solve_assignment(cost, config.iou_fallback_threshold)
        taken = set()
        for r, c in pairs:
            matches.append((candidates[r], unmatched_dets[c]))
            matched_tracks.add(candidates[r])
            taken.add(c)
        unmatched_dets = [d for j, d in enumerate(unmatched_dets) if j not in taken]

    unmatched_tracks = [i for i in range(n_tracks) if i not in matched_tracks]
    return matches, unmatched_tracks, unmatched_dets
