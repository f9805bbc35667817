"""Per-sequence track lifecycle and the predict / match / update loop.

One :class:`Tracker` instance handles one sequence from a single thread;
distinct sequences may run in parallel freely. Given identical inputs and
configuration the emitted outputs are identical across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import association
from .association import AssociationConfig
from .geometry import CameraIntrinsics, HeadBox
from .motion_models import KalmanState, MotionModel, NoiseScales, make_filter


class TrackStatus(Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    DELETED = "deleted"


@dataclass(frozen=True)
class Detection:
    """A detector output: head box, confidence, optional appearance embedding.

    ``source_id`` is a debug channel used by the simulator: the originating
    ground-truth identity, or -1 for synthetic false positives. It is None
    for detections read from files and never influences tracking.
    """

    box: HeadBox
    confidence: float
    embedding: np.ndarray | None = None
    source_id: int | None = None


@dataclass(frozen=True)
class TrackerConfig:
    model: MotionModel = MotionModel.PHYS3D
    n_init: int = 3
    max_age: int = 30
    min_confidence: float = 0.5
    fps: float = 25.0
    use_appearance: bool = True
    association: AssociationConfig = field(default_factory=AssociationConfig)
    noise: NoiseScales = field(default_factory=NoiseScales)

    def __post_init__(self) -> None:
        if self.n_init < 1:
            raise ValueError("n_init must be >= 1")
        if self.max_age < 1:
            raise ValueError("max_age must be >= 1")
        if self.fps <= 0:
            raise ValueError("fps must be positive")


class Track:
    """Mutable per-target record owned by a tracker.

    The appearance gallery is a fixed-capacity ring buffer; ``gallery``
    exposes the filled rows as an array view (order is irrelevant for
    min-distance pooling).
    """

    __slots__ = ("id", "state", "status", "hits", "time_since_update",
                 "created_frame", "_gallery_buf", "_gallery_n", "_gallery_pos",
                 "_gallery_size")

    def __init__(self, track_id: int, state: KalmanState, created_frame: int,
                 embedding: np.ndarray | None, gallery_size: int):
        self.id = track_id
        self.state = state
        self.status = TrackStatus.TENTATIVE
        self.hits = 1
        self.time_since_update = 0
        self.created_frame = created_frame
        self._gallery_buf: np.ndarray | None = None
        self._gallery_n = 0
        self._gallery_pos = 0
        self._gallery_size = gallery_size
        self.add_embedding(embedding)

    def is_confirmed(self) -> bool:
        return self.status is TrackStatus.CONFIRMED

    def add_embedding(self, embedding: np.ndarray | None) -> None:
        if embedding is None:
            return
        if self._gallery_buf is None:
            self._gallery_buf = np.empty((self._gallery_size, len(embedding)))
        self._gallery_buf[self._gallery_pos] = embedding
        self._gallery_pos = (self._gallery_pos + 1) % self._gallery_size
        self._gallery_n = min(self._gallery_n + 1, self._gallery_size)

    @property
    def gallery(self) -> np.ndarray | None:
        if self._gallery_buf is None:
            return None
        return self._gallery_buf[: self._gallery_n]


@dataclass(frozen=True)
class TrackEntry:
    track_id: int
    box: HeadBox
    status: TrackStatus
    predicted: bool


@dataclass(frozen=True)
class FrameOutput:
    frame: int
    entries: tuple[TrackEntry, ...]


# Confirmed tracks coast through short occlusions: predicted boxes are emitted
# while time_since_update stays within this bound.
MAX_COAST_FRAMES = 2


class Tracker:
    def __init__(self, config: TrackerConfig, cam: CameraIntrinsics):
        self.config = config
        self.cam = cam
        self.filter = make_filter(config.model, cam, config.noise, fps=config.fps)
        self._cascade_depth = (
            config.association.cascade_depth
            if config.association.cascade_depth is not None
            else config.max_age
        )
        self._tracks: list[Track] = []
        self._next_id = 1
        self._last_frame: int | None = None

    @property
    def tracks(self) -> list[Track]:
        return list(self._tracks)

    def step(self, frame_index: int, detections: list[Detection]) -> FrameOutput:
        """Advance the tracker by one frame and emit the surviving tracks.

        Frame indices must be strictly increasing across calls.
        """
        if self._last_frame is not None and frame_index <= self._last_frame:
            raise ValueError(
                f"frame indices must be strictly increasing "
                f"(got {frame_index} after {self._last_frame})"
            )
        self._last_frame = frame_index
        cfg = self.config
        dt = 1.0 / cfg.fps

        dets = [d for d in detections if d.confidence >= cfg.min_confidence]
        if not cfg.use_appearance:
            dets = [Detection(d.box, d.confidence, None, d.source_id) for d in dets]

        for track in self._tracks:
            track.state = self.filter.predict(track.state, dt)
            track.time_since_update += 1

        matches, unmatched_tracks, unmatched_dets = association.cascade_match(
            self.filter, self._tracks, dets, cfg.association, dt, self._cascade_depth
        )

        for ti, di in matches:
            track = self._tracks[ti]
            det = dets[di]
            try:
                track.state = self.filter.update(track.state, det.box)
            except np.linalg.LinAlgError:
                # Degenerate innovation covariance: drop the track, recycle
                # the detection into a fresh one.
                track.status = TrackStatus.DELETED
                unmatched_dets.append(di)
                continue
            track.hits += 1
            track.time_since_update = 0
            track.add_embedding(det.embedding)
            if track.status is TrackStatus.TENTATIVE and track.hits >= cfg.n_init:
                track.status = TrackStatus.CONFIRMED

        for ti in unmatched_tracks:
            track = self._tracks[ti]
            if track.status is TrackStatus.TENTATIVE:
                track.status = TrackStatus.DELETED
            elif track.time_since_update > cfg.max_age:
                track.status = TrackStatus.DELETED

        for di in sorted(unmatched_dets):
            det = dets[di]
            state = self.filter.initiate(det.box)
            track = Track(self._next_id, state, frame_index, det.embedding,
                          cfg.association.gallery_size)
            self._next_id += 1
            if cfg.n_init <= 1:
                track.status = TrackStatus.CONFIRMED
            self._tracks.append(track)

        entries = []
        for track in self._tracks:
            if track.status is TrackStatus.DELETED:
                continue
            if track.status is TrackStatus.CONFIRMED:
                if track.time_since_update > MAX_COAST_FRAMES:
                    continue
                entries.append(TrackEntry(
                    track.id, self.filter.to_box(track.state),
                    TrackStatus.CONFIRMED, track.time_since_update > 0
                ))
            elif track.time_since_update == 0:
                entries.append(TrackEntry(
                    track.id, self.filter.to_box(track.state),
                    TrackStatus.TENTATIVE, False
                ))
        entries.sort(key=lambda e: e.track_id)

        self._tracks = [t for t in self._tracks if t.status is not TrackStatus.DELETED]
        return FrameOutput(frame_index, tuple(entries))


def run_sequence(detections_by_frame, config: TrackerConfig,
                 cam: CameraIntrinsics) -> list[FrameOutput]:
    """Track a whole sequence.

    ``detections_by_frame`` maps frame index to a detection list; every frame
    in ``[min, max]`` of the keys is stepped, missing ones as empty frames.
    """
    tracker = Tracker(config, cam)
    if not detections_by_frame:
        return []
    first = min(detections_by_frame)
    last = max(detections_by_frame)
    outputs = []
    for frame in range(first, last + 1):
        outputs.append(tracker.step(frame, detections_by_frame.get(frame, [])))
    return outputs


def to_frame_mapping(outputs: list[FrameOutput], include_predicted: bool = True
                     ) -> dict[int, list[tuple[int, HeadBox]]]:
    """Confirmed-track view of tracker output, as metrics and writers consume it."""
    mapping: dict[int, list[tuple[int, HeadBox]]] = {}
    for out in outputs:
        rows = [
            (e.track_id, e.box)
            for e in out.entries
            if e.status is TrackStatus.CONFIRMED and (include_predicted or not e.predicted)
        ]
        mapping[out.frame] = rows
    return mapping
