"""Virtual counting band with persistence, plus a line-crossing baseline.

A mirrored pair of vertical bands sits near the left and right image
borders. A track is counted once for its locked side after it has stayed
inside that side's band for ``persistence_n`` consecutive emitted frames;
tracks still in-band when the video ends can be included by the end-of-video
compensation rule. The final count takes the larger of the two sides so
spurious activity on the non-platform side cannot inflate the result.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .tracker import FrameOutput, TrackStatus


class Side(Enum):
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class BandConfig:
    """Band geometry in fractions of the image width.

    ``start`` is the boundary nearer the image border, ``end`` the one nearer
    the center. ``start == end`` degenerates the band to a line and is allowed
    only for the degenerate-band experiments; membership then requires the
    center to land exactly on the boundary.
    """

    start: float = 0.05
    end: float = 0.20
    persistence_n: int = 2
    end_of_video_min: int = 1
    count_predicted: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.start <= 1.0 or not 0.0 <= self.end <= 1.0:
            raise ValueError("band boundaries must lie in [0, 1]")
        if self.start > self.end:
            raise ValueError("band start must not exceed end")
        if self.persistence_n < 1:
            raise ValueError("persistence_n must be >= 1")


@dataclass(frozen=True)
class CountResult:
    left: int
    right: int
    final: int


def band_membership(x_center: float, image_width: float, config: BandConfig) -> Side | None:
    """Side of the band pair containing the x-center, if any.

    The left interval wins if the two intervals overlap (only possible for
    end > 0.5, outside the studied configurations).
    """
    if image_width <= 0:
        raise ValueError("image width must be positive")
    u = x_center / image_width
    if config.start <= u <= config.end:
        return Side.LEFT
    if 1.0 - config.end <= u <= 1.0 - config.start:
        return Side.RIGHT
    return None


class _TrackCount:
    __slots__ = ("side", "consecutive", "counted", "in_band_at_last_obs")

    def __init__(self):
        self.side: Side | None = None
        self.consecutive = 0
        self.counted = False
        self.in_band_at_last_obs = False


class CountLedger:
    """Per-sequence counting state; feed frames in order, then finalize."""

    def __init__(self, config: BandConfig, image_width: float):
        self.config = config
        self.image_width = image_width
        self.totals = {Side.LEFT: 0, Side.RIGHT: 0}
        self._tracks: dict[int, _TrackCount] = {}

    def observe(self, frame_output: FrameOutput) -> None:
        """Account one frame of tracker output.

        Only confirmed tracks participate; coasting (predicted) boxes are
        included unless ``count_predicted`` is off. A frame without an
        eligible observation of a known track resets its consecutive run.
        """
        cfg = self.config
        seen: set[int] = set()
        for entry in frame_output.entries:
            if entry.status is not TrackStatus.CONFIRMED:
                continue
            if entry.predicted and not cfg.count_predicted:
                continue
            seen.add(entry.track_id)
            record = self._tracks.setdefault(entry.track_id, _TrackCount())
            side = band_membership(entry.box.x, self.image_width, cfg)
            if record.side is None and side is not None:
                record.side = side
            in_band = side is not None and side is record.side
            record.in_band_at_last_obs = in_band
            if in_band:
                record.consecutive += 1
                if record.consecutive >= cfg.persistence_n and not record.counted:
                    record.counted = True
                    self.totals[record.side] += 1
            else:
                record.consecutive = 0
        for track_id, record in self._tracks.items():
            if track_id not in seen:
                record.consecutive = 0

    def finalize(self) -> CountResult:
        """Apply end-of-video compensation and aggregate the two sides.

        Tracks that were in-band at their last observation with at least
        ``end_of_video_min`` consecutive in-band frames are included even if
        the persistence threshold was never reached.
        """
        for record in self._tracks.values():
            if (
                not record.counted
                and record.side is not None
                and record.in_band_at_last_obs
                and record.consecutive >= self.config.end_of_video_min
            ):
                record.counted = True
                self.totals[record.side] += 1
        left = self.totals[Side.LEFT]
        right = self.totals[Side.RIGHT]
        return CountResult(left, right, max(left, right))


def count_sequence(frame_outputs: list[FrameOutput], image_width: float,
                   config: BandConfig | None = None) -> CountResult:
    """Run the band counter over a finished sequence."""
    ledger = CountLedger(config if config is not None else BandConfig(), image_width)
    for out in frame_outputs:
        ledger.observe(out)
    return ledger.finalize()


def line_crossing_count(frame_outputs: list[FrameOutput], line_x_fraction: float,
                        image_width: float, count_predicted: bool = True) -> int:
    """Unique track ids whose x-center crosses the vertical line, either
    direction, between consecutive observations. Each id counts once.

    A center exactly on the line keeps the previous side; a crossing registers
    only when an id is observed strictly on both sides.
    """
    line_x = line_x_fraction * image_width
    last_side: dict[int, float] = {}
    crossed: set[int] = set()
    for out in frame_outputs:
        for entry in out.entries:
            if entry.status is not TrackStatus.CONFIRMED:
                continue
            if entry.predicted and not count_predicted:
                continue
            side = entry.box.x - line_x
            if side == 0.0:
                continue
            prev = last_side.get(entry.track_id)
            if prev is not None and prev * side < 0:
                crossed.add(entry.track_id)
            last_side[entry.track_id] = side
    return len(crossed)
