"""Seeded platform-approach scene generator and scripted test scenarios.

Scenes model a camera on a decelerating train: depth to the platform shrinks
under constant deceleration while near-static pedestrians, placed along the
platform, drift outward in the image and settle near the left or right
border. Ground truth follows the pinhole projection exactly; detections are
corrupted copies with jitter, misses (occlusion-conditional), and Poisson
false positives, each carrying a synthetic appearance embedding.

All randomness comes from numpy's PCG64 generator seeded from the scene seed,
with a fixed draw order, so identical configurations produce byte-identical
sequences on every run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .geometry import CameraIntrinsics, HeadBox, Point3D
from .tracker import Detection

# Camera never approaches closer than this (meters).
CAMERA_DEPTH_FLOOR = 2.0

# Ground-truth boxes below this height are treated as invisible.
MIN_VISIBLE_HEIGHT = 2.0

# Per-person box aspect ratios are drawn from this range.
ASPECT_RANGE = (0.65, 0.85)

_OCCLUSION_CONF_PENALTY = 0.2


def default_intrinsics() -> CameraIntrinsics:
    return CameraIntrinsics(fx=1000.0, fy=1000.0, cx=960.0, cy=540.0,
                            image_width=1920.0, image_height=1080.0)


@dataclass(frozen=True)
class SceneConfig:
    """Scene geometry and camera kinematics.

    When ``x_range`` is None (the default), pedestrians are placed so their
    projection at the camera's final depth lands inside ``stop_band`` of the
    image width on the scene's platform side: every target either settles
    inside the default counting band or sweeps through it on the way to the
    border, so all of them are geometrically countable. An explicit
    ``x_range`` samples lateral positions in meters instead.
    """

    seed: int = 0
    num_pedestrians: int = 20
    x_range: tuple[float, float] | None = None
    y_range: tuple[float, float] = (-0.3, 0.8)
    z_range: tuple[float, float] = (0.0, 6.0)
    head_height_mean: float = 0.3
    head_height_std: float = 0.02
    walk_std: float = 0.02
    d0: float = 18.0
    v0: float = 4.5
    decel: float = 4.5 / 7.0
    fps: float = 25.0
    duration: float = 11.0
    platform_side: str = "auto"
    stop_band: tuple[float, float] = (0.02, 0.18)
    intrinsics: CameraIntrinsics = field(default_factory=default_intrinsics)

    def __post_init__(self) -> None:
        if self.num_pedestrians < 1:
            raise ValueError("need at least one pedestrian")
        if self.fps <= 0 or self.duration <= 0:
            raise ValueError("fps and duration must be positive")
        if self.decel < 0:
            raise ValueError("deceleration must be non-negative")
        if self.platform_side not in ("left", "right", "auto"):
            raise ValueError("platform_side must be left, right, or auto")
        if min(self.head_height_mean, self.d0) <= 0:
            raise ValueError("head height and initial distance must be positive")


@dataclass(frozen=True)
class NoiseConfig:
    """Detection corruption model; all rates are per frame and independent.

    ``embedding_noise`` is the per-dimension Gaussian std added to the
    identity's base vector before renormalization; at 128 dims the default
    keeps same-identity cosine distances well inside the appearance gate
    while cross-identity distances stay near 1.
    """

    center_jitter: float = 0.05
    height_jitter: float = 0.05
    miss_rate: float = 0.15
    occlusion_iou: float = 0.3
    occlusion_miss_rate: float = 0.6
    fp_rate: float = 0.2
    embedding_dim: int = 128
    embedding_noise: float = 0.05

    def __post_init__(self) -> None:
        for rate in (self.miss_rate, self.occlusion_miss_rate):
            if not 0.0 <= rate <= 1.0:
                raise ValueError("rates must lie in [0, 1]")
        for std in (self.center_jitter, self.height_jitter, self.embedding_noise,
                    self.fp_rate):
            if std < 0:
                raise ValueError("noise magnitudes must be non-negative")
        if self.embedding_dim < 1:
            raise ValueError("embedding dimension must be positive")


def zero_noise(embedding_dim: int = 128) -> NoiseConfig:
    return NoiseConfig(center_jitter=0.0, height_jitter=0.0, miss_rate=0.0,
                       occlusion_miss_rate=0.0, fp_rate=0.0,
                       embedding_dim=embedding_dim, embedding_noise=0.0)


@dataclass(frozen=True)
class SimulatedSequence:
    """Ground truth and detections per 1-based frame, plus the per-side truth."""

    gt: dict[int, list[tuple[int, HeadBox]]]
    detections: dict[int, list[Detection]]
    true_left: int
    true_right: int
    cam: CameraIntrinsics
    fps: float
    n_frames: int

    @property
    def true_count(self) -> int:
        return self.true_left + self.true_right


def camera_depth_profile(scene: SceneConfig) -> np.ndarray:
    """Camera-to-platform depth offset per frame.

    Constant-deceleration kinematics with the speed floored at zero and the
    depth clamped at the camera floor; the profile is non-increasing.
    """
    n_frames = int(round(scene.duration * scene.fps))
    dt = 1.0 / scene.fps
    t = np.arange(n_frames) * dt
    if scene.decel > 0 and scene.v0 > 0:
        t_stop = scene.v0 / scene.decel
    else:
        t_stop = math.inf
    t_eff = np.minimum(t, t_stop)
    d = scene.d0 - scene.v0 * t_eff + 0.5 * scene.decel * t_eff ** 2
    return np.maximum(np.minimum.accumulate(d), CAMERA_DEPTH_FLOOR)


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    return matrix / np.where(norms > 0, norms, 1.0)


def generate(scene: SceneConfig, noise: NoiseConfig) -> SimulatedSequence:
    """Render a scene into per-frame ground truth and corrupted detections."""
    cam = scene.intrinsics
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(scene.seed)))
    n = scene.num_pedestrians
    depths = camera_depth_profile(scene)
    n_frames = len(depths)
    dt = 1.0 / scene.fps

    if scene.platform_side == "auto":
        side_left = bool(rng.integers(0, 2))
    else:
        side_left = scene.platform_side == "left"

    z_offsets = rng.uniform(scene.z_range[0], scene.z_range[1], n)
    heights = np.clip(
        rng.normal(scene.head_height_mean, scene.head_height_std, n), 0.1, None
    )
    aspects = rng.uniform(ASPECT_RANGE[0], ASPECT_RANGE[1], n)
    ys = rng.uniform(scene.y_range[0], scene.y_range[1], n)

    if scene.x_range is None:
        fractions = rng.uniform(scene.stop_band[0], scene.stop_band[1], n)
        pix = fractions * cam.image_width
        if not side_left:
            pix = cam.image_width - pix
        xs = (pix - cam.cx) * (depths[-1] + z_offsets) / cam.fx
    else:
        xs = rng.uniform(scene.x_range[0], scene.x_range[1], n)

    walk = rng.normal(0.0, scene.walk_std * math.sqrt(dt), (n_frames, n, 2))
    walk[0] = 0.0
    lateral = xs + np.cumsum(walk[:, :, 0], axis=0)
    vertical = ys + np.cumsum(walk[:, :, 1], axis=0)

    bases = _unit_rows(rng.standard_normal((n, noise.embedding_dim)))

    true_left = int(np.sum(xs < 0))
    true_right = n - true_left

    gt: dict[int, list[tuple[int, HeadBox]]] = {}
    detections: dict[int, list[Detection]] = {}

    for k in range(n_frames):
        frame = k + 1
        z = depths[k] + z_offsets
        x_pix = cam.cx + cam.fx * lateral[k] / z
        y_pix = cam.cy + cam.fy * vertical[k] / z
        h_pix = cam.fy * heights / z
        visible = (
            (x_pix >= 0) & (x_pix <= cam.image_width)
            & (y_pix >= 0) & (y_pix <= cam.image_height)
            & (h_pix >= MIN_VISIBLE_HEIGHT)
        )
        idx = np.flatnonzero(visible)
        frame_gt = [
            (int(i) + 1, HeadBox(float(x_pix[i]), float(y_pix[i]),
                                 float(aspects[i]), float(h_pix[i])))
            for i in idx
        ]
        gt[frame] = frame_gt

        frame_dets: list[Detection] = []
        if len(idx):
            boxes = np.stack([x_pix[idx], y_pix[idx], aspects[idx], h_pix[idx]], axis=1)
            ious = geometry.iou_matrix(boxes, boxes)
            nearer = z[idx][None, :] < z[idx][:, None]
            occluded = np.any((ious > noise.occlusion_iou) & nearer, axis=1)
            for row, i in enumerate(idx):
                miss_p = noise.miss_rate
                if occluded[row]:
                    miss_p = min(1.0, miss_p + noise.occlusion_miss_rate)
                if rng.random() < miss_p:
                    continue
                h = float(h_pix[i])
                jx = rng.normal(0.0, noise.center_jitter * h) if noise.center_jitter else 0.0
                jy = rng.normal(0.0, noise.center_jitter * h) if noise.center_jitter else 0.0
                jh = rng.normal(0.0, noise.height_jitter) if noise.height_jitter else 0.0
                box = HeadBox(float(x_pix[i]) + jx, float(y_pix[i]) + jy,
                              float(aspects[i]), max(h * (1.0 + jh), 1.0))
                if noise.embedding_noise:
                    emb = bases[i] + noise.embedding_noise * rng.standard_normal(
                        noise.embedding_dim)
                    emb = emb / np.linalg.norm(emb)
                else:
                    emb = bases[i]
                conf = 0.95 - (_OCCLUSION_CONF_PENALTY if occluded[row] else 0.0)
                frame_dets.append(Detection(box, conf, emb, source_id=int(i) + 1))

        for _ in range(rng.poisson(noise.fp_rate)):
            box = HeadBox(
                float(rng.uniform(0, cam.image_width)),
                float(rng.uniform(0, cam.image_height)),
                float(rng.uniform(*ASPECT_RANGE)),
                float(rng.uniform(8.0, 40.0)),
            )
            emb = _unit_rows(rng.standard_normal((1, noise.embedding_dim)))[0]
            conf = float(rng.uniform(0.5, 0.7))
            frame_dets.append(Detection(box, conf, emb, source_id=-1))

        detections[frame] = frame_dets

    return SimulatedSequence(gt, detections, true_left, true_right,
                             cam, scene.fps, n_frames)


# ---------------------------------------------------------------------------
# Scripted scenarios: small hand-built sequences with known correct answers.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    sequence: SimulatedSequence
    true_count: int
    expected_idsw: int = 0


def _basis_embedding(index: int, dim: int = 128) -> np.ndarray:
    v = np.zeros(dim)
    v[index % dim] = 1.0
    return v


def _scripted(cam: CameraIntrinsics, fps: float, depths: np.ndarray,
              peds: list[dict], drops: set[tuple[int, int]]) -> SimulatedSequence:
    """Project scripted 3D pedestrian paths into a noiseless sequence.

    ``peds`` entries carry: lateral (scalar or per-frame array), vertical,
    head_height, aspect, depth_offset. ``drops`` holds (1-based frame,
    pedestrian index) pairs whose detections are omitted.
    """
    n_frames = len(depths)
    gt: dict[int, list[tuple[int, HeadBox]]] = {}
    detections: dict[int, list[Detection]] = {}
    left = right = 0
    for i, ped in enumerate(peds):
        lat = np.asarray(ped["lateral"], dtype=float)
        first = lat.flat[0] if lat.ndim else float(lat)
        if first < 0:
            left += 1
        else:
            right += 1
    for k in range(n_frames):
        frame = k + 1
        frame_gt = []
        frame_dets = []
        for i, ped in enumerate(peds):
            lat = ped["lateral"]
            x_lat = float(lat[k]) if isinstance(lat, np.ndarray) else float(lat)
            z = float(depths[k]) + ped.get("depth_offset", 0.0)
            x, y = geometry.project(Point3D(x_lat, ped["vertical"], z), cam)
            box = HeadBox(x, y, ped["aspect"], cam.fy * ped["head_height"] / z)
            frame_gt.append((i + 1, box))
            if (frame, i) not in drops:
                frame_dets.append(
                    Detection(box, 0.95, _basis_embedding(i), source_id=i + 1)
                )
        gt[frame] = frame_gt
        detections[frame] = frame_dets
    return SimulatedSequence(gt, detections, left, right, cam, fps, n_frames)


def _quadratic_depths(d0: float, v0: float, decel: float, fps: float,
                      n_frames: int) -> np.ndarray:
    t = np.arange(n_frames) / fps
    t_stop = v0 / decel if decel > 0 and v0 > 0 else math.inf
    t_eff = np.minimum(t, t_stop)
    d = d0 - v0 * t_eff + 0.5 * decel * t_eff ** 2
    return np.maximum(np.minimum.accumulate(d), CAMERA_DEPTH_FLOOR)


def scripted_scenarios() -> dict[str, Scenario]:
    """Hand-built fixtures with analytically known counts and id structure."""
    cam = default_intrinsics()
    fps = 25.0
    scenarios: dict[str, Scenario] = {}

    # A single target settles inside the left band, then its detections drop
    # for three frames well after the persistence threshold was met.
    depths = _quadratic_depths(d0=12.0, v0=3.0, decel=0.75, fps=fps, n_frames=150)
    ped = {"lateral": -4.3776, "vertical": 0.2, "head_height": 0.3, "aspect": 0.75}
    drops = {(f, 0) for f in (120, 121, 122)}
    scenarios["occlusion-3"] = Scenario(
        name="occlusion-3",
        description="3-frame mid-band occlusion after the count fired; "
                    "de-duplication must keep the count at one",
        sequence=_scripted(cam, fps, depths, [ped], drops),
        true_count=1,
    )

    # Two same-side targets whose image paths cross mid-approach; orthogonal
    # embeddings disambiguate the crossing.
    depths = _quadratic_depths(d0=12.0, v0=3.0, decel=0.75, fps=fps, n_frames=150)
    ped_a = {"lateral": -4.4006, "vertical": -0.1, "head_height": 0.3, "aspect": 0.75}
    ped_b = {"lateral": -6.528, "vertical": 0.35, "head_height": 0.3, "aspect": 0.70,
             "depth_offset": 4.0}
    scenarios["crossing-pair"] = Scenario(
        name="crossing-pair",
        description="image-plane crossing of two identities; ids must survive "
                    "and both count once",
        sequence=_scripted(cam, fps, depths, [ped_a, ped_b], set()),
        true_count=2,
    )

    # A static target jitters +-1 px around the band start; every outward dip
    # coincides with a dropped detection, so a crossing line at the band start
    # never observes both sides while the band still counts the target.
    n_frames = 60
    depths = np.full(n_frames, 6.0)
    x_pix = np.full(n_frames, 97.0)
    drops = set()
    for k in range(10, n_frames):
        if (k - 10) % 3 == 1:
            x_pix[k] = 95.0
            drops.add((k + 1, 0))
    lateral = (x_pix - cam.cx) * 6.0 / cam.fx
    ped = {"lateral": lateral, "vertical": 0.0, "head_height": 0.3, "aspect": 0.75}
    scenarios["edge-jitter"] = Scenario(
        name="edge-jitter",
        description="band-start jitter with crossings falling on dropped "
                    "frames: band counts, line misses",
        sequence=_scripted(cam, fps, depths, [ped], drops),
        true_count=1,
    )

    # The target's first in-band frame is the last frame of the video; only
    # the end-of-video compensation can include it.
    long_depths = _quadratic_depths(d0=16.0, v0=2.5, decel=0.25, fps=fps, n_frames=300)
    x_lat = -5.184
    entry = None
    for k in range(len(long_depths)):
        x = cam.cx + cam.fx * x_lat / long_depths[k]
        if 0.05 * cam.image_width <= x <= 0.20 * cam.image_width:
            entry = k
            break
    assert entry is not None and entry > 10
    depths = long_depths[: entry + 1]
    ped = {"lateral": x_lat, "vertical": 0.1, "head_height": 0.3, "aspect": 0.75}
    scenarios["end-partial"] = Scenario(
        name="end-partial",
        description="band entry on the final frame; counted only through "
                    "end-of-video compensation",
        sequence=_scripted(cam, fps, depths, [ped], set()),
        true_count=1,
    )

    return scenarios
