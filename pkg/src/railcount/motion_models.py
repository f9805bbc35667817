"""Kalman state-space models for head tracking.

Three interchangeable filters share one interface: image-plane constant
velocity (8-dim) and constant acceleration (12-dim) box filters, and a
6-dim depth-aware filter that estimates camera-frame position, physical
head height, and depth kinematics under a constant-deceleration approach.

States are values (:class:`KalmanState`); filter objects hold only the
camera and noise configuration and are safe to share across tracks.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import geometry, kernels
from .geometry import MIN_DEPTH, CameraIntrinsics, HeadBox

# Smoothing weight for the depth model's out-of-state aspect ratio.
ASPECT_EMA_BETA = 0.3

# Floor for the estimated physical head height (meters).
MIN_HEAD_HEIGHT = 0.01


class MotionModel(str, Enum):
    CV8D = "cv8d"
    CA12D = "ca12d"
    PHYS3D = "phys3d"


@dataclass(frozen=True)
class NoiseScales:
    """Process and measurement noise configuration.

    Image-plane scales follow the DeepSORT heuristics (stds proportional to
    the current box height, applied per frame). Depth-model process noise is
    given as continuous-time densities per sqrt(second). Measurement stds for
    x, y, h are ``max(meas_floor_px, meas_std_factor * h)`` pixels for every
    model; the aspect-ratio measurement std applies to the box filters only.
    """

    pos_std_factor: float = 1.0 / 20.0
    vel_std_factor: float = 1.0 / 160.0
    acc_std_factor: float = 1.0 / 320.0
    aspect_std: float = 1e-2
    aspect_vel_std: float = 1e-5
    aspect_acc_std: float = 1e-5
    meas_std_factor: float = 0.05
    meas_floor_px: float = 1.0
    meas_aspect_std: float = 0.1
    lateral_walk_std: float = 0.05
    height_walk_std: float = 0.01
    depth_std: float = 0.1
    depth_vel_std: float = 0.5
    depth_acc_std: float = 0.5
    ego_velocity_prior: float = 0.0
    initial_head_height: float = geometry.DEFAULT_HEAD_HEIGHT


@dataclass
class KalmanState:
    """Filter state value: mean vector, covariance, and (depth model only) the
    smoothed aspect ratio kept outside the state vector."""

    mean: np.ndarray
    covariance: np.ndarray
    aspect_ema: float | None = None


def _batched_mahalanobis(s_mat: np.ndarray, innovations: np.ndarray) -> np.ndarray:
    """Squared Mahalanobis distances for stacked systems.

    ``s_mat`` is (g, m, m), ``innovations`` (g, d, m); returns (g, d).
    A singular matrix anywhere falls back to +inf rows for the affected
    states (they never match).
    """
    rhs = innovations.transpose(0, 2, 1)
    try:
        sol = np.linalg.solve(s_mat, rhs)
    except np.linalg.LinAlgError:
        out = np.empty(innovations.shape[:2])
        for i in range(s_mat.shape[0]):
            try:
                sol_i = np.linalg.solve(s_mat[i], rhs[i])
            except np.linalg.LinAlgError:
                out[i] = np.inf
                continue
            out[i] = np.sum(rhs[i] * sol_i, axis=0)
        return out
    return np.sum(rhs * sol, axis=1)


class _ImageBoxFilter:
    """Shared machinery for the linear image-plane box filters.

    State layout is ``[x, y, a, h]`` followed by one (velocity) or two
    (velocity, acceleration) derivative blocks. The observation is the box
    itself, ``z = [x, y, a, h]``.

    The height-proportional noise heuristics are per-frame quantities in
    frame units (px, px/frame, px/frame^2); derivatives live in per-second
    units, so the std factors are divided by the frame interval's matching
    power when building covariances.
    """

    kind: MotionModel
    order: int

    def __init__(self, cam: CameraIntrinsics, noise: NoiseScales | None = None,
                 fps: float = 25.0):
        if fps <= 0:
            raise ValueError("fps must be positive")
        self.cam = cam
        self.noise = noise if noise is not None else NoiseScales()
        self.frame_dt = 1.0 / fps
        self.ndim = 4 * (self.order + 1)
        self.meas_dim = 4
        self._obs = np.eye(4, self.ndim)
        self._transition_cache: dict[float, np.ndarray] = {}

    # -- measurement plumbing ------------------------------------------------

    def measurement_of(self, det: HeadBox) -> np.ndarray:
        return np.array([det.x, det.y, det.a, det.h])

    def measurements_of(self, boxes_xyah: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(boxes_xyah, dtype=float)

    def _meas_noise(self, h: float) -> np.ndarray:
        s = max(self.noise.meas_floor_px, self.noise.meas_std_factor * h)
        r = np.zeros((4, 4))
        r[0, 0] = r[1, 1] = r[3, 3] = s * s
        r[2, 2] = self.noise.meas_aspect_std ** 2
        return r

    # -- model matrices ------------------------------------------------------

    def _transition(self, dt: float) -> np.ndarray:
        cached = self._transition_cache.get(dt)
        if cached is not None:
            return cached
        f = np.eye(self.ndim)
        for i in range(4):
            f[i, 4 + i] = dt
        if self.order >= 2:
            for i in range(4):
                f[i, 8 + i] = 0.5 * dt * dt
                f[4 + i, 8 + i] = dt
        self._transition_cache[dt] = f
        return f

    def _process_noise(self, h: float, dt: float) -> np.ndarray:
        nz = self.noise
        vel = 1.0 / dt
        stds = [nz.pos_std_factor * h] * 2 + [nz.aspect_std, nz.pos_std_factor * h]
        stds += [nz.vel_std_factor * h * vel] * 2 \
            + [nz.aspect_vel_std * vel, nz.vel_std_factor * h * vel]
        if self.order >= 2:
            acc = vel * vel
            stds += [nz.acc_std_factor * h * acc] * 2 \
                + [nz.aspect_acc_std * acc, nz.acc_std_factor * h * acc]
        return np.diag(np.square(stds))

    # -- filter interface ----------------------------------------------------

    def initiate(self, det: HeadBox) -> KalmanState:
        """New state from an unassociated detection; derivatives start at zero."""
        nz = self.noise
        mean = np.zeros(self.ndim)
        mean[:4] = self.measurement_of(det)
        h = det.h
        vel = 1.0 / self.frame_dt
        stds = [2 * nz.pos_std_factor * h] * 2 + [nz.aspect_std, 2 * nz.pos_std_factor * h]
        stds += [10 * nz.vel_std_factor * h * vel] * 2 \
            + [nz.aspect_vel_std * vel, 10 * nz.vel_std_factor * h * vel]
        if self.order >= 2:
            # acceleration prior kept at the per-frame tier: converting the
            # 10x velocity heuristic to per-second^2 would allow absurd
            # curvature hypotheses and ill-conditions the covariance
            acc = vel * vel
            stds += [nz.acc_std_factor * h * acc] * 2 \
                + [nz.aspect_acc_std * acc, nz.acc_std_factor * h * acc]
        return KalmanState(mean, np.diag(np.square(stds)))

    def predict(self, state: KalmanState, dt: float) -> KalmanState:
        if dt <= 0:
            raise ValueError("dt must be positive")
        h = max(state.mean[3], 1.0)
        mean, cov = kernels.kf_predict(
            state.mean, state.covariance, self._transition(dt), self._process_noise(h, dt)
        )
        return KalmanState(mean, cov, state.aspect_ema)

    def update(self, state: KalmanState, det: HeadBox) -> KalmanState:
        z = self.measurement_of(det)
        innovation = z - self._obs @ state.mean
        mean, cov = kernels.kf_update(
            state.mean,
            state.covariance,
            self._obs,
            self._meas_noise(max(state.mean[3], 1.0)),
            innovation,
        )
        return KalmanState(mean, cov, state.aspect_ema)

    def gating_distance(self, state: KalmanState, boxes_xyah: np.ndarray,
                        z: np.ndarray | None = None) -> np.ndarray:
        """Squared Mahalanobis distance from the predicted measurement to each box.

        ``z`` may carry the precomputed measurement block for the same boxes
        (one extraction shared across tracks in a matching round).
        """
        if z is None:
            z = self.measurements_of(boxes_xyah)
        innovations = z - state.mean[:4]
        return kernels.kf_gating(
            state.covariance,
            self._obs,
            self._meas_noise(max(state.mean[3], 1.0)),
            np.ascontiguousarray(innovations),
        )

    def gating_distance_block(self, states: list[KalmanState],
                              z: np.ndarray) -> np.ndarray:
        """Gating distances for several states against one measurement block,
        stacked into batched linear algebra (one solve instead of per-track
        kernel calls)."""
        means = np.stack([s.mean for s in states])
        covs = np.stack([s.covariance for s in states])
        s_std = np.maximum(self.noise.meas_floor_px,
                           self.noise.meas_std_factor * np.maximum(means[:, 3], 1.0))
        s_mat = covs[:, :4, :4].copy()
        pos = np.array([0, 1, 3])
        s_mat[:, pos, pos] += np.square(s_std)[:, None]
        s_mat[:, 2, 2] += self.noise.meas_aspect_std ** 2
        innovations = z[None, :, :] - means[:, None, :4]
        return _batched_mahalanobis(s_mat, innovations)

    def to_box(self, state: KalmanState) -> HeadBox:
        m = state.mean
        return HeadBox(m[0], m[1], max(m[2], 1e-3), max(m[3], 1e-3))


class CV8DFilter(_ImageBoxFilter):
    """Constant-velocity box filter, state ``[x, y, a, h, vx, vy, va, vh]``."""

    kind = MotionModel.CV8D
    order = 1


class CA12DFilter(_ImageBoxFilter):
    """Constant-acceleration box filter, 12-dim state with velocity and
    acceleration blocks."""

    kind = MotionModel.CA12D
    order = 2


class Phys3DFilter:
    """Depth-aware extended Kalman filter.

    State ``[X, Y, H, Z, dZ, ddZ]``: camera-frame position in meters, physical
    head height, depth, depth velocity, and depth acceleration. X, Y, H follow
    a random walk; the depth block propagates constant-acceleration kinematics.
    The measurement ``m = [x, y, h]`` (pixel center and box height) relates to
    the state through the pinhole model and is linearized per update. The box
    aspect ratio is tracked outside the state as an exponential moving average.
    """

    kind = MotionModel.PHYS3D
    order = 0

    def __init__(self, cam: CameraIntrinsics, noise: NoiseScales | None = None,
                 fps: float = 25.0):
        self.cam = cam
        self.noise = noise if noise is not None else NoiseScales()
        self.frame_dt = 1.0 / fps
        self.ndim = 6
        self.meas_dim = 3
        self._model_cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    def measurement_of(self, det: HeadBox) -> np.ndarray:
        return np.array([det.x, det.y, det.h])

    def measurements_of(self, boxes_xyah: np.ndarray) -> np.ndarray:
        boxes = np.atleast_2d(np.asarray(boxes_xyah, dtype=float))
        return np.ascontiguousarray(boxes[:, (0, 1, 3)])

    def _meas_noise(self, h: float) -> np.ndarray:
        s = max(self.noise.meas_floor_px, self.noise.meas_std_factor * h)
        r = np.zeros((3, 3))
        r[0, 0] = r[1, 1] = r[2, 2] = s * s
        return r

    def _model_matrices(self, dt: float) -> tuple[np.ndarray, np.ndarray]:
        cached = self._model_cache.get(dt)
        if cached is not None:
            return cached
        f = np.eye(6)
        f[3, 4] = dt
        f[3, 5] = 0.5 * dt * dt
        f[4, 5] = dt
        nz = self.noise
        densities = np.array(
            [
                nz.lateral_walk_std,
                nz.lateral_walk_std,
                nz.height_walk_std,
                nz.depth_std,
                nz.depth_vel_std,
                nz.depth_acc_std,
            ]
        )
        q = np.diag(np.square(densities) * dt)
        self._model_cache[dt] = (f, q)
        return f, q

    def predicted_measurement(self, mean: np.ndarray) -> np.ndarray:
        """Nonlinear measurement function m(state) = [x, y, h]."""
        cam = self.cam
        z = mean[3]
        return np.array(
            [
                cam.cx + cam.fx * mean[0] / z,
                cam.cy + cam.fy * mean[1] / z,
                cam.fy * mean[2] / z,
            ]
        )

    def _measurement_model(self, mean: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Predicted measurement and its Jacobian in one pass (shared terms)."""
        cam = self.cam
        z = mean[3]
        if z <= 0:
            raise ValueError("behind camera: Z must be positive")
        fx_z = cam.fx / z
        fy_z = cam.fy / z
        m = np.array([cam.cx + fx_z * mean[0], cam.cy + fy_z * mean[1], fy_z * mean[2]])
        jac = np.zeros((3, 6))
        jac[0, 0] = fx_z
        jac[0, 3] = -fx_z * mean[0] / z
        jac[1, 1] = fy_z
        jac[1, 3] = -fy_z * mean[1] / z
        jac[2, 2] = fy_z
        jac[2, 3] = -fy_z * mean[2] / z
        return m, jac

    def implied_depth(self, state: KalmanState, det_h: float) -> float:
        """Depth a detection's box height implies under the state's head height."""
        if det_h <= 0:
            raise ValueError("non-positive box height")
        return self.cam.fy * state.mean[2] / det_h

    def initiate(self, det: HeadBox) -> KalmanState:
        """Back-project the detection at the configured head height; the depth
        velocity starts at the ego prior (zero by default)."""
        h0 = self.noise.initial_head_height
        p = geometry.backproject(det, h0, self.cam)
        mean = np.array([p.x, p.y, h0, p.z, self.noise.ego_velocity_prior, 0.0])
        stds = np.array([0.5, 0.5, 0.05, 0.2 * p.z, 2.0, 1.0])
        return KalmanState(mean, np.diag(np.square(stds)), aspect_ema=det.a)

    def predict(self, state: KalmanState, dt: float) -> KalmanState:
        if dt <= 0:
            raise ValueError("dt must be positive")
        transition, process_noise = self._model_matrices(dt)
        mean, cov = kernels.kf_predict(state.mean, state.covariance,
                                       transition, process_noise)
        mean[3] = max(mean[3], MIN_DEPTH)
        return KalmanState(mean, cov, state.aspect_ema)

    def update(self, state: KalmanState, det: HeadBox) -> KalmanState:
        predicted, jac = self._measurement_model(state.mean)
        innovation = self.measurement_of(det) - predicted
        mean, cov = kernels.kf_update(
            state.mean,
            state.covariance,
            jac,
            self._meas_noise(max(predicted[2], 1.0)),
            innovation,
        )
        mean[3] = max(mean[3], MIN_DEPTH)
        mean[2] = max(mean[2], MIN_HEAD_HEIGHT)
        beta = ASPECT_EMA_BETA
        ema = state.aspect_ema if state.aspect_ema is not None else det.a
        return KalmanState(mean, cov, (1.0 - beta) * ema + beta * det.a)

    def gating_distance(self, state: KalmanState, boxes_xyah: np.ndarray,
                        z: np.ndarray | None = None) -> np.ndarray:
        if z is None:
            z = self.measurements_of(boxes_xyah)
        predicted, jac = self._measurement_model(state.mean)
        return kernels.kf_gating(
            state.covariance,
            jac,
            self._meas_noise(max(predicted[2], 1.0)),
            np.ascontiguousarray(z - predicted),
        )

    def gating_distance_block(self, states: list[KalmanState],
                              z: np.ndarray) -> np.ndarray:
        """Batched linearized gating for several states against one block."""
        cam = self.cam
        g = len(states)
        means = np.stack([s.mean for s in states])
        covs = np.stack([s.covariance for s in states])
        depth = means[:, 3]
        fx_z = cam.fx / depth
        fy_z = cam.fy / depth
        predicted = np.stack([
            cam.cx + fx_z * means[:, 0],
            cam.cy + fy_z * means[:, 1],
            fy_z * means[:, 2],
        ], axis=1)
        jac = np.zeros((g, 3, 6))
        jac[:, 0, 0] = fx_z
        jac[:, 0, 3] = -fx_z * means[:, 0] / depth
        jac[:, 1, 1] = fy_z
        jac[:, 1, 3] = -fy_z * means[:, 1] / depth
        jac[:, 2, 2] = fy_z
        jac[:, 2, 3] = -fy_z * means[:, 2] / depth
        s_std = np.maximum(self.noise.meas_floor_px,
                           self.noise.meas_std_factor * np.maximum(predicted[:, 2], 1.0))
        s_mat = jac @ covs @ jac.transpose(0, 2, 1)
        diag = np.arange(3)
        s_mat[:, diag, diag] += np.square(s_std)[:, None]
        innovations = z[None, :, :] - predicted[:, None, :]
        return _batched_mahalanobis(s_mat, innovations)

    def to_box(self, state: KalmanState) -> HeadBox:
        m = state.mean
        z = m[3]
        aspect = state.aspect_ema if state.aspect_ema is not None else 0.75
        return HeadBox(
            self.cam.cx + self.cam.fx * m[0] / z,
            self.cam.cy + self.cam.fy * m[1] / z,
            max(aspect, 1e-3),
            max(self.cam.fy * m[2] / z, 1e-3),
        )


BoxFilter = CV8DFilter | CA12DFilter | Phys3DFilter


def make_filter(model: MotionModel, cam: CameraIntrinsics,
                noise: NoiseScales | None = None, fps: float = 25.0) -> BoxFilter:
    """Construct the filter implementing the requested motion model."""
    model = MotionModel(model)
    if model is MotionModel.CV8D:
        return CV8DFilter(cam, noise, fps)
    if model is MotionModel.CA12D:
        return CA12DFilter(cam, noise, fps)
    return Phys3DFilter(cam, noise, fps)
