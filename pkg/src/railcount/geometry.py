"""Pinhole-camera geometry linking 2D head boxes to 3D camera-frame positions.

All functions are pure and operate on value types; they are safe to call
concurrently. Depth inversions are clamped at ``MIN_DEPTH`` to guard the
projective singularity at Z -> 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Depth floor (meters) applied to every geometric inversion.
MIN_DEPTH = 0.5

# Head height (meters) used to seed depth estimates from box height.
DEFAULT_HEAD_HEIGHT = 0.3


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels. The principal point must lie inside the image."""

    fx: float
    fy: float
    cx: float
    cy: float
    image_width: float
    image_height: float

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValueError("image dimensions must be positive")
        if not 0 <= self.cx <= self.image_width:
            raise ValueError("principal point cx outside image")
        if not 0 <= self.cy <= self.image_height:
            raise ValueError("principal point cy outside image")


@dataclass(frozen=True)
class Point3D:
    """Camera-frame position in meters: x lateral, y vertical, z along the optical axis."""

    x: float
    y: float
    z: float


@dataclass(frozen=True)
class HeadBox:
    """Center-based head box: pixel center (x, y), aspect ratio a = w/h, height h."""

    x: float
    y: float
    a: float
    h: float

    def __post_init__(self) -> None:
        if self.h <= 0:
            raise ValueError("non-positive box height")
        if self.a <= 0:
            raise ValueError("non-positive aspect ratio")

    @property
    def w(self) -> float:
        return self.a * self.h

    def to_tlwh(self) -> tuple[float, float, float, float]:
        """(left, top, width, height) corner representation."""
        w = self.w
        return self.x - w / 2.0, self.y - self.h / 2.0, w, self.h

    @classmethod
    def from_tlwh(cls, left: float, top: float, width: float, height: float) -> "HeadBox":
        if width <= 0 or height <= 0:
            raise ValueError("non-positive box dimension")
        return cls(left + width / 2.0, top + height / 2.0, width / height, height)


def project(point: Point3D, cam: CameraIntrinsics) -> tuple[float, float]:
    """Project a 3D camera-frame point to pixel coordinates.

    Parameters
    ----------
    point : Point3D
        Position in meters; ``point.z`` must be positive.
    cam : CameraIntrinsics

    Returns
    -------
    (x, y)
        Pixel coordinates ``x = cx + fx * X / Z``, ``y = cy + fy * Y / Z``.
    """
    if point.z <= 0:
        raise ValueError("behind camera: Z must be positive for projection")
    return (
        cam.cx + cam.fx * point.x / point.z,
        cam.cy + cam.fy * point.y / point.z,
    )


def depth_from_height(h: float, head_height: float, cam: CameraIntrinsics,
                      min_depth: float = MIN_DEPTH) -> float:
    """Depth implied by an observed box height for a known physical head height.

    ``Z = fy * H / h``, clamped at ``min_depth``.
    """
    if h <= 0:
        raise ValueError("non-positive box height")
    if head_height <= 0:
        raise ValueError("non-positive head height")
    return max(cam.fy * head_height / h, min_depth)


def backproject(box: HeadBox, head_height: float, cam: CameraIntrinsics,
                min_depth: float = MIN_DEPTH) -> Point3D:
    """Invert the pinhole projection for a head box of known physical height.

    Depth comes from the box height via ``depth_from_height``; the lateral and
    vertical coordinates follow from inverting the projection at that depth.
    """
    z = depth_from_height(box.h, head_height, cam, min_depth)
    return Point3D(
        (box.x - cam.cx) * z / cam.fx,
        (box.y - cam.cy) * z / cam.fy,
        z,
    )


def measurement_jacobian(state_mean: np.ndarray, cam: CameraIntrinsics) -> np.ndarray:
    """Jacobian of the measurement m = [x, y, h] w.r.t. the 6-dim depth-model state.

    State layout is ``[X, Y, H, Z, dZ, ddZ]``. Only the first four entries
    influence the measurement; the depth-derivative columns are zero.

    Returns
    -------
    ndarray, shape (3, 6)
    """
    x_lat, y_vert, head_h, z = (float(state_mean[i]) for i in range(4))
    if z <= 0:
        raise ValueError("behind camera: Z must be positive")
    jac = np.zeros((3, 6))
    jac[0, 0] = cam.fx / z
    jac[0, 3] = -cam.fx * x_lat / (z * z)
    jac[1, 1] = cam.fy / z
    jac[1, 3] = -cam.fy * y_vert / (z * z)
    jac[2, 2] = cam.fy / z
    jac[2, 3] = -cam.fy * head_h / (z * z)
    return jac


def iou(box_a: HeadBox, box_b: HeadBox) -> float:
    """Intersection-over-union of two center-based boxes."""
    la, ta, wa, ha = box_a.to_tlwh()
    lb, tb, wb, hb = box_b.to_tlwh()
    ix = max(0.0, min(la + wa, lb + wb) - max(la, lb))
    iy = max(0.0, min(ta + ha, tb + hb) - max(ta, tb))
    inter = ix * iy
    union = wa * ha + wb * hb - inter
    return inter / union if union > 0 else 0.0


def iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """Pairwise IoU for two arrays of boxes in ``[x, y, a, h]`` rows.

    Returns an ``(len(a), len(b))`` matrix.
    """
    boxes_a = np.atleast_2d(np.asarray(boxes_a, dtype=float))
    boxes_b = np.atleast_2d(np.asarray(boxes_b, dtype=float))
    if boxes_a.size == 0 or boxes_b.size == 0:
        return np.zeros((boxes_a.shape[0], boxes_b.shape[0]))

    def corners(b: np.ndarray) -> np.ndarray:
        w = b[:, 2] * b[:, 3]
        h = b[:, 3]
        return np.stack(
            [b[:, 0] - w / 2, b[:, 1] - h / 2, b[:, 0] + w / 2, b[:, 1] + h / 2], axis=1
        )

    ca = corners(boxes_a)[:, None, :]
    cb = corners(boxes_b)[None, :, :]
    iw = np.maximum(0.0, np.minimum(ca[..., 2], cb[..., 2]) - np.maximum(ca[..., 0], cb[..., 0]))
    ih = np.maximum(0.0, np.minimum(ca[..., 3], cb[..., 3]) - np.maximum(ca[..., 1], cb[..., 1]))
    inter = iw * ih
    area_a = (ca[..., 2] - ca[..., 0]) * (ca[..., 3] - ca[..., 1])
    area_b = (cb[..., 2] - cb[..., 0]) * (cb[..., 3] - cb[..., 1])
    union = area_a + area_b - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out
