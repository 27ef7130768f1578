"""Pinhole stereo camera model and rigid-body pose algebra.

Conventions
-----------
* Camera frame: x right, y down, z forward (optical axis).  A point is
  in front of the camera iff Z > 0.
* ``Pose`` stores a rigid transform as (R, t) acting on points:
  ``p' = R @ p + t``.  Per-frame poses in trajectory files are
  world-from-camera, i.e. they map camera coordinates to world
  coordinates.
* ``relative_pose(a, b)`` returns the a-from-b transform: it maps
  coordinates expressed in frame b into frame a.
* Disparity is always in full-resolution pixels: d = baseline * fx / Z.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class CameraModel:
    """Rectified pinhole stereo rig: intrinsics plus baseline in meters."""

    fx: float
    fy: float
    cx: float
    cy: float
    baseline: float

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got ({self.fx}, {self.fy})")
        if self.baseline <= 0:
            raise ValueError(f"baseline must be positive, got {self.baseline}")

    def scaled(self, scale: float) -> "CameraModel":
        """Model of the same rig after downsampling the image by ``1/scale``.

        Uses the pixel-center convention: full-res pixel u maps to
        coarse pixel (u + 0.5) * scale - 0.5.  The baseline is a metric
        quantity and does not change.
        """
        return CameraModel(
            fx=self.fx * scale,
            fy=self.fy * scale,
            cx=(self.cx + 0.5) * scale - 0.5,
            cy=(self.cy + 0.5) * scale - 0.5,
            baseline=self.baseline,
        )


@dataclass(frozen=True)
class Pose:
    """Rigid SE(3) transform: p' = rotation @ p + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        err = np.abs(R.T @ R - np.eye(3)).max()
        if err > 1e-6 or np.linalg.det(R) < 0:
            raise ValueError(f"rotation is not orthonormal (max deviation {err:.3e})")

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def compose(self, other: "Pose") -> "Pose":
        """self after other: (self o other)(p) = self(other(p))."""
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform points of shape (..., 3)."""
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    def rotation_angle_deg(self) -> float:
        """Magnitude of the rotation, in degrees."""
        cos = (np.trace(self.rotation) - 1.0) / 2.0
        return float(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))

    def translation_norm(self) -> float:
        return float(np.linalg.norm(self.translation))

    def is_orthonormal(self, tol: float = _ORTHO_TOL) -> bool:
        R = self.rotation
        return (np.abs(R.T @ R - np.eye(3)).max() <= tol
                and abs(np.linalg.det(R) - 1.0) <= tol)


def relative_pose(a: Pose, b: Pose) -> Pose:
    """a-from-b transform computed from two world-from-camera poses.

    Maps points in frame b's camera coordinates to frame a's camera
    coordinates: x_a = (a^-1 o b)(x_b).
    """
    return a.inverse().compose(b)


def project(cam: CameraModel, points: np.ndarray) -> np.ndarray:
    """Project camera-frame 3D points (..., 3) to pixels (..., 2).

    Raises ValueError if any point has Z <= 0; use
    :func:`project_masked` when behind-camera points are expected.
    """
    points = np.asarray(points, dtype=np.float64)
    z = points[..., 2]
    if np.any(z <= 0):
        raise ValueError("point behind camera (Z <= 0)")
    u = cam.fx * points[..., 0] / z + cam.cx
    v = cam.fy * points[..., 1] / z + cam.cy
    return np.stack([u, v], axis=-1)


def project_masked(cam: CameraModel, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Like :func:`project` but returns (pixels, in_front_mask) instead
    of raising; behind-camera entries hold NaN."""
    points = np.asarray(points, dtype=np.float64)
    z = points[..., 2]
    ok = z > 0
    safe_z = np.where(ok, z, 1.0)
    u = cam.fx * points[..., 0] / safe_z + cam.cx
    v = cam.fy * points[..., 1] / safe_z + cam.cy
    px = np.stack([u, v], axis=-1)
    px[~ok] = np.nan
    return px, ok


def backproject(cam: CameraModel, pixels: np.ndarray, disparity: np.ndarray) -> np.ndarray:
    """Lift pixels (..., 2) with disparities (...) to camera-frame 3D points.

    Depth comes from the stereo relation Z = baseline * fx / d, so the
    disparity must be positive.
    """
    pixels = np.asarray(pixels, dtype=np.float64)
    disparity = np.asarray(disparity, dtype=np.float64)
    if np.any(disparity <= 0):
        raise ValueError("disparity must be positive to back-project")
    z = cam.baseline * cam.fx / disparity
    x = (pixels[..., 0] - cam.cx) / cam.fx * z
    y = (pixels[..., 1] - cam.cy) / cam.fy * z
    return np.stack([x, y, z], axis=-1)


def perturb_pose(pose: Pose, sigma_rot_deg: float, sigma_trans_m: float, seed: int) -> Pose:
    """Add Gaussian pose noise: a random-axis rotation with angle drawn
    from N(0, sigma_rot_deg) and per-axis translation noise from
    N(0, sigma_trans_m).  Deterministic for a given seed."""
    if sigma_rot_deg < 0 or sigma_trans_m < 0:
        raise ValueError("noise magnitudes must be non-negative")
    if sigma_rot_deg == 0 and sigma_trans_m == 0:
        return pose
    rng = np.random.default_rng(seed)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = np.radians(rng.normal(0.0, sigma_rot_deg)) if sigma_rot_deg > 0 else 0.0
    noise_rot = Rotation.from_rotvec(axis * angle).as_matrix()
    dt = rng.normal(0.0, sigma_trans_m, size=3) if sigma_trans_m > 0 else np.zeros(3)
    return Pose(noise_rot @ pose.rotation, pose.translation + dt)


def save_intrinsics(path: str | Path, cam: CameraModel) -> None:
    """One line: "fx fy cx cy baseline"."""
    Path(path).write_text(
        f"{cam.fx!r} {cam.fy!r} {cam.cx!r} {cam.cy!r} {cam.baseline!r}\n"
    )


def load_intrinsics(path: str | Path) -> CameraModel:
    vals = [float(tok) for tok in Path(path).read_text().split()]
    if len(vals) != 5:
        raise ValueError(f"intrinsics file must hold 5 numbers, got {len(vals)}")
    return CameraModel(*vals)


def save_trajectory(path: str | Path, poses: list[Pose]) -> None:
    """One pose per line: 12 reals, row-major 3x4 [R|t], world-from-camera."""
    lines = []
    for pose in poses:
        mat = np.hstack([pose.rotation, pose.translation[:, None]])
        lines.append(" ".join(repr(v) for v in mat.ravel()))
    Path(path).write_text("\n".join(lines) + "\n")


def load_trajectory(path: str | Path) -> list[Pose]:
    poses = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        poses.append(pose_from_flat(np.array([float(tok) for tok in line.split()])))
    return poses


def pose_from_flat(vals: np.ndarray) -> Pose:
    """Pose from 12 row-major [R|t] values."""
    vals = np.asarray(vals, dtype=np.float64).reshape(3, 4)
    return Pose(vals[:, :3], vals[:, 3])
