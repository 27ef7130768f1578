"""Synthetic rectified stereo scenes with exact ground truth.

Scenes are one or two fronto-parallel textured planes rendered by
ray-casting, so ground-truth disparity, occlusion masks, and
multi-frame visibility are all analytic.  Textures are anchored to
world coordinates: every frame of a sequence samples the same surface
pattern, and with integer disparities at the identity pose the right
image is a bit-exact horizontal shift of the left one.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .camera import CameraModel, Pose

_SNAP = 1e-6  # texture samples this close to a grid node land exactly on it


@dataclass
class SceneSample:
    """One rendered stereo frame with ground truth."""

    left: np.ndarray            # (H, W) grayscale in [0, 1]
    right: np.ndarray
    gt_disparity: np.ndarray    # (H, W) full-resolution pixels
    occlusion: np.ndarray       # (H, W) bool; True = not visible in the right view
    pose: Pose                  # world-from-camera, left camera
    camera: CameraModel
    frame_index: int = 0
    seen_before: np.ndarray | None = None  # occluded now but visible in an earlier frame


@dataclass
class _Plane:
    depth: float                    # world z of the fronto-parallel plane
    octaves: list[tuple[int, np.ndarray]]  # (grid spacing in px, value grid)
    x_bounds: tuple[float, float] | None = None  # None = infinite extent


@dataclass
class _Scene:
    camera: CameraModel
    planes: list[_Plane] = field(default_factory=list)  # sorted near to far


def default_camera(size: tuple[int, int]) -> CameraModel:
    h, w = size
    return CameraModel(fx=float(w), fy=float(w), cx=(w - 1) / 2.0, cy=(h - 1) / 2.0,
                       baseline=0.5)


def generate_scene(
    kind: str = "plane",
    *,
    disparity: float = 8.0,
    near_disparity: float = 12.0,
    far_disparity: float = 4.0,
    strip: tuple[float, float] = (0.45, 0.70),
    size: tuple[int, int] = (64, 64),
    seed: int = 0,
    camera: CameraModel | None = None,
    max_disparity: float = 192.0,
) -> SceneSample:
    """Render a single stereo frame at the identity pose.

    ``kind`` is "plane" (one plane at constant disparity) or "two-plane"
    (a near strip occluding a far background; the far plane carries an
    occlusion band of width near_disparity - far_disparity pixels).
    """
    scene = _build_scene(kind, disparity, near_disparity, far_disparity, strip,
                         size, seed, camera, max_disparity)
    return render_frame(scene, Pose.identity(), size, frame_index=0)


def generate_sequence(
    kind: str = "plane",
    trajectory: str = "lateral",
    n_frames: int = 4,
    step: float = 0.2,
    *,
    disparity: float = 8.0,
    near_disparity: float = 12.0,
    far_disparity: float = 4.0,
    strip: tuple[float, float] = (0.45, 0.70),
    size: tuple[int, int] = (64, 64),
    seed: int = 0,
    camera: CameraModel | None = None,
    max_disparity: float = 192.0,
) -> list[SceneSample]:
    """Render a stereo sequence under camera motion.

    Trajectories: "lateral" moves along the camera x axis by ``step``
    meters per frame, "forward" along the optical axis, and "orbit"
    revolves around a pivot in front of the start pose by ``step``
    degrees per frame.  Frame 0 is always the identity pose.  Each
    frame's ``seen_before`` mask labels pixels occluded in that frame
    whose surface point was fully visible in some earlier frame.
    """
    if n_frames < 1:
        raise ValueError("need at least one frame")
    scene = _build_scene(kind, disparity, near_disparity, far_disparity, strip,
                         size, seed, camera, max_disparity)
    poses = _trajectory_poses(trajectory, n_frames, step, scene)
    samples = [render_frame(scene, pose, size, frame_index=i)
               for i, pose in enumerate(poses)]
    for i in range(1, len(samples)):
        samples[i].seen_before = previously_visible(scene, samples, i)
    return samples


def _build_scene(kind, disparity, near_disparity, far_disparity, strip,
                 size, seed, camera, max_disparity) -> _Scene:
    cam = camera if camera is not None else default_camera(size)
    h, w = size
    tex_shape = (h + 64, 2 * (w + 64))

    def plane_at(d: float, tex_seed_offset: int, x_bounds=None) -> _Plane:
        if not 0.0 < d < max_disparity:
            raise ValueError(f"plane disparity {d} outside (0, {max_disparity})")
        # value-noise octaves: per-pixel randomness for sharp full-res
        # matching plus coarse wavelengths that survive downsampling,
        # so the pyramid stages see usable structure too
        octaves = []
        for k, spacing in enumerate((1, 2, 4, 8, 16, 32)):
            rng = np.random.default_rng(seed * 7919 + tex_seed_offset * 613 + k)
            octaves.append((spacing, rng.uniform(size=tex_shape)))
        return _Plane(depth=cam.baseline * cam.fx / d, octaves=octaves, x_bounds=x_bounds)

    if kind == "plane":
        planes = [plane_at(disparity, 1)]
    elif kind == "two-plane":
        if near_disparity <= far_disparity:
            raise ValueError("near plane must have larger disparity than the far plane")
        z_near = cam.baseline * cam.fx / near_disparity
        u_a, u_b = (round(strip[0] * w), round(strip[1] * w))
        x_bounds = ((u_a - 0.5 - cam.cx) / cam.fx * z_near,
                    (u_b - 0.5 - cam.cx) / cam.fx * z_near)
        planes = [plane_at(near_disparity, 2, x_bounds), plane_at(far_disparity, 3)]
    else:
        raise ValueError(f"unknown scene kind {kind!r}")
    return _Scene(camera=cam, planes=planes)


def _trajectory_poses(trajectory: str, n_frames: int, step: float, scene: _Scene) -> list[Pose]:
    if step == 0.0 and n_frames > 1:
        warnings.warn("degenerate trajectory: zero per-frame motion", stacklevel=3)
    poses = []
    if trajectory == "lateral":
        for i in range(n_frames):
            poses.append(Pose(np.eye(3), np.array([step * i, 0.0, 0.0])))
    elif trajectory == "forward":
        limit = min(p.depth for p in scene.planes)
        if n_frames > 1 and step * (n_frames - 1) >= limit:
            raise ValueError("forward trajectory passes through the nearest plane")
        for i in range(n_frames):
            poses.append(Pose(np.eye(3), np.array([0.0, 0.0, step * i])))
    elif trajectory == "orbit":
        radius = 0.6 * min(p.depth for p in scene.planes)
        pivot = np.array([0.0, 0.0, radius])
        for i in range(n_frames):
            a = np.radians(step * i)
            rot = np.array([[np.cos(a), 0.0, np.sin(a)],
                            [0.0, 1.0, 0.0],
                            [-np.sin(a), 0.0, np.cos(a)]])
            poses.append(Pose(rot, pivot - rot @ np.array([0.0, 0.0, radius])))
    else:
        raise ValueError(f"unknown trajectory {trajectory!r}")
    return poses


# --- rendering ---------------------------------------------------------

def render_frame(scene: _Scene, pose: Pose, size: tuple[int, int],
                 frame_index: int = 0) -> SceneSample:
    h, w = size
    cam = scene.camera
    uu, vv = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))

    depth_l, plane_l, hit_l = _raycast(scene, pose, uu, vv)
    if np.any(~np.isfinite(depth_l)):
        raise ValueError("scene does not cover the full left view")
    left = _shade(scene, plane_l, hit_l, depth_l)
    gt = cam.baseline * cam.fx / depth_l

    right_pose = Pose(pose.rotation,
                      pose.translation + pose.rotation @ np.array([cam.baseline, 0.0, 0.0]))
    depth_r, plane_r, hit_r = _raycast(scene, right_pose, uu, vv)
    right = _shade(scene, plane_r, hit_r, depth_r)

    occ = _occlusion_mask(scene, right_pose, hit_l, (h, w))
    return SceneSample(left=left, right=right, gt_disparity=gt, occlusion=occ,
                       pose=pose, camera=cam, frame_index=frame_index)


def _raycast(scene: _Scene, pose: Pose, uu: np.ndarray, vv: np.ndarray):
    """Nearest plane hit for rays through continuous pixels (uu, vv).

    Returns (depth along the optical axis, plane index, world hit point);
    depth is +inf where no plane is hit.
    """
    cam = scene.camera
    dirs = np.stack([(uu - cam.cx) / cam.fx, (vv - cam.cy) / cam.fy,
                     np.ones_like(uu)], axis=-1)
    world_dirs = dirs @ pose.rotation.T
    center = pose.translation

    depth = np.full(uu.shape, np.inf)
    plane_idx = np.full(uu.shape, -1, dtype=np.intp)
    hit = np.full(uu.shape + (3,), np.nan)
    for idx, plane in enumerate(scene.planes):
        dz = world_dirs[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (plane.depth - center[2]) / dz
        pts = center + s[..., None] * world_dirs
        ok = (dz > 0) & (s > 0)
        if plane.x_bounds is not None:
            ok &= (pts[..., 0] >= plane.x_bounds[0]) & (pts[..., 0] <= plane.x_bounds[1])
        closer = ok & (s < depth)
        depth[closer] = s[closer]
        plane_idx[closer] = idx
        hit[closer] = pts[closer]
    return depth, plane_idx, hit


def _shade(scene: _Scene, plane_idx: np.ndarray, hit: np.ndarray,
           depth: np.ndarray) -> np.ndarray:
    cam = scene.camera
    img = np.zeros(plane_idx.shape)
    for idx, plane in enumerate(scene.planes):
        sel = plane_idx == idx
        if not np.any(sel):
            continue
        # pixel-footprint texture parametrisation: at the identity pose,
        # full-res pixel (u, v) samples texture coordinate (v, u)
        ix = hit[sel, 0] * cam.fx / plane.depth + cam.cx
        iy = hit[sel, 1] * cam.fy / plane.depth + cam.cy
        total = np.zeros(ix.shape)
        for spacing, grid in plane.octaves:
            total += _sample_wrapped(grid, iy / spacing, ix / spacing)
        img[sel] = total / len(plane.octaves)
    return img


def _sample_wrapped(tex: np.ndarray, iy: np.ndarray, ix: np.ndarray) -> np.ndarray:
    iy = _snap(iy)
    ix = _snap(ix)
    y0 = np.floor(iy)
    x0 = np.floor(ix)
    fy = iy - y0
    fx = ix - x0
    ht, wt = tex.shape
    y0 = y0.astype(np.intp) % ht
    x0 = x0.astype(np.intp) % wt
    y1 = (y0 + 1) % ht
    x1 = (x0 + 1) % wt
    return ((1 - fy) * ((1 - fx) * tex[y0, x0] + fx * tex[y0, x1])
            + fy * ((1 - fx) * tex[y1, x0] + fx * tex[y1, x1]))


def _snap(idx: np.ndarray) -> np.ndarray:
    rounded = np.rint(idx)
    return np.where(np.abs(idx - rounded) < _SNAP, rounded, idx)


def _occlusion_mask(scene: _Scene, right_pose: Pose, hit_world: np.ndarray,
                    size: tuple[int, int]) -> np.ndarray:
    """A left pixel is occluded when its surface point is not the nearest
    surface along (or falls outside) the corresponding right-camera ray."""
    visible, _ = _point_visibility(scene, right_pose, hit_world, size)
    return ~visible


def _point_visibility(scene: _Scene, pose: Pose, points: np.ndarray,
                      size: tuple[int, int]):
    cam = scene.camera
    h, w = size
    local = (points - pose.translation) @ pose.rotation
    z = local[..., 2]
    in_front = z > 0
    safe_z = np.where(in_front, z, 1.0)
    u = cam.fx * local[..., 0] / safe_z + cam.cx
    v = cam.fy * local[..., 1] / safe_z + cam.cy
    in_view = in_front & (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)

    depth, _, _ = _raycast(scene, pose, u, v)
    unobstructed = depth >= z * (1 - 1e-9)
    return in_view & unobstructed, (u, v)


def previously_visible(scene: _Scene, samples: list[SceneSample], index: int) -> np.ndarray:
    """Pixels occluded in frame ``index`` whose surface point was visible
    in both views of at least one earlier frame."""
    current = samples[index]
    h, w = current.left.shape
    uu, vv = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    _, _, hit = _raycast(scene, current.pose, uu, vv)

    seen = np.zeros((h, w), dtype=bool)
    for j in range(index):
        pose_j = samples[j].pose
        vis_left, _ = _point_visibility(scene, pose_j, hit, (h, w))
        right_pose_j = Pose(pose_j.rotation,
                            pose_j.translation + pose_j.rotation @ np.array(
                                [scene.camera.baseline, 0.0, 0.0]))
        vis_right, _ = _point_visibility(scene, right_pose_j, hit, (h, w))
        seen |= vis_left & vis_right
    return current.occlusion & seen


# --- brute-force oracle -------------------------------------------------

def brute_force_disparity(
    sample: SceneSample,
    max_disparity: float = 192.0,
    window: int = 5,
) -> tuple[np.ndarray, np.ndarray]:
    """Exhaustive winner-take-all stereo matching with census costs.

    Independent of the staged pipeline: dense integer-disparity search,
    Hamming distance on census descriptors, no candidate sets and no
    softmax.  Returns (disparity, valid); pixels with tied minima or
    without a full in-image comparison window are marked invalid.
    """
    left, right = sample.left, sample.right
    h, w = left.shape
    half = window // 2
    cl = _census(left, window)
    cr = _census(right, window)

    d_range = int(min(max_disparity, w - 1))
    best_cost = np.full((h, w), np.iinfo(np.int64).max, dtype=np.int64)
    best_d = np.zeros((h, w), dtype=np.int64)
    n_best = np.zeros((h, w), dtype=np.int64)
    for d in range(d_range + 1):
        cost = np.full((h, w), np.iinfo(np.int64).max, dtype=np.int64)
        if d < w:
            diff = cl[:, :, d:] != cr[:, :, : w - d]
            cost[:, d:] = diff.sum(axis=0)
        better = cost < best_cost
        ties = cost == best_cost
        n_best = np.where(better, 1, n_best + ties)
        best_d = np.where(better, d, best_d)
        best_cost = np.minimum(best_cost, cost)

    uu = np.arange(w)[None, :]
    valid = (n_best == 1) & (uu - best_d >= half) & (uu >= half) & (uu < w - half)
    valid[:half] = False
    valid[h - half:] = False
    return best_d.astype(np.float64), valid


def _census(img: np.ndarray, window: int) -> np.ndarray:
    """(window^2 - 1, H, W) sign comparisons against the window center;
    out-of-image neighbours compare as equal."""
    h, w = img.shape
    half = window // 2
    out = np.zeros((window * window - 1, h, w), dtype=np.int8)
    ch = 0
    for dy in range(-half, half + 1):
        for dx in range(-half, half + 1):
            if dy == 0 and dx == 0:
                continue
            shifted = np.zeros_like(img)
            ys = slice(max(0, dy), min(h, h + dy))
            yd = slice(max(0, -dy), min(h, h - dy))
            xs = slice(max(0, dx), min(w, w + dx))
            xd = slice(max(0, -dx), min(w, w - dx))
            shifted[yd, xd] = img[ys, xs]
            inside = np.zeros((h, w), dtype=bool)
            inside[yd, xd] = True
            out[ch] = np.where(inside, np.sign(shifted - img), 0).astype(np.int8)
            ch += 1
    return out
