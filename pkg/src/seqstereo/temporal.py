"""Cross-frame machinery: disparity reprojection under known camera
motion, occlusion-aware forward warping by softmax splatting, the local
candidate map built from cached keyframes, past-cost warping, and the
bounded keyframe memory bank.

Pose convention: every relative transform handed to these functions is
"map-from-current", i.e. it takes coordinates of the current frame into
the frame the cached map belongs to.  Reprojection applies its inverse
to the back-projected points, which moves them into the current frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import CameraModel, Pose, backproject, relative_pose
from .costvolume import CandidateVolume, CostVolume
from .features import FeatureCache
from .regression import DisparityMap


@dataclass
class Keyframe:
    """Everything cached from one processed frame."""

    disparity: DisparityMap        # full-resolution prediction
    pose: Pose                     # world-from-camera
    topk_candidates: np.ndarray    # (h, w, K) shifted candidates, full-res px
    topk_costs: np.ndarray         # (h, w, K) their final costs
    candidate_scale: float         # grid scale of the top-K arrays
    features: FeatureCache | None = None
    frame_index: int = 0


@dataclass
class KeyframeBank:
    """FIFO of promoted keyframes, bounded by ``capacity``."""

    capacity: int = 3
    t_max: float = 0.1        # meters
    r_max_deg: float = 15.0
    frames: list[Keyframe] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.frames)


def should_promote(relative: Pose, t_max: float, r_max_deg: float) -> bool:
    """Promotion is a pure function of the relative motion: promote when
    the translation or the rotation angle exceeds its threshold."""
    return (relative.translation_norm() > t_max
            or relative.rotation_angle_deg() > r_max_deg)


def update_keyframe_bank(bank: KeyframeBank, frame: Keyframe,
                         relative: Pose | None = None) -> bool:
    """Offer a frame to the bank; the first frame is always promoted.

    ``relative`` is the motion w.r.t. the last keyframe and is derived
    from the world poses when not given.  Returns True when promoted;
    the oldest keyframe is evicted beyond capacity.
    """
    if bank.frames:
        rel = relative
        if rel is None:
            rel = relative_pose(bank.frames[-1].pose, frame.pose)
        if not should_promote(rel, bank.t_max, bank.r_max_deg):
            return False
    bank.frames.append(frame)
    if len(bank.frames) > bank.capacity:
        bank.frames.pop(0)
    return True


def reproject_disparity(
    cam: CameraModel,
    dmap: DisparityMap,
    map_from_current: Pose,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Carry a cached disparity map into the current frame.

    Each valid source pixel is back-projected, moved by the inverse of
    ``map_from_current``, and re-observed: returns (projected disparity,
    target pixel coordinates (..., 2) on the map's own grid, validity).
    Points landing behind the camera are invalidated.  An exactly
    identity transform returns the inputs unchanged.
    """
    values = dmap.values
    h, w = values.shape
    valid = np.isfinite(values) & (values > 0)
    if dmap.valid is not None:
        valid = valid & dmap.valid

    uu, vv = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    targets = np.stack([uu, vv], axis=-1)
    if (map_from_current.rotation == np.eye(3)).all() and (map_from_current.translation == 0).all():
        return values.copy(), targets, valid

    grid_cam = cam if dmap.scale == 1.0 else cam.scaled(dmap.scale)
    d_grid = values * dmap.scale
    out_d = np.zeros((h, w))
    out_valid = np.zeros((h, w), dtype=bool)

    pix = targets[valid]
    pts = backproject(grid_cam, pix, d_grid[valid])
    moved = map_from_current.inverse().apply(pts)
    z = moved[..., 2]
    front = z > 0
    d_new_grid = np.where(front, grid_cam.baseline * grid_cam.fx / np.where(front, z, 1.0), 0.0)
    u_new = grid_cam.fx * moved[..., 0] / np.where(front, z, 1.0) + grid_cam.cx
    v_new = grid_cam.fy * moved[..., 1] / np.where(front, z, 1.0) + grid_cam.cy

    out_d[valid] = d_new_grid / dmap.scale
    tgt = np.full((h, w, 2), np.nan)
    tgt_vals = np.stack([u_new, v_new], axis=-1)
    tgt_vals[~front] = np.nan
    tgt[valid] = tgt_vals
    out_valid[valid] = front
    return out_d, tgt, out_valid


def splat_forward(
    values: np.ndarray,
    targets: np.ndarray,
    importance: np.ndarray,
    out_shape: tuple[int, int],
    source_valid: np.ndarray | None = None,
    return_vjp: bool = False,
):
    """Differentiable forward warp with softmax-weighted collisions.

    Every source pixel spreads its value to the four integer neighbours
    of its target coordinate (u, v) with bilinear kernel weights; where
    sources collide, contributions are blended with weights
    exp(importance), so higher-importance sources dominate.  Output
    pixels receiving no mass are holes (value 0, mask False).  The
    result is invariant to adding a constant to all importances.

    With ``return_vjp`` a third element is returned: a function mapping
    an upstream gradient (C, out_h, out_w) to gradients w.r.t. values
    and importance (targets are treated as non-differentiable).
    """
    squeeze = values.ndim == 2
    vals = values[None] if squeeze else values
    c = vals.shape[0]
    oh, ow = out_shape
    flat_v = vals.reshape(c, -1)
    uv = np.asarray(targets, dtype=np.float64).reshape(-1, 2)
    imp = np.asarray(importance, dtype=np.float64).reshape(-1)

    ok = np.isfinite(uv).all(axis=1) & np.isfinite(imp)
    if source_valid is not None:
        ok &= source_valid.reshape(-1)
    if not ok.any():
        out = np.zeros((c, oh, ow))
        mask = np.zeros((oh, ow), dtype=bool)
        result = (out[0] if squeeze else out, mask)
        if return_vjp:
            zero = lambda g: (np.zeros_like(values), np.zeros_like(importance))  # noqa: E731
            return result + (zero,)
        return result

    shift = imp[ok].max()
    e = np.where(ok, np.exp(np.where(ok, imp - shift, 0.0)), 0.0)
    x0 = np.floor(uv[:, 0])
    y0 = np.floor(uv[:, 1])
    fx = uv[:, 0] - x0
    fy = uv[:, 1] - y0

    num = np.zeros((c, oh * ow))
    den = np.zeros(oh * ow)
    corners = []
    for dy in (0, 1):
        for dx in (0, 1):
            cx = np.where(ok, x0 + dx, 0).astype(np.intp)
            cy = np.where(ok, y0 + dy, 0).astype(np.intp)
            wgt = (fx if dx else 1 - fx) * (fy if dy else 1 - fy) * e
            inside = ok & (cx >= 0) & (cx < ow) & (cy >= 0) & (cy < oh)
            wgt = np.where(inside, wgt, 0.0)
            idx = np.where(inside, cy * ow + cx, 0)
            np.add.at(den, idx[inside], wgt[inside])
            for ch in range(c):
                np.add.at(num[ch], idx[inside], (wgt * flat_v[ch])[inside])
            corners.append((idx, wgt, inside))

    mask = (den > 0).reshape(oh, ow)
    safe_den = np.where(den > 0, den, 1.0)
    out = (num / safe_den).reshape(c, oh, ow)
    out[:, ~mask] = 0.0
    result_out = out[0] if squeeze else out

    if not return_vjp:
        return result_out, mask

    def vjp(grad_out: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        g = grad_out[None] if squeeze else grad_out
        g = np.where(mask[None], g, 0.0).reshape(c, -1)
        out_flat = out.reshape(c, -1)
        gv = np.zeros_like(flat_v)
        gi = np.zeros(flat_v.shape[1])
        for idx, wgt, inside in corners:
            ratio = np.where(inside, wgt / safe_den[idx], 0.0)
            g_q = g[:, idx]
            gv += g_q * ratio
            gi += (g_q * (flat_v - out_flat[:, idx])).sum(axis=0) * ratio
        gv_full = gv.reshape(vals.shape)
        gi_full = gi.reshape(np.shape(importance))
        return (gv_full[0] if squeeze else gv_full), gi_full

    return result_out, mask, vjp


def build_local_map(
    current: CandidateVolume,
    bank: KeyframeBank,
    cam: CameraModel,
    current_pose: Pose,
    max_disparity: float,
    temperature: float = 1.0,
) -> CandidateVolume:
    """Append pose-warped keyframe disparities to the current candidates.

    Each keyframe's full-resolution disparity map is reprojected into
    the current frame, splatted (importance = projected disparity, so
    nearer surfaces win collisions), reduced to the candidate grid with
    a far-preferring minimum over valid pixels (occlusions need the
    farther surface as a hypothesis), and appended along the candidate
    axis.  Splat holes duplicate the pixel's central current candidate.
    An empty bank returns the input unchanged.
    """
    if not bank.frames:
        return current
    factor = round(1 / current.scale)
    h, w, n = current.values.shape
    center = current.values[..., (n - 1) // 2]

    extra = []
    for kf in bank.frames:
        rel = relative_pose(kf.pose, current_pose)
        d_proj, tgt, valid = reproject_disparity(cam, kf.disparity, rel)
        warped, mask = splat_forward(d_proj, tgt, d_proj * temperature,
                                     kf.disparity.values.shape, source_valid=valid)
        coarse, coarse_valid = _block_min(warped, mask, factor, (h, w))
        filled = np.where(coarse_valid, coarse, center)
        extra.append(np.clip(filled, 0.0, max_disparity))

    values = np.concatenate([current.values] + [e[..., None] for e in extra], axis=2)
    return CandidateVolume(values=values, scale=current.scale)


def _block_min(values: np.ndarray, valid: np.ndarray, factor: int,
               out_shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    masked = np.where(valid, values, np.inf)
    rows = np.arange(0, values.shape[0], factor)
    cols = np.arange(0, values.shape[1], factor)
    mins = np.minimum.reduceat(np.minimum.reduceat(masked, rows, axis=0), cols, axis=1)
    mins = mins[: out_shape[0], : out_shape[1]]
    ok = np.isfinite(mins)
    return np.where(ok, mins, 0.0), ok


def _block_mean_masked(values: np.ndarray, valid: np.ndarray, factor: int
                       ) -> tuple[np.ndarray, np.ndarray]:
    rows = np.arange(0, values.shape[0], factor)
    cols = np.arange(0, values.shape[1], factor)

    def block_sum(a):
        return np.add.reduceat(np.add.reduceat(a, rows, axis=0), cols, axis=1)

    sums = block_sum(np.where(valid, values, 0.0))
    counts = block_sum(valid.astype(np.float64))
    ok = counts > 0
    return np.where(ok, sums / np.where(ok, counts, 1.0), 0.0), ok


def warp_past_costs(
    prev: Keyframe,
    cam: CameraModel,
    current_pose: Pose,
    factors: tuple[int, ...] = (2, 4),
    max_disparity: float = 192.0,
    temperature: float = 1.0,
    neutral_score: float = -1e4,
) -> dict[int, CostVolume]:
    """Warp the previous frame's top-K candidates and costs into the
    current frame, then average-pool them by each factor.

    Costs are carried as correlation-style scores (minus the cached
    cost) in a single channel, so the handcrafted prediction head
    recovers them unchanged.  Holes get ``neutral_score``, bad enough
    that fusion ignores them.  The factor-f output lives on a grid f
    times coarser than the cached top-K arrays.
    """
    rel = relative_pose(prev.pose, current_pose)
    h, w, k = prev.topk_candidates.shape

    cand_maps = np.zeros((h, w, k))
    score_maps = np.full((h, w, k), neutral_score)
    valid_maps = np.zeros((h, w, k), dtype=bool)
    for i in range(k):
        dmap = DisparityMap(prev.topk_candidates[..., i], scale=prev.candidate_scale)
        d_proj, tgt, valid = reproject_disparity(cam, dmap, rel)
        stack = np.stack([d_proj, -prev.topk_costs[..., i]])
        warped, mask = splat_forward(stack, tgt, d_proj * temperature, (h, w),
                                     source_valid=valid)
        cand_maps[..., i] = warped[0]
        score_maps[..., i] = np.where(mask, warped[1], neutral_score)
        valid_maps[..., i] = mask

    out: dict[int, CostVolume] = {}
    for f in factors:
        cands_f = np.zeros((-(-h // f), -(-w // f), k))
        scores_f = np.zeros_like(cands_f)
        for i in range(k):
            cand, ok = _block_mean_masked(cand_maps[..., i], valid_maps[..., i], f)
            score, _ = _block_mean_masked(score_maps[..., i], valid_maps[..., i], f)
            cands_f[..., i] = np.where(ok, cand, 0.0)
            scores_f[..., i] = np.where(ok, score, neutral_score)
        out[f] = CostVolume(
            costs=scores_f[None],
            candidates=CandidateVolume(np.clip(cands_f, 0.0, max_disparity),
                                       scale=prev.candidate_scale / f),
            concat_channels=0,
        )
    return out
