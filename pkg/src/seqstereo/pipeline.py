"""Three-stage coarse-to-fine stereo matcher with optional temporal
fusion, wrapped as an sklearn-style estimator.

Stage 1 matches at 1/16 resolution over uniformly initialised
candidates, stages 2 and 3 refine at 1/8 and 1/4 around the upsampled
previous prediction, and the last map is carried to full resolution.
In temporal mode three caches feed the next frame: backbone features
(temporal channel shift), the previous frame's top-K costs (warped and
fused into stages 1-2), and a keyframe bank of past disparity maps
(appended to stage-2 candidates).  With empty caches the temporal path
is bit-identical to single-pair mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .aggregation import (FusionConfig, OffsetVolume, predict_heads,
                          spatial_smooth, statistical_fusion)
from .camera import CameraModel, Pose, perturb_pose
from .costvolume import (CandidateVolume, CostVolume, assemble_cost,
                         concat_cost, groupwise_multilevel_cost)
from .features import FeatureCache, build_pyramid, decode_stage, temporal_shift
from .fileio import load_weights
from .losses import LossConfig
from .metrics import MetricsReport, compute_metrics
from .regression import (DisparityMap, init_candidates, regress_topk,
                         sample_candidates, upsample_disparity)
from .synth import SceneSample
from .temporal import (Keyframe, KeyframeBank, build_local_map,
                       update_keyframe_bank, warp_past_costs)
from .validation import check_stereo_pair

_STAGE_SCALES = (1 / 16, 1 / 8, 1 / 4)


@dataclass
class StageResult:
    scale: float
    candidates: CandidateVolume
    final_cost: np.ndarray
    offsets: OffsetVolume
    disparity: DisparityMap


@dataclass
class FrameResult:
    disparity: DisparityMap            # full resolution
    stages: list[StageResult]          # coarse to fine
    upsampled: list[DisparityMap]      # stage outputs after upsampling


@dataclass
class PipelineState:
    features: FeatureCache | None = None
    prev: Keyframe | None = None
    bank: KeyframeBank = field(default_factory=KeyframeBank)
    frame_count: int = 0


class StereoMatcher(BaseEstimator):
    """Disparity estimator for rectified stereo pairs and sequences.

    Follows the sklearn parameter protocol: all hyperparameters are
    constructor arguments stored verbatim, ``fit`` validates them and
    initialises the streaming state, and ``predict`` maps a stereo pair
    to a full-resolution disparity array.  In ``mode="temporal"`` the
    matcher is stateful across ``predict`` calls; ``reset_state``
    starts a new sequence.
    """

    def __init__(
        self,
        max_disparity: float = 192.0,
        stage_candidates: tuple[int, int, int] = (12, 5, 5),
        sample_beta: float = 4.0,
        top_k: int = 2,
        n_keyframes: int = 3,
        keyframe_t_max: float = 0.1,
        keyframe_r_max: float = 15.0,
        shift_fraction: float = 0.125,
        stage_weights: tuple[float, float, float, float] = (1.0, 0.5, 0.7, 2.0),
        final_weight: float = 2.0,
        wasserstein_alpha: float = 0.25,
        window: int = 4,
        mode: str = "single",
        seed: int = 0,
        pose_noise_rot: float = 0.0,
        pose_noise_trans: float = 0.0,
        extractor: str = "census",
        feature_gain: float = 3.0,
        feature_window: int = 5,
        smooth_radius: int = 1,
        smooth_mode: str = "box",
        groups_per_level: int | None = None,
        fusion_branch_weights: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0),
        past_cost_gain: float = 0.9,
        splat_temperature: float = 1.0,
        weights_file: str | None = None,
    ):
        self.max_disparity = max_disparity
        self.stage_candidates = stage_candidates
        self.sample_beta = sample_beta
        self.top_k = top_k
        self.n_keyframes = n_keyframes
        self.keyframe_t_max = keyframe_t_max
        self.keyframe_r_max = keyframe_r_max
        self.shift_fraction = shift_fraction
        self.stage_weights = stage_weights
        self.final_weight = final_weight
        self.wasserstein_alpha = wasserstein_alpha
        self.window = window
        self.mode = mode
        self.seed = seed
        self.pose_noise_rot = pose_noise_rot
        self.pose_noise_trans = pose_noise_trans
        self.extractor = extractor
        self.feature_gain = feature_gain
        self.feature_window = feature_window
        self.smooth_radius = smooth_radius
        self.smooth_mode = smooth_mode
        self.groups_per_level = groups_per_level
        self.fusion_branch_weights = fusion_branch_weights
        self.past_cost_gain = past_cost_gain
        self.splat_temperature = splat_temperature
        self.weights_file = weights_file

    # -- sklearn protocol -------------------------------------------

    def fit(self, X=None, y=None) -> "StereoMatcher":
        """Validate parameters and initialise streaming state.

        Nothing is learned: weights, when used, come from
        ``weights_file``.  Accepts (X, y) for pipeline compatibility
        and ignores them.
        """
        if self.mode not in ("single", "temporal"):
            raise ValueError(f"mode must be 'single' or 'temporal', got {self.mode!r}")
        if len(self.stage_candidates) != 3 or any(n < 1 for n in self.stage_candidates):
            raise ValueError("stage_candidates must hold three positive counts")
        if not 1 <= self.top_k <= min(self.stage_candidates):
            raise ValueError(f"top_k must be in [1, {min(self.stage_candidates)}]")
        if self.max_disparity <= 0 or self.sample_beta <= 0:
            raise ValueError("max_disparity and sample_beta must be positive")
        if not 0.0 <= self.shift_fraction <= 1.0:
            raise ValueError("shift_fraction must be in [0, 1]")
        if self.window < 1 or self.n_keyframes < 1:
            raise ValueError("window and n_keyframes must be >= 1")
        LossConfig(tuple(self.stage_weights), self.final_weight, self.wasserstein_alpha)
        self.weights_ = load_weights(self.weights_file) if self.weights_file else None
        self.head_mode_ = "loaded" if self.weights_ else "handcrafted"
        self.reset_state()
        return self

    def reset_state(self) -> None:
        """Drop all temporal caches (start of a new sequence)."""
        self.state_ = PipelineState(bank=KeyframeBank(
            capacity=self.n_keyframes,
            t_max=self.keyframe_t_max,
            r_max_deg=self.keyframe_r_max,
        ))

    def _check_fitted(self) -> None:
        if not hasattr(self, "state_"):
            raise NotFittedError("call fit() before running the matcher")

    @property
    def loss_config(self) -> LossConfig:
        return LossConfig(tuple(self.stage_weights), self.final_weight,
                          self.wasserstein_alpha)

    # -- inference ---------------------------------------------------

    def predict(self, left: np.ndarray, right: np.ndarray,
                pose: Pose | None = None,
                camera: CameraModel | None = None) -> np.ndarray:
        """Full-resolution disparity (H, W) for one rectified pair."""
        return self.process_frame(left, right, pose=pose, camera=camera).disparity.values

    def process_frame(self, left: np.ndarray, right: np.ndarray,
                      pose: Pose | None = None,
                      camera: CameraModel | None = None) -> FrameResult:
        """Run the full pipeline on one frame, updating temporal state.

        ``pose`` (world-from-camera) and ``camera`` are required in
        temporal mode; single-pair mode ignores them.
        """
        self._check_fitted()
        left, right = check_stereo_pair(left, right)
        temporal = self.mode == "temporal"
        state = self.state_
        if temporal:
            if pose is None:
                raise ValueError("temporal mode requires a camera pose for every frame")
            if camera is None:
                raise ValueError("temporal mode requires the camera model")
            if self.pose_noise_rot > 0 or self.pose_noise_trans > 0:
                pose = perturb_pose(pose, self.pose_noise_rot, self.pose_noise_trans,
                                    seed=self.seed * 100003 + state.frame_count)

        pyramid = build_pyramid(left, right, extractor=self.extractor, seed=self.seed,
                                gain=self.feature_gain, window=self.feature_window)
        lvl4, lvl8, lvl16 = pyramid.levels
        l16, r16 = lvl16.left, lvl16.right
        if temporal and state.features is not None:
            l16 = temporal_shift(l16, state.features.left, self.shift_fraction)
            r16 = temporal_shift(r16, state.features.right, self.shift_fraction)

        dec = self._decode_weights()
        f1l = decode_stage(None, l16, dec.get(1))
        f1r = decode_stage(None, r16, dec.get(1))
        f2l = decode_stage(f1l, lvl8.left, dec.get(2))
        f2r = decode_stage(f1r, lvl8.right, dec.get(2))
        f3l = decode_stage(f2l, lvl4.left, dec.get(3))
        f3r = decode_stage(f2r, lvl4.right, dec.get(3))

        past: dict[int, CostVolume] = {}
        if temporal and state.prev is not None:
            warped = warp_past_costs(state.prev, camera, pose, factors=(2, 4),
                                     max_disparity=self.max_disparity,
                                     temperature=self.splat_temperature)
            past = {1: warped[4], 2: warped[2]}

        h, w = left.shape
        n1, n2, n3 = self.stage_candidates

        cands1 = init_candidates(self.max_disparity, n1, (h // 16, w // 16),
                                 stage_scale=_STAGE_SCALES[0])
        stage1 = self._run_stage(f1l, f1r, cands1, past.get(1), fuse=True)
        d1_up = upsample_disparity(stage1.disparity, "convex")

        cands2 = sample_candidates(d1_up, n2, self.sample_beta, _STAGE_SCALES[1],
                                   self.max_disparity)
        if temporal:
            cands2 = build_local_map(cands2, state.bank, camera, pose,
                                     self.max_disparity, self.splat_temperature)
        stage2 = self._run_stage(f2l, f2r, cands2, past.get(2), fuse=True)
        d2_up = upsample_disparity(stage2.disparity, "convex")

        cands3 = sample_candidates(d2_up, n3, self.sample_beta, _STAGE_SCALES[2],
                                   self.max_disparity)
        stage3 = self._run_stage(f3l, f3r, cands3, None, fuse=False)
        d_full = upsample_disparity(stage3.disparity, "superpixel")

        if temporal:
            topk_cands, topk_costs = self._topk(stage3)
            record = Keyframe(
                disparity=d_full,
                pose=pose,
                topk_candidates=topk_cands,
                topk_costs=topk_costs,
                candidate_scale=_STAGE_SCALES[2],
                features=FeatureCache(lvl16.left, lvl16.right, state.frame_count),
                frame_index=state.frame_count,
            )
            state.features = record.features
            state.prev = record
            update_keyframe_bank(state.bank, record)
        state.frame_count += 1

        return FrameResult(disparity=d_full, stages=[stage1, stage2, stage3],
                           upsampled=[d1_up, d2_up, d_full])

    def _run_stage(self, feat_l, feat_r, cands, past_cost, fuse):
        cv = assemble_cost(
            concat_cost(feat_l, feat_r, cands),
            groupwise_multilevel_cost(feat_l, feat_r, cands,
                                      groups_per_level=self.groups_per_level),
        )
        cv = spatial_smooth(cv, radius=self.smooth_radius, mode=self.smooth_mode)
        if fuse:
            cv = statistical_fusion(cv, past_cost, FusionConfig(
                branch_weights=tuple(self.fusion_branch_weights),
                past_gain=self.past_cost_gain,
            ))
        final_cost, offsets = predict_heads(cv, mode=self.head_mode_,
                                            weights=self.weights_)
        dmap = regress_topk(final_cost, cv.candidates, offsets, self.top_k,
                            self.max_disparity)
        return StageResult(scale=cv.candidates.scale, candidates=cv.candidates,
                           final_cost=final_cost, offsets=offsets, disparity=dmap)

    def _topk(self, stage: StageResult) -> tuple[np.ndarray, np.ndarray]:
        """Shifted candidate values and costs of the K best candidates."""
        scores = -stage.final_cost
        order = np.argsort(-scores, axis=-1, kind="stable")[..., : self.top_k]
        shifted = stage.candidates.values + stage.offsets.offsets
        return (np.take_along_axis(shifted, order, axis=-1),
                np.take_along_axis(stage.final_cost, order, axis=-1))

    def _decode_weights(self) -> dict[int, np.ndarray]:
        if not self.weights_:
            return {}
        return {s: self.weights_[f"decode{s}.weight"]
                for s in (1, 2, 3) if f"decode{s}.weight" in self.weights_}


@dataclass
class SequenceResult:
    maps: list[DisparityMap]
    reports: list[tuple[int, MetricsReport]]  # (frame index, metrics)

    @property
    def final_report(self) -> MetricsReport:
        if not self.reports:
            raise ValueError("no metrics were computed")
        return self.reports[0][1]


def run_sequence(matcher: StereoMatcher, samples: list[SceneSample],
                 window: int | None = None, streaming: bool = False) -> SequenceResult:
    """Sequential evaluation protocol over a rendered sequence.

    The first W-1 frames only update the matcher's state; metrics are
    computed on frame W, and on every later frame as well when
    ``streaming`` is set.  ``window=1`` is independent per-frame
    evaluation of the first frame.
    """
    if not samples:
        raise ValueError("empty sequence")
    w = window if window is not None else matcher.window
    if not 1 <= w <= len(samples):
        raise ValueError(f"window {w} outside [1, {len(samples)}]")
    matcher._check_fitted()
    matcher.reset_state()

    maps = []
    reports = []
    for i, sample in enumerate(samples):
        result = matcher.process_frame(sample.left, sample.right,
                                       pose=sample.pose, camera=sample.camera)
        maps.append(result.disparity)
        if i + 1 == w or (streaming and i + 1 > w):
            reports.append((i, compute_metrics(result.disparity.values,
                                               sample.gt_disparity, sample.occlusion)))
    return SequenceResult(maps=maps, reports=reports)
