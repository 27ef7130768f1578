"""Sparse coarse-to-fine stereo matching with pose-driven temporal fusion."""

from .aggregation import (FusionConfig, OffsetVolume, predict_heads,
                          spatial_smooth, statistical_fusion)
from .camera import (CameraModel, Pose, backproject, load_intrinsics,
                     load_trajectory, perturb_pose, project, relative_pose,
                     save_intrinsics, save_trajectory)
from .costvolume import (CandidateVolume, CostVolume, assemble_cost,
                         concat_cost, groupwise_multilevel_cost)
from .features import (FeatureCache, FeaturePyramid, build_pyramid,
                       decode_stage, temporal_shift)
from .losses import (LossConfig, finite_difference_check, huber_loss_total,
                     total_loss, wasserstein_offset_loss)
from .metrics import MetricsReport, RegionMetrics, compute_metrics
from .pipeline import (FrameResult, SequenceResult, StereoMatcher,
                       run_sequence)
from .regression import (DisparityMap, init_candidates, regress_topk,
                         sample_candidates, upsample_disparity)
from .synth import (SceneSample, brute_force_disparity, generate_scene,
                    generate_sequence)
from .temporal import (Keyframe, KeyframeBank, build_local_map,
                       reproject_disparity, splat_forward, should_promote,
                       update_keyframe_bank, warp_past_costs)

__version__ = "0.1.0"

__all__ = [
    "CameraModel", "Pose", "project", "backproject", "relative_pose",
    "perturb_pose", "save_intrinsics", "load_intrinsics", "save_trajectory",
    "load_trajectory",
    "FeaturePyramid", "FeatureCache", "build_pyramid", "decode_stage",
    "temporal_shift",
    "CandidateVolume", "CostVolume", "concat_cost", "groupwise_multilevel_cost",
    "assemble_cost",
    "OffsetVolume", "FusionConfig", "spatial_smooth", "statistical_fusion",
    "predict_heads",
    "DisparityMap", "regress_topk", "upsample_disparity", "sample_candidates",
    "init_candidates",
    "Keyframe", "KeyframeBank", "reproject_disparity", "splat_forward",
    "build_local_map", "warp_past_costs", "should_promote", "update_keyframe_bank",
    "LossConfig", "huber_loss_total", "wasserstein_offset_loss", "total_loss",
    "finite_difference_check",
    "SceneSample", "generate_scene", "generate_sequence", "brute_force_disparity",
    "MetricsReport", "RegionMetrics", "compute_metrics",
    "StereoMatcher", "FrameResult", "SequenceResult", "run_sequence",
]
