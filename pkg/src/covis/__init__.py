"""Two-stage image matching around co-visible region crops.

Stage-one correspondences are clustered to propose one crop box per image;
matching is repeated inside the crops; both stages feed robust F/E/H
estimation. Includes pose-error metrics (AUC, mAA), a synthetic two-view
oracle, a self-contained classical matcher, and a wire protocol for
external matcher workers.
"""

from .clustering import NOISE, DbscanParams, dbscan, default_eps
from .core import (
    Correspondence,
    CropBox,
    ImageMeta,
    MatchSet,
    Point2,
    Stage,
    map_original_to_stage2,
    map_stage2_to_original,
    resize_scale,
    resized_dims,
)
from .geometry import (
    CameraIntrinsics,
    EstimatorParams,
    Model3x3,
    ModelKind,
    RelativePose,
    eight_point,
    homography_dlt,
    pose_from_fundamental,
    ransac,
    sampson_distance,
)
from .matchers import ExternalMatcherClient, MatcherKind, MatcherSpec, RawMatches
from .metrics import PoseError, ThresholdGrid, maa, pose_auc, rotation_error, translation_error
from .cropping import CropProposal, CropParams, bounding_box, expand_box, propose_crops, select_clusters
from .pipeline import (
    ImageInput,
    PipelineConfig,
    PipelineResult,
    TwoStagePipeline,
    run_two_stage,
    scene_inputs,
)
from .synthetic import SceneSpec, SyntheticScene, generate_epipolar_scene, render_planar_pair

__version__ = "0.1.0"

__all__ = [
    "NOISE",
    "DbscanParams",
    "dbscan",
    "default_eps",
    "Correspondence",
    "CropBox",
    "ImageMeta",
    "MatchSet",
    "Point2",
    "Stage",
    "map_original_to_stage2",
    "map_stage2_to_original",
    "resize_scale",
    "resized_dims",
    "CameraIntrinsics",
    "EstimatorParams",
    "Model3x3",
    "ModelKind",
    "RelativePose",
    "eight_point",
    "homography_dlt",
    "pose_from_fundamental",
    "ransac",
    "sampson_distance",
    "ExternalMatcherClient",
    "MatcherKind",
    "MatcherSpec",
    "RawMatches",
    "PoseError",
    "ThresholdGrid",
    "maa",
    "pose_auc",
    "rotation_error",
    "translation_error",
    "CropProposal",
    "CropParams",
    "bounding_box",
    "expand_box",
    "propose_crops",
    "select_clusters",
    "ImageInput",
    "PipelineConfig",
    "PipelineResult",
    "TwoStagePipeline",
    "run_two_stage",
    "scene_inputs",
    "SceneSpec",
    "SyntheticScene",
    "generate_epipolar_scene",
    "render_planar_pair",
]
