"""Semi-automatic volumetric CT segmentation toolkit."""

from .config import (
    PipelineConfig,
    apply_overrides,
    config_from_yaml,
    config_to_yaml,
    load_config,
    save_config,
)
from .distance import signed_distance
from .editing import (
    Brush,
    EditScript,
    EditState,
    Magnet,
    PolySpline,
    SmartPaint,
    TpsPolyline,
    apply_edit_script,
    brush,
    magnet,
    merge_region,
    rbf_surface,
    smart_paint,
    tps_polyline,
)
from .grid import DistanceMap, Grid, Mask, Mesh, Volume, mask_volume, volume_ml
from .levelset import (
    LESION_LEVELSET,
    LUNG_LEVELSET,
    LevelSetParams,
    lung_field_estimate,
    multires_levelset,
    threshold_levelset,
)
from .mesh import extract_mesh, mesh_to_mask, read_obj, write_obj
from .metrics import (
    AgreementReport,
    Rater,
    RaterSet,
    bland_altman,
    consensus_majority,
    dice,
    gci,
    hd95,
    icc_a1,
    jaccard,
    volume_stats,
)
from .nifti import read_nifti, write_nifti
from .phantom import LungPhantom, make_lung_phantom, phantom_models, training_maps
from .pipeline import (
    apply_edits,
    evaluate_cases,
    run_lesion_pipeline,
    run_lung_pipeline,
    undo_last,
)
from .register import AffineTransform, apply_transform, register_affine
from .resample import reorient_rai, resample
from .script import load_edit_script, save_edit_script, script_from_json, script_to_json
from .session import Session, load_session, new_session, save_session, stage_rank
from .shapemodel import (
    ShapeModel,
    build_shape_model,
    fit_model,
    load_shape_model,
    model_levelset,
    save_shape_model,
    segment_lungs,
)

__version__ = "0.1.0"

__all__ = [
    "AffineTransform",
    "AgreementReport",
    "Brush",
    "DistanceMap",
    "EditScript",
    "EditState",
    "Grid",
    "LESION_LEVELSET",
    "LUNG_LEVELSET",
    "LevelSetParams",
    "LungPhantom",
    "Magnet",
    "Mask",
    "Mesh",
    "PipelineConfig",
    "PolySpline",
    "Rater",
    "RaterSet",
    "Session",
    "ShapeModel",
    "SmartPaint",
    "TpsPolyline",
    "Volume",
    "apply_edit_script",
    "apply_edits",
    "apply_overrides",
    "apply_transform",
    "bland_altman",
    "brush",
    "build_shape_model",
    "config_from_yaml",
    "config_to_yaml",
    "consensus_majority",
    "dice",
    "evaluate_cases",
    "extract_mesh",
    "fit_model",
    "gci",
    "hd95",
    "icc_a1",
    "jaccard",
    "load_config",
    "load_edit_script",
    "load_session",
    "load_shape_model",
    "lung_field_estimate",
    "magnet",
    "make_lung_phantom",
    "mask_volume",
    "merge_region",
    "mesh_to_mask",
    "model_levelset",
    "multires_levelset",
    "new_session",
    "phantom_models",
    "rbf_surface",
    "read_nifti",
    "read_obj",
    "register_affine",
    "reorient_rai",
    "resample",
    "run_lesion_pipeline",
    "run_lung_pipeline",
    "save_config",
    "save_edit_script",
    "save_session",
    "save_shape_model",
    "script_from_json",
    "script_to_json",
    "segment_lungs",
    "signed_distance",
    "smart_paint",
    "stage_rank",
    "threshold_levelset",
    "tps_polyline",
    "training_maps",
    "undo_last",
    "volume_ml",
    "volume_stats",
    "write_nifti",
    "write_obj",
]
