"""Session-level orchestration: automatic stages, edits, undo, evaluation.

The automatic segmentation runs on a 1 mm isotropic working volume sampled
directly from the reoriented input. A separate anti-aliased coarse volume
(3 mm by default) keeps model registration cheap; it never feeds voxel
classification, so phantom-exact inputs stay exact on the working grid.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Optional

import numpy as np

from .config import PipelineConfig
from .distance import signed_distance
from .editing import TARGETS, EditScript, EditState, apply_edit_script
from .errors import ConfigError, ScriptError, SeedError, StageError
from .grid import DistanceMap, Mask, Volume, mask_volume
from .levelset import lung_field_estimate, multires_levelset, threshold_levelset
from .metrics import Rater, RaterSet, bland_altman_csv, report_csv, report_text, volume_stats
from .nifti import read_nifti
from .register import register_affine
from .resample import reorient_rai, resample, resample_mask_to_grid
from .session import Session, stage_rank
from .shapemodel import ShapeModel, _stage, load_shape_model, model_levelset, split_sides

LUNG_SIDES = ("left", "right")


def _load_side_model(path, side: str) -> Optional[ShapeModel]:
    if path is None:
        return None
    model = _stage(f"load_model_{side}", load_shape_model, path)
    if model.side != side:
        raise ConfigError(f"shape model at {path} has side {model.side!r}, expected {side!r}")
    return model


def run_lung_pipeline(session: Session, config: Optional[PipelineConfig] = None, force: bool = False) -> Session:
    """Reorient, resample, find the lung field, refine each side.

    Allowed at stage loaded, or anywhere with force, which discards every
    downstream artifact: maps, lesion result, and the whole edit history.
    """
    cfg = session.config if config is None else config
    if session.stage != "loaded" and not force:
        raise StageError(
            f"lung pipeline runs at stage loaded, session is at {session.stage};"
            " pass force to re-run"
        )
    models = {side: _load_side_model(getattr(cfg, f"shape_model_{side}"), side) for side in LUNG_SIDES}

    rai = _stage("reorient", reorient_rai, session.volume)
    working = _stage("resample", resample, rai, cfg.iso_spacing_mm, "iso")
    field = _stage("lung_field", lung_field_estimate, working, cfg.lung_params)
    sides = split_sides(field.voxels > 0, working.grid.dims)

    coarse = None
    maps = {}
    for side in LUNG_SIDES:
        side_vox = sides[side]
        if not side_vox.any():
            err = SeedError(f"lung_split: no {side}-side lung field component")
            err.stage = "lung_split"
            raise err
        model = models[side]
        if model is None:
            # no prior available: same pass with the model share dropped
            params = dataclasses.replace(cfg.model_params(), model_weight=0.0)
            phi = _stage(
                f"model_levelset_{side}",
                threshold_levelset,
                working,
                params,
                Mask(working.grid, side_vox),
            )
        else:
            if coarse is None:
                coarse = _stage("resample", resample, rai, cfg.coarse_spacing_mm, "down")
            side_coarse = resample_mask_to_grid(Mask(working.grid, side_vox), coarse.grid)
            fixed = signed_distance(side_coarse, cfg.distance_cap_mm)
            pose = _stage(f"register_{side}", register_affine, model.mean, fixed)
            phi = _stage(
                f"model_levelset_{side}", model_levelset, working, model, pose, cfg.model_params()
            )
        maps[f"lungs-{side}"] = phi

    return dataclasses.replace(
        session,
        config=cfg,
        working=working,
        stage="lungs-auto",
        base_maps=maps,
        maps=dict(maps),
        history=EditScript(()),
    )


def run_lesion_pipeline(session: Session, config: Optional[PipelineConfig] = None, force: bool = False) -> Session:
    """Segment lesions inside the current lung maps.

    The working volume is masked to the lung union (everything else pushed
    far below any threshold) and the two-stage threshold evolution runs on
    that. No voxel in the lesion HU band is a valid clinical outcome and
    yields an empty map. Re-running needs force and drops lesion edits.
    """
    cfg = session.config if config is None else config
    rank = stage_rank(session.stage)
    if rank < stage_rank("lungs-auto"):
        raise StageError(f"lesion pipeline needs the lungs first, session is at {session.stage}")
    if rank >= stage_rank("lesions-auto") and not force:
        raise StageError(
            f"lesions already segmented, session is at {session.stage}; pass force to re-run"
        )

    union = (session.maps["lungs-left"].voxels > 0) | (session.maps["lungs-right"].voxels > 0)
    masked = mask_volume(session.working, Mask(session.working.grid, union))
    try:
        lesions = _stage("multires_levelset", multires_levelset, masked, cfg.lesion_params)
    except SeedError:
        lesions = DistanceMap(
            session.working.grid,
            np.full(session.working.grid.dims, -cfg.distance_cap_mm, dtype=np.float32),
        )

    base_maps = dict(session.base_maps)
    maps = dict(session.maps)
    base_maps["lesions"] = lesions
    maps["lesions"] = lesions
    events = tuple(e for e in session.history.events if e[0] != "lesions")
    return dataclasses.replace(
        session,
        config=cfg,
        stage="lesions-auto",
        base_maps=base_maps,
        maps=maps,
        history=EditScript(events),
    )


def _required_stage(target: str) -> str:
    return "lesions-auto" if target == "lesions" else "lungs-auto"


def _apply_one(working: Volume, maps: dict, target, event, index: int) -> dict:
    single = EditScript(((target, event),))
    try:
        state = apply_edit_script(EditState(working, maps), single)
    except ScriptError as e:
        message = str(e)
        prefix = "event 0: "
        if message.startswith(prefix):
            message = message[len(prefix):]
        raise ScriptError(message, index) from e
    return dict(state.maps)


def apply_edits(session: Session, script: EditScript) -> Session:
    """Apply the script event by event and append it to the history.

    Each event is delegated in its own editing call, so a target's surface
    is voxelized back to a map between events. That makes one batch script,
    the same events issued one per call, and a later history replay all
    produce bit-identical maps.
    """
    if not isinstance(script, EditScript):
        script = EditScript(tuple(script))
    for index, (target, _event) in enumerate(script.events):
        if target not in TARGETS:
            raise ScriptError(f"unknown target {target!r}", index)
        need = _required_stage(target)
        if stage_rank(session.stage) < stage_rank(need):
            raise StageError(
                f"target {target} requires stage {need} or later, session is at {session.stage}"
            )

    maps = dict(session.maps)
    for index, (target, event) in enumerate(script.events):
        maps = _apply_one(session.working, maps, target, event, index)

    stage = session.stage
    if stage.endswith("-auto"):
        stage = stage[: -len("-auto")] + "-edited"
    return dataclasses.replace(
        session,
        maps=maps,
        stage=stage,
        history=EditScript(session.history.events + script.events),
    )


def undo_last(session: Session) -> Session:
    """Drop the last edit by replaying its target's remaining events."""
    if len(session.history) == 0:
        raise ScriptError("edit history is empty; nothing to undo")
    events = session.history.events[:-1]
    target = session.history.events[-1][0]
    maps = {target: session.base_maps[target]}
    for index, (t, event) in enumerate(te for te in events if te[0] == target):
        maps = _apply_one(session.working, maps, t, event, index)
    new_maps = dict(session.maps)
    new_maps[target] = maps[target]
    return dataclasses.replace(session, maps=new_maps, history=EditScript(events))


def evaluate_cases(cases_dir, groups, out_dir):
    """Compute agreement statistics over a directory of rater masks.

    cases_dir holds one subdirectory per case, each containing
    <rater>.nii.gz (or .nii) for every rater in groups, a mapping from
    rater name to group. Writes report.csv, bland_altman.csv, and
    summary.txt into out_dir and returns the report.
    """
    cases_dir = Path(cases_dir)
    case_ids = tuple(sorted(p.name for p in cases_dir.iterdir() if p.is_dir()))
    if not case_ids:
        raise ConfigError(f"no case directories under {cases_dir}")
    raters = tuple(Rater(name, groups[name]) for name in sorted(groups))
    rows = []
    for case in case_ids:
        row = []
        for rater in raters:
            path = cases_dir / case / f"{rater.name}.nii.gz"
            if not path.exists():
                path = path.with_suffix("")
            if not path.exists():
                raise ConfigError(f"case {case!r}: missing mask for rater {rater.name!r}")
            row.append(read_nifti(path, kind="mask"))
        rows.append(tuple(row))

    report = volume_stats(RaterSet(case_ids, raters, tuple(rows)))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report_csv(report))
    (out / "bland_altman.csv").write_text(bland_altman_csv(report))
    (out / "summary.txt").write_text(report_text(report))
    return report
