"""Annotation sessions: the stage machine, edit history, and disk layout.

A session is immutable; pipeline operations return a new one. The stage
only moves forward - re-running an automatic stage needs an explicit force
and resets everything downstream of it.
"""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .config import PipelineConfig, load_config, save_config
from .editing import TARGETS, EditScript
from .errors import ConfigError, GeometryError, ParseError
from .grid import Volume
from .nifti import read_nifti, write_nifti
from .script import load_edit_script, save_edit_script

STAGES = ("loaded", "lungs-auto", "lungs-edited", "lesions-auto", "lesions-edited")
LAYOUT_VERSION = 1


def stage_rank(stage: str) -> int:
    if stage not in STAGES:
        raise ConfigError(f"unknown stage {stage!r}")
    return STAGES.index(stage)


@dataclass(frozen=True, eq=False)
class Session:
    """One volume under annotation.

    base_maps hold each target as the automatic stage produced it; maps hold
    the current state including edits. Replaying history onto base_maps
    reproduces maps exactly, which is what undo relies on.
    """

    session_id: str
    volume: Volume
    config: PipelineConfig
    stage: str = "loaded"
    working: Optional[Volume] = None
    base_maps: dict = field(default_factory=dict)
    maps: dict = field(default_factory=dict)
    history: EditScript = EditScript(())

    def __post_init__(self):
        if not isinstance(self.session_id, str) or not self.session_id:
            raise ConfigError("session_id must be a non-empty string")
        stage_rank(self.stage)
        if not isinstance(self.history, EditScript):
            object.__setattr__(self, "history", EditScript(tuple(self.history)))
        object.__setattr__(self, "base_maps", dict(self.base_maps))
        object.__setattr__(self, "maps", dict(self.maps))
        for name in ("base_maps", "maps"):
            for target, dmap in getattr(self, name).items():
                if target not in TARGETS:
                    raise ConfigError(f"unknown target {target!r} in {name}")
                if self.working is None:
                    raise ConfigError(f"{name} present without a working volume")
                if not dmap.grid.same_geometry(self.working.grid):
                    raise GeometryError(
                        f"{name}[{target!r}] grid differs from the working grid"
                    )
        if set(self.maps) != set(self.base_maps):
            raise ConfigError("maps and base_maps must cover the same targets")


def new_session(volume: Volume, config: Optional[PipelineConfig] = None, session_id=None) -> Session:
    return Session(
        session_id=session_id if session_id is not None else uuid.uuid4().hex[:12],
        volume=volume,
        config=config if config is not None else PipelineConfig(),
    )


def save_session(session: Session, path) -> None:
    """Write a session directory; the inverse of load_session, bit-exact."""
    p = Path(path)
    (p / "maps").mkdir(parents=True, exist_ok=True)
    meta = {
        "layout_version": LAYOUT_VERSION,
        "session_id": session.session_id,
        "stage": session.stage,
        "targets": sorted(session.maps),
    }
    (p / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    save_config(session.config, p / "config.yaml")
    write_nifti(session.volume, p / "volume.nii.gz")
    if session.working is not None:
        write_nifti(session.working, p / "working.nii.gz")
    for target, dmap in session.maps.items():
        write_nifti(dmap, p / "maps" / f"{target}.nii.gz")
        write_nifti(session.base_maps[target], p / "maps" / f"{target}.base.nii.gz")
    save_edit_script(session.history, p / "history.json")


def load_session(path) -> Session:
    p = Path(path)
    meta_path = p / "meta.json"
    if not meta_path.is_file():
        raise ParseError(f"{p} is not a session directory (no meta.json)")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as e:
        raise ParseError(f"{meta_path}: {e}") from e
    if not isinstance(meta, dict) or meta.get("layout_version") != LAYOUT_VERSION:
        raise ParseError(f"{meta_path}: unsupported session layout")

    working = None
    if (p / "working.nii.gz").exists():
        working = read_nifti(p / "working.nii.gz", kind="volume")
    maps = {}
    base_maps = {}
    for target in meta.get("targets", []):
        maps[target] = read_nifti(p / "maps" / f"{target}.nii.gz", kind="distance")
        base_maps[target] = read_nifti(p / "maps" / f"{target}.base.nii.gz", kind="distance")
    return Session(
        session_id=meta.get("session_id", ""),
        volume=read_nifti(p / "volume.nii.gz", kind="volume"),
        config=load_config(p / "config.yaml"),
        stage=meta.get("stage", ""),
        working=working,
        base_maps=base_maps,
        maps=maps,
        history=load_edit_script(p / "history.json"),
    )
