"""Pipeline configuration and its YAML file format.

Defaults are the published operating point: lungs found in the
[-860, -200] HU band and lesions in [-700, 200], curvature share 0.6 for
the threshold passes, 0.3 curvature plus 0.1 prior for the model-guided
pass, and a 3 mm coarse run refined on a 1 mm isotropic grid.

File schema (every key optional, omitted keys keep their default)::

    lung:                # threshold pass over the lung HU band
      t_low: -860.0
      t_high: -200.0
      curvature_weight: 0.6
      max_iterations: 500
      convergence_tol: 0.001
      step_size: 0.5
    lesion:              # same fields, lesion HU band
      ...
    model:               # model-guided pass (lung thresholds are reused)
      curvature_weight: 0.3
      model_weight: 0.1
    shape_models:
      left: null         # directory written by build-model, or null
      right: null
    resample:
      coarse_mm: 3.0
      iso_mm: 1.0
    distance_cap_mm: 30.0
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import yaml

from .errors import ConfigError, ParseError
from .levelset import LevelSetParams


@dataclass(frozen=True)
class PipelineConfig:
    lung_params: LevelSetParams = LevelSetParams(-860.0, -200.0, curvature_weight=0.6)
    lesion_params: LevelSetParams = LevelSetParams(-700.0, 200.0, curvature_weight=0.6)
    model_curvature_weight: float = 0.3
    model_weight: float = 0.1
    shape_model_left: Optional[str] = None
    shape_model_right: Optional[str] = None
    coarse_spacing_mm: float = 3.0
    iso_spacing_mm: float = 1.0
    distance_cap_mm: float = 30.0

    def __post_init__(self):
        for name in ("lung_params", "lesion_params"):
            if getattr(self, name).model_weight != 0.0:
                raise ConfigError(
                    f"{name} must keep model_weight 0; the model section carries the prior"
                )
        # reuses the parameter class to validate the weight pair
        LevelSetParams(
            -1.0,
            0.0,
            curvature_weight=self.model_curvature_weight,
            model_weight=self.model_weight,
        )
        for name in ("shape_model_left", "shape_model_right"):
            value = getattr(self, name)
            if value is None:
                continue
            if isinstance(value, (str, os.PathLike)):
                object.__setattr__(self, name, os.fspath(value))
            else:
                raise ConfigError(f"{name} must be a path string or None")
        if self.coarse_spacing_mm <= 0.0 or self.iso_spacing_mm <= 0.0:
            raise ConfigError("resample spacings must be positive")
        if self.coarse_spacing_mm < self.iso_spacing_mm:
            raise ConfigError("coarse spacing must not be finer than the isotropic spacing")
        if self.distance_cap_mm <= 0.0:
            raise ConfigError("distance_cap_mm must be positive")

    def model_params(self) -> LevelSetParams:
        """Model-guided pass parameters: lung thresholds, prior weights."""
        return dataclasses.replace(
            self.lung_params,
            curvature_weight=self.model_curvature_weight,
            model_weight=self.model_weight,
        )


def _levelset_dict(p: LevelSetParams) -> dict:
    return {
        "t_low": p.t_low,
        "t_high": p.t_high,
        "curvature_weight": p.curvature_weight,
        "max_iterations": p.max_iterations,
        "convergence_tol": p.convergence_tol,
        "step_size": p.step_size,
    }


def config_to_dict(cfg: PipelineConfig) -> dict:
    return {
        "lung": _levelset_dict(cfg.lung_params),
        "lesion": _levelset_dict(cfg.lesion_params),
        "model": {
            "curvature_weight": cfg.model_curvature_weight,
            "model_weight": cfg.model_weight,
        },
        "shape_models": {"left": cfg.shape_model_left, "right": cfg.shape_model_right},
        "resample": {"coarse_mm": cfg.coarse_spacing_mm, "iso_mm": cfg.iso_spacing_mm},
        "distance_cap_mm": cfg.distance_cap_mm,
    }


def _merge_section(base: dict, data, path: str, shape_error) -> dict:
    if data is None:
        return dict(base)
    if not isinstance(data, dict):
        raise shape_error(f"config section {path} must be a mapping")
    out = dict(base)
    for key, value in data.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path}.{key}")
        out[key] = value
    return out


def _levelset_from(section: dict) -> LevelSetParams:
    return LevelSetParams(
        t_low=float(section["t_low"]),
        t_high=float(section["t_high"]),
        curvature_weight=float(section["curvature_weight"]),
        max_iterations=int(section["max_iterations"]),
        convergence_tol=float(section["convergence_tol"]),
        step_size=float(section["step_size"]),
    )


def _build(base: PipelineConfig, data, shape_error) -> PipelineConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise shape_error("config root must be a mapping")
    ref = config_to_dict(base)
    for key in data:
        if key not in ref:
            raise ConfigError(f"unknown config key {key}")
    lung = _merge_section(ref["lung"], data.get("lung"), "lung", shape_error)
    lesion = _merge_section(ref["lesion"], data.get("lesion"), "lesion", shape_error)
    model = _merge_section(ref["model"], data.get("model"), "model", shape_error)
    shapes = _merge_section(ref["shape_models"], data.get("shape_models"), "shape_models", shape_error)
    resample = _merge_section(ref["resample"], data.get("resample"), "resample", shape_error)
    try:
        return PipelineConfig(
            lung_params=_levelset_from(lung),
            lesion_params=_levelset_from(lesion),
            model_curvature_weight=float(model["curvature_weight"]),
            model_weight=float(model["model_weight"]),
            shape_model_left=shapes["left"],
            shape_model_right=shapes["right"],
            coarse_spacing_mm=float(resample["coarse_mm"]),
            iso_spacing_mm=float(resample["iso_mm"]),
            distance_cap_mm=float(data.get("distance_cap_mm", ref["distance_cap_mm"])),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad config value: {e}") from e


def config_to_yaml(cfg: PipelineConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def config_from_yaml(text: str) -> PipelineConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ParseError(f"config is not valid YAML: {e}") from e
    return _build(PipelineConfig(), data, ParseError)


def apply_overrides(cfg: PipelineConfig, overrides) -> PipelineConfig:
    """New config with a partial nested mapping merged over cfg."""
    return _build(cfg, overrides, ConfigError)


def save_config(cfg: PipelineConfig, path) -> None:
    Path(path).write_text(config_to_yaml(cfg))


def load_config(path) -> PipelineConfig:
    return config_from_yaml(Path(path).read_text())
