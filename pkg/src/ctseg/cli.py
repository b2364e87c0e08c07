"""Command-line interface.

Sessions live in directories (see session.save_session); every command that
mutates one loads it, applies the operation, and writes the result back, so
batch runs over independent cases can proceed in parallel processes.
"""

from __future__ import annotations

import functools
from pathlib import Path

import click
import yaml

from . import __version__
from .config import PipelineConfig, load_config
from .errors import CTSegError
from .grid import Mask, volume_ml
from .nifti import read_nifti, write_nifti
from .phantom import make_lung_phantom
from .pipeline import apply_edits, evaluate_cases, run_lesion_pipeline, run_lung_pipeline
from .script import load_edit_script
from .session import load_session, new_session, save_session
from .shapemodel import build_shape_model, save_shape_model


def _wrap_errors(fn):
    """Turn toolkit errors into clean exit-code-1 messages."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except CTSegError as err:
            raise click.ClickException(str(err)) from err

    return wrapper


def _echo_session(session) -> None:
    click.echo(f"session {session.session_id}: stage {session.stage}")
    for target in sorted(session.maps):
        mask = Mask(session.working.grid, (session.maps[target].voxels > 0).astype("uint8"))
        click.echo(f"  {target}: {volume_ml(mask):.1f} mL")


@click.group()
@click.version_option(__version__, prog_name="ctseg")
def main() -> None:
    """Semi-automatic volumetric CT segmentation."""


@main.command("segment-lungs")
@click.argument("volume_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="YAML pipeline configuration (defaults used when omitted).",
)
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False, path_type=Path),
    required=True,
    help="Directory to create the session in.",
)
@click.option("--session-id", default=None, help="Explicit session id (default: random).")
@_wrap_errors
def segment_lungs_cmd(volume_path: Path, config_path, out_dir: Path, session_id) -> None:
    """Run the automatic lung stage on a volume and save a new session."""
    config = load_config(config_path) if config_path else PipelineConfig()
    session = new_session(read_nifti(volume_path), config, session_id=session_id)
    session = run_lung_pipeline(session)
    save_session(session, out_dir)
    _echo_session(session)


@main.command("segment-lesions")
@click.argument("session_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    help="Destination session directory (default: update in place).",
)
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="Configuration override for this run (recorded in the session).",
)
@click.option("--force", is_flag=True, help="Re-run even if lesions already exist.")
@_wrap_errors
def segment_lesions_cmd(session_dir: Path, out_dir, config_path, force: bool) -> None:
    """Run the automatic lesion stage inside the session's lung mask."""
    session = load_session(session_dir)
    config = load_config(config_path) if config_path else None
    session = run_lesion_pipeline(session, config, force=force)
    save_session(session, out_dir if out_dir is not None else session_dir)
    _echo_session(session)


@main.command("edit")
@click.argument("session_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option(
    "--script",
    "script_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
    help="Edit script (JSON) to apply and append to the history.",
)
@_wrap_errors
def edit_cmd(session_dir: Path, script_path: Path) -> None:
    """Apply an edit script to a session, in place."""
    session = load_session(session_dir)
    session = apply_edits(session, load_edit_script(script_path))
    save_session(session, session_dir)
    click.echo(
        f"session {session.session_id}: stage {session.stage}, "
        f"{len(session.history)} edit(s) in history"
    )


@main.command("evaluate")
@click.option(
    "--cases",
    "cases_dir",
    type=click.Path(exists=True, file_okay=False, path_type=Path),
    required=True,
    help="Directory with one subdirectory per case holding <rater>.nii.gz masks.",
)
@click.option(
    "--groups",
    "groups_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
    help="YAML mapping of rater name to group (expert/novice/reference).",
)
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False, path_type=Path),
    required=True,
    help="Directory for report.csv, bland_altman.csv, and summary.txt.",
)
@_wrap_errors
def evaluate_cmd(cases_dir: Path, groups_path: Path, out_dir: Path) -> None:
    """Compute rater agreement statistics over a case directory."""
    groups = yaml.safe_load(groups_path.read_text())
    if not isinstance(groups, dict):
        raise click.ClickException(f"{groups_path} must map rater names to groups")
    evaluate_cases(cases_dir, groups, out_dir)
    click.echo((Path(out_dir) / "summary.txt").read_text(), nl=False)


@main.command("build-model")
@click.argument("map_paths", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--side", type=click.Choice(["left", "right"]), required=True)
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False, path_type=Path),
    required=True,
    help="Directory to store the shape model in.",
)
@_wrap_errors
def build_model_cmd(map_paths, side: str, out_dir: Path) -> None:
    """Build a lung shape model from signed distance map files."""
    training = tuple(read_nifti(p, kind="distance") for p in map_paths)
    model = build_shape_model(training, side)
    save_shape_model(model, out_dir)
    click.echo(f"{side} model: {model.n_modes} mode(s) from {len(training)} map(s)")


@main.command("serve")
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option(
    "--data",
    "data_dir",
    type=click.Path(file_okay=False, path_type=Path),
    required=True,
    help="Directory where the service persists sessions.",
)
def serve_cmd(port: int, host: str, data_dir: Path) -> None:
    """Run the HTTP annotation service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(data_dir), host=host, port=port)


@main.command("phantom")
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False, path_type=Path),
    required=True,
    help="Directory for volume.nii.gz and ground-truth masks.",
)
@click.option("--size", type=int, default=128, show_default=True, help="Voxels per axis.")
@click.option("--spacing", type=float, default=1.0, show_default=True, help="Voxel size in mm.")
@click.option("--lesions/--no-lesions", default=True, show_default=True)
@_wrap_errors
def phantom_cmd(out_dir: Path, size: int, spacing: float, lesions: bool) -> None:
    """Write a synthetic lung volume with analytic ground truth."""
    ph = make_lung_phantom(n=size, spacing=spacing, with_lesions=lesions)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_nifti(ph.volume, out_dir / "volume.nii.gz")
    masks = {"lungs-left": ph.left, "lungs-right": ph.right}
    if lesions:
        masks["ggo"] = ph.ggo
        masks["consolidation"] = ph.consolidation
    for name, mask in masks.items():
        write_nifti(mask, out_dir / f"{name}.nii.gz")
    click.echo(f"phantom written to {out_dir}")


if __name__ == "__main__":
    main()
