"""Command-line interface tests.

Runs every command through click's CliRunner on a small phantom (32^3 voxels
at 4 mm) with a matching config so the working grid equals the input grid.
Numeric segmentation quality is covered by the session and acceptance suites;
these tests pin the command contract: flags, exit codes, file layout, and
error wording.
"""

from __future__ import annotations

import numpy as np
import pytest
from click.testing import CliRunner

from ctseg import (
    Brush,
    EditScript,
    LevelSetParams,
    PipelineConfig,
    SmartPaint,
    config_to_yaml,
    load_session,
    load_shape_model,
    make_lung_phantom,
    new_session,
    read_nifti,
    save_edit_script,
    save_session,
    training_maps,
    write_nifti,
)
from ctseg.cli import main


@pytest.fixture(scope="module")
def phantom():
    return make_lung_phantom(n=32, spacing=4.0, with_lesions=True)


@pytest.fixture(scope="module")
def config_yaml(tmp_path_factory, phantom):
    # native-resolution working grid; lower lesion curvature so the 10 mm
    # ball survives the 8 mm half-resolution stage
    cfg = PipelineConfig(
        lesion_params=LevelSetParams(-700.0, 200.0, curvature_weight=0.3),
        coarse_spacing_mm=8.0,
        iso_spacing_mm=4.0,
    )
    path = tmp_path_factory.mktemp("cfg") / "pipeline.yaml"
    path.write_text(config_to_yaml(cfg))
    return path


@pytest.fixture(scope="module")
def volume_path(tmp_path_factory, phantom):
    path = tmp_path_factory.mktemp("vol") / "case.nii.gz"
    write_nifti(phantom.volume, path)
    return path


@pytest.fixture()
def lung_session_dir(tmp_path, volume_path, config_yaml):
    runner = CliRunner()
    out = tmp_path / "sess"
    res = runner.invoke(
        main,
        [
            "segment-lungs",
            str(volume_path),
            "--config",
            str(config_yaml),
            "--out",
            str(out),
            "--session-id",
            "cli-case",
        ],
    )
    assert res.exit_code == 0, res.output
    return out


def test_help_lists_commands():
    res = CliRunner().invoke(main, ["--help"])
    assert res.exit_code == 0
    for name in (
        "segment-lungs",
        "segment-lesions",
        "edit",
        "evaluate",
        "build-model",
        "serve",
        "phantom",
    ):
        assert name in res.output


def test_version():
    res = CliRunner().invoke(main, ["--version"])
    assert res.exit_code == 0
    assert "0.1.0" in res.output


def test_segment_lungs_creates_session(lung_session_dir):
    session = load_session(lung_session_dir)
    assert session.session_id == "cli-case"
    assert session.stage == "lungs-auto"
    assert set(session.maps) == {"lungs-left", "lungs-right"}
    assert (session.maps["lungs-left"].voxels > 0).any()
    assert (session.maps["lungs-right"].voxels > 0).any()
    # working grid matches the configured 4 mm spacing
    assert session.working is not None
    assert np.allclose(session.working.grid.spacing, (4.0, 4.0, 4.0))


def test_segment_lungs_reports_volumes(tmp_path, volume_path, config_yaml):
    res = CliRunner().invoke(
        main,
        [
            "segment-lungs",
            str(volume_path),
            "--config",
            str(config_yaml),
            "--out",
            str(tmp_path / "s"),
        ],
    )
    assert res.exit_code == 0, res.output
    assert "lungs-auto" in res.output
    assert "lungs-left" in res.output and "mL" in res.output


def test_segment_lungs_missing_input(tmp_path, config_yaml):
    res = CliRunner().invoke(
        main,
        ["segment-lungs", str(tmp_path / "nope.nii.gz"), "--out", str(tmp_path / "s")],
    )
    assert res.exit_code != 0


def test_segment_lungs_bad_config(tmp_path, volume_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("lung:\n  bogus: 3\n")
    res = CliRunner().invoke(
        main,
        [
            "segment-lungs",
            str(volume_path),
            "--config",
            str(bad),
            "--out",
            str(tmp_path / "s"),
        ],
    )
    assert res.exit_code == 1
    assert "unknown config key" in res.output


def test_segment_lesions_in_place(lung_session_dir):
    res = CliRunner().invoke(main, ["segment-lesions", str(lung_session_dir)])
    assert res.exit_code == 0, res.output
    session = load_session(lung_session_dir)
    assert session.stage == "lesions-auto"
    lesions = session.maps["lesions"].voxels > 0
    assert lesions.any()
    union = (session.maps["lungs-left"].voxels > 0) | (
        session.maps["lungs-right"].voxels > 0
    )
    assert not (lesions & ~union).any()


def test_segment_lesions_out_dir(tmp_path, lung_session_dir):
    out = tmp_path / "lesioned"
    res = CliRunner().invoke(
        main, ["segment-lesions", str(lung_session_dir), "--out", str(out)]
    )
    assert res.exit_code == 0, res.output
    assert load_session(out).stage == "lesions-auto"
    # source session untouched
    assert load_session(lung_session_dir).stage == "lungs-auto"


def test_segment_lesions_requires_lungs(tmp_path, phantom):
    fresh = tmp_path / "fresh"
    save_session(new_session(phantom.volume, session_id="raw"), fresh)
    res = CliRunner().invoke(main, ["segment-lesions", str(fresh)])
    assert res.exit_code == 1
    assert "lungs first" in res.output and "loaded" in res.output


def test_segment_lesions_force(lung_session_dir):
    runner = CliRunner()
    assert runner.invoke(main, ["segment-lesions", str(lung_session_dir)]).exit_code == 0
    again = runner.invoke(main, ["segment-lesions", str(lung_session_dir)])
    assert again.exit_code == 1
    forced = runner.invoke(main, ["segment-lesions", str(lung_session_dir), "--force"])
    assert forced.exit_code == 0, forced.output


def _brush_event(center=(52.0, 0.0, 0.0)):
    return ("lungs-left", Brush(center=center, radius=8.0, mode="add"))


def test_edit_applies_script(tmp_path, lung_session_dir):
    script = tmp_path / "script.json"
    save_edit_script(EditScript((_brush_event(),)), script)
    before = load_session(lung_session_dir).maps["lungs-left"].voxels.copy()
    res = CliRunner().invoke(
        main, ["edit", str(lung_session_dir), "--script", str(script)]
    )
    assert res.exit_code == 0, res.output
    session = load_session(lung_session_dir)
    assert session.stage == "lungs-edited"
    assert len(session.history.events) == 1
    assert not np.array_equal(session.maps["lungs-left"].voxels, before)


def test_edit_reports_event_index(tmp_path, lung_session_dir):
    bad = SmartPaint(
        stroke=((900.0, 0.0, 0.0), (910.0, 0.0, 0.0)), tube_radius=2.0, mode="add"
    )
    script = tmp_path / "script.json"
    save_edit_script(EditScript((_brush_event(), ("lungs-left", bad))), script)
    res = CliRunner().invoke(
        main, ["edit", str(lung_session_dir), "--script", str(script)]
    )
    assert res.exit_code == 1
    assert "event 1" in res.output
    # failed batch leaves the session untouched
    assert load_session(lung_session_dir).stage == "lungs-auto"


def _ball_mask(grid, center_ijk, radius_vox):
    idx = np.indices(grid.dims, dtype=np.float64)
    d2 = sum((idx[a] - center_ijk[a]) ** 2 for a in range(3))
    return (d2 <= radius_vox**2).astype(np.uint8)


def test_evaluate_writes_reports(tmp_path, phantom):
    from ctseg import Mask

    grid = phantom.left.grid
    cases = tmp_path / "cases"
    radii = {"alice": 5.0, "bob": 5.5, "carol": 6.0}
    for case, center in (("c1", (16, 16, 16)), ("c2", (14, 16, 18))):
        d = cases / case
        d.mkdir(parents=True)
        for rater, radius in radii.items():
            write_nifti(
                Mask(grid, _ball_mask(grid, center, radius)), d / f"{rater}.nii.gz"
            )
    groups = tmp_path / "groups.yaml"
    groups.write_text("alice: expert\nbob: expert\ncarol: novice\n")
    out = tmp_path / "report"
    res = CliRunner().invoke(
        main,
        [
            "evaluate",
            "--cases",
            str(cases),
            "--groups",
            str(groups),
            "--out",
            str(out),
        ],
    )
    assert res.exit_code == 0, res.output
    for name in ("report.csv", "bland_altman.csv", "summary.txt"):
        assert (out / name).is_file()
    assert res.output.strip()


def test_evaluate_missing_mask(tmp_path, phantom):
    from ctseg import Mask

    grid = phantom.left.grid
    cases = tmp_path / "cases"
    for case in ("c1", "c2"):
        d = cases / case
        d.mkdir(parents=True)
        write_nifti(Mask(grid, _ball_mask(grid, (16, 16, 16), 5.0)), d / "alice.nii.gz")
        if case == "c1":
            write_nifti(
                Mask(grid, _ball_mask(grid, (16, 16, 16), 6.0)), d / "bob.nii.gz"
            )
    groups = tmp_path / "groups.yaml"
    groups.write_text("alice: expert\nbob: novice\n")
    res = CliRunner().invoke(
        main,
        [
            "evaluate",
            "--cases",
            str(cases),
            "--groups",
            str(groups),
            "--out",
            str(tmp_path / "report"),
        ],
    )
    assert res.exit_code == 1
    assert "c2" in res.output and "bob" in res.output


def test_build_model(tmp_path):
    maps = training_maps("left", count=3, n=24, spacing=4.0)
    paths = []
    for i, m in enumerate(maps):
        p = tmp_path / f"map{i}.nii.gz"
        write_nifti(m, p)
        paths.append(str(p))
    out = tmp_path / "model"
    res = CliRunner().invoke(
        main, ["build-model", *paths, "--side", "left", "--out", str(out)]
    )
    assert res.exit_code == 0, res.output
    model = load_shape_model(out)
    assert model.side == "left"
    assert model.n_modes >= 1


def test_build_model_needs_two(tmp_path):
    (m,) = training_maps("left", count=2, n=24, spacing=4.0)[:1]
    p = tmp_path / "only.nii.gz"
    write_nifti(m, p)
    res = CliRunner().invoke(
        main, ["build-model", str(p), "--side", "left", "--out", str(tmp_path / "model")]
    )
    assert res.exit_code == 1
    assert "at least 2" in res.output


def test_build_model_rejects_bad_side(tmp_path):
    res = CliRunner().invoke(
        main, ["build-model", "x.nii.gz", "--side", "middle", "--out", str(tmp_path)]
    )
    assert res.exit_code != 0


def test_phantom_command(tmp_path):
    out = tmp_path / "ph"
    res = CliRunner().invoke(
        main,
        ["phantom", "--out", str(out), "--size", "24", "--spacing", "4.0", "--lesions"],
    )
    assert res.exit_code == 0, res.output
    vol = read_nifti(out / "volume.nii.gz")
    assert vol.grid.dims == (24, 24, 24)
    assert set(np.unique(vol.voxels)) <= {-1000.0, 40.0, -800.0, -400.0, -100.0}
    for name in ("lungs-left", "lungs-right", "ggo", "consolidation"):
        mask = read_nifti(out / f"{name}.nii.gz", kind="mask")
        assert mask.voxels.any()


def test_phantom_command_no_lesions(tmp_path):
    out = tmp_path / "ph"
    res = CliRunner().invoke(
        main, ["phantom", "--out", str(out), "--size", "24", "--no-lesions"]
    )
    assert res.exit_code == 0, res.output
    assert (out / "volume.nii.gz").is_file()
    assert not (out / "ggo.nii.gz").exists()


def test_serve_help():
    res = CliRunner().invoke(main, ["serve", "--help"])
    assert res.exit_code == 0
    assert "--port" in res.output and "--data" in res.output
