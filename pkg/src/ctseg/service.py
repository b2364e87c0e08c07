"""HTTP annotation service.

One FastAPI app per data directory. Sessions are persisted to disk after
every mutation and reloaded lazily, so the service survives restarts and
multiple worker threads see one committed state. Mutations take a
per-session lock (single writer); slice and export reads run lock-free
against the last committed session object, which is immutable.

Status mapping: unknown session or target 404, stage conflicts 409,
everything else the toolkit rejects 422 (edit rejections carry the event
index in the body).
"""

from __future__ import annotations

import base64
import io
import json
import re
import tempfile
import threading
import zipfile
from pathlib import Path

import numpy as np
from fastapi import Body, FastAPI, HTTPException, Query, Request
from fastapi.responses import JSONResponse, PlainTextResponse, Response
from PIL import Image

from . import __version__
from .config import apply_overrides, config_to_dict
from .editing import TARGETS
from .errors import CTSegError, ParseError, ScriptError, StageError
from .grid import Mask, volume_ml
from .mesh import extract_mesh, obj_text
from .nifti import read_nifti, write_nifti
from .pipeline import apply_edits, run_lesion_pipeline, run_lung_pipeline, undo_last
from .resample import resample_mask_to_grid
from .script import script_from_json, script_to_json
from .session import Session, load_session, new_session, save_session

DEFAULT_WINDOW_HU = 1500.0
DEFAULT_LEVEL_HU = -600.0

_ID_PATTERN = re.compile(r"[A-Za-z0-9][A-Za-z0-9._-]{0,63}")


class _SessionStore:
    """Disk-backed session registry with per-session writer locks."""

    def __init__(self, root: Path):
        self.root = root
        self._cache: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._master = threading.Lock()

    def lock(self, session_id: str) -> threading.Lock:
        with self._master:
            return self._locks.setdefault(session_id, threading.Lock())

    def exists(self, session_id: str) -> bool:
        return session_id in self._cache or (self.root / session_id / "meta.json").is_file()

    def get(self, session_id: str) -> Session:
        session = self._cache.get(session_id)
        if session is not None:
            return session
        path = self.root / session_id
        if not (path / "meta.json").is_file():
            raise HTTPException(404, f"no session {session_id!r}")
        session = load_session(path)
        with self._master:
            return self._cache.setdefault(session_id, session)

    def commit(self, session: Session) -> None:
        # disk first: a crash after the write still leaves a loadable session
        save_session(session, self.root / session.session_id)
        self._cache[session.session_id] = session


def _volume_from_bytes(body: bytes):
    if not body:
        raise ParseError("empty request body, expected NIfTI bytes")
    with tempfile.TemporaryDirectory() as td:
        path = Path(td) / "upload.nii"
        path.write_bytes(body)
        try:
            return read_nifti(path)
        except OSError as e:
            raise ParseError(f"request body is not a NIfTI volume: {e}") from e


def _nifti_bytes(obj) -> bytes:
    with tempfile.TemporaryDirectory() as td:
        path = Path(td) / "out.nii.gz"
        write_nifti(obj, path)
        return path.read_bytes()


def _grid_info(grid) -> dict:
    return {
        "dims": [int(n) for n in grid.dims],
        "spacing": [float(s) for s in grid.spacing],
        "origin": [float(o) for o in grid.origin],
        "direction": [[float(c) for c in row] for row in grid.direction],
    }


def _state_payload(session: Session) -> dict:
    targets = {}
    for target in sorted(session.maps):
        positive = Mask(
            session.working.grid, (session.maps[target].voxels > 0).astype(np.uint8)
        )
        targets[target] = {"volume_ml": volume_ml(positive)}
    history = [
        {"target": e["target"], "tool": e["tool"]}
        for e in json.loads(script_to_json(session.history))["events"]
    ]
    return {
        "session_id": session.session_id,
        "stage": session.stage,
        "history_length": len(session.history),
        "history": history,
        "parameters": config_to_dict(session.config),
        "targets": targets,
        "grid": {
            "native": _grid_info(session.volume.grid),
            "working": _grid_info(session.working.grid) if session.working is not None else None,
        },
    }


def _rle_encode(flat: np.ndarray) -> list[int]:
    """Run starts and lengths over a flat boolean array, C order."""
    edges = np.flatnonzero(np.diff(np.concatenate(([0], flat.astype(np.int8), [0]))))
    runs: list[int] = []
    for start, stop in zip(edges[::2], edges[1::2]):
        runs.extend((int(start), int(stop - start)))
    return runs


def _take_slice(voxels: np.ndarray, axis: int, index: int) -> np.ndarray:
    return np.take(voxels, index, axis=axis)


def _changed_bounds(before: np.ndarray, after: np.ndarray):
    diff = (before > 0) ^ (after > 0)
    if not diff.any():
        return None
    nz = np.nonzero(diff)
    return {
        "lo": [int(axis.min()) for axis in nz],
        "hi": [int(axis.max()) for axis in nz],
    }


def _overrides_config(session: Session, payload: dict | None):
    payload = payload or {}
    overrides = payload.get("overrides") or {}
    if not isinstance(overrides, dict):
        raise ParseError("'overrides' must be an object of config sections")
    return apply_overrides(session.config, overrides), bool(payload.get("force", False))


def create_app(data_dir) -> FastAPI:
    root = Path(data_dir)
    root.mkdir(parents=True, exist_ok=True)
    app = FastAPI(title="ctseg annotation service", version=__version__)
    store = _SessionStore(root)

    @app.exception_handler(StageError)
    async def _stage_conflict(request: Request, exc: StageError):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.exception_handler(ScriptError)
    async def _script_rejected(request: Request, exc: ScriptError):
        return JSONResponse(
            status_code=422,
            content={"detail": str(exc), "event_index": exc.event_index},
        )

    @app.exception_handler(CTSegError)
    async def _toolkit_rejected(request: Request, exc: CTSegError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.post("/sessions")
    async def create_session(request: Request, session_id: str | None = Query(None)):
        if session_id is not None and not _ID_PATTERN.fullmatch(session_id):
            raise HTTPException(422, f"invalid session id {session_id!r}")
        volume = _volume_from_bytes(await request.body())
        session = new_session(volume, session_id=session_id)
        lock = store.lock(session.session_id)
        with lock:
            if store.exists(session.session_id):
                raise HTTPException(409, f"session {session.session_id!r} already exists")
            store.commit(session)
        return {
            "session_id": session.session_id,
            "stage": session.stage,
            "dims": [int(n) for n in volume.grid.dims],
            "spacing": [float(s) for s in volume.grid.spacing],
        }

    @app.post("/sessions/{session_id}/lungs")
    def run_lungs(session_id: str, payload: dict | None = Body(None)):
        with store.lock(session_id):
            session = store.get(session_id)
            config, force = _overrides_config(session, payload)
            session = run_lung_pipeline(session, config, force=force)
            store.commit(session)
        return _state_payload(session)

    @app.post("/sessions/{session_id}/lesions")
    def run_lesions(session_id: str, payload: dict | None = Body(None)):
        with store.lock(session_id):
            session = store.get(session_id)
            config, force = _overrides_config(session, payload)
            session = run_lesion_pipeline(session, config, force=force)
            store.commit(session)
        return _state_payload(session)

    @app.post("/sessions/{session_id}/edits")
    def post_edit(session_id: str, payload: dict = Body(...)):
        script = script_from_json(json.dumps({"version": 1, "events": [payload]}))
        target = script.events[0][0]
        with store.lock(session_id):
            session = store.get(session_id)
            before = session.maps.get(target)
            session = apply_edits(session, script)
            store.commit(session)
        changed = _changed_bounds(before.voxels, session.maps[target].voxels)
        body = _state_payload(session)
        body["target"] = target
        body["changed"] = changed
        return body

    @app.post("/sessions/{session_id}/undo")
    def post_undo(session_id: str):
        with store.lock(session_id):
            session = store.get(session_id)
            session = undo_last(session)
            store.commit(session)
        return _state_payload(session)

    @app.get("/sessions/{session_id}/state")
    def get_state(session_id: str):
        return _state_payload(store.get(session_id))

    @app.get("/sessions/{session_id}/slice")
    def get_slice(
        session_id: str,
        axis: int = Query(..., ge=0, le=2),
        index: int = Query(..., ge=0),
        overlay: str | None = Query(None),
        window: float = Query(DEFAULT_WINDOW_HU, gt=0),
        level: float = Query(DEFAULT_LEVEL_HU),
    ):
        session = store.get(session_id)
        volume = session.working if session.working is not None else session.volume
        if index >= volume.grid.dims[axis]:
            raise HTTPException(
                422, f"index {index} out of range for axis {axis} ({volume.grid.dims[axis]} slices)"
            )
        plane = _take_slice(volume.voxels, axis, index).astype(np.float64)
        low = level - window / 2.0
        gray = np.clip(np.rint((plane - low) / window * 255.0), 0, 255).astype(np.uint8)
        buf = io.BytesIO()
        Image.fromarray(gray, mode="L").save(buf, format="PNG")

        if overlay is None:
            wanted = sorted(session.maps)
        else:
            wanted = [t for t in (s.strip() for s in overlay.split(",")) if t]
        overlays = {}
        for target in wanted:
            dmap = session.maps.get(target)
            if dmap is None:
                continue
            flat = (_take_slice(dmap.voxels, axis, index) > 0).ravel()
            overlays[target] = {"rle": _rle_encode(flat), "count": int(flat.sum())}
        return {
            "axis": axis,
            "index": index,
            "shape": [int(n) for n in plane.shape],
            "window": window,
            "level": level,
            "image": base64.b64encode(buf.getvalue()).decode("ascii"),
            "overlays": overlays,
        }

    @app.get("/sessions/{session_id}/mesh/{target}")
    def get_mesh(session_id: str, target: str):
        session = store.get(session_id)
        if target not in TARGETS or target not in session.maps:
            raise HTTPException(404, f"no mask for target {target!r}")
        mesh = extract_mesh(session.maps[target], session.config.distance_cap_mm)
        return PlainTextResponse(
            obj_text(mesh),
            headers={"Content-Disposition": f'attachment; filename="{target}.obj"'},
        )

    @app.get("/sessions/{session_id}/export")
    def get_export(
        session_id: str,
        target: str | None = Query(None),
        grid: str = Query("native", pattern="^(native|working)$"),
    ):
        session = store.get(session_id)
        if not session.maps:
            raise StageError(f"nothing to export at stage {session.stage}")

        def positive_mask(name: str) -> Mask:
            dmap = session.maps[name]
            mask = Mask(session.working.grid, (dmap.voxels > 0).astype(np.uint8))
            if grid == "native":
                mask = resample_mask_to_grid(mask, session.volume.grid)
            return mask

        if target is not None:
            if target not in session.maps:
                raise HTTPException(404, f"no mask for target {target!r}")
            return Response(
                _nifti_bytes(positive_mask(target)),
                media_type="application/gzip",
                headers={
                    "Content-Disposition": f'attachment; filename="{target}.nii.gz"'
                },
            )
        buf = io.BytesIO()
        with zipfile.ZipFile(buf, "w", zipfile.ZIP_STORED) as zf:
            for name in sorted(session.maps):
                info = zipfile.ZipInfo(f"{name}.nii.gz", date_time=(1980, 1, 1, 0, 0, 0))
                zf.writestr(info, _nifti_bytes(positive_mask(name)))
        return Response(
            buf.getvalue(),
            media_type="application/zip",
            headers={
                "Content-Disposition": f'attachment; filename="{session.session_id}.zip"'
            },
        )

    return app
