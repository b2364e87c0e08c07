"""Human-readable persistence for edit scripts.

Scripts serialize to a small JSON document: a version tag plus one object
per event carrying the target name, a tool tag, and the event's fields.
Structural problems raise ParseError; a well-formed document with a bad
event raises ScriptError pointing at the offending index.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

from .editing import Brush, EditScript, Magnet, PolySpline, SmartPaint, TpsPolyline
from .errors import ConfigError, ParseError, ScriptError

FORMAT_VERSION = 1

_TOOL_NAMES = {
    Magnet: "magnet",
    TpsPolyline: "tps-polyline",
    PolySpline: "poly-spline",
    Brush: "brush",
    SmartPaint: "smart-paint",
}
_TOOL_TYPES = {name: cls for cls, name in _TOOL_NAMES.items()}


def script_to_json(script: EditScript) -> str:
    events = []
    for target, event in script.events:
        entry = {"target": target, "tool": _TOOL_NAMES[type(event)]}
        entry.update(dataclasses.asdict(event))
        events.append(entry)
    return json.dumps({"version": FORMAT_VERSION, "events": events}, indent=2)


def script_from_json(text: str) -> EditScript:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"edit script is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ParseError("edit script must be a JSON object")
    if not isinstance(doc.get("events"), list):
        raise ParseError("edit script must carry an 'events' list")
    pairs = []
    for index, entry in enumerate(doc["events"]):
        try:
            if not isinstance(entry, dict):
                raise ConfigError("event must be an object")
            target = entry.get("target")
            tool = entry.get("tool")
            if not isinstance(target, str):
                raise ConfigError("event lacks a 'target' string")
            cls = _TOOL_TYPES.get(tool)
            if cls is None:
                raise ConfigError(f"unknown tool {tool!r}")
            fields = {k: v for k, v in entry.items() if k not in ("target", "tool")}
            event = cls(**fields)
        except (ConfigError, TypeError, ValueError) as e:
            # TypeError covers unexpected or missing dataclass fields
            raise ScriptError(str(e), index) from e
        pairs.append((target, event))
    return EditScript(events=tuple(pairs))


def save_edit_script(script: EditScript, path) -> None:
    Path(path).write_text(script_to_json(script) + "\n")


def load_edit_script(path) -> EditScript:
    return script_from_json(Path(path).read_text())
