"""Edit script serialization: JSON round trips and failure modes."""

import json

import numpy as np
import pytest

from ctseg.editing import Brush, EditScript, Magnet, SmartPaint, apply_edit_script
from ctseg.errors import ParseError, ScriptError
from ctseg.script import (
    load_edit_script,
    save_edit_script,
    script_from_json,
    script_to_json,
)
from test_editing import _five_tool_script, _script_state


class TestRoundTrip:
    def test_value_round_trip(self):
        script = _five_tool_script()
        assert script_from_json(script_to_json(script)) == script

    def test_document_is_plain_json(self):
        doc = json.loads(script_to_json(_five_tool_script()))
        assert isinstance(doc["events"], list)
        first = doc["events"][0]
        assert first["target"] == "lesions"
        assert first["tool"] == "brush"
        assert first["radius"] == 4.0

    def test_file_round_trip_replays_identically(self, tmp_path):
        script = _five_tool_script()
        path = tmp_path / "edits.json"
        save_edit_script(script, path)
        loaded = load_edit_script(path)
        assert loaded == script
        a = apply_edit_script(_script_state(), script)
        b = apply_edit_script(_script_state(), loaded)
        for key in a.maps:
            assert np.array_equal(a.maps[key].voxels, b.maps[key].voxels)

    def test_defaults_survive_round_trip(self):
        ev = SmartPaint(stroke=[(0.0, 0.0, 0.0), (4.0, 0.0, 0.0)], tube_radius=1.5, mode="remove")
        script = EditScript(events=(("lesions", ev),))
        back = script_from_json(script_to_json(script))
        assert back.events[0][1].k_sigma == ev.k_sigma
        assert back.events[0][1].roi_margin == ev.roi_margin


class TestFailureModes:
    def test_malformed_json_is_parse_error(self):
        with pytest.raises(ParseError):
            script_from_json("{not json")

    def test_missing_events_key_is_parse_error(self):
        with pytest.raises(ParseError):
            script_from_json('{"version": 1}')

    def test_events_must_be_a_list(self):
        with pytest.raises(ParseError):
            script_from_json('{"version": 1, "events": {"tool": "brush"}}')

    def test_unknown_tool_carries_index(self):
        doc = {
            "version": 1,
            "events": [{"target": "lesions", "tool": "lasso", "radius": 1.0}],
        }
        with pytest.raises(ScriptError) as err:
            script_from_json(json.dumps(doc))
        assert err.value.event_index == 0

    def test_invalid_field_carries_index(self):
        doc = {
            "version": 1,
            "events": [
                {"target": "lesions", "tool": "brush", "center": [0, 0, 0], "radius": 2.0, "mode": "add"},
                {"target": "lesions", "tool": "magnet", "click": [0, 0, 0], "drag": [1, 0, 0], "sigma": -3.0},
            ],
        }
        with pytest.raises(ScriptError) as err:
            script_from_json(json.dumps(doc))
        assert err.value.event_index == 1

    def test_unexpected_field_carries_index(self):
        doc = {
            "version": 1,
            "events": [
                {"target": "lesions", "tool": "brush", "center": [0, 0, 0], "radius": 2.0, "mode": "add", "hardness": 1.0}
            ],
        }
        with pytest.raises(ScriptError) as err:
            script_from_json(json.dumps(doc))
        assert err.value.event_index == 0

    def test_event_equality_uses_values(self):
        a = Magnet(click=(1.0, 2.0, 3.0), drag=(0.0, 0.0, 1.0), sigma=2.0)
        b = Magnet(click=(1.0, 2.0, 3.0), drag=(0.0, 0.0, 1.0), sigma=2.0)
        assert a == b
        assert EditScript(events=(("lesions", a),)) == EditScript(events=(("lesions", b),))

    def test_brush_mode_validated_at_parse(self):
        doc = {
            "version": 1,
            "events": [{"target": "lesions", "tool": "brush", "center": [0, 0, 0], "radius": 2.0, "mode": "smear"}],
        }
        with pytest.raises(ScriptError) as err:
            script_from_json(json.dumps(doc))
        assert err.value.event_index == 0
