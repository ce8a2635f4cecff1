"""Unit tests for scenario loading and serialization."""

import json

import pytest

from iotstage.models.scenario import NS_PER_MS, NS_PER_US, RunMode
from iotstage.services.calibration import ChannelEstimate
from iotstage.services.scenario_loader import (
    apply_overrides,
    dump_scenario,
    load_scenario,
    merge_calibration,
    parse_scenario,
    serialize_scenario,
)
from iotstage.utils.exceptions import ScenarioParseError, UnknownTargetError
from tests.conftest import FIXTURES, SCENARIOS, make_scenario


class TestParseScenario:
    """Test document parsing."""

    def test_levelcrossing_units(self, levelcrossing):
        """Test that durations become nanoseconds and renamed keys land on fields."""
        assert levelcrossing.duration == 60_000 * NS_PER_MS
        assert levelcrossing.step == 100 * NS_PER_MS
        assert levelcrossing.wireless.range == 500.0
        assert levelcrossing.wireless.latency == 3 * NS_PER_MS
        assert levelcrossing.wireless.bandwidth == 13_000_000.0
        assert levelcrossing.node("crossing").processing_delay == NS_PER_MS
        assert levelcrossing.entity("train").speed == 100.0
        assert levelcrossing.mode == RunMode.FAST

    def test_microsecond_keys(self):
        """Test that _us keys are accepted anywhere a duration appears."""
        scenario = parse_scenario(
            json.dumps({"name": "us", "duration_us": 1500, "step_us": 500, "seed": 0})
        )

        assert scenario.duration == 1500 * NS_PER_US
        assert scenario.step == 500 * NS_PER_US

    def test_default_step_applied(self):
        """Test the configured default window when the file has none."""
        scenario = parse_scenario(
            json.dumps({"name": "d", "duration_ms": 1000, "seed": 0}), default_step_ms=50
        )

        assert scenario.step == 50 * NS_PER_MS

    def test_syntax_error_reports_position(self):
        """Test that JSON syntax errors carry line and column."""
        text = (FIXTURES / "syntax_error.json").read_text()

        with pytest.raises(ScenarioParseError) as exc:
            parse_scenario(text)

        assert "syntax error at line 5 column 1" in exc.value.message
        assert exc.value.exit_code == 2

    def test_unknown_field_rejected(self):
        """Test that unknown fields are named with their path."""
        with pytest.raises(ScenarioParseError) as exc:
            load_scenario(FIXTURES / "unknown_field.json")

        assert "unknown field: nodes[0].colour" in exc.value.message

    def test_missing_field_rejected(self):
        """Test that missing required fields are named."""
        with pytest.raises(ScenarioParseError) as exc:
            load_scenario(FIXTURES / "missing_seed.json")

        assert "missing required field: seed" in exc.value.message

    def test_model_name_is_not_a_file_key(self):
        """Test that a bare duration name must carry a unit suffix."""
        document = {"name": "x", "duration": 1000, "seed": 0}

        with pytest.raises(ScenarioParseError) as exc:
            parse_scenario(json.dumps(document))

        assert "unknown field: duration" in exc.value.message

    def test_type_mismatch(self):
        """Test that a string seed is a type mismatch."""
        with pytest.raises(ScenarioParseError) as exc:
            parse_scenario(json.dumps({"name": "x", "duration_ms": 10, "seed": "42"}))

        assert "type mismatch at seed" in exc.value.message

    def test_missing_file(self, tmp_path):
        with pytest.raises(ScenarioParseError):
            load_scenario(tmp_path / "nope.json")


class TestSerializeScenario:
    """Test writing scenarios back out."""

    @pytest.mark.parametrize(
        "path",
        [
            SCENARIOS / "levelcrossing.json",
            SCENARIOS / "levelcrossing-hil.json",
            FIXTURES / "echo_link.json",
            FIXTURES / "bad_faults.json",
            FIXTURES / "duplicate_ids.json",
        ],
    )
    def test_round_trip(self, path):
        """Test parse -> serialize -> parse for every shipped file."""
        scenario = load_scenario(path)

        assert parse_scenario(serialize_scenario(scenario)) == scenario

    def test_stable_output(self, levelcrossing):
        """Test that equal scenarios serialize to identical text."""
        assert serialize_scenario(levelcrossing) == serialize_scenario(
            load_scenario(SCENARIOS / "levelcrossing.json")
        )

    def test_sub_millisecond_written_in_us(self):
        scenario = make_scenario(duration=1_500_000)

        document = json.loads(serialize_scenario(scenario))

        assert document["duration_us"] == 1500
        assert "duration_ms" not in document

    def test_dump_and_load(self, tmp_path, levelcrossing):
        path = tmp_path / "s.json"

        dump_scenario(levelcrossing, path)

        assert load_scenario(path) == levelcrossing


class TestOverrides:
    """Test command-line overrides."""

    def test_overrides_recorded(self, levelcrossing):
        scenario, recorded = apply_overrides(levelcrossing, seed=7, mode="scaled", rtf=2.0)

        assert scenario.seed == 7
        assert scenario.mode == RunMode.SCALED
        assert scenario.rtf == 2.0
        assert recorded == {"seed": 7, "mode": "scaled", "rtf": 2.0}

    def test_no_overrides(self, levelcrossing):
        scenario, recorded = apply_overrides(levelcrossing)

        assert scenario is levelcrossing
        assert recorded == {}


class TestMergeCalibration:
    """Test feeding estimates back into scenarios."""

    @pytest.fixture
    def estimate(self):
        return ChannelEstimate(
            latency=4_200_400, jitter_max=1_000_600, loss=0.05, sample_count=50
        )

    def test_merge_into_wireless(self, levelcrossing, estimate):
        """Test that only channel parameters change, rounded to microseconds."""
        merged = merge_calibration(levelcrossing, estimate, "wireless")

        assert merged.wireless.latency == 4_200_000
        assert merged.wireless.jitter_max == 1_001_000
        assert merged.wireless.loss == 0.05
        assert merged.wireless.range == levelcrossing.wireless.range
        assert merged.nodes == levelcrossing.nodes
        assert merged.faults == levelcrossing.faults

    def test_merge_into_link(self, estimate):
        scenario = load_scenario(FIXTURES / "echo_link.json")

        merged = merge_calibration(scenario, estimate, "link:echo:sender")

        assert merged.links[0].latency == 4_200_000

    def test_missing_channel(self, estimate):
        scenario = load_scenario(FIXTURES / "echo_link.json")

        with pytest.raises(UnknownTargetError):
            merge_calibration(scenario, estimate, "wireless")

    def test_all_channels_rejected(self, levelcrossing, estimate):
        with pytest.raises(UnknownTargetError):
            merge_calibration(levelcrossing, estimate, "*")
