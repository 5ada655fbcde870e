"""Tests for configuration loading, validation and overrides."""

import json

import pytest

from backend.src.config import settings
from backend.src.config.settings import (
    apply_overrides,
    build_config,
    changed_fields,
    load_config,
    parse_value,
    save_config,
)
from backend.src.simulation.errors import ConfigError


def write(tmp_path, text, name="config.json"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestLoadConfig:

    def test_empty_file_gives_defaults(self, tmp_path):
        config = load_config(write(tmp_path, ""))
        assert config.device.d1.t1_us == 19.7
        assert config.timing.feedback_delay_ns == 1000
        assert config.experiment.name == "custom"
        assert config.analysis.shots == 0

    def test_no_path_without_user_file(self, tmp_path, monkeypatch):
        monkeypatch.setattr(settings, "DEFAULT_CONFIG_FILE", str(tmp_path / "missing.json"))
        assert load_config().output.format == "csv"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(str(tmp_path / "nope.json"))

    def test_invalid_json_reports_position(self, tmp_path):
        with pytest.raises(ConfigError, match="line 1"):
            load_config(write(tmp_path, '{"device": '))

    def test_partial_file_keeps_other_defaults(self, tmp_path):
        path = write(tmp_path, json.dumps({"experiment": {"name": "fig3d", "rounds": 3}}))
        config = load_config(path)
        assert config.experiment.name == "fig3d"
        assert config.experiment.rounds == 3
        assert config.device.a.assignment_prob == 0.989


class TestValidation:

    def test_negative_t1_names_field(self):
        with pytest.raises(ConfigError, match=r"device\.d1\.t1_us"):
            build_config({"device": {"d1": {"t1_us": -1}}})

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match=r"device\.t3_us"):
            build_config({"device": {"t3_us": 5.0}})

    def test_wrong_type_rejected(self):
        with pytest.raises(ConfigError, match=r"timing\.buffer_ns"):
            build_config({"timing": {"buffer_ns": "forty"}})

    def test_readout_field_named_with_block(self):
        with pytest.raises(ConfigError, match=r"device\.readout\.p0_given_0"):
            build_config({"device": {"readout": {"p0_given_0": 1.5}}})

    def test_zero_coupling_passes_through(self):
        config = build_config({"device": {"j_d2a_khz": 0}})
        assert config.device.j_d2a_khz == 0.0

    @pytest.mark.parametrize("tree, field", [
        ({"experiment": {"name": "fig7"}}, "experiment.name"),
        ({"experiment": {"mode": "open"}}, "experiment.mode"),
        ({"experiment": {"rounds": 0}}, "experiment.rounds"),
        ({"experiment": {"sequence": ["ZZ", "YY"]}}, "experiment.sequence"),
        ({"analysis": {"shots": -1}}, "analysis.shots"),
        ({"output": {"format": "xml"}}, "output.format"),
        ({"timing": {"feedback_delay_ns": 100}}, "timing"),
    ])
    def test_invalid_values_name_the_field(self, tree, field):
        with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
            build_config(tree)

    def test_sequence_normalized(self):
        config = build_config({"experiment": {"sequence": ["zz", "XX"]}})
        assert config.experiment.sequence == ("ZZ", "XX")


class TestOverrides:

    def test_dotted_overrides(self):
        config = apply_overrides(build_config({}), {
            "experiment.rounds": 4,
            "device.j_d2a_khz": 0,
            "analysis.shots": None,
        })
        assert config.experiment.rounds == 4
        assert config.device.j_d2a_khz == 0.0
        assert config.analysis.shots == 0
        assert changed_fields(config) == ["device.j_d2a_khz", "experiment.rounds"]

    def test_unknown_override_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            apply_overrides(build_config({}), {"device.d3.t1_us": 5.0})

    def test_block_cannot_be_replaced(self):
        with pytest.raises(ConfigError):
            apply_overrides(build_config({}), {"device.readout": 0.5})

    @pytest.mark.parametrize("text, value", [
        ("4", 4), ("0.5", 0.5), ("true", True), ("[\"ZZ\"]", ["ZZ"]), ("pfu", "pfu"),
    ])
    def test_parse_value(self, text, value):
        assert parse_value(text) == value


class TestSaveConfig:

    def test_save_and_reload(self, tmp_path):
        config = apply_overrides(build_config({}), {"timing.feedback_delay_ns": 0})
        path = save_config(config, str(tmp_path / "nested" / "config.json"))
        assert not (tmp_path / "nested" / "config.json.tmp").exists()
        assert load_config(path) == config
