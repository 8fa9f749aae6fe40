#!/usr/bin/env python3
"""
Tests for run configuration
"""

from datetime import date

import pytest

from mobility_response.config import RunConfig, parse_mask
from mobility_response.models import ActivityCategory, AnalysisWindow


@pytest.mark.unit
class TestParseMask:
    """COUNTRY:START..END mask strings"""

    def test_range(self):
        """Test parsing a mask with a date range"""
        assert parse_mask("de:2020-03-01..2020-03-03") == ("DE", (date(2020, 3, 1), date(2020, 3, 3)))

    def test_single_day(self):
        """Test parsing a single-day mask"""
        assert parse_mask("FR:2020-03-10") == ("FR", (date(2020, 3, 10), date(2020, 3, 10)))

    @pytest.mark.parametrize("text", ["DE2020-03-01", ":2020-03-01", "DE:2020-03-05..2020-03-01", "DE:yesterday"])
    def test_malformed(self, text):
        """Test rejecting malformed mask text"""
        with pytest.raises(ValueError):
            parse_mask(text)


@pytest.mark.unit
class TestRunConfig:
    """Validation, environment defaults and hashing"""

    def test_defaults_valid(self):
        """Test that the default configuration validates"""
        is_valid, errors = RunConfig().validate()
        assert is_valid, errors

    def test_required_inputs(self):
        """Test reporting each missing required input"""
        is_valid, errors = RunConfig().validate(required=('mobility_path', 'stringency_path'))
        assert not is_valid
        assert "mobility_path is required" in errors
        assert "stringency_path is required" in errors

    def test_missing_file(self, tmp_path):
        """Test reporting an input path that does not exist"""
        is_valid, errors = RunConfig(mobility_path=str(tmp_path / "absent.csv")).validate()
        assert not is_valid
        assert any("file not found" in e for e in errors)

    @pytest.mark.parametrize("overrides", [
        {"xcorr_threshold": 1.0},
        {"xcorr_threshold": 0.0},
        {"max_lag": 0},
        {"max_lag": 40},
        {"min_overlap": 2},
        {"min_coverage": 0.0},
        {"max_interior_gap": -1},
        {"excluded_categories": ("cinemas",)},
        {"output_format": "xml"},
        {"linkage": "ward"},
        {"n_clusters": 0},
        {"permutations": -1},
        {"min_index_n": 2},
        {"workers": 0},
        {"log_level": "LOUD"},
    ])
    def test_invalid_settings(self, overrides):
        """Test that each out-of-range setting gives exactly one error"""
        is_valid, errors = RunConfig(**overrides).validate()
        assert not is_valid
        assert len(errors) == 1

    def test_environment_defaults(self, monkeypatch):
        """Test reading ambient defaults from the environment"""
        monkeypatch.setenv('MOBILITY_MAX_WORKERS', '3')
        monkeypatch.setenv('MOBILITY_SEED', '42')
        monkeypatch.setenv('MOBILITY_OUT_DIR', '/tmp/mobility-out')
        monkeypatch.setenv('MOBILITY_LOG_LEVEL', 'debug')
        config = RunConfig()
        is_valid, errors = config.validate()
        assert is_valid, errors
        assert config.workers == 3
        assert config.seed == 42
        assert config.out_dir == '/tmp/mobility-out'
        assert config.log_level == 'DEBUG'

    @pytest.mark.parametrize("variable, value, field_name", [
        ('MOBILITY_MAX_WORKERS', 'four', 'workers'),
        ('MOBILITY_SEED', '1.5', 'seed'),
    ])
    def test_malformed_environment_integer(self, monkeypatch, variable, value, field_name):
        """Test that a non-integer environment value is reported by validate() rather than raised"""
        monkeypatch.setenv(variable, value)
        config = RunConfig()
        is_valid, errors = config.validate()
        assert not is_valid
        assert errors == [f"{field_name} must be an integer (env {variable}), got {value!r}"]

    def test_masks(self):
        """Test collecting masks per country"""
        config = RunConfig()
        config.add_mask("DE:2020-03-01..2020-03-02")
        config.add_mask("DE:2020-03-05")
        assert config.masks_for("DE") == [(date(2020, 3, 1), date(2020, 3, 2)), (date(2020, 3, 5), date(2020, 3, 5))]
        assert config.masks_for("FR") == []

    def test_mean_excluded(self):
        """Test the categories left out of country means"""
        assert RunConfig().mean_excluded == (ActivityCategory.PARKS,)
        assert RunConfig(excluded_categories=()).mean_excluded == ()

    def test_gap_policy(self):
        """Test building the gap policy from thresholds"""
        policy = RunConfig(min_coverage=0.8, max_interior_gap=5).gap_policy
        assert policy.min_coverage == 0.8
        assert policy.max_interior_gap == 5

    def test_hash_ignores_output_location(self):
        """Test that output location and workers leave the hash unchanged"""
        assert RunConfig(out_dir="a", workers=1).config_hash() == RunConfig(out_dir="b", workers=4).config_hash()

    def test_hash_tracks_analysis_settings(self):
        """Test that analysis settings change the hash"""
        base = RunConfig()
        assert base.config_hash() != RunConfig(xcorr_threshold=0.6).config_hash()
        assert base.config_hash() != RunConfig(window=AnalysisWindow(date(2020, 2, 20), date(2020, 4, 11))).config_hash()
        masked = RunConfig()
        masked.add_mask("DE:2020-03-01")
        assert base.config_hash() != masked.config_hash()

    def test_hash_uses_input_basenames(self, tmp_path):
        """Test that only input file names enter the hash"""
        first = RunConfig(mobility_path=str(tmp_path / "a" / "mobility.csv"))
        second = RunConfig(mobility_path=str(tmp_path / "b" / "mobility.csv"))
        assert first.config_hash() == second.config_hash()
        assert first.to_dict()["inputs"]["mobility_path"] == "mobility.csv"
