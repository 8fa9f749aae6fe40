#!/usr/bin/env python3
"""
Tests for country index loading and measure/index correlation
"""

import io
import json

import numpy as np
import pytest

from mobility_response.errors import ConfigError, DataError
from mobility_response.indices import (
    Direction,
    IndexTable,
    correlate_measures_with_indices,
    correlation_frame,
    country_attribute_indices,
    load_index_manifest,
    load_index_table,
    mean_activity,
    per_capita,
    significance_counts,
    stringency_vs_outcomes,
)
from mobility_response.ingest import load_country_codes
from mobility_response.models import ActivityCategory, AlignedPair, CountryRecord, DailySeries, MeasureTable, SeriesUnit


@pytest.fixture
def codes():
    return load_country_codes()


CODES = ["AR", "BR", "DE", "EG", "ES", "FR", "IT", "JP", "KE", "NG", "OM", "NA"]


@pytest.mark.unit
class TestLoadIndexTable:
    """Two-column index files"""

    def test_codes_harmonized_and_blanks_skipped(self, codes):
        """Test harmonizing codes and skipping blank values"""
        text = "iso_code,value\nDEU,0.9\nFR,0.8\nIT,\nXX,0.1\nNA,0.4\n"
        table = load_index_table(io.StringIO(text), "hdi", codes, Direction.BETTER)
        assert table.values == {"DE": 0.9, "FR": 0.8, "NA": 0.4}
        assert table.higher_is is Direction.BETTER
        assert table.family == "hdi"

    def test_duplicate_code_fatal(self, codes):
        """Test that a duplicate country row is fatal"""
        with pytest.raises(DataError):
            load_index_table(io.StringIO("iso_code,value\nDE,1\nDEU,2\n"), "hdi", codes)

    def test_missing_column(self, codes):
        """Test rejecting an index file without a value column"""
        with pytest.raises(DataError):
            load_index_table(io.StringIO("code,value\nDE,1\n"), "hdi", codes)

    def test_non_finite_value_rejected(self):
        """Test rejecting a non-finite index value"""
        with pytest.raises(DataError):
            IndexTable("hdi", {"DE": float("nan")})


@pytest.mark.unit
class TestIndexManifest:
    """JSON manifest of index files"""

    def test_synthetic_manifest(self, synthetic_inputs, codes):
        """Test loading the synthetic index manifest"""
        tables = load_index_manifest(synthetic_inputs['indices_manifest'], codes)
        assert [t.name for t in tables] == ["hdi"]
        assert tables[0].family == "development"
        assert tables[0].higher_is is Direction.BETTER
        assert len(tables[0]) == 8

    def test_plain_list(self, tmp_path, codes):
        """Test a manifest given as a plain list with defaults"""
        (tmp_path / "gov.csv").write_text("iso_code,value\nDE,1.5\n")
        (tmp_path / "manifest.json").write_text(json.dumps([{"name": "governance", "path": "gov.csv"}]))
        tables = load_index_manifest(tmp_path / "manifest.json", codes)
        assert tables[0].higher_is is Direction.NEUTRAL
        assert tables[0].values == {"DE": 1.5}

    @pytest.mark.parametrize("manifest", [
        "{not json",
        json.dumps([{"name": "a"}]),
        json.dumps([{"name": "a", "path": "a.csv", "higher_is": "up"}]),
        json.dumps([{"name": "a", "path": "missing.csv"}]),
        json.dumps([{"name": "a", "path": "a.csv"}, {"name": "a", "path": "a.csv"}]),
    ])
    def test_invalid_manifest(self, tmp_path, codes, manifest):
        """Test rejecting an invalid manifest"""
        (tmp_path / "a.csv").write_text("iso_code,value\nDE,1\n")
        (tmp_path / "manifest.json").write_text(manifest)
        with pytest.raises(ConfigError):
            load_index_manifest(tmp_path / "manifest.json", codes)

    def test_missing_manifest(self, tmp_path, codes):
        """Test a manifest path that does not exist"""
        with pytest.raises(ConfigError):
            load_index_manifest(tmp_path / "nowhere.json", codes)


@pytest.mark.unit
class TestCountryAttributes:
    """Indices derived from the dataset"""

    def test_per_capita(self):
        """Test per-capita conversion"""
        assert per_capita(1000, 1_000_000) == pytest.approx(0.001)
        with pytest.raises(DataError):
            per_capita(10, 0)

    def test_attribute_tables(self, window):
        """Test the derived country attribute indices"""
        cases = np.arange(1.0, window.n_days + 11)
        cases[window.n_days - 1] = np.nan
        records = {
            "DE": CountryRecord("DE", "Germany", population=1000, area=10.0,
                                confirmed_cases=DailySeries(window.start, cases, SeriesUnit.COUNT)),
            "JP": CountryRecord("JP", "Japan", area=20.0),
        }
        tables = {t.name: t for t in country_attribute_indices(records, window)}
        assert tables["population"].values == {"DE": 1000.0}
        assert tables["area"].values == {"DE": 10.0, "JP": 20.0}
        assert tables["population_density"].values == {"DE": 100.0}
        assert tables["cases_per_capita"].values["DE"] == pytest.approx((window.n_days - 1) / 1000)
        assert tables["cases_per_capita"].higher_is is Direction.WORSE
        assert tables["deaths_per_capita"].values == {}


@pytest.mark.unit
class TestCorrelations:
    """Kendall tau-b between measures and indices"""

    def test_monotone_relation(self):
        """Test correlating a measure with a monotone index"""
        measure = MeasureTable("mean_cosine", {c: float(i) for i, c in enumerate(CODES)})
        index = IndexTable("hdi", {c: 10.0 - i for i, c in enumerate(CODES)}, family="development")
        rows = correlate_measures_with_indices([measure], [index])
        assert len(rows) == 1
        assert rows[0].tau == pytest.approx(-1.0)
        assert rows[0].n == len(CODES)
        assert rows[0].stars == "***"
        assert rows[0].p_method == "normal"

    def test_small_join_insufficient(self):
        """Test marking a small join as insufficient"""
        measure = MeasureTable("mean_lag", {c: float(i) for i, c in enumerate(CODES[:5])})
        index = IndexTable("hdi", {c: float(i) for i, c in enumerate(CODES)})
        rows = correlate_measures_with_indices([measure], [index], min_n=10)
        assert rows[0].insufficient
        assert rows[0].tau is None
        assert rows[0].n == 5

    def test_constant_index_insufficient(self):
        """Test marking a constant index as insufficient"""
        measure = MeasureTable("mean_sd", {c: float(i) for i, c in enumerate(CODES)})
        index = IndexTable("flat", {c: 1.0 for c in CODES})
        assert correlate_measures_with_indices([measure], [index])[0].insufficient

    def test_frames(self):
        """Test the correlation and significance frames"""
        measure = MeasureTable("mean_cosine", {c: float(i) for i, c in enumerate(CODES)})
        indices = [
            IndexTable("hdi", {c: float(i) for i, c in enumerate(CODES)}, family="development"),
            IndexTable("gdp", {c: float((i * 7) % 5) for i, c in enumerate(CODES)}, family="development"),
            IndexTable("tiny", {"DE": 1.0, "FR": 2.0}, family="health"),
        ]
        rows = correlate_measures_with_indices([measure], indices)
        frame = correlation_frame(rows)
        assert list(frame.columns) == ["measure", "index", "tau", "p", "n", "stars", "p_method", "insufficient"]
        counts = significance_counts(rows)
        development = counts[counts["family"] == "development"].iloc[0]
        assert development["n_indices"] == 2
        assert development["n_tested"] == 2
        assert development["p_below_0_01"] >= 1
        health = counts[counts["family"] == "health"].iloc[0]
        assert health["n_tested"] == 0


@pytest.mark.unit
class TestStringencyVsOutcomes:
    """Country-averaged tau of activity against daily series"""

    def test_series_comparison(self, window, ramp):
        """Test comparing stringency with case and death outcomes"""
        s = ramp(window.n_days)
        pairs = {c: AlignedPair(c, s, s, c.inverted) for c in ActivityCategory.ordered()}
        cumulative = np.cumsum(np.ones(window.n_days))
        records = {"DE": CountryRecord("DE", "Germany",
                                       confirmed_cases=DailySeries(window.start, cumulative, SeriesUnit.COUNT))}
        results = {r.series: r for r in stringency_vs_outcomes({"DE": pairs}, records, window)}
        assert results["stringency"].mean_tau == pytest.approx(1.0)
        assert results["cases"].mean_tau > 0.5
        assert results["cases"].n_countries == 1
        assert results["deaths"].mean_tau is None
        assert results["deaths"].n_undefined == 1

    def test_mean_activity_skips_parks(self, ramp):
        """Test that mean activity leaves out Parks"""
        s = ramp(20)
        pairs = {ActivityCategory.PARKS: AlignedPair(ActivityCategory.PARKS, s, np.zeros(20), False),
                 ActivityCategory.WORKPLACES: AlignedPair(ActivityCategory.WORKPLACES, s, s, True)}
        np.testing.assert_allclose(mean_activity(pairs), s)
        assert mean_activity({ActivityCategory.PARKS: pairs[ActivityCategory.PARKS]}) is None
