#!/usr/bin/env python3
"""
Tests for Kendall tau-b, rankings and concordance
"""

import itertools

import numpy as np
import pytest
from scipy import stats

from mobility_response.errors import InsufficientDataError, UndefinedMeasureError
from mobility_response.models import MeasureTable
from mobility_response.rankstats import (
    MeasureKey,
    concordance,
    kendall_tau_b,
    pair_counts,
    rank_countries,
    significance_stars,
)


def brute_force_tau_b(x, y):
    concordant = discordant = ties_x = ties_y = 0
    for i, j in itertools.combinations(range(len(x)), 2):
        dx = np.sign(x[j] - x[i])
        dy = np.sign(y[j] - y[i])
        if dx == 0 and dy != 0:
            ties_x += 1
        elif dy == 0 and dx != 0:
            ties_y += 1
        elif dx * dy > 0:
            concordant += 1
        elif dx * dy < 0:
            discordant += 1
    return (concordant - discordant) / np.sqrt((concordant + discordant + ties_y) * (concordant + discordant + ties_x))


@pytest.mark.unit
class TestPairCounts:
    """Concordant, discordant and tied pair classification"""

    def test_counts_sum_to_all_pairs(self, rng):
        """Test that pair counts cover every pair"""
        x = rng.integers(0, 4, 15)
        y = rng.integers(0, 4, 15)
        assert sum(pair_counts(x, y)) == 15 * 14 // 2

    def test_small_example(self):
        """Test pair counts on a small example"""
        concordant, discordant, ties_x, ties_y, ties_both = pair_counts(
            np.array([1.0, 2.0, 3.0, 3.0]), np.array([1.0, 3.0, 2.0, 2.0]))
        assert (concordant, discordant, ties_x, ties_y, ties_both) == (3, 2, 0, 0, 1)


@pytest.mark.unit
class TestKendallTauB:
    """tau-b values and p-values"""

    def test_perfect_agreement(self):
        """Test tau and exact p-value for perfect agreement"""
        result = kendall_tau_b([1, 2, 3, 4, 5], [10, 20, 30, 40, 50])
        assert result.tau == pytest.approx(1.0)
        assert result.p_method == "exact"
        assert result.p_value == pytest.approx(2.0 / 120.0)

    def test_perfect_disagreement(self):
        """Test tau for perfect disagreement"""
        assert kendall_tau_b([1, 2, 3, 4], [4, 3, 2, 1]).tau == pytest.approx(-1.0)

    @pytest.mark.property
    def test_matches_brute_force_oracle(self, rng):
        """Test tau-b against a brute-force count"""
        for trial in range(1000):
            n = int(rng.integers(3, 25))
            if trial % 2:
                x, y = rng.integers(0, 5, n).astype(float), rng.integers(0, 5, n).astype(float)
            else:
                x, y = rng.normal(size=n), rng.normal(size=n)
            try:
                expected = brute_force_tau_b(x, y)
            except ZeroDivisionError:
                continue
            if not np.isfinite(expected):
                continue
            assert kendall_tau_b(x, y).tau == pytest.approx(expected, abs=1e-12)

    @pytest.mark.property
    def test_matches_scipy_with_ties(self, rng):
        """Test tau-b and its normal p-value against scipy"""
        for _ in range(200):
            n = int(rng.integers(11, 60))
            x = rng.integers(0, 6, n).astype(float)
            y = x + rng.integers(-2, 3, n)
            if len(np.unique(x)) < 2 or len(np.unique(y)) < 2:
                continue
            result = kendall_tau_b(x, y)
            expected = stats.kendalltau(x, y, variant='b', method='asymptotic')
            assert result.p_method == "normal"
            assert result.tau == pytest.approx(expected[0], abs=1e-12)
            assert result.p_value == pytest.approx(expected[1], rel=1e-5, abs=1e-12)

    @pytest.mark.property
    def test_symmetry_negation_and_monotone_transform(self, rng):
        """Test tau-b symmetry in its arguments, sign flip under negation and invariance to monotone maps"""
        for trial in range(200):
            n = int(rng.integers(3, 30))
            if trial % 2:
                x, y = rng.integers(0, 5, n).astype(float), rng.integers(0, 5, n).astype(float)
            else:
                x, y = rng.normal(size=n), rng.normal(size=n)
            if len(np.unique(x)) < 2 or len(np.unique(y)) < 2:
                continue
            base = kendall_tau_b(x, y)
            swapped = kendall_tau_b(y, x)
            assert swapped.tau == pytest.approx(base.tau, abs=1e-12)
            assert swapped.p_value == pytest.approx(base.p_value)
            assert kendall_tau_b(x, -y).tau == pytest.approx(-base.tau, abs=1e-12)
            transformed = kendall_tau_b(np.exp(x), 2.0 * y ** 3 + 7.0)
            assert transformed.tau == pytest.approx(base.tau, abs=1e-12)
            assert transformed.p_value == pytest.approx(base.p_value)

    def test_small_tie_free_sample_uses_exact(self, rng):
        """Test the exact p-value for small tie-free samples"""
        for _ in range(20):
            x, y = rng.normal(size=(2, 8))
            result = kendall_tau_b(x, y)
            expected = stats.kendalltau(x, y, method='exact')
            assert result.p_method == "exact"
            assert result.p_value == pytest.approx(expected[1])

    def test_small_sample_with_ties_uses_normal(self):
        """Test the normal p-value for small samples with ties"""
        assert kendall_tau_b([1, 1, 2, 3, 4], [2, 1, 3, 5, 4]).p_method == "normal"

    def test_too_few_observations(self):
        """Test rejecting fewer than three observations"""
        with pytest.raises(InsufficientDataError):
            kendall_tau_b([1, 2], [2, 1])

    def test_constant_vector_undefined(self):
        """Test that a constant vector is undefined"""
        with pytest.raises(UndefinedMeasureError):
            kendall_tau_b([3, 3, 3, 3], [1, 2, 3, 4])

    def test_length_mismatch(self):
        """Test rejecting vectors of different lengths"""
        with pytest.raises(ValueError):
            kendall_tau_b([1, 2, 3], [1, 2])


@pytest.mark.unit
class TestRanking:
    """rank_countries ordering rules"""

    def test_similarity_highest_first_with_code_tiebreak(self):
        """Test ranking similarity highest first with code tiebreak"""
        table = MeasureTable("mean_cosine", {"FR": 0.8, "DE": 0.8, "IT": 0.9, "NG": 0.1})
        ranked = rank_countries(table, MeasureKey.MEAN_COSINE)
        assert [e.iso_code for e in ranked] == ["IT", "DE", "FR", "NG"]
        assert [e.rank for e in ranked] == [1, 2, 3, 4]
        assert ranked[0].percentile == pytest.approx(100.0)
        assert ranked[-1].percentile == pytest.approx(0.0)

    def test_lag_smallest_magnitude_first(self):
        """Test ranking lag by smallest magnitude"""
        table = MeasureTable("mean_lag", {"DE": -6.0, "FR": 2.0, "IT": -1.0, "KE": -15.0})
        ranked = rank_countries(table, MeasureKey.MEAN_LAG)
        assert [e.iso_code for e in ranked] == ["IT", "FR", "DE", "KE"]

    def test_single_country(self):
        """Test ranking a single country"""
        ranked = rank_countries(MeasureTable("mean_sd", {"DE": 0.1}), MeasureKey.MEAN_SD)
        assert ranked[0].percentile == 100.0

    def test_empty_table(self):
        """Test rejecting an empty table"""
        with pytest.raises(InsufficientDataError):
            rank_countries(MeasureTable("mean_sd", {}), MeasureKey.MEAN_SD)


@pytest.mark.unit
class TestConcordance:
    """Joining two measure tables"""

    def test_reports_dropped_codes(self):
        """Test reporting codes missing from one table"""
        a = MeasureTable("mean_cosine", {"DE": 0.9, "FR": 0.7, "IT": 0.5, "KE": 0.3})
        b = MeasureTable("mean_pearson", {"DE": 0.8, "FR": 0.6, "IT": 0.4, "NG": 0.2})
        result = concordance(a, b)
        assert result.n == 3
        assert result.tau == pytest.approx(1.0)
        assert result.dropped_codes == ("KE", "NG")

    def test_too_few_shared_codes(self):
        """Test rejecting too few shared codes"""
        a = MeasureTable("a", {"DE": 1.0, "FR": 2.0, "IT": 3.0})
        b = MeasureTable("b", {"DE": 1.0, "FR": 2.0, "KE": 3.0})
        with pytest.raises(InsufficientDataError):
            concordance(a, b)

    def test_min_n_respected(self):
        """Test the minimum shared country count"""
        a = MeasureTable("a", {c: float(i) for i, c in enumerate("ABCDE")})
        with pytest.raises(InsufficientDataError):
            concordance(a, a, min_n=6)


@pytest.mark.unit
class TestSignificanceStars:
    """Star thresholds"""

    @pytest.mark.parametrize("p_value,stars", [
        (0.001, "***"), (0.02, "**"), (0.07, "*"), (0.5, ""), (None, ""),
    ])
    def test_thresholds(self, p_value, stars):
        """Test significance star thresholds"""
        assert significance_stars(p_value) == stars
