"""
Assessment Measures

Per-country stringency/activity similarity (cosine and Pearson), lag
response from thresholded normalized cross-correlation, and subregional
variability of activity responses.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from .errors import InsufficientDataError, UndefinedMeasureError
from .ingest import DateMask, GapPolicy, mask_days, repair_series
from .models import ActivityCategory, AlignedPair, AnalysisWindow, CountryRecord, MeasureTable

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.5
DEFAULT_MAX_LAG = 21
DEFAULT_MIN_OVERLAP = 10

MEAN_EXCLUDED = (ActivityCategory.PARKS,)


def _pair(a: Sequence[float], b: Sequence[float], min_length: int) -> tuple:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"Vectors must be one-dimensional and of equal length ({a.shape} vs {b.shape})")
    if len(a) < min_length:
        raise UndefinedMeasureError(f"Need at least {min_length} values, got {len(a)}")
    return a, b


def cosine_similarity(a: Sequence[float], b: Sequence[float]) -> float:
    """
    Cosine of the angle between two vectors, in [-1, 1].

    Raises:
        UndefinedMeasureError: either vector has zero norm or fewer than 2 values
    """
    a, b = _pair(a, b, 2)
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0.0 or norm_b == 0.0:
        raise UndefinedMeasureError("Cosine similarity undefined for a zero-norm vector")
    return float(np.clip(np.dot(a, b) / (norm_a * norm_b), -1.0, 1.0))


def pearson(a: Sequence[float], b: Sequence[float]) -> float:
    """Pearson correlation as the cosine of the mean-centered vectors"""
    a, b = _pair(a, b, 3)
    centered_a = a - a.mean()
    centered_b = b - b.mean()
    if not centered_a.any() or not centered_b.any():
        raise UndefinedMeasureError("Pearson correlation undefined for a zero-variance vector")
    return cosine_similarity(centered_a, centered_b)


def normalized_xcorr(
    stringency: Sequence[float],
    activity: Sequence[float],
    k: int,
    max_lag: Optional[int] = None,
    min_overlap: int = DEFAULT_MIN_OVERLAP,
) -> float:
    """
    Pearson correlation between stringency shifted by ``k`` days and activity.

    Pairs are (stringency[t + k], activity[t]) over the overlapping range, so
    when activity(t) = stringency(t - d) the maximizing shift is k = -d:
    policy leading the response shows up at negative k.
    """
    s, a = _pair(stringency, activity, 1)
    if max_lag is not None and abs(k) > max_lag:
        raise ValueError(f"Shift {k} outside ±{max_lag}")
    n = len(s)
    overlap = n - abs(k)
    if overlap < min_overlap:
        raise UndefinedMeasureError(f"Overlap of {overlap} days at shift {k} below minimum {min_overlap}")
    if k >= 0:
        return pearson(s[k:], a[:overlap])
    return pearson(s[:overlap], a[-k:])


def xcorr_profile(
    stringency: Sequence[float],
    activity: Sequence[float],
    max_lag: int = DEFAULT_MAX_LAG,
    min_overlap: int = DEFAULT_MIN_OVERLAP,
) -> Dict[int, Optional[float]]:
    """Cross-correlation at every shift in [-max_lag, max_lag]; None where undefined"""
    profile = {}
    for k in range(-max_lag, max_lag + 1):
        try:
            profile[k] = normalized_xcorr(stringency, activity, k, max_lag, min_overlap)
        except UndefinedMeasureError:
            profile[k] = None
    return profile


def lag_days(
    stringency: Sequence[float],
    activity: Sequence[float],
    threshold: float = DEFAULT_THRESHOLD,
    max_lag: int = DEFAULT_MAX_LAG,
    min_overlap: int = DEFAULT_MIN_OVERLAP,
) -> Optional[int]:
    """
    Signed lag statistic N_pos - N_neg.

    N_pos counts shifts in [1, max_lag] whose cross-correlation reaches the
    threshold, N_neg counts shifts in [-max_lag, -1]. Shift 0 belongs to
    neither side.

    Returns:
        The signed day count, or None when no shift (0 included) reaches the
        threshold.
    """
    profile = xcorr_profile(stringency, activity, max_lag, min_overlap)
    significant = [k for k, value in profile.items() if value is not None and value >= threshold]
    if not significant:
        return None
    n_pos = sum(1 for k in significant if k > 0)
    n_neg = sum(1 for k in significant if k < 0)
    return n_pos - n_neg


@dataclass
class CategorySimilarity:
    cosine: float
    pearson: Optional[float]


@dataclass
class SimilarityScore:
    """Per-category and country-mean similarity of activity to stringency"""
    iso_code: str
    per_category: Dict[ActivityCategory, CategorySimilarity]
    country_mean_cosine: float
    country_mean_pearson: Optional[float]
    undefined: Dict[ActivityCategory, str] = field(default_factory=dict)
    pearson_undefined: Dict[ActivityCategory, str] = field(default_factory=dict)


def country_similarity(
    pairs: Mapping[ActivityCategory, AlignedPair],
    iso_code: str = "",
    excluded: Sequence[ActivityCategory] = MEAN_EXCLUDED,
) -> SimilarityScore:
    """
    Cosine and Pearson similarity per category; country means skip the
    ``excluded`` categories (Parks by default).

    Cosine and Pearson are computed independently. A category whose cosine
    is undefined is dropped and recorded in ``undefined``; one whose cosine
    is defined but whose Pearson is not (a constant series) keeps its cosine,
    has ``pearson`` None and is recorded in ``pearson_undefined``. The
    Pearson country mean is None when no counted category has one.

    Raises:
        InsufficientDataError: no counted category with a defined cosine
    """
    per_category: Dict[ActivityCategory, CategorySimilarity] = {}
    undefined: Dict[ActivityCategory, str] = {}
    pearson_undefined: Dict[ActivityCategory, str] = {}
    for category in ActivityCategory.ordered():
        pair = pairs.get(category)
        if pair is None:
            continue
        try:
            cosine = cosine_similarity(pair.stringency, pair.activity)
        except UndefinedMeasureError as e:
            undefined[category] = str(e)
            logger.warning(f"{iso_code}: {category.value} similarity undefined: {e}")
            continue
        try:
            correlation: Optional[float] = pearson(pair.stringency, pair.activity)
        except UndefinedMeasureError as e:
            correlation = None
            pearson_undefined[category] = str(e)
            logger.warning(f"{iso_code}: {category.value} Pearson undefined: {e}")
        per_category[category] = CategorySimilarity(cosine, correlation)

    counted = [per_category[c] for c in ActivityCategory.ordered() if c in per_category and c not in excluded]
    if not counted:
        raise InsufficientDataError(f"{iso_code}: no counted category with a defined similarity")
    correlations = [s.pearson for s in counted if s.pearson is not None]
    return SimilarityScore(
        iso_code=iso_code,
        per_category=per_category,
        country_mean_cosine=float(np.mean([s.cosine for s in counted])),
        country_mean_pearson=float(np.mean(correlations)) if correlations else None,
        undefined=undefined,
        pearson_undefined=pearson_undefined,
    )


@dataclass
class LagProfile:
    """Per-category lag statistics and their non-Parks country mean"""
    iso_code: str
    per_category: Dict[ActivityCategory, int]
    country_mean_lag: Optional[float]
    threshold: float
    max_lag: int
    no_significant_lag: List[ActivityCategory] = field(default_factory=list)


def country_lag(
    pairs: Mapping[ActivityCategory, AlignedPair],
    iso_code: str = "",
    threshold: float = DEFAULT_THRESHOLD,
    max_lag: int = DEFAULT_MAX_LAG,
    min_overlap: int = DEFAULT_MIN_OVERLAP,
    excluded: Sequence[ActivityCategory] = MEAN_EXCLUDED,
) -> LagProfile:
    """
    Lag statistic per category. ``country_mean_lag`` is None when no
    counted category has a significant lag, which excludes the country
    from lag rankings.
    """
    per_category: Dict[ActivityCategory, int] = {}
    missing: List[ActivityCategory] = []
    for category in ActivityCategory.ordered():
        pair = pairs.get(category)
        if pair is None:
            continue
        lag = lag_days(pair.stringency, pair.activity, threshold, max_lag, min_overlap)
        if lag is None:
            missing.append(category)
        else:
            per_category[category] = lag

    counted = [per_category[c] for c in ActivityCategory.ordered() if c in per_category and c not in excluded]
    mean = float(np.mean(counted)) if counted else None
    if mean is None:
        logger.info(f"{iso_code}: no significant lag in any counted category")
    return LagProfile(iso_code, per_category, mean, threshold, max_lag, missing)


@dataclass
class SubregionVariation:
    """Spread of subregion-to-subregion similarity per category"""
    iso_code: str
    per_category_sd: Dict[ActivityCategory, float]
    country_mean_sd: float
    n_subregions: int
    low_confidence: bool = False
    per_category_count: Dict[ActivityCategory, int] = field(default_factory=dict)


def subregion_variation(
    record: CountryRecord,
    window: AnalysisWindow,
    gap_policy: Optional[GapPolicy] = None,
    masks: Sequence[DateMask] = (),
) -> SubregionVariation:
    """
    SD of the strictly-upper-triangle entries of each category's
    subregion-by-subregion cosine matrix, averaged over categories.

    Subregion series are compared raw (no inversion). A category with only
    two usable subregions has a single similarity and SD 0, which flags the
    result as low confidence.

    Raises:
        InsufficientDataError: fewer than two usable subregions in every category
    """
    policy = gap_policy or GapPolicy()
    masked = mask_days(window, masks)
    per_category_sd: Dict[ActivityCategory, float] = {}
    counts: Dict[ActivityCategory, int] = {}
    contributing = set()

    for category in ActivityCategory.ordered():
        names = []
        vectors = []
        for region in sorted(record.subregions):
            outcome = repair_series(record.subregions[region].get(category), window, policy, masked)
            if outcome.ok and np.linalg.norm(outcome.values) > 0:
                names.append(region)
                vectors.append(outcome.values)
        if len(vectors) < 2:
            continue
        matrix = np.vstack(vectors)
        unit = matrix / np.linalg.norm(matrix, axis=1, keepdims=True)
        similarity = np.clip(unit @ unit.T, -1.0, 1.0)
        upper = similarity[np.triu_indices(len(vectors), k=1)]
        per_category_sd[category] = float(np.std(upper))
        counts[category] = len(vectors)
        contributing.update(names)

    if not per_category_sd:
        raise InsufficientDataError(f"{record.iso_code}: fewer than 2 usable subregions in every category")
    return SubregionVariation(
        iso_code=record.iso_code,
        per_category_sd=per_category_sd,
        country_mean_sd=float(np.mean(list(per_category_sd.values()))),
        n_subregions=len(contributing),
        low_confidence=any(n == 2 for n in counts.values()),
        per_category_count=counts,
    )


def category_summary(values: Mapping[str, Mapping[ActivityCategory, float]]) -> pd.DataFrame:
    """
    Mean, median, standard deviation and count per category across countries,
    sorted by mean (highest first).
    """
    rows = []
    for category in ActivityCategory.ordered():
        column = np.array([v[category] for v in values.values() if category in v], dtype=float)
        if column.size == 0:
            continue
        rows.append({
            "category": category.value,
            "mean": float(column.mean()),
            "median": float(np.median(column)),
            "std": float(column.std(ddof=1)) if column.size > 1 else 0.0,
            "n": int(column.size),
        })
    frame = pd.DataFrame(rows, columns=["category", "mean", "median", "std", "n"])
    return frame.sort_values(["mean", "category"], ascending=[False, True], kind="mergesort").reset_index(drop=True)


def similarity_table(scores: Mapping[str, SimilarityScore], key: str = "cosine") -> MeasureTable:
    """Country-mean cosine or Pearson values as a MeasureTable"""
    attribute = "country_mean_cosine" if key == "cosine" else "country_mean_pearson"
    return MeasureTable(f"mean_{key}", {code: getattr(s, attribute) for code, s in scores.items()
                                        if getattr(s, attribute) is not None})


def lag_table(profiles: Mapping[str, LagProfile]) -> MeasureTable:
    return MeasureTable("mean_lag", {code: p.country_mean_lag for code, p in profiles.items()
                                     if p.country_mean_lag is not None})


def variation_table(variations: Mapping[str, SubregionVariation]) -> MeasureTable:
    flags = {code: ["low_confidence"] for code, v in variations.items() if v.low_confidence}
    return MeasureTable("mean_sd", {code: v.country_mean_sd for code, v in variations.items()}, flags)
