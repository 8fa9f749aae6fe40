"""
Data Models for Mobility Response Analysis

Defines the shared dataclasses and enums passed between the ingest,
measure, spatial and reporting stages.
"""

from dataclasses import dataclass, field
from datetime import date, timedelta
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from .errors import DataError


ACTIVITY_FLOOR = -100.0
STRINGENCY_MIN = 0.0
STRINGENCY_MAX = 100.0


class ActivityCategory(Enum):
    """Google Community Mobility place categories"""
    RETAIL_RECREATION = "retail_recreation"
    GROCERY_PHARMACY = "grocery_pharmacy"
    PARKS = "parks"
    TRANSIT_STATIONS = "transit_stations"
    WORKPLACES = "workplaces"
    RESIDENTIAL = "residential"

    @property
    def column(self) -> str:
        """Mobility CSV column carrying this category"""
        return _CATEGORY_COLUMNS[self]

    @property
    def label(self) -> str:
        return _CATEGORY_LABELS[self]

    @property
    def inverted(self) -> bool:
        """Every category except Residential is expected to fall as policy tightens"""
        return self is not ActivityCategory.RESIDENTIAL

    @classmethod
    def ordered(cls) -> List['ActivityCategory']:
        return list(cls)

    @classmethod
    def non_parks(cls) -> List['ActivityCategory']:
        return [c for c in cls if c is not cls.PARKS]

    @classmethod
    def parse(cls, text: str) -> 'ActivityCategory':
        """Accept the enum value, the enum name or a loose label such as 'parks' or 'Transit stations'"""
        key = text.strip().lower().replace('&', '').replace(' ', '_').replace('__', '_')
        for category in cls:
            if key in (category.value, category.name.lower()):
                return category
        aliases = {'retail': cls.RETAIL_RECREATION, 'grocery': cls.GROCERY_PHARMACY,
                   'transit': cls.TRANSIT_STATIONS, 'workplace': cls.WORKPLACES}
        if key in aliases:
            return aliases[key]
        raise ValueError(f"Unknown activity category: {text}")


_CATEGORY_COLUMNS = {
    ActivityCategory.RETAIL_RECREATION: 'retail_and_recreation_percent_change_from_baseline',
    ActivityCategory.GROCERY_PHARMACY: 'grocery_and_pharmacy_percent_change_from_baseline',
    ActivityCategory.PARKS: 'parks_percent_change_from_baseline',
    ActivityCategory.TRANSIT_STATIONS: 'transit_stations_percent_change_from_baseline',
    ActivityCategory.WORKPLACES: 'workplaces_percent_change_from_baseline',
    ActivityCategory.RESIDENTIAL: 'residential_percent_change_from_baseline',
}

_CATEGORY_LABELS = {
    ActivityCategory.RETAIL_RECREATION: 'Retail & recreation',
    ActivityCategory.GROCERY_PHARMACY: 'Grocery & pharmacy',
    ActivityCategory.PARKS: 'Parks',
    ActivityCategory.TRANSIT_STATIONS: 'Transit stations',
    ActivityCategory.WORKPLACES: 'Workplaces',
    ActivityCategory.RESIDENTIAL: 'Residential',
}


class Continent(Enum):
    AFRICA = "Africa"
    ASIA = "Asia"
    EUROPE = "Europe"
    NORTH_AMERICA = "North America"
    OCEANIA = "Oceania"
    SOUTH_AMERICA = "South America"

    @classmethod
    def parse(cls, text: str) -> 'Continent':
        key = text.strip().lower().replace('_', ' ')
        for continent in cls:
            if key in (continent.value.lower(), continent.name.lower().replace('_', ' ')):
                return continent
        raise ValueError(f"Unknown continent: {text}")


class SeriesUnit(Enum):
    PERCENT_CHANGE = "percent_change_from_baseline"
    INDEX_POINTS = "index_points"
    COUNT = "count"


@dataclass(frozen=True)
class AnalysisWindow:
    """Inclusive date range every series is aligned to"""
    start: date = date(2020, 2, 15)
    end: date = date(2020, 4, 11)

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError(f"Window start {self.start} is after window end {self.end}")

    @property
    def n_days(self) -> int:
        return (self.end - self.start).days + 1

    @property
    def dates(self) -> pd.DatetimeIndex:
        return pd.date_range(self.start, self.end, freq='D')

    def contains(self, day: date) -> bool:
        return self.start <= day <= self.end

    @classmethod
    def from_strings(cls, start: str, end: str) -> 'AnalysisWindow':
        return cls(date.fromisoformat(start), date.fromisoformat(end))

    def to_dict(self) -> Dict[str, str]:
        return {"start": self.start.isoformat(), "end": self.end.isoformat()}


@dataclass
class DailySeries:
    """
    Date-indexed signal with one slot per consecutive day.

    Missing days hold NaN. Bounds are checked on construction: activity
    values may not drop below -100, stringency must stay within [0, 100].
    """
    start_date: date
    values: np.ndarray
    unit: SeriesUnit

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise ValueError("DailySeries values must be one-dimensional")
        observed = self.values[~np.isnan(self.values)]
        if self.unit is SeriesUnit.PERCENT_CHANGE and observed.size and observed.min() < ACTIVITY_FLOOR:
            raise DataError(f"Activity value {observed.min()} below floor {ACTIVITY_FLOOR} in series starting {self.start_date}")
        if self.unit is SeriesUnit.INDEX_POINTS and observed.size and (
                observed.min() < STRINGENCY_MIN or observed.max() > STRINGENCY_MAX):
            raise DataError(f"Stringency outside [0, 100] in series starting {self.start_date}")

    def __len__(self) -> int:
        return len(self.values)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DailySeries):
            return NotImplemented
        return (self.start_date == other.start_date and self.unit is other.unit
                and np.array_equal(self.values, other.values, equal_nan=True))

    @property
    def end_date(self) -> date:
        return self.start_date + timedelta(days=len(self.values) - 1)

    @property
    def dates(self) -> pd.DatetimeIndex:
        return pd.date_range(self.start_date, periods=len(self.values), freq='D')

    def to_series(self) -> pd.Series:
        return pd.Series(self.values, index=self.dates)

    @classmethod
    def from_series(cls, series: pd.Series, unit: SeriesUnit) -> 'DailySeries':
        """Build from a date-indexed pandas Series, filling absent days with NaN"""
        if series.empty:
            raise ValueError("Cannot build a DailySeries from an empty series")
        series = series.sort_index()
        index = pd.date_range(series.index.min(), series.index.max(), freq='D')
        dense = series.reindex(index)
        return cls(index[0].date(), dense.to_numpy(dtype=float), unit)

    def window(self, window: AnalysisWindow) -> 'DailySeries':
        """Reindex onto the window; days outside the observed range become missing"""
        dense = self.to_series().reindex(window.dates)
        return DailySeries(window.start, dense.to_numpy(dtype=float), self.unit)

    def value_on(self, day: date) -> float:
        offset = (day - self.start_date).days
        if offset < 0 or offset >= len(self.values):
            return float('nan')
        return float(self.values[offset])

    def coverage(self) -> float:
        """Fraction of slots holding an observed value"""
        if len(self.values) == 0:
            return 0.0
        return float(np.count_nonzero(~np.isnan(self.values))) / len(self.values)


CategorySeries = Dict[ActivityCategory, DailySeries]


@dataclass
class CountryRecord:
    """National and first-level subregional activity for one country, plus metadata"""
    iso_code: str
    name: str
    national: CategorySeries = field(default_factory=dict)
    subregions: Dict[str, CategorySeries] = field(default_factory=dict)
    iso3: Optional[str] = None
    continent: Optional[Continent] = None
    population: Optional[int] = None
    area: Optional[float] = None
    stringency: Optional[DailySeries] = None
    confirmed_cases: Optional[DailySeries] = None
    deaths: Optional[DailySeries] = None
    geometry_ref: Optional[str] = None

    @property
    def has_subregions(self) -> bool:
        return len(self.subregions) > 0

    def window(self, window: AnalysisWindow) -> 'CountryRecord':
        """Copy of the record with every series reindexed onto the window"""
        def cut(series: Optional[DailySeries]) -> Optional[DailySeries]:
            return series.window(window) if series is not None else None

        return CountryRecord(
            iso_code=self.iso_code,
            name=self.name,
            national={c: s.window(window) for c, s in self.national.items()},
            subregions={r: {c: s.window(window) for c, s in cats.items()}
                        for r, cats in self.subregions.items()},
            iso3=self.iso3,
            continent=self.continent,
            population=self.population,
            area=self.area,
            stringency=cut(self.stringency),
            confirmed_cases=cut(self.confirmed_cases),
            deaths=cut(self.deaths),
            geometry_ref=self.geometry_ref,
        )


@dataclass
class AlignedPair:
    """Dense, co-registered stringency and activity vectors for one category"""
    category: ActivityCategory
    stringency: np.ndarray
    activity: np.ndarray
    inverted: bool
    dates: Tuple[date, ...] = ()
    interpolated_days: int = 0

    def __post_init__(self):
        self.stringency = np.asarray(self.stringency, dtype=float)
        self.activity = np.asarray(self.activity, dtype=float)
        if self.stringency.shape != self.activity.shape:
            raise ValueError(f"{self.category.value}: stringency and activity lengths differ")
        if np.isnan(self.stringency).any() or np.isnan(self.activity).any():
            raise ValueError(f"{self.category.value}: aligned vectors must be dense")
        if self.inverted != self.category.inverted:
            raise ValueError(f"{self.category.value}: inversion flag inconsistent with category")

    @property
    def n(self) -> int:
        return len(self.activity)

    def raw_activity(self) -> np.ndarray:
        """Repaired activity before inversion"""
        return -self.activity if self.inverted else self.activity.copy()


class ExclusionReason(Enum):
    """Machine-readable reason codes for the exclusion report"""
    NO_CODE_MATCH = "no_code_match"
    NO_STRINGENCY = "no_stringency"
    STRINGENCY_GAPS = "stringency_gaps"
    LOW_COVERAGE = "low_coverage"
    EDGE_GAP = "edge_gap"
    LONG_GAP = "long_gap"
    NO_CATEGORIES = "no_categories"
    UNDEFINED_SIMILARITY = "undefined_similarity"
    NO_SIGNIFICANT_LAG = "no_significant_lag"
    TOO_FEW_SUBREGIONS = "too_few_subregions"
    MISSING_CATEGORY = "missing_category"
    MISSING_GEOMETRY = "missing_geometry"
    MISSING_CONTINENT = "missing_continent"


@dataclass(frozen=True)
class Exclusion:
    """One (country, measure) exclusion; category set when only one category was dropped"""
    iso_code: str
    measure: str
    reason: ExclusionReason
    detail: str = ""
    category: Optional[ActivityCategory] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "iso_code": self.iso_code,
            "measure": self.measure,
            "category": self.category.value if self.category else "",
            "reason_code": self.reason.value,
            "detail": self.detail,
        }


@dataclass
class AlignmentResult:
    """Output of align(): accepted pairs plus per-category rejections"""
    iso_code: str
    pairs: Dict[ActivityCategory, AlignedPair] = field(default_factory=dict)
    rejections: Dict[ActivityCategory, Exclusion] = field(default_factory=dict)
    excluded: Optional[Exclusion] = None
    masked_dates: Tuple[date, ...] = ()

    @property
    def ok(self) -> bool:
        return self.excluded is None and len(self.pairs) > 0


@dataclass
class MeasureTable:
    """Per-country values of one measure, keyed by iso code"""
    name: str
    values: Dict[str, float]
    flags: Dict[str, List[str]] = field(default_factory=dict)

    def __post_init__(self):
        for code, value in self.values.items():
            if not np.isfinite(value):
                raise ValueError(f"{self.name}: non-finite value for {code}")

    def __len__(self) -> int:
        return len(self.values)

    def codes(self) -> List[str]:
        return sorted(self.values)

    def to_frame(self) -> pd.DataFrame:
        codes = self.codes()
        return pd.DataFrame({
            "iso_code": codes,
            self.name: [self.values[c] for c in codes],
            "flags": [';'.join(self.flags.get(c, [])) for c in codes],
        })
