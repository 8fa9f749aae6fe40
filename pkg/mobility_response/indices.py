"""
Country Indices

Loads third-party country indices (development, governance, health and
similar tables listed in a JSON manifest), derives population, area,
density and per-capita outcome indices from the dataset, and correlates the
per-country measures with them using Kendall tau-b.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError, InsufficientDataError, UndefinedMeasureError
from .ingest import CountryCodeTable, CsvSource, read_text_csv, require_columns, source_name
from .models import ActivityCategory, AlignedPair, AnalysisWindow, CountryRecord, DailySeries, MeasureTable
from .rankstats import kendall_tau_b, significance_stars

logger = logging.getLogger(__name__)

DEFAULT_MIN_N = 10


class Direction(Enum):
    """Which end of an index is favourable; carried as metadata only"""
    BETTER = "better"
    WORSE = "worse"
    NEUTRAL = "neutral"


@dataclass
class IndexTable:
    name: str
    values: Dict[str, float]
    higher_is: Direction = Direction.NEUTRAL
    family: str = ""

    def __post_init__(self):
        if not self.family:
            self.family = self.name
        for code, value in self.values.items():
            if not np.isfinite(value):
                raise DataError(f"Index {self.name}: non-finite value for {code}")

    def __len__(self) -> int:
        return len(self.values)


def load_index_table(path: CsvSource, name: str, codes: CountryCodeTable,
                     higher_is: Direction = Direction.NEUTRAL, family: str = "") -> IndexTable:
    """
    Read a two-column ``iso_code,value`` CSV.

    Blank or unparseable values are skipped with a warning; unknown codes are
    dropped; duplicate codes are fatal.
    """
    frame = read_text_csv(path)
    require_columns(frame, ['iso_code', 'value'], path)
    values: Dict[str, float] = {}
    skipped = 0
    for index, row in frame.iterrows():
        code = codes.harmonize(row['iso_code'])
        if code is None:
            logger.warning(f"{source_name(path)}: row {index + 2}: unknown country code {row['iso_code']!r} dropped")
            continue
        if code in values:
            raise DataError(f"{source_name(path)}: row {index + 2}: duplicate entry for {code}")
        value = pd.to_numeric(row['value'].strip(), errors='coerce')
        if pd.isna(value) or not np.isfinite(value):
            skipped += 1
            continue
        values[code] = float(value)
    if skipped:
        logger.warning(f"{source_name(path)}: {skipped} rows without a usable value skipped")
    return IndexTable(name, values, higher_is, family)


def load_index_manifest(path: Union[str, Path], codes: CountryCodeTable) -> List[IndexTable]:
    """
    Load every index named in a JSON manifest.

    The manifest is either a list of entries or an object with an
    ``indices`` list. Each entry has ``name`` and ``path`` (relative to the
    manifest) and optionally ``higher_is`` and ``family``.
    """
    manifest_path = Path(path)
    try:
        with open(manifest_path, 'r', encoding='utf-8') as f:
            manifest = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"Index manifest not found: {manifest_path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"{manifest_path}: invalid JSON: {e}")

    entries = manifest.get('indices', []) if isinstance(manifest, dict) else manifest
    tables = []
    names = set()
    for number, entry in enumerate(entries):
        if 'name' not in entry or 'path' not in entry:
            raise ConfigError(f"{manifest_path}: entry {number} needs 'name' and 'path'")
        if entry['name'] in names:
            raise ConfigError(f"{manifest_path}: index {entry['name']!r} listed twice")
        names.add(entry['name'])
        try:
            direction = Direction(entry.get('higher_is', 'neutral'))
        except ValueError:
            raise ConfigError(f"{manifest_path}: {entry['name']}: higher_is must be better, worse or neutral")
        table_path = manifest_path.parent / entry['path']
        if not table_path.exists():
            raise ConfigError(f"{manifest_path}: {entry['name']}: file not found: {table_path}")
        tables.append(load_index_table(table_path, entry['name'], codes, direction, entry.get('family', '')))
    logger.info(f"Loaded {len(tables)} index tables from {manifest_path}")
    return tables


def per_capita(value: float, population: float) -> float:
    """
    Raises:
        DataError: population is not positive
    """
    if population is None or population <= 0:
        raise DataError(f"Per-capita value needs a positive population, got {population}")
    return float(value) / float(population)


def _value_at_end(series: Optional[DailySeries], window: AnalysisWindow) -> Optional[float]:
    """Last observed value on or before the window end"""
    if series is None:
        return None
    observed = series.to_series().loc[:pd.Timestamp(window.end)].dropna()
    if observed.empty:
        return None
    return float(observed.iloc[-1])


def country_attribute_indices(records: Mapping[str, CountryRecord], window: AnalysisWindow) -> List[IndexTable]:
    """Population, area, density and cases/deaths per capita at the window end"""
    population: Dict[str, float] = {}
    area: Dict[str, float] = {}
    density: Dict[str, float] = {}
    cases: Dict[str, float] = {}
    deaths: Dict[str, float] = {}
    for code in sorted(records):
        record = records[code]
        if record.population:
            population[code] = float(record.population)
        if record.area:
            area[code] = float(record.area)
            if record.population:
                density[code] = record.population / record.area
        if not record.population:
            continue
        end_cases = _value_at_end(record.confirmed_cases, window)
        end_deaths = _value_at_end(record.deaths, window)
        if end_cases is not None:
            cases[code] = per_capita(end_cases, record.population)
        if end_deaths is not None:
            deaths[code] = per_capita(end_deaths, record.population)
    return [
        IndexTable('population', population, family='demographics'),
        IndexTable('area', area, family='demographics'),
        IndexTable('population_density', density, family='demographics'),
        IndexTable('cases_per_capita', cases, Direction.WORSE, family='outcomes'),
        IndexTable('deaths_per_capita', deaths, Direction.WORSE, family='outcomes'),
    ]


@dataclass
class CorrelationRow:
    measure: str
    index: str
    tau: Optional[float]
    p_value: Optional[float]
    n: int
    stars: str = ""
    p_method: str = ""
    insufficient: bool = False
    family: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def correlate_measures_with_indices(
    measures: Sequence[MeasureTable],
    index_tables: Sequence[IndexTable],
    min_n: int = DEFAULT_MIN_N,
) -> List[CorrelationRow]:
    """
    One Kendall tau-b row per (measure, index) over the countries both cover.

    Joins smaller than ``min_n`` and undefined correlations yield rows
    flagged ``insufficient`` with no tau.
    """
    rows = []
    for measure in measures:
        for table in index_tables:
            shared = sorted(set(measure.values) & set(table.values))
            row = CorrelationRow(measure.name, table.name, None, None, len(shared), family=table.family)
            if len(shared) < max(min_n, 3):
                row.insufficient = True
                rows.append(row)
                continue
            try:
                result = kendall_tau_b([measure.values[c] for c in shared], [table.values[c] for c in shared])
            except (InsufficientDataError, UndefinedMeasureError) as e:
                logger.warning(f"{measure.name} vs {table.name}: {e}")
                row.insufficient = True
                rows.append(row)
                continue
            row.tau = result.tau
            row.p_value = result.p_value
            row.p_method = result.p_method
            row.stars = significance_stars(result.p_value)
            rows.append(row)
    return rows


def correlation_frame(rows: Sequence[CorrelationRow]) -> pd.DataFrame:
    return pd.DataFrame(
        [{"measure": r.measure, "index": r.index, "tau": r.tau, "p": r.p_value, "n": r.n,
          "stars": r.stars, "p_method": r.p_method, "insufficient": r.insufficient} for r in rows],
        columns=["measure", "index", "tau", "p", "n", "stars", "p_method", "insufficient"],
    )


def significance_counts(rows: Sequence[CorrelationRow]) -> pd.DataFrame:
    """Per (measure, index family): indices tested and how many reach p < 0.1 and p < 0.01"""
    counts: Dict[tuple, Dict[str, int]] = {}
    for row in rows:
        entry = counts.setdefault((row.measure, row.family or row.index),
                                  {"n_indices": 0, "n_tested": 0, "p_below_0_1": 0, "p_below_0_01": 0})
        entry["n_indices"] += 1
        if row.insufficient or row.p_value is None:
            continue
        entry["n_tested"] += 1
        entry["p_below_0_1"] += int(row.p_value < 0.1)
        entry["p_below_0_01"] += int(row.p_value < 0.01)
    records = [{"measure": m, "family": f, **v} for (m, f), v in sorted(counts.items())]
    return pd.DataFrame(records, columns=["measure", "family", "n_indices", "n_tested",
                                          "p_below_0_1", "p_below_0_01"])


@dataclass
class OutcomeComparison:
    """Country-averaged tau between mean activity and one daily series"""
    series: str
    mean_tau: Optional[float]
    n_countries: int
    n_undefined: int
    per_country: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"series": self.series, "mean_tau": self.mean_tau,
                "n_countries": self.n_countries, "n_undefined": self.n_undefined}


def mean_activity(pairs: Mapping[ActivityCategory, AlignedPair]) -> Optional[np.ndarray]:
    """Average of the inverted non-Parks activity vectors, or None without any"""
    vectors = [pairs[c].activity for c in ActivityCategory.non_parks() if c in pairs]
    if not vectors:
        return None
    return np.mean(np.vstack(vectors), axis=0)


def _dense_window(series: Optional[DailySeries], window: AnalysisWindow) -> Optional[np.ndarray]:
    if series is None:
        return None
    values = series.window(window).to_series().ffill()
    if values.isna().any():
        return None
    return values.to_numpy(dtype=float)


def stringency_vs_outcomes(
    aligned: Mapping[str, Mapping[ActivityCategory, AlignedPair]],
    records: Mapping[str, CountryRecord],
    window: AnalysisWindow,
) -> List[OutcomeComparison]:
    """
    Per-country tau-b of the mean inverted activity against stringency,
    cumulative cases and cumulative deaths over the window, averaged across
    countries. Countries where a tau is undefined (e.g. a constant series)
    are counted and left out of that average.
    """
    taus: Dict[str, Dict[str, float]] = {"stringency": {}, "cases": {}, "deaths": {}}
    undefined = {name: 0 for name in taus}
    for code in sorted(aligned):
        activity = mean_activity(aligned[code])
        if activity is None:
            continue
        first = next(iter(aligned[code].values()))
        record = records.get(code)
        series = {
            "stringency": first.stringency,
            "cases": _dense_window(record.confirmed_cases, window) if record else None,
            "deaths": _dense_window(record.deaths, window) if record else None,
        }
        for name, values in series.items():
            if values is None or len(values) != len(activity):
                undefined[name] += 1
                continue
            try:
                taus[name][code] = kendall_tau_b(activity, values).tau
            except (InsufficientDataError, UndefinedMeasureError):
                undefined[name] += 1

    comparisons = []
    for name, per_country in taus.items():
        mean = float(np.mean(list(per_country.values()))) if per_country else None
        if undefined[name]:
            logger.info(f"Activity vs {name}: {undefined[name]} countries with undefined tau excluded")
        comparisons.append(OutcomeComparison(name, mean, len(per_country), undefined[name], per_country))
    return comparisons
