"""
Mobility and Stringency Ingestion

Parses the Google Community Mobility CSV, the OxCGRT stringency CSV and the
auxiliary country tables, then repairs gaps and aligns per-country series
over an analysis window.

Row-level problems (unparseable dates or numbers, duplicates) are counted
and kept on the parse result; layout problems and bound violations are
fatal.
"""

import logging
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import IO, Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
import pandas as pd

from .errors import DataError, FormatError
from .models import (
    ACTIVITY_FLOOR,
    STRINGENCY_MAX,
    STRINGENCY_MIN,
    ActivityCategory,
    AlignedPair,
    AlignmentResult,
    AnalysisWindow,
    Continent,
    CountryRecord,
    DailySeries,
    Exclusion,
    ExclusionReason,
    SeriesUnit,
)

logger = logging.getLogger(__name__)

CsvSource = Union[str, Path, IO[str]]

MOBILITY_ID_COLUMNS = ['country_region_code', 'country_region', 'sub_region_1', 'sub_region_2', 'date']
MOBILITY_COLUMNS = MOBILITY_ID_COLUMNS + [c.column for c in ActivityCategory.ordered()]

STRINGENCY_COLUMNS = ['CountryName', 'CountryCode', 'Date', 'StringencyIndex', 'ConfirmedCases', 'ConfirmedDeaths']

DEFAULT_CODE_TABLE = Path(__file__).parent / 'data' / 'country_codes.csv'

# Cap on the number of row-level warning messages kept verbatim; the counters stay exact.
MAX_WARNING_MESSAGES = 50

DateMask = Tuple[date, date]


def source_name(source: CsvSource) -> str:
    return str(getattr(source, 'name', source))


def read_text_csv(source: CsvSource) -> pd.DataFrame:
    # keep_default_na=False keeps codes such as Namibia's "NA" intact
    frame = pd.read_csv(source, dtype=str, keep_default_na=False, na_values=[])
    frame.columns = [c.strip() for c in frame.columns]
    return frame


def require_columns(frame: pd.DataFrame, required: Sequence[str], source: CsvSource) -> None:
    for column in required:
        if column not in frame.columns:
            raise FormatError(f"{source_name(source)}: missing required column '{column}'")


@dataclass
class ParseResult:
    """Records parsed from the mobility CSV plus row accounting"""
    records: Dict[str, CountryRecord]
    rows_read: int = 0
    rows_skipped: int = 0
    rows_ignored: int = 0
    warnings: List[str] = field(default_factory=list)

    def warn(self, message: str) -> None:
        if len(self.warnings) < MAX_WARNING_MESSAGES:
            self.warnings.append(message)

    def summary(self) -> Dict[str, int]:
        return {
            "countries": len(self.records),
            "rows_read": self.rows_read,
            "rows_skipped": self.rows_skipped,
            "rows_ignored": self.rows_ignored,
        }


@dataclass
class StringencyRecord:
    """Per-country stringency, cumulative cases and cumulative deaths"""
    iso3: str
    name: str
    stringency: DailySeries
    cases: DailySeries
    deaths: DailySeries


@dataclass
class StringencyParseResult:
    records: Dict[str, StringencyRecord]
    rows_read: int = 0
    rows_skipped: int = 0
    warnings: List[str] = field(default_factory=list)

    def warn(self, message: str) -> None:
        if len(self.warnings) < MAX_WARNING_MESSAGES:
            self.warnings.append(message)

    def summary(self) -> Dict[str, int]:
        return {"countries": len(self.records), "rows_read": self.rows_read, "rows_skipped": self.rows_skipped}


@dataclass
class GapPolicy:
    """Gap repair and coverage rules applied by align()"""
    max_interior_gap: int = 3
    min_coverage: float = 0.9


def _parse_numbers(frame: pd.DataFrame, column: str) -> Tuple[pd.Series, pd.Series]:
    """Return (values, bad) where blank cells are NaN and bad marks non-blank unparseable cells"""
    text = frame[column].str.strip()
    values = pd.to_numeric(text, errors='coerce')
    bad = (text != '') & values.isna()
    return values, bad


def parse_mobility(csv_stream: CsvSource) -> ParseResult:
    """
    Parse the global Community Mobility CSV.

    Args:
        csv_stream: path or text stream in the documented mobility layout

    Returns:
        ParseResult with one CountryRecord per country code. National rows
        fill ``national``; rows with only ``sub_region_1`` set fill
        ``subregions``. Deeper levels are counted as ignored.
    """
    frame = read_text_csv(csv_stream)
    require_columns(frame, MOBILITY_COLUMNS, csv_stream)
    name = source_name(csv_stream)
    result = ParseResult(records={}, rows_read=len(frame))

    for column in MOBILITY_ID_COLUMNS:
        frame[column] = frame[column].str.strip()
    dates = pd.to_datetime(frame['date'], format='%Y-%m-%d', errors='coerce')
    bad = dates.isna() | (frame['country_region_code'] == '')

    values = {}
    for category in ActivityCategory.ordered():
        parsed, bad_cells = _parse_numbers(frame, category.column)
        below_floor = parsed < ACTIVITY_FLOOR
        values[category] = parsed.where(~below_floor)
        bad = bad | bad_cells | below_floor

    for row in np.flatnonzero(bad.to_numpy()):
        result.warn(f"{name}: row {row + 2} skipped (unparseable date or value)")
    result.rows_skipped = int(bad.sum())

    deeper = (frame['sub_region_2'] != '')
    if 'metro_area' in frame.columns:
        deeper = deeper | (frame['metro_area'].str.strip() != '')
    keep = ~bad & ~deeper
    result.rows_ignored = int((~bad & deeper).sum())

    tidy = pd.DataFrame({
        'code': frame['country_region_code'],
        'country': frame['country_region'],
        'region': frame['sub_region_1'],
        'date': dates,
    })
    for category in ActivityCategory.ordered():
        tidy[category.value] = values[category]
    tidy = tidy[keep.to_numpy()]

    duplicated = tidy.duplicated(['code', 'region', 'date'], keep='first')
    for row in np.flatnonzero(duplicated.to_numpy()):
        result.warn(f"{name}: duplicate row for {tidy.iloc[row]['code']} {tidy.iloc[row]['region']!r} "
                    f"{tidy.iloc[row]['date'].date()} skipped")
    result.rows_skipped += int(duplicated.sum())
    tidy = tidy[~duplicated.to_numpy()]

    for (code, region), group in tidy.groupby(['code', 'region'], sort=True):
        record = result.records.get(code)
        if record is None:
            record = CountryRecord(iso_code=code, name=group['country'].iloc[0])
            result.records[code] = record
        indexed = group.set_index('date').sort_index()
        series = {
            category: DailySeries.from_series(indexed[category.value], SeriesUnit.PERCENT_CHANGE)
            for category in ActivityCategory.ordered()
            if indexed[category.value].notna().any()
        }
        if region == '':
            record.national = series
        else:
            record.subregions[region] = series

    if result.rows_skipped:
        logger.warning(f"{name}: skipped {result.rows_skipped} of {result.rows_read} rows")
    logger.info(f"Parsed mobility data for {len(result.records)} countries from {name}")
    return result


def write_mobility(records: Dict[str, CountryRecord], csv_stream: CsvSource) -> None:
    """Write records back in the mobility CSV layout (national rows first, then subregions)"""
    rows = []
    for code in sorted(records):
        record = records[code]
        regions = [('', record.national)] + sorted(record.subregions.items())
        for region, categories in regions:
            if not categories:
                continue
            start = min(s.start_date for s in categories.values())
            end = max(s.end_date for s in categories.values())
            window = AnalysisWindow(start, end)
            columns = {c: categories[c].window(window).values if c in categories
                       else np.full(window.n_days, np.nan) for c in ActivityCategory.ordered()}
            for offset, day in enumerate(window.dates):
                row = {
                    'country_region_code': code,
                    'country_region': record.name,
                    'sub_region_1': region,
                    'sub_region_2': '',
                    'date': day.strftime('%Y-%m-%d'),
                }
                for category in ActivityCategory.ordered():
                    row[category.column] = columns[category][offset]
                rows.append(row)
    pd.DataFrame(rows, columns=MOBILITY_COLUMNS).to_csv(csv_stream, index=False, lineterminator='\n')


def parse_stringency(csv_stream: CsvSource) -> StringencyParseResult:
    """
    Parse an OxCGRT-style stringency CSV.

    Only national rows are used when the file carries regional rows
    (``Jurisdiction`` other than NAT_TOTAL, or a non-empty ``RegionCode``).

    Raises:
        FormatError: a required column is missing
        DataError: stringency outside [0, 100] or a duplicate (country, date)
    """
    frame = read_text_csv(csv_stream)
    require_columns(frame, STRINGENCY_COLUMNS, csv_stream)
    name = source_name(csv_stream)
    result = StringencyParseResult(records={}, rows_read=len(frame))

    if 'Jurisdiction' in frame.columns:
        frame = frame[frame['Jurisdiction'].str.strip().isin(['', 'NAT_TOTAL'])]
    elif 'RegionCode' in frame.columns:
        frame = frame[frame['RegionCode'].str.strip() == '']

    frame = frame.assign(CountryCode=frame['CountryCode'].str.strip())
    dates = pd.to_datetime(frame['Date'].str.strip(), format='%Y%m%d', errors='coerce')
    stringency, bad_s = _parse_numbers(frame, 'StringencyIndex')
    cases, bad_c = _parse_numbers(frame, 'ConfirmedCases')
    deaths, bad_d = _parse_numbers(frame, 'ConfirmedDeaths')
    bad = dates.isna() | bad_s | bad_c | bad_d | (frame['CountryCode'] == '')
    for row in np.flatnonzero(bad.to_numpy()):
        result.warn(f"{name}: row {frame.index[row] + 2} skipped (unparseable date or value)")
    result.rows_skipped = int(bad.sum())

    out_of_bounds = ~bad & ((stringency < STRINGENCY_MIN) | (stringency > STRINGENCY_MAX))
    if out_of_bounds.any():
        first = int(np.flatnonzero(out_of_bounds.to_numpy())[0])
        raise DataError(f"{name}: row {frame.index[first] + 2}: stringency {stringency.iloc[first]} for "
                        f"{frame['CountryCode'].iloc[first]} outside [0, 100]")

    tidy = pd.DataFrame({
        'code': frame['CountryCode'],
        'country': frame['CountryName'].str.strip(),
        'date': dates,
        'stringency': stringency,
        'cases': cases,
        'deaths': deaths,
    })[~bad.to_numpy()]

    duplicated = tidy.duplicated(['code', 'date'], keep=False)
    if duplicated.any():
        first = tidy[duplicated].iloc[0]
        raise DataError(f"{name}: duplicate rows for {first['code']} on {first['date'].date()}")

    for code, group in tidy.groupby('code', sort=True):
        indexed = group.set_index('date').sort_index()
        for column in ('cases', 'deaths'):
            drops = indexed[column].dropna().diff() < 0
            if drops.any():
                result.warn(f"{name}: cumulative {column} for {code} decrease on "
                            f"{drops[drops].index[0].date()} (upstream revision)")
        result.records[code] = StringencyRecord(
            iso3=code,
            name=group['country'].iloc[0],
            stringency=DailySeries.from_series(indexed['stringency'], SeriesUnit.INDEX_POINTS),
            cases=DailySeries.from_series(indexed['cases'], SeriesUnit.COUNT),
            deaths=DailySeries.from_series(indexed['deaths'], SeriesUnit.COUNT),
        )

    logger.info(f"Parsed stringency data for {len(result.records)} countries from {name}")
    return result


@dataclass
class CountryCodeTable:
    """Bidirectional ISO-2 / ISO-3 mapping"""
    iso2_to_iso3: Dict[str, str]
    names: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.iso3_to_iso2 = {v: k for k, v in self.iso2_to_iso3.items()}

    def to_iso3(self, iso2: str) -> Optional[str]:
        return self.iso2_to_iso3.get(iso2)

    def to_iso2(self, iso3: str) -> Optional[str]:
        return self.iso3_to_iso2.get(iso3)

    def harmonize(self, code: str) -> Optional[str]:
        """Return the ISO-2 form of a 2- or 3-letter code, or None when unknown"""
        code = code.strip().upper()
        if code in self.iso2_to_iso3:
            return code
        return self.iso3_to_iso2.get(code)


def load_country_codes(path: Optional[CsvSource] = None) -> CountryCodeTable:
    """Load the ISO code table; defaults to the bundled copy"""
    source = path or DEFAULT_CODE_TABLE
    frame = read_text_csv(source)
    require_columns(frame, ['iso2', 'iso3'], source)
    duplicated = frame['iso2'].duplicated() | frame['iso3'].duplicated()
    if duplicated.any():
        raise DataError(f"{source_name(source)}: duplicate code {frame[duplicated].iloc[0]['iso2']}")
    names = dict(zip(frame['iso2'], frame['name'])) if 'name' in frame.columns else {}
    return CountryCodeTable(dict(zip(frame['iso2'], frame['iso3'])), names)


def _keyed_rows(source: CsvSource, columns: Sequence[str], codes: CountryCodeTable,
                unique: bool = True) -> Iterable[Tuple[str, pd.Series]]:
    frame = read_text_csv(source)
    require_columns(frame, columns, source)
    seen: Set[str] = set()
    for index, row in frame.iterrows():
        code = codes.harmonize(row[columns[0]])
        if code is None:
            logger.warning(f"{source_name(source)}: row {index + 2}: unknown country code {row[columns[0]]!r} dropped")
            continue
        if unique and code in seen:
            raise DataError(f"{source_name(source)}: duplicate entry for {code}")
        seen.add(code)
        yield code, row


def load_continents(path: CsvSource, codes: CountryCodeTable) -> Dict[str, Continent]:
    """Read an ``iso_code,continent`` table keyed by ISO-2 code"""
    continents = {}
    for code, row in _keyed_rows(path, ['iso_code', 'continent'], codes):
        try:
            continents[code] = Continent.parse(row['continent'])
        except ValueError as e:
            raise DataError(f"{source_name(path)}: {code}: {e}")
    return continents


def load_demographics(path: CsvSource, codes: CountryCodeTable) -> Dict[str, Tuple[int, float]]:
    """Read an ``iso_code,population,area`` table (area in km²)"""
    demographics = {}
    for code, row in _keyed_rows(path, ['iso_code', 'population', 'area'], codes):
        try:
            population = int(float(row['population']))
            area = float(row['area'])
        except ValueError:
            raise DataError(f"{source_name(path)}: {code}: unparseable population or area")
        if population < 0 or area < 0:
            raise DataError(f"{source_name(path)}: {code}: negative population or area")
        demographics[code] = (population, area)
    return demographics


def load_neighbors(path: CsvSource, codes: CountryCodeTable) -> Set[FrozenSet[str]]:
    """Read an ``iso_code,neighbor`` table into a set of unordered border pairs"""
    pairs = set()
    for code, row in _keyed_rows(path, ['iso_code', 'neighbor'], codes, unique=False):
        neighbor = codes.harmonize(row['neighbor'])
        if neighbor is None:
            logger.warning(f"{source_name(path)}: unknown neighbor code {row['neighbor']!r} for {code} dropped")
            continue
        if neighbor != code:
            pairs.add(frozenset((code, neighbor)))
    return pairs


@dataclass
class Dataset:
    """Joined, immutable view of all inputs keyed by ISO-2 code"""
    records: Dict[str, CountryRecord]
    exclusions: List[Exclusion] = field(default_factory=list)
    unmatched_stringency: List[str] = field(default_factory=list)
    neighbors: Set[FrozenSet[str]] = field(default_factory=set)

    def codes(self) -> List[str]:
        return sorted(self.records)


def build_dataset(
    mobility: ParseResult,
    stringency: StringencyParseResult,
    codes: CountryCodeTable,
    continents: Optional[Dict[str, Continent]] = None,
    demographics: Optional[Dict[str, Tuple[int, float]]] = None,
    neighbors: Optional[Set[FrozenSet[str]]] = None,
) -> Dataset:
    """Join mobility and stringency records through the code table and attach metadata"""
    continents = continents or {}
    demographics = demographics or {}
    dataset = Dataset(records={}, neighbors=set(neighbors or ()))
    used_iso3 = set()

    for code in sorted(mobility.records):
        record = mobility.records[code]
        iso3 = codes.to_iso3(code)
        if iso3 is None:
            logger.warning(f"Mobility code {code} has no ISO-3 mapping; dropped")
            dataset.exclusions.append(Exclusion(code, 'dataset', ExclusionReason.NO_CODE_MATCH,
                                                f"no ISO-3 mapping for {code}"))
            continue
        record.iso3 = iso3
        match = stringency.records.get(iso3)
        if match is not None:
            record.stringency = match.stringency
            record.confirmed_cases = match.cases
            record.deaths = match.deaths
            used_iso3.add(iso3)
        record.continent = continents.get(code)
        if code in demographics:
            record.population, record.area = demographics[code]
        record.geometry_ref = code
        dataset.records[code] = record

    dataset.unmatched_stringency = sorted(set(stringency.records) - used_iso3)
    if dataset.unmatched_stringency:
        logger.info(f"{len(dataset.unmatched_stringency)} stringency countries have no mobility data")
    return dataset


@dataclass
class RepairOutcome:
    """Result of gap repair on one windowed series"""
    values: Optional[np.ndarray]
    interpolated: int = 0
    reason: Optional[ExclusionReason] = None
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.values is not None


def _nan_runs(missing: np.ndarray) -> List[Tuple[int, int]]:
    """(start, stop) index pairs of consecutive True runs"""
    padded = np.concatenate([[False], missing, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(int)))
    return list(zip(edges[::2], edges[1::2]))


def repair_gaps(values: np.ndarray, policy: GapPolicy, masked: Optional[np.ndarray] = None) -> RepairOutcome:
    """
    Fill interior gaps by linear interpolation.

    A run of missing days is accepted when it is interior and holds at most
    ``policy.max_interior_gap`` unmasked days. Masked days are bridged
    regardless of run length. Edge runs reject the series.
    """
    values = np.asarray(values, dtype=float).copy()
    masked = np.zeros(len(values), dtype=bool) if masked is None else masked
    missing = np.isnan(values)
    if missing.all():
        return RepairOutcome(None, reason=ExclusionReason.LOW_COVERAGE, detail="no observed values")
    for start, stop in _nan_runs(missing):
        if start == 0 or stop == len(values):
            return RepairOutcome(None, reason=ExclusionReason.EDGE_GAP,
                                 detail=f"missing days at window edge (slots {start}-{stop - 1})")
        unmasked = int(np.count_nonzero(~masked[start:stop]))
        if unmasked > policy.max_interior_gap:
            return RepairOutcome(None, reason=ExclusionReason.LONG_GAP,
                                 detail=f"interior gap of {stop - start} days exceeds {policy.max_interior_gap}")
    if not missing.any():
        return RepairOutcome(values)
    filled = pd.Series(values).interpolate(method='linear', limit_area='inside').to_numpy()
    return RepairOutcome(filled, interpolated=int(missing.sum()))


def mask_days(window: AnalysisWindow, masks: Sequence[DateMask]) -> np.ndarray:
    """Boolean vector over the window marking masked days"""
    dates = window.dates
    flags = np.zeros(len(dates), dtype=bool)
    for start, end in masks:
        flags |= (dates >= pd.Timestamp(start)) & (dates <= pd.Timestamp(end))
    return flags


def repair_series(series: Optional[DailySeries], window: AnalysisWindow, policy: GapPolicy,
                  masked: Optional[np.ndarray] = None) -> RepairOutcome:
    """Window one series, check coverage, blank masked days and repair gaps"""
    if series is None:
        return RepairOutcome(None, reason=ExclusionReason.MISSING_CATEGORY, detail="series absent")
    values = series.window(window).values.copy()
    coverage = float(np.count_nonzero(~np.isnan(values))) / window.n_days
    if coverage < policy.min_coverage:
        return RepairOutcome(None, reason=ExclusionReason.LOW_COVERAGE,
                             detail=f"coverage {coverage:.2f} below {policy.min_coverage:.2f}")
    if masked is not None and masked.any():
        values[masked] = np.nan
    return repair_gaps(values, policy, masked)


def align(
    record: CountryRecord,
    window: AnalysisWindow,
    gap_policy: Optional[GapPolicy] = None,
    masks: Sequence[DateMask] = (),
) -> AlignmentResult:
    """
    Produce dense, inverted (stringency, activity) pairs per category.

    Args:
        record: country with stringency and national activity series
        window: analysis window
        gap_policy: coverage and gap rules
        masks: date ranges to blank before repair (e.g. a weather event)

    Returns:
        AlignmentResult with accepted pairs and per-category rejections.
        The whole country is excluded when stringency cannot be aligned.
    """
    policy = gap_policy or GapPolicy()
    masked = mask_days(window, masks)
    masked_dates = tuple(d.date() for d in window.dates[masked])
    result = AlignmentResult(iso_code=record.iso_code, masked_dates=masked_dates)

    if record.stringency is None or np.isnan(record.stringency.window(window).values).all():
        result.excluded = Exclusion(record.iso_code, 'alignment', ExclusionReason.NO_STRINGENCY,
                                    f"no stringency overlap with {window.start}..{window.end}")
        return result

    stringency = repair_series(record.stringency, window, policy)
    if not stringency.ok:
        result.excluded = Exclusion(record.iso_code, 'alignment', ExclusionReason.STRINGENCY_GAPS,
                                    f"stringency: {stringency.detail}")
        return result

    day_labels = tuple(d.date() for d in window.dates)
    for category in ActivityCategory.ordered():
        outcome = repair_series(record.national.get(category), window, policy, masked)
        if not outcome.ok:
            result.rejections[category] = Exclusion(record.iso_code, 'alignment', outcome.reason,
                                                    outcome.detail, category)
            continue
        activity = -outcome.values if category.inverted else outcome.values
        result.pairs[category] = AlignedPair(
            category=category,
            stringency=stringency.values,
            activity=activity,
            inverted=category.inverted,
            dates=day_labels,
            interpolated_days=outcome.interpolated,
        )

    if not result.pairs:
        result.excluded = Exclusion(record.iso_code, 'alignment', ExclusionReason.NO_CATEGORIES,
                                    "no activity category passed coverage and gap checks")
    elif result.rejections:
        logger.info(f"{record.iso_code}: rejected categories "
                    f"{', '.join(c.value for c in result.rejections)}")
    return result


def record_from_pairs(record: CountryRecord, result: AlignmentResult, window: AnalysisWindow) -> CountryRecord:
    """Rebuild a record whose national series are the repaired, un-inverted aligned vectors"""
    national = {
        category: DailySeries(window.start, pair.raw_activity(), SeriesUnit.PERCENT_CHANGE)
        for category, pair in result.pairs.items()
    }
    stringency = None
    if result.pairs:
        first = next(iter(result.pairs.values()))
        stringency = DailySeries(window.start, first.stringency, SeriesUnit.INDEX_POINTS)
    return CountryRecord(iso_code=record.iso_code, name=record.name, national=national,
                         iso3=record.iso3, continent=record.continent, population=record.population,
                         area=record.area, stringency=stringency)
