"""
Shared fixtures: synthetic mobility, stringency and auxiliary inputs
written to a temporary directory.
"""

import json
import os
import sys
from datetime import date
from pathlib import Path
from typing import Dict

import numpy as np
import pandas as pd
import pytest

# Add parent directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from mobility_response.ingest import MOBILITY_COLUMNS
from mobility_response.models import ActivityCategory, AnalysisWindow


WINDOW = AnalysisWindow(date(2020, 2, 15), date(2020, 4, 11))

# iso2, iso3, name, continent, lon, lat, population, area, delay, subregions
COUNTRIES = [
    ("DE", "DEU", "Germany", "Europe", 10.0, 51.0, 83_000_000, 357_000.0, 2, 3),
    ("FR", "FRA", "France", "Europe", 6.0, 51.0, 67_000_000, 644_000.0, 3, 3),
    ("IT", "ITA", "Italy", "Europe", 12.0, 43.0, 60_000_000, 301_000.0, 1, 3),
    ("KE", "KEN", "Kenya", "Africa", 38.0, 0.0, 53_000_000, 580_000.0, 5, 2),
    ("NG", "NGA", "Nigeria", "Africa", 8.0, 9.0, 200_000_000, 924_000.0, 6, 3),
    ("JP", "JPN", "Japan", "Asia", 138.0, 36.0, 126_000_000, 378_000.0, 0, 0),
    ("BR", "BRA", "Brazil", "South America", -52.0, -10.0, 211_000_000, 8_516_000.0, 4, 3),
    ("AR", "ARG", "Argentina", "South America", -64.0, -34.0, 45_000_000, 2_780_000.0, 3, 3),
]

NEIGHBORS = [("DE", "FR"), ("FR", "IT"), ("BR", "AR")]

RESPONSE_SCALE = {
    ActivityCategory.RETAIL_RECREATION: -0.8,
    ActivityCategory.GROCERY_PHARMACY: -0.4,
    ActivityCategory.PARKS: -0.3,
    ActivityCategory.TRANSIT_STATIONS: -0.7,
    ActivityCategory.WORKPLACES: -0.6,
    ActivityCategory.RESIDENTIAL: 0.2,
}


def stringency_ramp(n_days: int, start: int = 20, rise: int = 10, level: float = 80.0, base: float = 5.0) -> np.ndarray:
    """Flat, then a linear rise to ``level``, then flat"""
    t = np.arange(n_days, dtype=float)
    return base + (level - base) * np.clip((t - start) / rise, 0.0, 1.0)


def delayed(values: np.ndarray, days: int) -> np.ndarray:
    """Shift right by ``days``, padding with the first value"""
    if days <= 0:
        return values.copy()
    return np.concatenate([np.full(days, values[0]), values[:-days]])


def write_synthetic_inputs(directory: Path, seed: int = 0) -> Dict[str, str]:
    """Write a consistent set of inputs for eight countries; returns paths keyed by RunConfig field"""
    rng = np.random.default_rng(seed)
    directory.mkdir(parents=True, exist_ok=True)
    n = WINDOW.n_days
    dates = [d.strftime('%Y-%m-%d') for d in WINDOW.dates]
    mobility_rows, stringency_rows = [], []

    for index, (iso2, iso3, name, _, _, _, population, _, delay, n_sub) in enumerate(COUNTRIES):
        stringency = stringency_ramp(n, start=18 + index, rise=8 + index % 3)
        response = delayed(stringency, delay)
        regions = [''] + [f"{name} Region {r + 1}" for r in range(n_sub)]
        for region_number, region in enumerate(regions):
            values = {}
            for category, scale in RESPONSE_SCALE.items():
                spread = 1.0 + 0.15 * region_number * (1 + list(RESPONSE_SCALE).index(category) % 3)
                noise = rng.normal(0.0, 2.0, n)
                values[category] = np.clip(np.round(scale * spread * response + noise), -99, 300)
            for day in range(n):
                row = {
                    'country_region_code': iso2,
                    'country_region': name,
                    'sub_region_1': region,
                    'sub_region_2': '',
                    'date': dates[day],
                }
                for category in ActivityCategory.ordered():
                    row[category.column] = values[category][day]
                mobility_rows.append(row)

        cases = np.round(np.cumsum(np.exp(np.linspace(0, 6 + index * 0.3, n)))).astype(int)
        deaths = (cases // (40 + 5 * index)).astype(int)
        for day in range(n):
            stringency_rows.append({
                'CountryName': name,
                'CountryCode': iso3,
                'Date': dates[day].replace('-', ''),
                'StringencyIndex': round(float(stringency[day]), 2),
                'ConfirmedCases': int(cases[day]),
                'ConfirmedDeaths': int(deaths[day]),
            })

    paths = {
        'mobility_path': directory / 'mobility.csv',
        'stringency_path': directory / 'stringency.csv',
        'continents_path': directory / 'continents.csv',
        'demographics_path': directory / 'demographics.csv',
        'neighbors_path': directory / 'neighbors.csv',
        'boundaries_path': directory / 'boundaries.geojson',
        'indices_manifest': directory / 'indices.json',
    }
    pd.DataFrame(mobility_rows, columns=MOBILITY_COLUMNS).to_csv(paths['mobility_path'], index=False)
    pd.DataFrame(stringency_rows).to_csv(paths['stringency_path'], index=False)
    pd.DataFrame([(c[0], c[3]) for c in COUNTRIES], columns=['iso_code', 'continent']).to_csv(
        paths['continents_path'], index=False)
    pd.DataFrame([(c[0], c[6], c[7]) for c in COUNTRIES], columns=['iso_code', 'population', 'area']).to_csv(
        paths['demographics_path'], index=False)
    pd.DataFrame(NEIGHBORS, columns=['iso_code', 'neighbor']).to_csv(paths['neighbors_path'], index=False)

    features = []
    for iso2, _, _, _, lon, lat, *_ in COUNTRIES:
        ring = [[lon - 2, lat - 2], [lon + 2, lat - 2], [lon + 2, lat + 2], [lon - 2, lat + 2], [lon - 2, lat - 2]]
        features.append({"type": "Feature", "properties": {"iso_code": iso2},
                         "geometry": {"type": "Polygon", "coordinates": [ring]}})
    with open(paths['boundaries_path'], 'w') as f:
        json.dump({"type": "FeatureCollection", "features": features}, f)

    index_dir = directory / 'indices'
    index_dir.mkdir(exist_ok=True)
    hdi = pd.DataFrame([(c[0], 0.5 + 0.05 * i) for i, c in enumerate(COUNTRIES)], columns=['iso_code', 'value'])
    hdi.to_csv(index_dir / 'hdi.csv', index=False)
    with open(paths['indices_manifest'], 'w') as f:
        json.dump({"indices": [{"name": "hdi", "path": "indices/hdi.csv", "higher_is": "better",
                                "family": "development"}]}, f)
    return {key: str(value) for key, value in paths.items()}


@pytest.fixture
def window() -> AnalysisWindow:
    return WINDOW


@pytest.fixture
def synthetic_inputs(tmp_path) -> Dict[str, str]:
    """Synthetic input files for a full run"""
    return write_synthetic_inputs(tmp_path / 'inputs')


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def make_inputs():
    """Factory writing synthetic inputs into a given directory"""
    return write_synthetic_inputs


@pytest.fixture
def ramp():
    return stringency_ramp


@pytest.fixture
def shift():
    return delayed
