"""
Spatial Relations

Response-vector distance matrices, minimum great-circle distances between
country boundaries, border adjacency comparisons and continent summaries.
"""

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np
import pandas as pd
from matplotlib.path import Path as PolygonPath
from scipy import stats
from scipy.spatial.distance import pdist, squareform

from .errors import DataError, DimensionMismatchError, EmptyGeometryError, LabelMismatchError
from .models import ActivityCategory, Continent
from .rankstats import TauResult, kendall_tau_b

logger = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0088

# Rows of vertex pairs evaluated per haversine block
_HAVERSINE_CHUNK = 2048


class ResponseMeasure(Enum):
    COSINE = "cosine"
    LAG = "lag"
    SUBREGION_SD = "subregion_sd"


@dataclass
class CountryResponseVector:
    """One country's per-category values for a single measure"""
    iso_code: str
    measure: ResponseMeasure
    values: np.ndarray
    categories: Tuple[ActivityCategory, ...]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(self.values) != len(self.categories):
            raise DimensionMismatchError(f"{self.iso_code}: {len(self.values)} values for {len(self.categories)} categories")


def build_response_vectors(
    per_category: Mapping[str, Mapping[ActivityCategory, float]],
    measure: ResponseMeasure,
    include_parks: bool = True,
) -> List[CountryResponseVector]:
    """Assemble vectors in category order; a country missing any category is left out"""
    categories = tuple(ActivityCategory.ordered() if include_parks else ActivityCategory.non_parks())
    vectors = []
    for code in sorted(per_category):
        values = per_category[code]
        if not all(c in values for c in categories):
            logger.info(f"{code}: {measure.value} vector incomplete, excluded")
            continue
        vectors.append(CountryResponseVector(code, measure, [values[c] for c in categories], categories))
    return vectors


@dataclass
class DistanceMatrix:
    """Labeled symmetric matrix with zero diagonal and nonnegative entries"""
    labels: Tuple[str, ...]
    d: np.ndarray

    def __post_init__(self):
        self.labels = tuple(self.labels)
        self.d = np.asarray(self.d, dtype=float)
        n = len(self.labels)
        if self.d.shape != (n, n):
            raise DimensionMismatchError(f"Distance matrix shape {self.d.shape} does not match {n} labels")
        if len(set(self.labels)) != n:
            raise LabelMismatchError("Distance matrix labels must be unique")
        if not np.allclose(self.d, self.d.T, atol=1e-9):
            raise ValueError("Distance matrix is not symmetric")
        if (self.d < -1e-12).any():
            raise ValueError("Distance matrix has negative entries")
        self.d = np.clip((self.d + self.d.T) / 2.0, 0.0, None)
        np.fill_diagonal(self.d, 0.0)

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def upper_triangle(self) -> np.ndarray:
        return self.d[np.triu_indices(len(self.labels), k=1)]

    def pairs(self) -> List[Tuple[str, str, float]]:
        rows, cols = np.triu_indices(len(self.labels), k=1)
        return [(self.labels[i], self.labels[j], float(self.d[i, j])) for i, j in zip(rows, cols)]

    def reindex(self, labels: Sequence[str]) -> 'DistanceMatrix':
        """Subset and/or reorder to the given labels"""
        positions = {label: i for i, label in enumerate(self.labels)}
        missing = [label for label in labels if label not in positions]
        if missing:
            raise LabelMismatchError(f"Labels not in matrix: {', '.join(missing)}")
        idx = [positions[label] for label in labels]
        return DistanceMatrix(tuple(labels), self.d[np.ix_(idx, idx)])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.d, index=list(self.labels), columns=list(self.labels))

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> 'DistanceMatrix':
        return cls(tuple(str(c) for c in frame.columns), frame.to_numpy(dtype=float))


def response_distance_matrix(vectors: Sequence[CountryResponseVector]) -> DistanceMatrix:
    """
    Pairwise Euclidean distances between response vectors, labels sorted.

    Raises:
        DimensionMismatchError: vectors differ in measure or dimension
    """
    if len(vectors) < 2:
        raise ValueError("Need at least 2 response vectors")
    measures = {v.measure for v in vectors}
    dims = {len(v.values) for v in vectors}
    if len(measures) > 1 or len(dims) > 1:
        raise DimensionMismatchError(f"Response vectors mix measures {sorted(m.value for m in measures)} "
                                     f"or dimensions {sorted(dims)}")
    ordered = sorted(vectors, key=lambda v: v.iso_code)
    matrix = np.vstack([v.values for v in ordered])
    return DistanceMatrix(tuple(v.iso_code for v in ordered), squareform(pdist(matrix, metric='euclidean')))


@dataclass
class CountryGeometry:
    """Boundary vertices (lon, lat in degrees) with the exterior rings used for containment"""
    iso_code: str
    vertices: np.ndarray
    rings: List[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 2)

    def contains_any(self, points: np.ndarray) -> bool:
        for ring in self.rings:
            if len(ring) >= 3 and PolygonPath(ring).contains_points(points).any():
                return True
        return False


def _as_geometry(geom: Union[CountryGeometry, Sequence[Sequence[float]]]) -> CountryGeometry:
    if isinstance(geom, CountryGeometry):
        return geom
    vertices = np.asarray(geom, dtype=float).reshape(-1, 2)
    rings = [vertices] if len(vertices) >= 3 else []
    return CountryGeometry("", vertices, rings)


def haversine_km(lon1: np.ndarray, lat1: np.ndarray, lon2: np.ndarray, lat2: np.ndarray) -> np.ndarray:
    """Great-circle distance on a sphere of radius EARTH_RADIUS_KM; inputs in degrees, broadcastable"""
    lon1, lat1, lon2, lat2 = map(np.radians, (lon1, lat1, lon2, lat2))
    a = np.sin((lat2 - lat1) / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def min_great_circle_distance(geom_a, geom_b) -> float:
    """
    Minimum haversine distance (km) over all vertex pairs of two geometries.

    Zero when the geometries share a vertex or one contains a vertex of the
    other.

    Raises:
        EmptyGeometryError: a geometry has no vertices
    """
    a = _as_geometry(geom_a)
    b = _as_geometry(geom_b)
    if len(a.vertices) == 0 or len(b.vertices) == 0:
        raise EmptyGeometryError(f"Empty geometry: {a.iso_code or b.iso_code or 'unnamed'}")
    if a.contains_any(b.vertices) or b.contains_any(a.vertices):
        return 0.0
    best = np.inf
    for start in range(0, len(a.vertices), _HAVERSINE_CHUNK):
        block = a.vertices[start:start + _HAVERSINE_CHUNK]
        distances = haversine_km(block[:, :1], block[:, 1:], b.vertices[None, :, 0], b.vertices[None, :, 1])
        best = min(best, float(distances.min()))
    return best


def _geometry_rings(geometry: Dict[str, Any]) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """Return (vertex arrays, exterior rings) for a GeoJSON geometry"""
    kind = geometry.get('type')
    coords = geometry.get('coordinates') or []
    if kind == 'Point':
        return [np.asarray([coords[:2]], dtype=float)], []
    if kind in ('MultiPoint', 'LineString'):
        return [np.asarray([c[:2] for c in coords], dtype=float).reshape(-1, 2)], []
    if kind == 'Polygon':
        polygons = [coords]
    elif kind == 'MultiPolygon':
        polygons = coords
    else:
        raise DataError(f"Unsupported geometry type {kind!r}")
    vertices, exteriors = [], []
    for polygon in polygons:
        rings = [np.asarray([c[:2] for c in ring], dtype=float).reshape(-1, 2) for ring in polygon]
        vertices.extend(rings)
        if rings:
            exteriors.append(rings[0])
    return vertices, exteriors


def load_boundaries(path: Union[str, Path], codes=None) -> Dict[str, CountryGeometry]:
    """
    Read a GeoJSON FeatureCollection with one feature per country.

    The country is taken from the ``iso_code`` property (``ISO_A2`` and
    ``iso_a2`` are accepted too) and harmonized to ISO-2 when a code table
    is given.
    """
    with open(path, 'r', encoding='utf-8') as f:
        collection = json.load(f)
    geometries: Dict[str, CountryGeometry] = {}
    for number, feature in enumerate(collection.get('features', [])):
        properties = feature.get('properties') or {}
        raw = properties.get('iso_code') or properties.get('ISO_A2') or properties.get('iso_a2')
        if not raw:
            logger.warning(f"{path}: feature {number} has no iso_code property; skipped")
            continue
        code = codes.harmonize(raw) if codes is not None else str(raw).strip().upper()
        if code is None:
            logger.warning(f"{path}: feature {number}: unknown code {raw!r}; skipped")
            continue
        vertices, exteriors = _geometry_rings(feature.get('geometry') or {})
        stacked = np.vstack(vertices) if vertices else np.empty((0, 2))
        if code in geometries:
            previous = geometries[code]
            stacked = np.vstack([previous.vertices, stacked])
            exteriors = previous.rings + exteriors
        geometries[code] = CountryGeometry(code, stacked, exteriors)
    logger.info(f"Loaded {len(geometries)} boundary geometries from {path}")
    return geometries


def geodesic_distance_matrix(geometries: Mapping[str, CountryGeometry], labels: Sequence[str]) -> DistanceMatrix:
    """Minimum great-circle distance between every pair of labeled countries"""
    missing = [label for label in labels if label not in geometries]
    if missing:
        raise LabelMismatchError(f"No geometry for {', '.join(missing)}")
    n = len(labels)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = min_great_circle_distance(geometries[labels[i]], geometries[labels[j]])
    return DistanceMatrix(tuple(labels), d)


@dataclass
class GroupStats:
    group: str
    mean: Optional[float]
    median: Optional[float]
    n_countries: int
    n_pairs: int

    @classmethod
    def from_values(cls, group: str, values: Sequence[float], n_countries: int) -> 'GroupStats':
        if len(values) == 0:
            return cls(group, None, None, n_countries, 0)
        array = np.asarray(values, dtype=float)
        return cls(group, float(array.mean()), float(np.median(array)), n_countries, len(array))


@dataclass
class ContinentSummary:
    continents: List[GroupStats]
    same_continent: GroupStats
    different_continent: GroupStats
    notes: List[str] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        rows = self.continents + [self.same_continent, self.different_continent]
        return pd.DataFrame([vars(r) for r in rows], columns=['group', 'mean', 'median', 'n_countries', 'n_pairs'])


def continent_summary(dist: DistanceMatrix, continents: Mapping[str, Continent]) -> ContinentSummary:
    """
    Mean and median distance within each continent, plus the overall
    same-continent and different-continent rows. Continents with fewer than
    two countries are omitted with a note.
    """
    missing = [label for label in dist.labels if label not in continents]
    if missing:
        raise LabelMismatchError(f"No continent assignment for {', '.join(missing)}")

    within: Dict[Continent, List[float]] = {}
    same: List[float] = []
    different: List[float] = []
    for a, b, value in dist.pairs():
        if continents[a] is continents[b]:
            within.setdefault(continents[a], []).append(value)
            same.append(value)
        else:
            different.append(value)

    members: Dict[Continent, int] = {}
    for label in dist.labels:
        members[continents[label]] = members.get(continents[label], 0) + 1

    rows, notes = [], []
    for continent in Continent:
        count = members.get(continent, 0)
        if count == 0:
            continue
        if count < 2:
            notes.append(f"{continent.value} omitted: only one country")
            continue
        rows.append(GroupStats.from_values(continent.value, within[continent], count))

    same_members = sum(c for c in members.values() if c >= 2)
    return ContinentSummary(
        continents=rows,
        same_continent=GroupStats.from_values('Same continent', same, same_members),
        different_continent=GroupStats.from_values('Different continent', different, len(dist.labels)),
        notes=notes,
    )


@dataclass
class BorderComparison:
    """Distances between neighboring countries versus all other pairs"""
    border: GroupStats
    non_border: GroupStats
    ranked_neighbors: List[Tuple[str, str, float]]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(self.border), vars(self.non_border)],
                            columns=['group', 'mean', 'median', 'n_countries', 'n_pairs'])

    def neighbors_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.ranked_neighbors, columns=['iso_code_a', 'iso_code_b', 'distance'])


def border_comparison(dist: DistanceMatrix, neighbors: Iterable[FrozenSet[str]]) -> BorderComparison:
    """Split pairwise distances by shared border; neighbor pairs are ranked most similar first"""
    neighbor_set: Set[FrozenSet[str]] = set(neighbors)
    border, other = [], []
    ranked = []
    countries_with_border = set()
    for a, b, value in dist.pairs():
        if frozenset((a, b)) in neighbor_set:
            border.append(value)
            ranked.append((a, b, value))
            countries_with_border.update((a, b))
        else:
            other.append(value)
    ranked.sort(key=lambda item: (item[2], item[0], item[1]))
    return BorderComparison(
        border=GroupStats.from_values('Border', border, len(countries_with_border)),
        non_border=GroupStats.from_values('Non-border', other, len(dist.labels)),
        ranked_neighbors=ranked,
    )


def _matched(dist: DistanceMatrix, geo_dist: DistanceMatrix) -> DistanceMatrix:
    if set(dist.labels) != set(geo_dist.labels):
        only = sorted(set(dist.labels) ^ set(geo_dist.labels))
        raise LabelMismatchError(f"Distance matrices cover different countries: {', '.join(only)}")
    return geo_dist.reindex(dist.labels)


def geography_concordance(dist: DistanceMatrix, geo_dist: DistanceMatrix) -> TauResult:
    """
    Kendall tau-b between response distances and geographic distances over
    the flattened upper triangles.

    Raises:
        LabelMismatchError: the matrices cover different countries
    """
    geo = _matched(dist, geo_dist)
    return kendall_tau_b(dist.upper_triangle(), geo.upper_triangle())


def permutation_null(dist: DistanceMatrix, geo_dist: DistanceMatrix, n_permutations: int = 20,
                     seed: int = 0) -> np.ndarray:
    """Tau-b values after randomly relabeling the geographic matrix"""
    geo = _matched(dist, geo_dist)
    rng = np.random.default_rng(seed)
    response = dist.upper_triangle()
    rows, cols = np.triu_indices(len(dist), k=1)
    taus = np.empty(n_permutations)
    for i in range(n_permutations):
        order = rng.permutation(len(dist))
        shuffled = geo.d[np.ix_(order, order)]
        taus[i] = stats.kendalltau(response, shuffled[rows, cols])[0]
    return taus
