"""
Analysis Pipeline

Loads the inputs named in a RunConfig, aligns every country, computes the
similarity, lag and subregional-variation measures, and assembles the
tables each subcommand writes. Every country dropped from a measure is
recorded as an Exclusion.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from . import embed, indices, ingest, measures, rankstats, spatial
from .config import INPUT_FIELDS, RunConfig
from .errors import (
    DegenerateEmbeddingError,
    InsufficientDataError,
    LabelMismatchError,
    UndefinedMeasureError,
    UnknownCountryError,
)
from .ingest import Dataset, DateMask, GapPolicy
from .models import (
    ActivityCategory,
    AlignmentResult,
    AnalysisWindow,
    CountryRecord,
    Exclusion,
    ExclusionReason,
    MeasureTable,
)
from .report import file_sha256
from .workers import CountryWorkerPool

logger = logging.getLogger(__name__)

Tables = Dict[str, Any]

# Failures that drop one table (or section) of a run without aborting it
SKIPPABLE_ERRORS = (InsufficientDataError, UndefinedMeasureError, DegenerateEmbeddingError, LabelMismatchError)


@dataclass
class CountryAnalysis:
    """All per-country measures; a measure is None when the country was excluded from it"""
    iso_code: str
    alignment: AlignmentResult
    similarity: Optional[measures.SimilarityScore] = None
    lag: Optional[measures.LagProfile] = None
    variation: Optional[measures.SubregionVariation] = None
    exclusions: List[Exclusion] = field(default_factory=list)


def analyze_country(
    record: CountryRecord,
    window: AnalysisWindow,
    policy: GapPolicy,
    masks: Sequence[DateMask],
    threshold: float,
    max_lag: int,
    min_overlap: int,
    excluded: Sequence[ActivityCategory],
) -> CountryAnalysis:
    """Align one country and compute its three measures"""
    code = record.iso_code
    alignment = ingest.align(record, window, policy, masks)
    analysis = CountryAnalysis(code, alignment)
    analysis.exclusions.extend(alignment.rejections.values())

    if alignment.excluded is not None:
        analysis.exclusions.append(alignment.excluded)
    else:
        try:
            analysis.similarity = measures.country_similarity(alignment.pairs, code, excluded)
            for category, reason in analysis.similarity.undefined.items():
                analysis.exclusions.append(Exclusion(code, 'similarity', ExclusionReason.UNDEFINED_SIMILARITY,
                                                     reason, category))
            for category, reason in analysis.similarity.pearson_undefined.items():
                analysis.exclusions.append(Exclusion(code, 'pearson', ExclusionReason.UNDEFINED_SIMILARITY,
                                                     reason, category))
        except InsufficientDataError as e:
            analysis.exclusions.append(Exclusion(code, 'similarity', ExclusionReason.UNDEFINED_SIMILARITY, str(e)))

        profile = measures.country_lag(alignment.pairs, code, threshold, max_lag, min_overlap, excluded)
        if profile.country_mean_lag is None:
            analysis.exclusions.append(Exclusion(code, 'lag', ExclusionReason.NO_SIGNIFICANT_LAG,
                                                 f"no cross-correlation reached {threshold}"))
        else:
            analysis.lag = profile

    try:
        analysis.variation = measures.subregion_variation(record, window, policy, masks)
    except InsufficientDataError as e:
        analysis.exclusions.append(Exclusion(code, 'subregion', ExclusionReason.TOO_FEW_SUBREGIONS, str(e)))
    return analysis


@dataclass
class AnalysisResults:
    countries: Dict[str, CountryAnalysis]
    exclusions: List[Exclusion] = field(default_factory=list)

    @property
    def scores(self) -> Dict[str, measures.SimilarityScore]:
        return {c: a.similarity for c, a in self.countries.items() if a.similarity is not None}

    @property
    def profiles(self) -> Dict[str, measures.LagProfile]:
        return {c: a.lag for c, a in self.countries.items() if a.lag is not None}

    @property
    def variations(self) -> Dict[str, measures.SubregionVariation]:
        return {c: a.variation for c, a in self.countries.items() if a.variation is not None}

    @property
    def aligned(self):
        return {c: a.alignment.pairs for c, a in self.countries.items() if a.alignment.ok}

    def measure_tables(self) -> List[MeasureTable]:
        return [
            measures.similarity_table(self.scores, 'cosine'),
            measures.similarity_table(self.scores, 'pearson'),
            measures.lag_table(self.profiles),
            measures.variation_table(self.variations),
        ]


def _ranking_frame(table: MeasureTable, key: rankstats.MeasureKey) -> pd.DataFrame:
    entries = rankstats.rank_countries(table, key)
    return pd.DataFrame([e.to_dict() for e in entries], columns=['rank', 'iso_code', 'value', 'percentile'])


def _tau_row(name_a: str, name_b: str, result: rankstats.TauResult) -> Dict[str, Any]:
    return {
        "measure_a": name_a, "measure_b": name_b, "tau": result.tau, "p": result.p_value, "n": result.n,
        "stars": rankstats.significance_stars(result.p_value), "p_method": result.p_method,
        "dropped_codes": ';'.join(result.dropped_codes),
    }


def _matrix_frame(dist: spatial.DistanceMatrix) -> pd.DataFrame:
    frame = dist.to_frame()
    frame.insert(0, 'iso_code', frame.index)
    return frame.reset_index(drop=True)


class AnalysisPipeline:
    """
    Orchestrates one run.

    Attributes:
        config: validated run configuration
        pool: worker pool for per-country analysis
    """

    def __init__(self, config: RunConfig, pool: Optional[CountryWorkerPool] = None):
        self.config = config
        self.pool = pool or CountryWorkerPool(config.workers)
        self.codes = ingest.load_country_codes(config.codes_path)
        self._harmonize_masks()
        self.row_counts: Dict[str, Any] = {}
        self.warnings: List[str] = []
        self.p_methods: Dict[str, str] = {}
        self.skipped_tables: Dict[str, str] = {}
        self.dataset: Optional[Dataset] = None

    def _harmonize_masks(self) -> None:
        harmonized: Dict[str, List[DateMask]] = {}
        for code, spans in self.config.masks.items():
            key = self.codes.harmonize(code) or code
            harmonized.setdefault(key, []).extend(spans)
        self.config.masks = harmonized

    def _skip(self, table: str, error: Exception) -> None:
        logger.warning(f"Table {table} skipped: {error}")
        self.skipped_tables[table] = f"{type(error).__name__}: {error}"

    def input_checksums(self) -> Dict[str, Dict[str, str]]:
        checksums = {}
        for name in INPUT_FIELDS:
            value = getattr(self.config, name)
            if value:
                checksums[name] = {"file": Path(value).name, "sha256": file_sha256(value)}
        return checksums

    def load(self) -> Dataset:
        """Parse the mobility and stringency inputs plus any auxiliary tables"""
        config = self.config
        logger.info(f"Loading mobility data from {config.mobility_path}")
        mobility = ingest.parse_mobility(config.mobility_path)
        stringency = ingest.parse_stringency(config.stringency_path)
        self.warnings.extend(mobility.warnings + stringency.warnings)
        self.row_counts['mobility'] = mobility.summary()
        self.row_counts['stringency'] = stringency.summary()

        continents = ingest.load_continents(config.continents_path, self.codes) if config.continents_path else None
        demographics = (ingest.load_demographics(config.demographics_path, self.codes)
                        if config.demographics_path else None)
        neighbors = ingest.load_neighbors(config.neighbors_path, self.codes) if config.neighbors_path else None
        self.dataset = ingest.build_dataset(mobility, stringency, self.codes, continents, demographics, neighbors)
        self.row_counts['dataset'] = {
            "countries": len(self.dataset.records),
            "unmatched_stringency": len(self.dataset.unmatched_stringency),
        }
        return self.dataset

    def record(self, iso_code: str) -> CountryRecord:
        dataset = self.dataset or self.load()
        code = self.codes.harmonize(iso_code) or iso_code.upper()
        if code not in dataset.records:
            raise UnknownCountryError(f"Country {iso_code!r} not present in {self.config.mobility_path}")
        return dataset.records[code]

    def analyze(self) -> AnalysisResults:
        """Per-country alignment and measures for every country in the dataset"""
        dataset = self.dataset or self.load()
        config = self.config
        unknown_masks = sorted(set(config.masks) - set(dataset.records))
        if unknown_masks:
            logger.warning(f"Masks given for countries not in the dataset: {', '.join(unknown_masks)}")

        tasks = [
            (code, (record, config.window, config.gap_policy, config.masks_for(code), config.xcorr_threshold,
                    config.max_lag, config.min_overlap, config.mean_excluded))
            for code, record in dataset.records.items()
        ]
        countries = self.pool.map(analyze_country, tasks)
        exclusions = list(dataset.exclusions)
        for analysis in countries.values():
            exclusions.extend(analysis.exclusions)
        results = AnalysisResults(countries, exclusions)
        self.row_counts['measures'] = {
            "similarity": len(results.scores),
            "lag": len(results.profiles),
            "subregion": len(results.variations),
        }
        logger.info(f"Analyzed {len(countries)} countries: {len(results.scores)} with similarity, "
                    f"{len(results.profiles)} with lag, {len(results.variations)} with subregion variation")
        return results

    def ingest_check_tables(self) -> Tables:
        dataset = self.dataset or self.load()
        rows = []
        window = self.config.window
        for code in dataset.codes():
            record = dataset.records[code]
            windowed = record.window(window)
            rows.append({
                "iso_code": code,
                "name": record.name,
                "iso3": record.iso3 or "",
                "has_stringency": record.stringency is not None,
                "stringency_coverage": windowed.stringency.coverage() if windowed.stringency else 0.0,
                "categories": len(record.national),
                "subregions": len(record.subregions),
                "continent": record.continent.value if record.continent else "",
            })
        columns = ["iso_code", "name", "iso3", "has_stringency", "stringency_coverage",
                   "categories", "subregions", "continent"]
        return {
            "ingest_summary": pd.DataFrame(rows, columns=columns),
            "unmatched_stringency": pd.DataFrame({"iso3": dataset.unmatched_stringency}),
        }

    def similarity_tables(self, results: AnalysisResults) -> Tables:
        scores = results.scores
        if not scores:
            raise InsufficientDataError("No country has a defined similarity after filtering")
        rows = []
        for code in sorted(scores):
            score = scores[code]
            for category in ActivityCategory.ordered():
                if category in score.per_category:
                    value = score.per_category[category]
                    rows.append({"iso_code": code, "category": category.value,
                                 "cosine": value.cosine, "pearson": value.pearson})
        cosine, pearson = measures.similarity_table(scores, 'cosine'), measures.similarity_table(scores, 'pearson')
        tables: Tables = {
            "similarity_by_category": pd.DataFrame(rows, columns=["iso_code", "category", "cosine", "pearson"]),
            "similarity_by_country": cosine.to_frame().merge(pearson.to_frame().drop(columns='flags'),
                                                             on='iso_code', how='left'),
            "similarity_summary": measures.category_summary(
                {c: {k: v.cosine for k, v in s.per_category.items()} for c, s in scores.items()}),
            "rank_mean_cosine": _ranking_frame(cosine, rankstats.MeasureKey.MEAN_COSINE),
        }
        try:
            tables["rank_mean_pearson"] = _ranking_frame(pearson, rankstats.MeasureKey.MEAN_PEARSON)
        except SKIPPABLE_ERRORS as e:
            self._skip("rank_mean_pearson", e)
        if len(scores) >= 3:
            try:
                result = rankstats.concordance(cosine, pearson)
                self.p_methods['cosine_vs_pearson'] = result.p_method
                tables["similarity_concordance"] = pd.DataFrame([_tau_row(cosine.name, pearson.name, result)])
            except SKIPPABLE_ERRORS as e:
                self._skip("similarity_concordance", e)
        return tables

    def lag_tables(self, results: AnalysisResults) -> Tables:
        profiles = results.profiles
        if not profiles:
            raise InsufficientDataError("No country has a significant lag after filtering")
        rows = [{"iso_code": code, "category": category.value, "lag": float(profiles[code].per_category[category])}
                for code in sorted(profiles) for category in ActivityCategory.ordered()
                if category in profiles[code].per_category]
        table = measures.lag_table(profiles)
        return {
            "lag_by_category": pd.DataFrame(rows, columns=["iso_code", "category", "lag"]),
            "lag_by_country": table.to_frame(),
            "lag_summary": measures.category_summary(
                {c: {k: float(v) for k, v in p.per_category.items()} for c, p in profiles.items()}),
            "rank_mean_lag": _ranking_frame(table, rankstats.MeasureKey.MEAN_LAG),
        }

    def subregion_tables(self, results: AnalysisResults) -> Tables:
        variations = results.variations
        if not variations:
            raise InsufficientDataError("No country has two or more usable subregions")
        rows = [{"iso_code": code, "category": category.value, "sd": sd,
                 "subregions": variations[code].per_category_count[category]}
                for code in sorted(variations) for category, sd in sorted(
                    variations[code].per_category_sd.items(), key=lambda item: item[0].value)]
        table = measures.variation_table(variations)
        tables: Tables = {
            "subregion_by_category": pd.DataFrame(rows, columns=["iso_code", "category", "sd", "subregions"]),
            "subregion_by_country": table.to_frame(),
            "rank_mean_sd": _ranking_frame(table, rankstats.MeasureKey.MEAN_SD),
        }
        similarity = measures.similarity_table(results.scores, 'cosine')
        try:
            result = rankstats.concordance(table, similarity)
            self.p_methods['subregion_vs_similarity'] = result.p_method
            tables["subregion_concordance"] = pd.DataFrame([_tau_row(table.name, similarity.name, result)])
        except SKIPPABLE_ERRORS as e:
            self._skip("subregion_concordance", e)
        return tables

    def response_matrices(self, results: AnalysisResults) -> Dict[spatial.ResponseMeasure, spatial.DistanceMatrix]:
        include_parks = self.config.include_parks_vectors
        per_measure = {
            spatial.ResponseMeasure.COSINE: {
                c: {k: v.cosine for k, v in s.per_category.items()} for c, s in results.scores.items()},
            spatial.ResponseMeasure.LAG: {
                c: {k: float(v) for k, v in p.per_category.items()} for c, p in results.profiles.items()},
            spatial.ResponseMeasure.SUBREGION_SD: {
                c: dict(v.per_category_sd) for c, v in results.variations.items()},
        }
        matrices = {}
        for measure, values in per_measure.items():
            vectors = spatial.build_response_vectors(values, measure, include_parks)
            kept = {v.iso_code for v in vectors}
            for code in sorted(set(values) - kept):
                results.exclusions.append(Exclusion(code, f"{measure.value}_vector", ExclusionReason.MISSING_CATEGORY,
                                                    "response vector incomplete"))
            if len(vectors) >= 2:
                matrices[measure] = spatial.response_distance_matrix(vectors)
            else:
                logger.warning(f"Fewer than 2 complete {measure.value} vectors; distances skipped")
        return matrices

    def spatial_tables(self, results: AnalysisResults) -> Tables:
        dataset = self.dataset or self.load()
        matrices = self.response_matrices(results)
        if not matrices:
            raise InsufficientDataError("No measure has two or more complete response vectors")
        tables: Tables = {}
        geometries = None
        geo_all = None
        if self.config.boundaries_path:
            geometries = spatial.load_boundaries(self.config.boundaries_path, self.codes)
            labels = sorted({label for dist in matrices.values() for label in dist.labels if label in geometries})
            for code in sorted({label for dist in matrices.values() for label in dist.labels} - set(geometries)):
                results.exclusions.append(Exclusion(code, 'geography', ExclusionReason.MISSING_GEOMETRY,
                                                    "no boundary feature"))
            geo_all = spatial.geodesic_distance_matrix(geometries, labels) if len(labels) >= 2 else None
        continents = {code: r.continent for code, r in dataset.records.items() if r.continent is not None}

        concordance_rows = []
        for measure, dist in matrices.items():
            name = measure.value
            tables[f"distance_{name}"] = _matrix_frame(dist)
            if dataset.neighbors:
                comparison = spatial.border_comparison(dist, dataset.neighbors)
                tables[f"border_{name}"] = comparison.to_frame()
                tables[f"border_pairs_{name}"] = comparison.neighbors_frame()
            with_continent = [label for label in dist.labels if label in continents]
            for code in dist.labels:
                if code not in continents:
                    results.exclusions.append(Exclusion(code, 'continent', ExclusionReason.MISSING_CONTINENT,
                                                        "no continent assignment"))
            if continents and len(with_continent) >= 2:
                summary = spatial.continent_summary(dist.reindex(with_continent), continents)
                tables[f"continent_{name}"] = summary.to_frame()
                for note in summary.notes:
                    logger.info(f"Continent summary ({name}): {note}")
            if geometries is not None and geo_all is not None:
                shared = [label for label in dist.labels if label in geo_all.labels]
                if len(shared) >= 3:
                    try:
                        concordance_rows.append(self._geography_row(name, dist.reindex(shared),
                                                                    geo_all.reindex(shared)))
                    except SKIPPABLE_ERRORS as e:
                        self._skip(f"geography_concordance:{name}", e)
        if geometries is not None and geo_all is not None:
            tables["distance_geodesic"] = _matrix_frame(geo_all)
        if concordance_rows:
            tables["geography_concordance"] = pd.DataFrame(concordance_rows)
        return tables

    def _geography_row(self, name: str, dist: spatial.DistanceMatrix, geo: spatial.DistanceMatrix) -> Dict[str, Any]:
        result = spatial.geography_concordance(dist, geo)
        row = _tau_row(name, 'geodesic_km', result)
        if self.config.permutations:
            null = spatial.permutation_null(dist, geo, self.config.permutations, self.config.seed)
            row["null_mean_tau"] = float(np.mean(null))
            row["null_abs_max_tau"] = float(np.max(np.abs(null)))
        self.p_methods[f"geography_{name}"] = result.p_method
        return row

    def embed_tables(self, results: AnalysisResults) -> Tables:
        """MDS of the cosine and lag features; dendrogram of per-category subregional SDs"""
        include_parks = self.config.include_parks_vectors
        tables: Tables = {}
        try:
            features = embed.response_features(results.scores, results.profiles, include_parks)
            embedding = embed.classical_mds(features)
            tables["embedding"] = embedding.to_frame()
            tables["embedding_meta"] = {**embedding.metadata(), "features": "zscored_cosine_and_lag",
                                        "include_parks": include_parks}
        except SKIPPABLE_ERRORS as e:
            self._skip("embedding", e)
        vectors = spatial.build_response_vectors(
            {c: dict(v.per_category_sd) for c, v in results.variations.items()},
            spatial.ResponseMeasure.SUBREGION_SD, include_parks=True)
        if len(vectors) >= 2:
            self._dendrogram_tables(vectors, tables)
        else:
            logger.warning("Fewer than 2 countries with complete subregional vectors; dendrogram skipped")
        if not tables:
            raise InsufficientDataError("Neither an embedding nor a dendrogram could be built")
        return tables

    def _dendrogram_tables(self, vectors: Sequence[spatial.CountryResponseVector], tables: Tables) -> None:
        try:
            dendrogram = embed.agglomerative_cluster(spatial.response_distance_matrix(vectors), self.config.linkage)
        except SKIPPABLE_ERRORS as e:
            self._skip("dendrogram", e)
            return
        k = min(self.config.n_clusters, len(dendrogram.leaves))
        tables["dendrogram"] = {"linkage": dendrogram.linkage, "features": "subregion_sd_by_category",
                                "tree": dendrogram.to_nested_dict()}
        tables["dendrogram.nwk"] = dendrogram.to_newick()
        tables["dendrogram_merges"] = embed.merge_table(dendrogram)
        clusters = dendrogram.cut_clusters(k)
        tables["clusters"] = pd.DataFrame(sorted(clusters.items()), columns=["iso_code", "cluster"])

    def correlation_tables(self, results: AnalysisResults) -> Tables:
        dataset = self.dataset or self.load()
        index_tables = indices.country_attribute_indices(dataset.records, self.config.window)
        if self.config.indices_manifest:
            index_tables += indices.load_index_manifest(self.config.indices_manifest, self.codes)
        rows = indices.correlate_measures_with_indices(results.measure_tables(), index_tables,
                                                       self.config.min_index_n)
        outcomes = indices.stringency_vs_outcomes(results.aligned, dataset.records, self.config.window)
        return {
            "correlations": indices.correlation_frame(rows),
            "significance_counts": indices.significance_counts(rows),
            "stringency_vs_outcomes": pd.DataFrame([o.to_dict() for o in outcomes],
                                                   columns=["series", "mean_tau", "n_countries", "n_undefined"]),
        }

    def plot_data(self, iso_code: str) -> Tables:
        """
        Long-format curves (date, series, value) for one country: the six
        national activity series and stringency over the window, with masked
        days flagged.
        """
        record = self.record(iso_code)
        window = self.config.window
        masked = ingest.mask_days(window, self.config.masks_for(record.iso_code))
        dates = [d.date().isoformat() for d in window.dates]
        series = {c.value: record.national.get(c) for c in ActivityCategory.ordered()}
        series['stringency'] = record.stringency
        rows, notes = [], []
        for name, values in series.items():
            if values is None:
                notes.append(f"{name}: no data for {record.iso_code}")
                continue
            windowed = values.window(window).values
            rows.extend({"date": day, "series": name, "value": value, "masked": bool(flag)}
                        for day, value, flag in zip(dates, windowed, masked))
        for note in notes:
            logger.info(f"plot-data: {note}")
        return {
            f"plot_data_{record.iso_code}": pd.DataFrame(rows, columns=["date", "series", "value", "masked"]),
            f"plot_data_{record.iso_code}_notes": {"iso_code": record.iso_code, "notes": notes,
                                                    "masked_dates": [d for d, f in zip(dates, masked) if f]},
        }
