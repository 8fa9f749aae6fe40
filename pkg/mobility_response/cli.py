#!/usr/bin/env python3
"""
Mobility Response Command Line

Runs the analysis pipeline for one subcommand and writes its artifacts plus
an exclusion report and a run manifest into the output directory.

Exit codes: 0 success, 1 data error, 2 configuration error, 3 internal error.
"""

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from . import __version__
from .config import LOG_LEVELS, OUTPUT_FORMATS, RunConfig
from .embed import LINKAGES
from .errors import ConfigError, DataError
from .models import AnalysisWindow
from .pipeline import SKIPPABLE_ERRORS, AnalysisPipeline, AnalysisResults
from .report import ReportWriter, exclusion_frame

logger = logging.getLogger(__name__)

REQUIRED_INPUTS = ('mobility_path', 'stringency_path')

ANALYSIS_SECTIONS = {
    'similarity': ['similarity'],
    'lag': ['lag'],
    'subregion': ['subregion'],
    'spatial': ['spatial'],
    'embed': ['embed'],
    'correlate': ['correlate'],
    'report-all': ['similarity', 'lag', 'subregion', 'spatial', 'embed', 'correlate'],
}

COMMANDS = ['ingest-check', 'plot-data'] + list(ANALYSIS_SECTIONS)


def setup_logging(level: str = 'INFO', log_file: Optional[str] = None) -> None:
    """Configure root logging for a CLI run"""
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def _common_arguments() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    inputs = common.add_argument_group('inputs')
    inputs.add_argument("--mobility", dest="mobility_path", help="Community mobility CSV")
    inputs.add_argument("--stringency", dest="stringency_path", help="Stringency index CSV")
    inputs.add_argument("--country-codes", dest="codes_path", help="ISO-2/ISO-3 table (default: bundled)")
    inputs.add_argument("--continents", dest="continents_path", help="iso_code,continent CSV")
    inputs.add_argument("--demographics", dest="demographics_path", help="iso_code,population,area CSV")
    inputs.add_argument("--neighbors", dest="neighbors_path", help="iso_code,neighbor CSV")
    inputs.add_argument("--boundaries", dest="boundaries_path", help="Country boundary GeoJSON")
    inputs.add_argument("--indices-manifest", dest="indices_manifest", help="JSON manifest of index CSVs")

    analysis = common.add_argument_group('analysis')
    window = AnalysisWindow()
    analysis.add_argument("--window-start", default=window.start.isoformat(), help="First day (YYYY-MM-DD)")
    analysis.add_argument("--window-end", default=window.end.isoformat(), help="Last day (YYYY-MM-DD)")
    analysis.add_argument("--coverage", type=float, default=0.9, help="Minimum fraction of observed days")
    analysis.add_argument("--max-gap", type=int, default=3, help="Longest interior gap repaired, in days")
    analysis.add_argument("--xcorr-threshold", type=float, default=0.5, help="Cross-correlation threshold")
    analysis.add_argument("--max-lag", type=int, default=21, help="Largest shift in days")
    analysis.add_argument("--min-overlap", type=int, default=10, help="Minimum overlapping days per shift")
    analysis.add_argument("--exclude-category", action="append", dest="exclude_categories", metavar="CATEGORY",
                          help="Category left out of country means (default: parks); repeatable")
    analysis.add_argument("--mask", action="append", default=[], metavar="COUNTRY:DATE..DATE",
                          help="Blank and interpolate a date range for one country; repeatable")
    analysis.add_argument("--include-parks-vectors", dest="include_parks_vectors", action="store_true",
                          default=True, help="Use all six categories in response vectors (default)")
    analysis.add_argument("--exclude-parks-vectors", dest="include_parks_vectors", action="store_false",
                          help="Use the five non-Parks categories in response vectors")
    analysis.add_argument("--linkage", choices=LINKAGES, default='average', help="Dendrogram linkage")
    analysis.add_argument("--clusters", type=int, default=2, help="Cluster count for the dendrogram cut")
    analysis.add_argument("--permutations", type=int, default=20, help="Label permutations for the geography null")
    analysis.add_argument("--min-index-n", type=int, default=10, help="Minimum join size for index correlations")
    analysis.add_argument("--seed", type=int, default=None, help="Seed for the permutation null")

    output = common.add_argument_group('output')
    output.add_argument("--out-dir", default=None, help="Output directory (env MOBILITY_OUT_DIR)")
    output.add_argument("--format", dest="output_format", choices=OUTPUT_FORMATS, default='csv',
                        help="Format for tabular artifacts")
    output.add_argument("--workers", type=int, default=None, help="Worker processes (env MOBILITY_MAX_WORKERS)")
    output.add_argument("--log-level", type=str.upper, choices=LOG_LEVELS, default=None,
                        help="Log level (env MOBILITY_LOG_LEVEL)")
    output.add_argument("--log-file", default=None, help="Also write log lines to this file")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mobility_response",
        description="Compare place-based activity with government response stringency across countries",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python -m mobility_response ingest-check --mobility mobility.csv --stringency oxcgrt.csv
  python -m mobility_response similarity --mobility mobility.csv --stringency oxcgrt.csv
  python -m mobility_response lag --mobility mobility.csv --stringency oxcgrt.csv --mask EG:2020-03-12..2020-03-12
  python -m mobility_response report-all --mobility mobility.csv --stringency oxcgrt.csv \\
      --continents continents.csv --neighbors neighbors.csv --boundaries countries.geojson \\
      --demographics demographics.csv --indices-manifest indices.json --out-dir results
  python -m mobility_response plot-data --country OM --mobility mobility.csv --stringency oxcgrt.csv
        """,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True
    common = _common_arguments()
    helps = {
        'ingest-check': "Parse inputs and report coverage per country",
        'plot-data': "Write long-format activity and stringency curves for one country",
        'similarity': "Cosine and Pearson similarity of activity to stringency",
        'lag': "Lag response from thresholded cross-correlation",
        'subregion': "Variability of activity between subregions",
        'spatial': "Response distances against borders, continents and geography",
        'embed': "Two-dimensional embedding and dendrogram",
        'correlate': "Kendall tau of the measures against country indices",
        'report-all': "Every artifact above in one run",
    }
    for command in COMMANDS:
        sub = subparsers.add_parser(command, parents=[common], help=helps[command])
        if command == 'plot-data':
            sub.add_argument("--country", required=True, help="ISO-2 or ISO-3 code")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """
    Build and validate a RunConfig from parsed arguments.

    Raises:
        ConfigError: listing every invalid field
    """
    try:
        window = AnalysisWindow.from_strings(args.window_start, args.window_end)
    except ValueError as e:
        raise ConfigError(f"Invalid analysis window: {e}")

    config = RunConfig(
        window=window,
        mobility_path=args.mobility_path,
        stringency_path=args.stringency_path,
        codes_path=args.codes_path,
        continents_path=args.continents_path,
        demographics_path=args.demographics_path,
        neighbors_path=args.neighbors_path,
        boundaries_path=args.boundaries_path,
        indices_manifest=args.indices_manifest,
        min_coverage=args.coverage,
        max_interior_gap=args.max_gap,
        xcorr_threshold=args.xcorr_threshold,
        max_lag=args.max_lag,
        min_overlap=args.min_overlap,
        include_parks_vectors=args.include_parks_vectors,
        linkage=args.linkage,
        n_clusters=args.clusters,
        permutations=args.permutations,
        min_index_n=args.min_index_n,
        output_format=args.output_format,
        log_file=args.log_file,
    )
    if args.exclude_categories:
        config.excluded_categories = tuple(args.exclude_categories)
    if args.out_dir:
        config.out_dir = args.out_dir
    if args.workers is not None:
        config.workers = args.workers
    if args.seed is not None:
        config.seed = args.seed
    if args.log_level:
        config.log_level = args.log_level

    errors = []
    for text in args.mask:
        try:
            config.add_mask(text)
        except ValueError as e:
            errors.append(str(e))
    is_valid, problems = config.validate(required=REQUIRED_INPUTS)
    errors.extend(problems)
    if errors:
        raise ConfigError("Invalid configuration: " + "; ".join(errors))
    return config


def write_tables(writer: ReportWriter, tables: Dict[str, Any]) -> None:
    """DataFrames go out in the configured format, dicts and lists as JSON, strings as text files"""
    for name, value in tables.items():
        if isinstance(value, pd.DataFrame):
            writer.write_table(name, value)
        elif isinstance(value, str):
            writer.write_text(name, value)
        else:
            writer.write_json(name, value)


def _section_tables(pipeline: AnalysisPipeline, section: str, results: AnalysisResults) -> Dict[str, Any]:
    builders = {
        'similarity': pipeline.similarity_tables,
        'lag': pipeline.lag_tables,
        'subregion': pipeline.subregion_tables,
        'spatial': pipeline.spatial_tables,
        'embed': pipeline.embed_tables,
        'correlate': pipeline.correlation_tables,
    }
    return builders[section](results)


def _log_exclusion_summary(results: AnalysisResults) -> None:
    frame = exclusion_frame(results.exclusions)
    if frame.empty:
        return
    counts = frame.groupby(['measure', 'reason_code']).size()
    for (measure, reason), count in counts.items():
        logger.error(f"  {measure}: {count} x {reason}")


def run(command: str, config: RunConfig, country: Optional[str] = None) -> int:
    """
    Execute one subcommand and write its artifacts.

    Returns:
        Process exit status (0 on success); errors propagate as exceptions
    """
    pipeline = AnalysisPipeline(config)
    writer = ReportWriter(config.out_dir, config.output_format)
    exclusions = []
    skipped: List[str] = []

    if command == 'ingest-check':
        write_tables(writer, pipeline.ingest_check_tables())
        exclusions = pipeline.dataset.exclusions
    elif command == 'plot-data':
        write_tables(writer, pipeline.plot_data(country))
    else:
        results = pipeline.analyze()
        exclusions = results.exclusions
        for section in ANALYSIS_SECTIONS[command]:
            try:
                write_tables(writer, _section_tables(pipeline, section, results))
            except SKIPPABLE_ERRORS as e:
                if command != 'report-all':
                    logger.error(f"{command}: {e}. Exclusions by reason:")
                    _log_exclusion_summary(results)
                    writer.write_exclusions(exclusions)
                    if isinstance(e, DataError):
                        raise
                    raise DataError(f"{section}: {e}") from e
                logger.warning(f"Section {section} skipped: {e}")
                skipped.append(section)

    if command != 'plot-data':
        writer.write_exclusions(exclusions)
    writer.write_manifest(
        config_hash=config.config_hash(),
        config=config.to_dict(),
        inputs=pipeline.input_checksums(),
        row_counts=pipeline.row_counts,
        exclusions=exclusions,
        extra={
            "command": command,
            "version": __version__,
            "seed": config.seed,
            "p_methods": dict(sorted(pipeline.p_methods.items())),
            "response_vectors": "six_categories" if config.include_parks_vectors else "five_categories",
            "skipped_sections": skipped,
            "skipped_tables": dict(sorted(pipeline.skipped_tables.items())),
        },
    )
    logger.info(f"{command}: wrote {len(writer.written())} artifacts to {config.out_dir}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level or 'INFO', args.log_file)
    try:
        config = config_from_args(args)
        setup_logging(config.log_level, config.log_file)
        return run(args.command, config, getattr(args, 'country', None))
    except DataError as e:
        logger.error(f"Data error: {e}")
        return 1
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return 2
    except Exception as e:
        logger.exception(f"Internal error: {e}")
        return 3


if __name__ == "__main__":
    sys.exit(main())
