"""
Run Configuration

RunConfig collects the window, input paths, thresholds, masks and output
options for one analysis run. Defaults for the ambient settings come from
environment variables (a ``.env`` file is honoured).
"""

import hashlib
import json
import os
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from dotenv import load_dotenv

from .embed import LINKAGES
from .ingest import DateMask, GapPolicy
from .measures import DEFAULT_MAX_LAG, DEFAULT_MIN_OVERLAP, DEFAULT_THRESHOLD
from .models import ActivityCategory, AnalysisWindow

load_dotenv()

OUTPUT_FORMATS = ('csv', 'json')
LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR')

INPUT_FIELDS = (
    'mobility_path', 'stringency_path', 'codes_path', 'continents_path',
    'demographics_path', 'neighbors_path', 'boundaries_path', 'indices_manifest',
)

INTEGER_SETTINGS = {'workers': 'MOBILITY_MAX_WORKERS', 'seed': 'MOBILITY_SEED'}


def parse_mask(text: str) -> Tuple[str, DateMask]:
    """
    Parse ``COUNTRY:START..END`` (or ``COUNTRY:DAY``) into a code and date range.

    Raises:
        ValueError: malformed text or a range that ends before it starts
    """
    if ':' not in text:
        raise ValueError(f"Mask {text!r} must look like COUNTRY:YYYY-MM-DD..YYYY-MM-DD")
    code, span = text.split(':', 1)
    code = code.strip().upper()
    if not code:
        raise ValueError(f"Mask {text!r} has no country code")
    start_text, _, end_text = span.partition('..')
    start = date.fromisoformat(start_text.strip())
    end = date.fromisoformat(end_text.strip()) if end_text else start
    if end < start:
        raise ValueError(f"Mask {text!r} ends before it starts")
    return code, (start, end)


@dataclass
class RunConfig:
    window: AnalysisWindow = field(default_factory=AnalysisWindow)

    mobility_path: Optional[str] = None
    stringency_path: Optional[str] = None
    codes_path: Optional[str] = None
    continents_path: Optional[str] = None
    demographics_path: Optional[str] = None
    neighbors_path: Optional[str] = None
    boundaries_path: Optional[str] = None
    indices_manifest: Optional[str] = None

    min_coverage: float = 0.9
    max_interior_gap: int = 3
    xcorr_threshold: float = DEFAULT_THRESHOLD
    max_lag: int = DEFAULT_MAX_LAG
    min_overlap: int = DEFAULT_MIN_OVERLAP
    excluded_categories: Tuple[str, ...] = (ActivityCategory.PARKS.value,)
    masks: Dict[str, List[DateMask]] = field(default_factory=dict)

    include_parks_vectors: bool = True
    linkage: str = 'average'
    n_clusters: int = 2
    permutations: int = 20
    min_index_n: int = 10

    out_dir: str = field(default_factory=lambda: os.getenv('MOBILITY_OUT_DIR', 'results'))
    output_format: str = 'csv'
    # Environment text until validate() converts it
    workers: Union[int, str] = field(default_factory=lambda: os.getenv('MOBILITY_MAX_WORKERS', '1'))
    seed: Union[int, str] = field(default_factory=lambda: os.getenv('MOBILITY_SEED', '0'))
    log_level: str = field(default_factory=lambda: os.getenv('MOBILITY_LOG_LEVEL', 'INFO').upper())
    log_file: Optional[str] = None

    @property
    def gap_policy(self) -> GapPolicy:
        return GapPolicy(max_interior_gap=self.max_interior_gap, min_coverage=self.min_coverage)

    @property
    def mean_excluded(self) -> Tuple[ActivityCategory, ...]:
        return tuple(ActivityCategory.parse(c) for c in self.excluded_categories)

    def masks_for(self, iso_code: str) -> List[DateMask]:
        return self.masks.get(iso_code, [])

    def add_mask(self, text: str) -> None:
        code, span = parse_mask(text)
        self.masks.setdefault(code, []).append(span)

    def validate(self, required: Tuple[str, ...] = ()) -> Tuple[bool, List[str]]:
        """
        Check paths and thresholds, and convert the integer settings read
        from the environment.

        Args:
            required: input fields that must be set for the current subcommand

        Returns:
            Tuple of (is_valid, errors)
        """
        errors = []
        for name in required:
            if not getattr(self, name):
                errors.append(f"{name} is required")
        for name in INPUT_FIELDS:
            value = getattr(self, name)
            if value and not Path(value).exists():
                errors.append(f"{name}: file not found: {value}")

        half_window = self.window.n_days // 2
        if not 0.0 < self.xcorr_threshold < 1.0:
            errors.append(f"xcorr threshold {self.xcorr_threshold} must lie in (0, 1)")
        if not 1 <= self.max_lag <= half_window:
            errors.append(f"max lag {self.max_lag} must lie in [1, {half_window}]")
        if not 3 <= self.min_overlap <= self.window.n_days:
            errors.append(f"min overlap {self.min_overlap} must lie in [3, {self.window.n_days}]")
        if not 0.0 < self.min_coverage <= 1.0:
            errors.append(f"coverage {self.min_coverage} must lie in (0, 1]")
        if self.max_interior_gap < 0:
            errors.append("max interior gap cannot be negative")
        for name in self.excluded_categories:
            try:
                ActivityCategory.parse(name)
            except ValueError as e:
                errors.append(str(e))
        if self.output_format not in OUTPUT_FORMATS:
            errors.append(f"format {self.output_format!r} must be one of {', '.join(OUTPUT_FORMATS)}")
        if self.linkage not in LINKAGES:
            errors.append(f"linkage {self.linkage!r} must be one of {', '.join(LINKAGES)}")
        if self.n_clusters < 1:
            errors.append("cluster count must be at least 1")
        if self.permutations < 0:
            errors.append("permutation count cannot be negative")
        if self.min_index_n < 3:
            errors.append("minimum index join size must be at least 3")
        for name, variable in INTEGER_SETTINGS.items():
            try:
                setattr(self, name, int(getattr(self, name)))
            except (TypeError, ValueError):
                errors.append(f"{name} must be an integer (env {variable}), got {getattr(self, name)!r}")
        if isinstance(self.workers, int) and self.workers < 1:
            errors.append("worker count must be at least 1")
        if self.log_level not in LOG_LEVELS:
            errors.append(f"log level {self.log_level!r} must be one of {', '.join(LOG_LEVELS)}")
        return len(errors) == 0, errors

    def to_dict(self) -> Dict[str, Any]:
        """Fields that affect results; output location, workers and logging are left out"""
        return {
            "window": self.window.to_dict(),
            "inputs": {name: Path(getattr(self, name)).name if getattr(self, name) else None
                       for name in INPUT_FIELDS},
            "min_coverage": self.min_coverage,
            "max_interior_gap": self.max_interior_gap,
            "xcorr_threshold": self.xcorr_threshold,
            "max_lag": self.max_lag,
            "min_overlap": self.min_overlap,
            "excluded_categories": sorted(self.excluded_categories),
            "masks": {code: [[s.isoformat(), e.isoformat()] for s, e in sorted(spans)]
                      for code, spans in sorted(self.masks.items())},
            "include_parks_vectors": self.include_parks_vectors,
            "linkage": self.linkage,
            "n_clusters": self.n_clusters,
            "permutations": self.permutations,
            "min_index_n": self.min_index_n,
            "output_format": self.output_format,
            "seed": self.seed,
        }

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()
