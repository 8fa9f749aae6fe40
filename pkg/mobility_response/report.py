"""
Report Writer

Writes tabular artifacts as CSV or JSON, nested artifacts as JSON and the
run manifest. Output is byte-stable: fixed float formatting, sorted JSON
keys, '\\n' line endings and no timestamps.
"""

import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .models import Exclusion

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.6f'
JSON_DECIMALS = 6


def file_sha256(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 16), b''):
            digest.update(chunk)
    return digest.hexdigest()


def _clean(value: Any) -> Any:
    """Convert numpy scalars and non-finite floats into JSON-safe values"""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return None
        return round(value, JSON_DECIMALS)
    return value


def to_json(data: Any) -> str:
    return json.dumps(_clean(data), indent=2, sort_keys=True, ensure_ascii=False) + '\n'


def exclusion_frame(exclusions: Sequence[Exclusion]) -> pd.DataFrame:
    """Exclusions as rows sorted by code, measure and category, duplicates removed"""
    rows = sorted({tuple(e.to_dict().values()) for e in exclusions})
    return pd.DataFrame(rows, columns=['iso_code', 'measure', 'category', 'reason_code', 'detail'])


class ReportWriter:
    """
    Writes named artifacts into an output directory and remembers their
    checksums for the run manifest.
    """

    def __init__(self, out_dir: Union[str, Path], output_format: str = 'csv'):
        self.out_dir = Path(out_dir)
        self.output_format = output_format
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.artifacts: Dict[str, str] = {}

    def _record(self, path: Path) -> Path:
        self.artifacts[path.name] = file_sha256(path)
        logger.debug(f"Wrote {path}")
        return path

    def write_table(self, name: str, frame: pd.DataFrame) -> Path:
        """Write a table in the configured format"""
        if self.output_format == 'json':
            records = frame.astype(object).where(frame.notna(), None).to_dict(orient='records')
            return self.write_json(name, records)
        path = self.out_dir / f"{name}.csv"
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
        return self._record(path)

    def write_json(self, name: str, data: Any) -> Path:
        path = self.out_dir / f"{name}.json"
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(to_json(data))
        return self._record(path)

    def write_text(self, filename: str, text: str) -> Path:
        path = self.out_dir / filename
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(text if text.endswith('\n') else text + '\n')
        return self._record(path)

    def write_exclusions(self, exclusions: Sequence[Exclusion]) -> Path:
        return self.write_table('exclusions', exclusion_frame(exclusions))

    def write_manifest(self, config_hash: str, config: Dict[str, Any], inputs: Dict[str, Dict[str, str]],
                       row_counts: Dict[str, Any], exclusions: Sequence[Exclusion],
                       extra: Optional[Dict[str, Any]] = None) -> Path:
        """
        Write run_manifest.json summarizing the run.

        The manifest lists every artifact written so far with its checksum.
        """
        reasons: Dict[str, int] = {}
        for row in exclusion_frame(exclusions).itertuples(index=False):
            reasons[row.reason_code] = reasons.get(row.reason_code, 0) + 1
        manifest = {
            "config_hash": config_hash,
            "config": config,
            "inputs": inputs,
            "row_counts": row_counts,
            "exclusion_reasons": reasons,
            "artifacts": dict(sorted(self.artifacts.items())),
        }
        manifest.update(extra or {})
        return self.write_json('run_manifest', manifest)

    def written(self) -> List[str]:
        return sorted(self.artifacts)
