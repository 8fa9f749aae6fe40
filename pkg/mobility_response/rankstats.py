"""
Rank Statistics

Kendall tau-b with tie-corrected significance, country rankings and
cross-table concordance.
"""

import logging
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .errors import InsufficientDataError, UndefinedMeasureError
from .models import MeasureTable

logger = logging.getLogger(__name__)

# Sample size up to which tie-free inputs get an exact p-value
EXACT_P_MAX_N = 10


@dataclass
class TauResult:
    """Kendall tau-b with pair counts and a two-sided p-value"""
    tau: float
    p_value: float
    n: int
    concordant: int
    discordant: int
    ties_x: int
    ties_y: int
    ties_both: int
    p_method: str
    dropped_codes: Tuple[str, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['dropped_codes'] = list(self.dropped_codes)
        return data


def pair_counts(x: np.ndarray, y: np.ndarray) -> Tuple[int, int, int, int, int]:
    """
    Count pairs (i < j) as concordant, discordant, tied only in x, tied only
    in y, or tied in both.
    """
    concordant = discordant = ties_x = ties_y = ties_both = 0
    for i in range(len(x) - 1):
        dx = np.sign(x[i + 1:] - x[i])
        dy = np.sign(y[i + 1:] - y[i])
        product = dx * dy
        concordant += int(np.count_nonzero(product > 0))
        discordant += int(np.count_nonzero(product < 0))
        zero_x = dx == 0
        zero_y = dy == 0
        ties_x += int(np.count_nonzero(zero_x & ~zero_y))
        ties_y += int(np.count_nonzero(zero_y & ~zero_x))
        ties_both += int(np.count_nonzero(zero_x & zero_y))
    return concordant, discordant, ties_x, ties_y, ties_both


def _tie_sizes(values: np.ndarray) -> np.ndarray:
    _, counts = np.unique(values, return_counts=True)
    return counts[counts > 1].astype(float)


def _normal_p_value(s: int, n: int, x: np.ndarray, y: np.ndarray) -> float:
    """Two-sided p-value for S = C - D using the tie-corrected null variance"""
    tx = _tie_sizes(x)
    ty = _tie_sizes(y)
    v0 = n * (n - 1) * (2 * n + 5)
    vt = np.sum(tx * (tx - 1) * (2 * tx + 5))
    vu = np.sum(ty * (ty - 1) * (2 * ty + 5))
    v1 = np.sum(tx * (tx - 1)) * np.sum(ty * (ty - 1))
    v2 = np.sum(tx * (tx - 1) * (tx - 2)) * np.sum(ty * (ty - 1) * (ty - 2))
    variance = (v0 - vt - vu) / 18.0 + v1 / (2.0 * n * (n - 1)) + v2 / (9.0 * n * (n - 1) * (n - 2))
    if variance <= 0:
        return 1.0
    z = s / np.sqrt(variance)
    return float(min(1.0, 2.0 * stats.norm.sf(abs(z))))


def kendall_tau_b(x: Sequence[float], y: Sequence[float]) -> TauResult:
    """
    Kendall tau-b between two equal-length vectors.

    The p-value is exact for tie-free samples of at most 10 values and
    otherwise uses the normal approximation with tie-adjusted variance.

    Raises:
        InsufficientDataError: fewer than 3 observations
        UndefinedMeasureError: one vector is entirely tied
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"Vectors must be one-dimensional and of equal length ({x.shape} vs {y.shape})")
    n = len(x)
    if n < 3:
        raise InsufficientDataError(f"Kendall tau needs at least 3 observations, got {n}")

    concordant, discordant, ties_x, ties_y, ties_both = pair_counts(x, y)
    untied_x = concordant + discordant + ties_y
    untied_y = concordant + discordant + ties_x
    if untied_x == 0 or untied_y == 0:
        raise UndefinedMeasureError("Kendall tau undefined: a vector is entirely tied")
    tau = (concordant - discordant) / np.sqrt(float(untied_x) * float(untied_y))
    tau = float(np.clip(tau, -1.0, 1.0))

    has_ties = (ties_x + ties_y + ties_both) > 0
    if n <= EXACT_P_MAX_N and not has_ties:
        p_value = float(stats.kendalltau(x, y, method='exact').pvalue)
        method = 'exact'
    else:
        p_value = _normal_p_value(concordant - discordant, n, x, y)
        method = 'normal'
    return TauResult(tau, p_value, n, concordant, discordant, ties_x, ties_y, ties_both, method)


class MeasureKey(Enum):
    MEAN_COSINE = "mean_cosine"
    MEAN_PEARSON = "mean_pearson"
    MEAN_LAG = "mean_lag"
    MEAN_SD = "mean_sd"


@dataclass
class RankedEntry:
    rank: int
    iso_code: str
    value: float
    percentile: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _sort_key(key: MeasureKey):
    if key is MeasureKey.MEAN_LAG:
        return lambda item: (abs(item[1]), item[0])
    return lambda item: (-item[1], item[0])


def rank_countries(table: MeasureTable, key: MeasureKey) -> List[RankedEntry]:
    """
    Order countries by a measure: similarity and subregional variation
    highest first, lag by smallest magnitude first. Ties go to the
    alphabetically smaller code.
    """
    if len(table) == 0:
        raise InsufficientDataError(f"Cannot rank empty table {table.name}")
    ordered = sorted(table.values.items(), key=_sort_key(key))
    n = len(ordered)
    return [
        RankedEntry(rank=i + 1, iso_code=code, value=value,
                    percentile=100.0 * (n - 1 - i) / (n - 1) if n > 1 else 100.0)
        for i, (code, value) in enumerate(ordered)
    ]


def concordance(measure_a: MeasureTable, measure_b: MeasureTable, min_n: int = 3) -> TauResult:
    """
    Kendall tau-b between two tables joined on iso code; codes present in
    only one table are reported on the result.

    Raises:
        InsufficientDataError: fewer than ``min_n`` shared codes
    """
    shared = sorted(set(measure_a.values) & set(measure_b.values))
    dropped = tuple(sorted(set(measure_a.values) ^ set(measure_b.values)))
    if len(shared) < max(min_n, 3):
        raise InsufficientDataError(f"{measure_a.name} vs {measure_b.name}: only {len(shared)} shared countries")
    if dropped:
        logger.info(f"{measure_a.name} vs {measure_b.name}: {len(dropped)} codes dropped by join")
    result = kendall_tau_b([measure_a.values[c] for c in shared], [measure_b.values[c] for c in shared])
    result.dropped_codes = dropped
    return result


def significance_stars(p_value: Optional[float]) -> str:
    """'***' below 0.01, '**' below 0.05, '*' below 0.1"""
    if p_value is None:
        return ""
    if p_value < 0.01:
        return "***"
    if p_value < 0.05:
        return "**"
    if p_value < 0.1:
        return "*"
    return ""
