"""Distances between metric time series and closest-source-pair verdicts."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Optional, Sequence

import numba
import numpy as np

logger = logging.getLogger(__name__)

METHODS = ("dtw-min", "cosine-max")
REDUCTIONS = ("mean", "median", "majority")
MAPE_MODES = ("base-a", "symmetric")
MAX_SERIES_LENGTH = 31


class SimilarityError(ValueError):
    pass


class MissingSourceError(SimilarityError):
    def __init__(self, source):
        super().__init__(f"source {source!r} has no observed values")
        self.source = source


@dataclass
class MetricSeries:
    source_label: str
    county_fips: str
    metric_name: str
    dates: tuple
    values: np.ndarray  # nan marks a missing day

    def __post_init__(self):
        self.dates = tuple(self.dates)
        self.values = np.asarray(
            [np.nan if v is None else v for v in self.values], dtype=np.float64)
        if len(self.dates) != self.values.shape[0]:
            raise ValueError("dates and values differ in length")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValueError("dates must be strictly increasing")
        if len(self.dates) > MAX_SERIES_LENGTH:
            raise ValueError(f"series longer than {MAX_SERIES_LENGTH} days")

    @property
    def n_missing(self) -> int:
        return int(np.isnan(self.values).sum())


def _as_array(x) -> np.ndarray:
    if isinstance(x, MetricSeries):
        return x.values
    return np.asarray([np.nan if v is None else v for v in x], dtype=np.float64)


def pairwise_delete(a, b) -> tuple[np.ndarray, np.ndarray, int]:
    """Drop positions missing in either series; returns the kept pairs and the drop count."""
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise SimilarityError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    ok = ~(np.isnan(a) | np.isnan(b))
    return a[ok], b[ok], int((~ok).sum())


def euclidean(a, b) -> float:
    a, b, dropped = pairwise_delete(a, b)
    if a.shape[0] == 0:
        raise SimilarityError("no points left after removing missing values")
    if dropped:
        logger.debug("euclidean: %d points deleted", dropped)
    return float(np.sqrt(np.sum((a - b) ** 2)))


def mape(a, b, mode: str = "symmetric", return_skipped: bool = False):
    """Mean absolute percentage error of ``b`` against ``a``.

    ``base-a`` divides by ``|a_i|``; ``symmetric`` by the mean of
    ``|a_i|`` and ``|b_i|``. Points with a zero denominator are skipped.
    """
    if mode not in MAPE_MODES:
        raise ValueError(f"mode must be one of {MAPE_MODES}")
    a, b, _ = pairwise_delete(a, b)
    denom = np.abs(a) if mode == "base-a" else (np.abs(a) + np.abs(b)) / 2.0
    ok = denom != 0
    if not ok.any():
        raise SimilarityError("every denominator is zero")
    val = float(np.mean(np.abs(a[ok] - b[ok]) / denom[ok]))
    skipped = int((~ok).sum())
    return (val, skipped) if return_skipped else val


def pearson(a, b) -> Optional[float]:
    """Sample correlation; ``None`` when either series is constant."""
    a, b, _ = pairwise_delete(a, b)
    if a.shape[0] < 2:
        raise SimilarityError("pearson needs at least two points")
    ac = a - a.mean()
    bc = b - b.mean()
    saa = float(ac @ ac)
    sbb = float(bc @ bc)
    if saa == 0.0 or sbb == 0.0:
        return None
    r = float(ac @ bc) / math.sqrt(saa * sbb)
    return max(-1.0, min(1.0, r))


@numba.njit(cache=True)
def _dtw_kernel(a, b):
    n, m = a.shape[0], b.shape[0]
    prev = np.empty(m, dtype=np.float64)
    cur = np.empty(m, dtype=np.float64)
    prev[0] = abs(a[0] - b[0])
    for j in range(1, m):
        prev[j] = abs(a[0] - b[j]) + prev[j - 1]
    for i in range(1, n):
        cur[0] = abs(a[i] - b[0]) + prev[0]
        for j in range(1, m):
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = abs(a[i] - b[j]) + best
        prev, cur = cur, prev
    return prev[m - 1]


def dtw(a, b) -> float:
    """Unconstrained DTW distance with absolute-difference cost.

    Missing points are dropped from each series independently, so the
    two lengths may differ.
    """
    a, b = _as_array(a), _as_array(b)
    a = a[~np.isnan(a)]
    b = b[~np.isnan(b)]
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise SimilarityError("dtw of an empty series")
    return float(_dtw_kernel(np.ascontiguousarray(a), np.ascontiguousarray(b)))


def cosine(a, b) -> Optional[float]:
    """Cosine of the angle between two vectors; ``None`` for a zero vector."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise SimilarityError(f"length mismatch: {a.shape} vs {b.shape}")
    na = math.sqrt(float(a @ a))
    nb = math.sqrt(float(b @ b))
    if na == 0.0 or nb == 0.0:
        return None
    return max(-1.0, min(1.0, float(a @ b) / (na * nb)))


def pair_labels(sources: Sequence[str]) -> list[tuple[str, str]]:
    """Source pairs in report order.

    For three sources ``(s0, s1, s2)`` the order is ``s0s2, s1s2, s0s1``
    (``SV, XV, SX`` for ``S, X, V``); each label keeps source order.
    """
    sources = list(sources)
    if len(sources) == 3:
        s0, s1, s2 = sources
        return [(s0, s2), (s1, s2), (s0, s1)]
    return list(combinations(sources, 2))


@dataclass
class SimilarityVerdict:
    county_fips: str
    metric_name: str
    pair: str
    scores: dict = field(default_factory=dict)
    tie: bool = False
    missing: dict = field(default_factory=dict)


def _pick(scores: dict, best_is_min: bool) -> tuple[str, bool]:
    valid = {k: v for k, v in scores.items() if v is not None and not np.isnan(v)}
    if not valid:
        return "n/a", False
    target = min(valid.values()) if best_is_min else max(valid.values())
    winners = sorted(k for k, v in valid.items() if v == target)
    return winners[0], len(winners) > 1


def closest_pair(series_by_source: Mapping[str, object], method: str = "dtw-min",
                 reduction: str = "mean", county_fips: str = "",
                 metric_name: str = "") -> SimilarityVerdict:
    """Name the source pair whose results agree best.

    With ``dtw-min`` each value is a 1-d series (``nan`` = missing day) and
    the pair with the smallest DTW distance wins. With ``cosine-max`` each
    value is a ``days x tracts`` array of rank vectors (an all-``nan`` row
    = missing day); daily cosines over days both sources observed are
    reduced per ``reduction`` and the largest wins. Ties go to the
    lexicographically smallest pair label. With only two sources the
    score is reported and the verdict is ``"n/a"``.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if reduction not in REDUCTIONS:
        raise ValueError(f"reduction must be one of {REDUCTIONS}")
    if len(series_by_source) < 2:
        raise SimilarityError("need at least two sources")
    arrays = {}
    missing = {}
    for label, s in series_by_source.items():
        arr = _as_array(s) if method == "dtw-min" else np.asarray(s, dtype=np.float64)
        if method == "dtw-min":
            present = ~np.isnan(arr)
        else:
            present = ~np.all(np.isnan(arr), axis=1) if arr.ndim == 2 and arr.shape[1] else np.zeros(0, bool)
        if not present.any():
            raise MissingSourceError(label)
        arrays[label] = arr
        missing[label] = int((~present).sum())

    scores: dict[str, Optional[float]] = {}
    daily_winner: dict[str, list] = {}
    for x, y in pair_labels(list(arrays)):
        key = x + y
        if method == "dtw-min":
            scores[key] = dtw(arrays[x], arrays[y])
            continue
        a, b = arrays[x], arrays[y]
        if a.shape != b.shape:
            raise SimilarityError(f"rank arrays of {x} and {y} differ in shape")
        daily = []
        for i in range(a.shape[0]):
            if np.all(np.isnan(a[i])) or np.all(np.isnan(b[i])):
                daily.append(np.nan)
                continue
            c = cosine(a[i], b[i])
            daily.append(np.nan if c is None else c)
        daily = np.array(daily)
        daily_winner[key] = daily
        ok = daily[~np.isnan(daily)]
        if ok.shape[0] == 0:
            scores[key] = None
        elif reduction == "median":
            scores[key] = float(np.median(ok))
        else:
            scores[key] = float(np.mean(ok))

    if len(arrays) == 2:
        return SimilarityVerdict(county_fips, metric_name, "n/a", scores, False, missing)

    if method == "cosine-max" and reduction == "majority":
        keys = list(daily_winner)
        mat = np.vstack([daily_winner[k] for k in keys])
        votes = dict.fromkeys(keys, 0)
        for col in mat.T:
            if np.isnan(col).any():
                continue
            w, _ = _pick(dict(zip(keys, col.tolist())), best_is_min=False)
            votes[w] += 1
        pair, tie = _pick({k: float(v) for k, v in votes.items()}, best_is_min=False)
    else:
        pair, tie = _pick(scores, best_is_min=(method == "dtw-min"))
    return SimilarityVerdict(county_fips, metric_name, pair, scores, tie, missing)
