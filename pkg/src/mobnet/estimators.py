"""scikit-learn style wrappers so pipeline stages compose with ``sklearn.pipeline``.

Every stage is stateless apart from configuration, so ``fit`` only
validates input and records what it saw; ``transform`` does the work.

>>> from sklearn.pipeline import make_pipeline
>>> pipe = make_pipeline(StopDetector(), TripExtractor(index),
...                      NetworkBuilder(index, "99001"), MacroMetrics())  # doctest: +SKIP
>>> pipe.fit_transform(pings)  # doctest: +SKIP
"""

from __future__ import annotations

from typing import Optional

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .geodata import TractIndex
from .ingest import (DEFAULT_MIN_DWELL_S, DEFAULT_RADIUS_M, STOP_COLUMNS, assign_geoids,
                     detect_stops_frame, extract_trips_frame)
from .macro import macro_record
from .micro import micro_metrics
from .motifs import (DEFAULT_MEDIAN_THRESHOLD, N_TYPES, motif_attributes, motif_census,
                     moving_average_7d, sample_census)
from .network import build_daily_network
from .similarity import closest_pair
from .validation import check_frame, check_networks, check_pings


class _Stage(BaseEstimator, TransformerMixin):
    def fit(self, X, y=None):
        self._validate(X)
        self.is_fitted_ = True
        return self

    def _validate(self, X):
        return X


class StopDetector(_Stage):
    """Pings frame -> stops frame (anchor-based greedy staypoints)."""

    def __init__(self, radius_m: float = DEFAULT_RADIUS_M, min_dwell_s: float = DEFAULT_MIN_DWELL_S):
        self.radius_m = radius_m
        self.min_dwell_s = min_dwell_s

    def _validate(self, X):
        if self.radius_m <= 0 or self.min_dwell_s < 0:
            raise ValueError("radius_m must be > 0 and min_dwell_s >= 0")
        return check_pings(X)

    def transform(self, X):
        check_is_fitted(self)
        X = self._validate(X)
        return detect_stops_frame(X, self.radius_m, self.min_dwell_s)


class TripExtractor(_Stage):
    """Stops frame -> trips frame; assigns tract geoids when an index is given."""

    def __init__(self, tract_index: Optional[TractIndex] = None, timezone: str = "UTC"):
        self.tract_index = tract_index
        self.timezone = timezone

    def _validate(self, X):
        return check_frame(X, STOP_COLUMNS, "stops")

    def transform(self, X):
        check_is_fitted(self)
        X = self._validate(X)
        if self.tract_index is not None:
            X = assign_geoids(X, self.tract_index)
        X = X.sort_values(["device_id", "t_start"], kind="stable").reset_index(drop=True)
        trips, self.n_dropped_ = extract_trips_frame(X, self.timezone)
        return trips


class NetworkBuilder(_Stage):
    """Trips frame -> list of daily networks, one per date present (sorted)."""

    def __init__(self, tract_index: Optional[TractIndex] = None, county_fips: str = "",
                 dates=None):
        self.tract_index = tract_index
        self.county_fips = county_fips
        self.dates = dates

    def _validate(self, X):
        return check_frame(X, ["date", "o_geoid", "d_geoid"], "trips")

    def transform(self, X):
        check_is_fitted(self)
        X = self._validate(X)
        dates = sorted(self.dates) if self.dates is not None else sorted(X["date"].dropna().unique())
        by_date = {d: g for d, g in X.groupby("date")} if len(X) else {}
        return [build_daily_network(by_date.get(d, X.iloc[:0]), self.county_fips, d, self.tract_index)
                for d in dates]


class MacroMetrics(_Stage):
    """Networks -> one row of global metrics per network (``None`` = undefined)."""

    def _validate(self, X):
        return check_networks(X)

    def transform(self, X):
        check_is_fitted(self)
        return pd.DataFrame([macro_record(n).as_dict() for n in self._validate(X)])


class MotifProfiler(_Stage):
    """Networks -> long frame of per-type counts, shares, 7-day shares and attribute medians."""

    def __init__(self, mode: str = "exact", n_samples: int = 100_000, random_state: int = 0,
                 median_threshold: int = DEFAULT_MEDIAN_THRESHOLD, volume: str = "mean"):
        self.mode = mode
        self.n_samples = n_samples
        self.random_state = random_state
        self.median_threshold = median_threshold
        self.volume = volume

    def _validate(self, X):
        if self.mode not in ("exact", "sample"):
            raise ValueError("mode must be 'exact' or 'sample'")
        return check_networks(X)

    def transform(self, X):
        check_is_fitted(self)
        rows = []
        for net in self._validate(X):
            if net.n_nodes < 4:
                rows += [{"date": net.date, "type": t} for t in range(N_TYPES)]
                continue
            if self.mode == "sample":
                c = sample_census(net, self.n_samples, self.random_state, volume=self.volume)
            else:
                c = motif_attributes(net, motif_census(net), self.median_threshold, self.volume)
            rows += [{"date": net.date, "type": t, "count": int(c.counts[t]),
                      "share": float(c.shares[t]),
                      "median_avg_distance_m": c.median_avg_distance_m[t],
                      "median_avg_volume": c.median_avg_volume[t]} for t in range(N_TYPES)]
        frame = pd.DataFrame(rows, columns=["date", "type", "count", "share",
                                            "median_avg_distance_m", "median_avg_volume"])
        frame["share"] = frame["share"].astype(float)
        frame["share_ma7"] = np.nan
        for t in range(N_TYPES):
            sel = frame["type"] == t
            if sel.any():
                frame.loc[sel, "share_ma7"] = moving_average_7d(frame.loc[sel, "share"].to_numpy())
        return frame


class TractMetrics(_Stage):
    """``(trips, stops)`` -> per tract-day microscopic metrics."""

    def __init__(self, geoids=None):
        self.geoids = geoids

    def _validate(self, X):
        trips, stops = X
        check_frame(trips, ["date", "device_id", "o_geoid", "d_geoid", "distance_m", "duration_s"], "trips")
        check_frame(stops, ["date", "device_id", "lat", "lon"], "stops")
        return trips, stops

    def transform(self, X):
        check_is_fitted(self)
        trips, stops = self._validate(X)
        frames = []
        for d, g in trips.groupby("date", sort=True):
            frames.append(micro_metrics(g, stops[stops["date"] == d], d, self.geoids))
        frames = [f for f in frames if len(f)]
        return pd.concat(frames, ignore_index=True) if frames else micro_metrics(trips.iloc[:0], stops, "")


class SourceComparator(BaseEstimator):
    """Picks the closest source pair for one metric.

    ``fit`` takes a mapping of source label to series (``dtw-min``) or to a
    days x tracts rank array (``cosine-max``); ``predict`` returns the
    winning pair label.
    """

    def __init__(self, method: str = "dtw-min", reduction: str = "mean"):
        self.method = method
        self.reduction = reduction

    def fit(self, X, y=None):
        if not isinstance(X, dict):
            raise TypeError("X must map source label to series")
        self.verdict_ = closest_pair(X, self.method, self.reduction)
        self.scores_ = dict(self.verdict_.scores)
        self.sources_ = list(X)
        return self

    def predict(self, X=None):
        check_is_fitted(self)
        if X is not None:
            return SourceComparator(self.method, self.reduction).fit(X).verdict_.pair
        return self.verdict_.pair
