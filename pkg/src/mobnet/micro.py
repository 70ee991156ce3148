"""Per-tract daily trip metrics and the tract rankings compared across sources."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from .geodata import haversine_array

MICRO_METRICS = ("avg_trip_count", "avg_distance_m", "avg_travel_time_s", "avg_rog_m")
MICRO_COLUMNS = ["date", "geoid", "device_count", "avg_trip_count", "avg_distance_m",
                 "avg_travel_time_s", "avg_rog_m", "trip_count"]


@dataclass(frozen=True)
class TractDayMetrics:
    geoid: str
    date: str
    avg_trip_count: float
    avg_distance_m: float
    avg_travel_time_s: float
    avg_radius_of_gyration_m: float
    device_count: int
    trip_count: int


def radius_of_gyration(lat, lon) -> float:
    """RMS haversine distance of positions from their coordinate mean, in meters."""
    lat = np.asarray(lat, dtype=np.float64).ravel()
    lon = np.asarray(lon, dtype=np.float64).ravel()
    if lat.shape[0] == 0:
        raise ValueError("need at least one position")
    d = haversine_array(lat, lon, lat.mean(), lon.mean())
    return float(np.sqrt(np.mean(d * d)))


@dataclass
class TractAccumulator:
    """Mergeable partial sums for one tract-day.

    Per-device contributions merge by addition, so disjoint device sets
    can be processed separately and combined.
    """

    trips: int = 0
    distance: float = 0.0
    duration: float = 0.0
    rog: dict = field(default_factory=dict)

    def add_device(self, device_id, distances: Sequence[float], durations: Sequence[float],
                   rog_m: float) -> "TractAccumulator":
        self.trips += len(distances)
        self.distance += float(np.sum(distances))
        self.duration += float(np.sum(durations))
        self.rog[device_id] = rog_m
        return self

    def merge(self, other: "TractAccumulator") -> "TractAccumulator":
        overlap = self.rog.keys() & other.rog.keys()
        if overlap:
            raise ValueError(f"device sets overlap: {sorted(overlap)[:3]}")
        return TractAccumulator(self.trips + other.trips, self.distance + other.distance,
                                self.duration + other.duration, {**self.rog, **other.rog})

    def finalize(self, geoid: str, date: str) -> Optional[TractDayMetrics]:
        if self.trips == 0:
            return None
        k = len(self.rog)
        rog = sum(self.rog[d] for d in sorted(self.rog)) / k
        return TractDayMetrics(geoid, date, self.trips / k, self.distance / self.trips,
                               self.duration / self.trips, rog, k, self.trips)


def _device_rog(stops: pd.DataFrame) -> dict:
    """Radius of gyration per device, vectorized over all devices at once."""
    if stops.empty:
        return {}
    codes, devs = pd.factorize(stops["device_id"], sort=True)
    lat = stops["lat"].to_numpy(dtype=np.float64)
    lon = stops["lon"].to_numpy(dtype=np.float64)
    n = np.bincount(codes).astype(np.float64)
    mlat = np.bincount(codes, weights=lat) / n
    mlon = np.bincount(codes, weights=lon) / n
    d = haversine_array(lat, lon, mlat[codes], mlon[codes])
    rog = np.sqrt(np.bincount(codes, weights=d * d) / n)
    return dict(zip(devs.tolist(), rog.tolist()))


def tract_day_metrics(trips: pd.DataFrame, stops: pd.DataFrame, geoid: str,
                      date: str) -> Optional[TractDayMetrics]:
    """Metrics for one tract-day over trips starting or ending in the tract.

    ``trips`` and ``stops`` must already be restricted to ``date``. Returns
    ``None`` when no trip touches the tract.
    """
    sel = trips[(trips["o_geoid"] == geoid) | (trips["d_geoid"] == geoid)]
    if sel.empty:
        return None
    rog = _device_rog(stops[stops["device_id"].isin(sel["device_id"].unique())])
    acc = TractAccumulator()
    for dev, grp in sel.groupby("device_id", sort=True):
        acc.add_device(dev, grp["distance_m"].to_numpy(), grp["duration_s"].to_numpy(),
                       rog.get(dev, 0.0))
    return acc.finalize(geoid, date)


def micro_metrics(trips: pd.DataFrame, stops: pd.DataFrame, date: str,
                  geoids: Optional[Iterable[str]] = None) -> pd.DataFrame:
    """Records for every tract in ``geoids`` touched by a trip on ``date``.

    Vectorized equivalent of calling :func:`tract_day_metrics` per tract.
    Without ``geoids`` every tract appearing in the trips is reported.
    """
    if trips.empty:
        return pd.DataFrame({c: pd.Series(dtype=object) for c in MICRO_COLUMNS})
    o = trips[["device_id", "o_geoid", "distance_m", "duration_s"]].rename(columns={"o_geoid": "geoid"})
    d = trips[["device_id", "d_geoid", "distance_m", "duration_s"]].rename(columns={"d_geoid": "geoid"})
    o = o.assign(trip=np.arange(len(trips)))
    d = d.assign(trip=np.arange(len(trips)))
    touch = pd.concat([o, d], ignore_index=True).dropna(subset=["geoid"])
    # an intra-tract trip touches its tract once
    touch = touch.drop_duplicates(subset=["trip", "geoid"])
    if geoids is not None:
        touch = touch[touch["geoid"].isin(set(geoids))]
    if touch.empty:
        return pd.DataFrame({c: pd.Series(dtype=object) for c in MICRO_COLUMNS})

    rog = _device_rog(stops[stops["device_id"].isin(touch["device_id"].unique())])
    touch = touch.assign(rog=touch["device_id"].map(rog).fillna(0.0))
    g = touch.groupby("geoid", sort=True)
    per_dev = touch.drop_duplicates(subset=["geoid", "device_id"]).groupby("geoid", sort=True)
    out = pd.DataFrame({
        "trip_count": g.size(),
        "device_count": per_dev.size(),
        "dist_sum": g["distance_m"].sum(),
        "dur_sum": g["duration_s"].sum(),
        "rog_sum": per_dev["rog"].sum(),
    }).reset_index()
    out["date"] = date
    out["avg_trip_count"] = out["trip_count"] / out["device_count"]
    out["avg_distance_m"] = out["dist_sum"] / out["trip_count"]
    out["avg_travel_time_s"] = out["dur_sum"] / out["trip_count"]
    out["avg_rog_m"] = out["rog_sum"] / out["device_count"]
    return out[MICRO_COLUMNS].reset_index(drop=True)


def rank_tracts(values: Mapping[str, float], geoids: Optional[Sequence[str]] = None) -> np.ndarray:
    """Descending average-tie ranks aligned on ``geoids``.

    Tracts without a value get ``k + 1`` where ``k`` is the number of
    ranked tracts. ``geoids`` defaults to the sorted keys of ``values``.
    """
    if geoids is None:
        geoids = sorted(values)
    present = [g for g in geoids if g in values and values[g] is not None
               and not np.isnan(values[g])]
    if not present:
        raise ValueError("no tract has a value")
    v = np.array([values[g] for g in present], dtype=np.float64)
    r = rankdata(-v, method="average")
    lookup = dict(zip(present, r))
    k = len(present)
    return np.array([lookup.get(g, k + 1.0) for g in geoids], dtype=np.float64)
