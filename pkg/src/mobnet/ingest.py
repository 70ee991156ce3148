"""Ping parsing, staypoint detection and trip extraction."""

from __future__ import annotations

import csv
import gzip
import io
import logging
import math
import os
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numba
import numpy as np
import pandas as pd

from .geodata import EARTH_RADIUS_M, GeoPoint, TractIndex, _haversine, haversine_array

logger = logging.getLogger(__name__)

DEFAULT_RADIUS_M = 100.0
DEFAULT_MIN_DWELL_S = 300.0

PING_COLUMNS = ["device_id", "timestamp", "lat", "lon"]
STOP_COLUMNS = ["device_id", "t_start", "t_end", "lat", "lon", "n_pings", "geoid"]
TRIP_COLUMNS = [
    "date", "device_id", "o_geoid", "d_geoid", "o_lat", "o_lon", "d_lat", "d_lon",
    "depart_t", "arrive_t", "distance_m", "duration_s",
]


class IngestError(ValueError):
    pass


class Ping(NamedTuple):
    device_id: str
    t: float
    pos: GeoPoint


@dataclass(frozen=True)
class Stop:
    device_id: str
    t_start: float
    t_end: float
    pos: GeoPoint
    geoid: Optional[str] = None


@dataclass(frozen=True)
class Trip:
    device_id: str
    origin: Stop
    dest: Stop

    @property
    def depart_t(self) -> float:
        return self.origin.t_end

    @property
    def arrive_t(self) -> float:
        return self.dest.t_start

    @property
    def duration_s(self) -> float:
        return self.arrive_t - self.depart_t

    @property
    def distance_m(self) -> float:
        return float(_haversine(self.origin.pos.lat, self.origin.pos.lon,
                                self.dest.pos.lat, self.dest.pos.lon))


@dataclass
class ParseReport:
    accepted: int = 0
    rejected: int = 0
    errors: list[tuple[int, str]] = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.accepted + self.rejected

    def to_dict(self) -> dict:
        return {"accepted": self.accepted, "rejected": self.rejected,
                "errors": [{"line": n, "reason": r} for n, r in self.errors]}


def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        path = os.fspath(source)
        if path.endswith(".gz"):
            return gzip.open(path, "rt", encoding="utf-8", newline="")
        return open(path, "r", encoding="utf-8", newline="")
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
        if data[:2] == b"\x1f\x8b":
            data = gzip.decompress(data)
        return io.StringIO(data.decode("utf-8"), newline="")
    return source


def _fast_parse(text: str) -> Optional[pd.DataFrame]:
    """Typed parse for the common all-valid file; ``None`` sends it to the checking path."""
    header = 0 if text.startswith("device_id,") else None
    try:
        frame = pd.read_csv(io.StringIO(text), header=header, names=PING_COLUMNS,
                            dtype={"device_id": str, "timestamp": np.float64,
                                   "lat": np.float64, "lon": np.float64},
                            skip_blank_lines=False, keep_default_na=False, na_filter=False,
                            float_precision="round_trip", engine="c")
    except (ValueError, pd.errors.ParserError):
        return None
    t = frame["timestamp"].to_numpy()
    lat = frame["lat"].to_numpy()
    lon = frame["lon"].to_numpy()
    ok = ((t >= 0) & (t < np.inf) & (lat >= -90) & (lat <= 90) & (lon >= -180) & (lon <= 180)).all()
    dev = frame["device_id"]
    if not ok or (dev.str.len() == 0).any() or dev.str.strip().ne(dev).any():
        return None
    return frame.rename(columns={"timestamp": "t"})


def _read_raw(text: str) -> pd.DataFrame:
    if not text.strip():
        return pd.DataFrame({c: pd.Series(dtype=object) for c in PING_COLUMNS + ["_extra"]})
    try:
        return pd.read_csv(io.StringIO(text), header=None, names=PING_COLUMNS + ["_extra"],
                           dtype=str, skip_blank_lines=False, keep_default_na=False,
                           na_filter=False, engine="c")
    except pd.errors.ParserError:
        rows = list(csv.reader(io.StringIO(text)))
        width = [len(r) for r in rows]
        padded = [(r + [""] * 5)[:4] + [("," if w > 4 else "")] for r, w in zip(rows, width)]
        return pd.DataFrame(padded, columns=PING_COLUMNS + ["_extra"])


def _to_float(col: pd.Series) -> np.ndarray:
    # exact decimal conversion; pd.to_numeric can be off by one ulp
    try:
        return col.astype(np.float64).to_numpy()
    except ValueError:
        out = np.empty(len(col), dtype=np.float64)
        for i, x in enumerate(col.tolist()):
            try:
                out[i] = float(x)
            except ValueError:
                out[i] = np.nan
        return out


def parse_pings(source) -> tuple[pd.DataFrame, ParseReport]:
    """Parse a ``device_id,timestamp,lat,lon`` file (plain or gzip).

    Returns the accepted pings as a frame with columns ``device_id, t, lat,
    lon`` in input order plus a :class:`ParseReport`. Line numbers in the
    report are 1-based physical lines; a header line is optional.
    """
    fh = _open_text(source)
    try:
        text = fh.read()
    finally:
        if fh is not source:
            fh.close()

    report = ParseReport()
    fast = _fast_parse(text) if text.strip() else None
    if fast is not None:
        report.accepted = len(fast)
        return fast, report
    raw = _read_raw(text)
    if raw.empty:
        return pd.DataFrame({"device_id": pd.Series(dtype=object), "t": pd.Series(dtype=float),
                             "lat": pd.Series(dtype=float), "lon": pd.Series(dtype=float)}), report

    lines = np.arange(1, len(raw) + 1)
    if str(raw.iloc[0]["device_id"]).strip() == "device_id":
        raw = raw.iloc[1:]
        lines = lines[1:]

    dev = raw["device_id"].astype(str).str.strip()
    t = _to_float(raw["timestamp"])
    lat = _to_float(raw["lat"])
    lon = _to_float(raw["lon"])
    extra = raw["_extra"].astype(str).str.len().to_numpy() > 0

    reason = np.full(len(raw), "", dtype=object)
    reason[~(lon >= -180.0) | ~(lon <= 180.0)] = "longitude out of range"
    reason[~(lat >= -90.0) | ~(lat <= 90.0)] = "latitude out of range"
    reason[np.isnan(lon)] = "non-numeric longitude"
    reason[np.isnan(lat)] = "non-numeric latitude"
    reason[~(t >= 0)] = "negative timestamp"
    reason[np.isinf(t)] = "infinite timestamp"
    reason[np.isnan(t)] = "non-numeric timestamp"
    reason[(dev == "").to_numpy()] = "empty device_id"
    reason[extra] = "wrong field count"
    bad = reason != ""

    report.rejected = int(bad.sum())
    report.accepted = int((~bad).sum())
    report.errors = [(int(n), str(r)) for n, r in zip(lines[bad], reason[bad])]
    for n, r in report.errors[:20]:
        logger.debug("line %d rejected: %s", n, r)

    keep = ~bad
    out = pd.DataFrame({"device_id": dev.to_numpy()[keep], "t": t[keep],
                        "lat": lat[keep], "lon": lon[keep]})
    return out, report


def pings_to_frame(pings: Sequence[Ping]) -> pd.DataFrame:
    return pd.DataFrame({
        "device_id": [p.device_id for p in pings],
        "t": np.array([p.t for p in pings], dtype=np.float64),
        "lat": np.array([p.pos.lat for p in pings], dtype=np.float64),
        "lon": np.array([p.pos.lon for p in pings], dtype=np.float64),
    })


@numba.njit(cache=True)
def _medoid(phi, lam, cphi, i, j):
    # pairwise haversine sums, each pair evaluated once
    k = j - i
    sums = np.zeros(k)
    for a in range(k):
        pa, la, ca = phi[i + a], lam[i + a], cphi[i + a]
        for b in range(a + 1, k):
            h = (math.sin((phi[i + b] - pa) / 2.0) ** 2
                 + ca * cphi[i + b] * math.sin((lam[i + b] - la) / 2.0) ** 2)
            if h > 1.0:
                h = 1.0
            d = 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(h))
            sums[a] += d
            sums[b] += d
    best = 0
    for a in range(1, k):
        if sums[a] < sums[best]:
            best = a
    return i + best


@numba.njit(cache=True)
def _stop_kernel(t, lat, lon, seg_starts, seg_ends, radius_m, min_dwell_s):
    n = t.shape[0]
    first = np.empty(n, dtype=np.int64)
    last = np.empty(n, dtype=np.int64)
    medoid = np.empty(n, dtype=np.int64)
    phi = np.radians(lat)
    lam = np.radians(lon)
    cphi = np.cos(phi)
    k = 0
    for s in range(seg_starts.shape[0]):
        lo, hi = seg_starts[s], seg_ends[s]
        i = lo
        while i < hi:
            j = i + 1
            while j < hi and _haversine(lat[i], lon[i], lat[j], lon[j]) <= radius_m:
                j += 1
            if t[j - 1] - t[i] >= min_dwell_s:
                first[k] = i
                last[k] = j - 1
                medoid[k] = _medoid(phi, lam, cphi, i, j)
                k += 1
                i = j
            else:
                i += 1
    return first[:k], last[:k], medoid[:k]


def _segments(codes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if codes.shape[0] == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    change = np.flatnonzero(codes[1:] != codes[:-1]) + 1
    starts = np.concatenate([[0], change]).astype(np.int64)
    ends = np.concatenate([change, [codes.shape[0]]]).astype(np.int64)
    return starts, ends


def detect_stops_frame(pings: pd.DataFrame, radius_m: float = DEFAULT_RADIUS_M,
                       min_dwell_s: float = DEFAULT_MIN_DWELL_S,
                       presorted: bool = False) -> pd.DataFrame:
    """Anchor-based greedy staypoint detection over every device in ``pings``.

    Each device's pings must already be in nondecreasing time order when
    ``presorted`` is true; otherwise the frame is stably sorted by
    ``(device_id, t)`` first. Output is sorted by ``(device_id, t_start)``.
    """
    if len(pings) == 0:
        return pd.DataFrame({c: pd.Series(dtype=object if c in ("device_id", "geoid") else float)
                             for c in STOP_COLUMNS})
    if not presorted:
        pings = pings.sort_values(["device_id", "t"], kind="stable").reset_index(drop=True)
    dev = pings["device_id"].to_numpy()
    t = pings["t"].to_numpy(dtype=np.float64)
    codes = pd.factorize(dev)[0]
    starts, ends = _segments(codes)
    if presorted:
        if len(np.unique(codes[starts])) != len(starts):
            raise IngestError("pings of a device are not contiguous")
        dt = np.diff(t)
        same = codes[1:] == codes[:-1]
        if np.any(dt[same] < 0):
            raise IngestError("pings are not sorted by time")
    lat = pings["lat"].to_numpy(dtype=np.float64)
    lon = pings["lon"].to_numpy(dtype=np.float64)
    first, last, med = _stop_kernel(t, lat, lon, starts, ends, float(radius_m), float(min_dwell_s))
    return pd.DataFrame({
        "device_id": dev[first],
        "t_start": t[first],
        "t_end": t[last],
        "lat": lat[med],
        "lon": lon[med],
        "n_pings": (last - first + 1).astype(np.int64),
        "geoid": np.full(first.shape[0], None, dtype=object),
    })


def detect_stops(pings: Sequence[Ping], radius_m: float = DEFAULT_RADIUS_M,
                 min_dwell_s: float = DEFAULT_MIN_DWELL_S) -> list[Stop]:
    """Detect stops in one device's time-sorted pings."""
    if len(pings) == 0:
        return []
    ts = [p.t for p in pings]
    if any(b < a for a, b in zip(ts, ts[1:])):
        raise IngestError("pings are not sorted by time")
    if len({p.device_id for p in pings}) != 1:
        raise IngestError("detect_stops expects pings of a single device")
    frame = detect_stops_frame(pings_to_frame(pings), radius_m, min_dwell_s, presorted=True)
    return [Stop(r.device_id, r.t_start, r.t_end, GeoPoint(r.lat, r.lon))
            for r in frame.itertuples(index=False)]


def assign_geoids(stops: pd.DataFrame, tract_index: TractIndex) -> pd.DataFrame:
    stops = stops.copy()
    stops["geoid"] = tract_index.locate_many(stops["lat"].to_numpy(), stops["lon"].to_numpy())
    return stops


def _dates(t: np.ndarray, tz: str) -> np.ndarray:
    ts = pd.to_datetime(t, unit="s", utc=True)
    if tz not in ("UTC", "utc"):
        ts = ts.tz_convert(tz)
    days = ts.tz_localize(None).to_numpy().astype("datetime64[D]")
    return days.astype(str).astype(object)


def extract_trips_frame(stops: pd.DataFrame, tz: str = "UTC") -> tuple[pd.DataFrame, int]:
    """Pair consecutive stops of each device into trips.

    ``stops`` must be sorted by ``(device_id, t_start)``. Trips whose
    endpoints both lack a geoid are dropped; the drop count is returned.
    """
    if len(stops) < 2:
        return pd.DataFrame({c: pd.Series(dtype=object) for c in TRIP_COLUMNS}), 0
    dev = stops["device_id"].to_numpy()
    same = dev[1:] == dev[:-1]
    o = np.flatnonzero(same)
    d = o + 1
    geo = stops["geoid"].to_numpy(dtype=object)
    og, dg = geo[o], geo[d]
    both_missing = np.array([a is None and b is None for a, b in zip(og, dg)], dtype=bool)
    dropped = int(both_missing.sum())
    o, d, og, dg = o[~both_missing], d[~both_missing], og[~both_missing], dg[~both_missing]

    lat = stops["lat"].to_numpy(dtype=np.float64)
    lon = stops["lon"].to_numpy(dtype=np.float64)
    depart = stops["t_end"].to_numpy(dtype=np.float64)[o]
    arrive = stops["t_start"].to_numpy(dtype=np.float64)[d]
    trips = pd.DataFrame({
        "date": _dates(depart, tz),
        "device_id": dev[o],
        "o_geoid": og,
        "d_geoid": dg,
        "o_lat": lat[o], "o_lon": lon[o], "d_lat": lat[d], "d_lon": lon[d],
        "depart_t": depart,
        "arrive_t": arrive,
        "distance_m": haversine_array(lat[o], lon[o], lat[d], lon[d]),
        "duration_s": arrive - depart,
    })
    return trips, dropped


def extract_trips(stops: Sequence[Stop]) -> list[Trip]:
    """One trip per consecutive stop pair; pairs with no geoid at either end are dropped."""
    trips = []
    for a, b in zip(stops, stops[1:]):
        if a.t_end > b.t_start:
            raise IngestError("stops overlap in time")
        if a.geoid is None and b.geoid is None:
            continue
        trips.append(Trip(a.device_id, a, b))
    return trips


def trips_to_frame(trips: Sequence[Trip], tz: str = "UTC") -> pd.DataFrame:
    if not trips:
        return pd.DataFrame({c: pd.Series(dtype=object) for c in TRIP_COLUMNS})
    depart = np.array([tr.depart_t for tr in trips], dtype=np.float64)
    return pd.DataFrame({
        "date": _dates(depart, tz),
        "device_id": [tr.device_id for tr in trips],
        "o_geoid": [tr.origin.geoid for tr in trips],
        "d_geoid": [tr.dest.geoid for tr in trips],
        "o_lat": [tr.origin.pos.lat for tr in trips],
        "o_lon": [tr.origin.pos.lon for tr in trips],
        "d_lat": [tr.dest.pos.lat for tr in trips],
        "d_lon": [tr.dest.pos.lon for tr in trips],
        "depart_t": depart,
        "arrive_t": np.array([tr.arrive_t for tr in trips], dtype=np.float64),
        "distance_m": np.array([tr.distance_m for tr in trips], dtype=np.float64),
        "duration_s": np.array([tr.duration_s for tr in trips], dtype=np.float64),
    })
