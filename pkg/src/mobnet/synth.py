"""Synthetic multi-provider ping data over a square-grid county.

A world is a grid of square tracts with commuting devices. Work places are
drawn with a gravity-style kernel ``1 / (1 + d^2)`` (``d`` in km between
tract centroids). Each provider observes a fixed random device panel and
emits noisy, thinned pings along every observed device's daily schedule.
Everything is a pure function of the seeds.
"""

from __future__ import annotations

import datetime as dt
import gzip
import json
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .geodata import haversine_array

STATE_FIPS = "99"  # not a real state, keeps synthetic geoids recognizable
ORIGIN_LAT = 42.30
ORIGIN_LON = -83.30
TRACT_DEG = 0.01
SPEED_MPS = 8.0
MIN_SEPARATION_M = 300.0
TRUTH_COLUMNS = ["date", "device_id", "o_geoid", "d_geoid", "depart_t", "arrive_t"]


@dataclass(frozen=True)
class ProviderProfile:
    name: str
    penetration: float
    ping_interval_s: float
    noise_sigma_m: float = 0.0
    dropout_p: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.penetration <= 1.0):
            raise ValueError("penetration must be in (0, 1]")
        if self.ping_interval_s <= 0:
            raise ValueError("ping_interval_s must be positive")
        if self.noise_sigma_m < 0:
            raise ValueError("noise_sigma_m must be >= 0")
        if not (0.0 <= self.dropout_p < 1.0):
            raise ValueError("dropout_p must be in [0, 1)")

    @property
    def key(self) -> int:
        return zlib.crc32(self.name.encode("utf-8"))


DEFAULT_PROFILES = (
    ProviderProfile("S", 0.20, 300.0, 10.0, 0.05),
    ProviderProfile("X", 0.15, 600.0, 35.0, 0.15),
    ProviderProfile("V", 0.05, 300.0, 10.0, 0.05),
)


@dataclass
class SyntheticWorld:
    n_side: int
    n_counties: int
    seed: int
    geoids: list[str]           # row-major over the grid
    county_of: list[str]
    home: np.ndarray            # tract index per device
    work: np.ndarray
    home_pt: np.ndarray         # (n_devices, 2) lat/lon
    work_pt: np.ndarray
    depart_mean_s: np.ndarray
    work_dwell_s: np.ndarray
    leisure_p: np.ndarray

    @property
    def n_devices(self) -> int:
        return int(self.home.shape[0])

    @property
    def counties(self) -> list[str]:
        return sorted(set(self.county_of))

    def device_id(self, k: int) -> str:
        return f"d{k:06d}"

    def tract_bounds(self, i: int) -> tuple[float, float, float, float]:
        """``(lat0, lon0, lat1, lon1)`` of tract ``i``."""
        r, c = divmod(i, self.n_side)
        lat0 = ORIGIN_LAT + r * TRACT_DEG
        lon0 = ORIGIN_LON + c * TRACT_DEG
        return lat0, lon0, lat0 + TRACT_DEG, lon0 + TRACT_DEG

    def centroids(self) -> np.ndarray:
        b = np.array([self.tract_bounds(i) for i in range(len(self.geoids))])
        return np.column_stack([(b[:, 0] + b[:, 2]) / 2, (b[:, 1] + b[:, 3]) / 2])

    def geojson(self, county: Optional[str] = None) -> dict:
        feats = []
        for i, g in enumerate(self.geoids):
            if county is not None and self.county_of[i] != county:
                continue
            lat0, lon0, lat1, lon1 = self.tract_bounds(i)
            ring = [[lon0, lat0], [lon1, lat0], [lon1, lat1], [lon0, lat1], [lon0, lat0]]
            feats.append({"type": "Feature", "properties": {"GEOID": g},
                          "geometry": {"type": "Polygon", "coordinates": [ring]}})
        return {"type": "FeatureCollection", "features": feats}

    def to_json(self) -> bytes:
        doc = {
            "n_side": self.n_side, "n_counties": self.n_counties, "seed": self.seed,
            "geoids": self.geoids, "county_of": self.county_of,
            "home": self.home.tolist(), "work": self.work.tolist(),
            "home_pt": self.home_pt.tolist(), "work_pt": self.work_pt.tolist(),
            "depart_mean_s": self.depart_mean_s.tolist(),
            "work_dwell_s": self.work_dwell_s.tolist(),
            "leisure_p": self.leisure_p.tolist(),
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")

    @classmethod
    def from_json(cls, data) -> "SyntheticWorld":
        d = json.loads(data)
        return cls(d["n_side"], d["n_counties"], d["seed"], d["geoids"], d["county_of"],
                   np.array(d["home"], dtype=np.int64), np.array(d["work"], dtype=np.int64),
                   np.array(d["home_pt"]), np.array(d["work_pt"]),
                   np.array(d["depart_mean_s"]), np.array(d["work_dwell_s"]),
                   np.array(d["leisure_p"]))


def gravity_kernel(centroids: np.ndarray) -> np.ndarray:
    """Row-normalized ``1 / (1 + d_km^2)`` choice probabilities between tracts."""
    lat, lon = centroids[:, 0], centroids[:, 1]
    d = haversine_array(lat[:, None], lon[:, None], lat[None, :], lon[None, :]) / 1000.0
    k = 1.0 / (1.0 + d * d)
    return k / k.sum(axis=1, keepdims=True)


def _point_in_tract(world_bounds, idx, rng, margin=0.15):
    lat0, lon0, lat1, lon1 = world_bounds(idx)
    u = rng.uniform(margin, 1.0 - margin, size=2)
    return np.array([lat0 + u[0] * (lat1 - lat0), lon0 + u[1] * (lon1 - lon0)])


def _separated_point(bounds, idx, rng, avoid: Sequence[np.ndarray]):
    # resample until far enough from every point in ``avoid``
    for _ in range(100):
        p = _point_in_tract(bounds, idx, rng)
        if all(haversine_array(p[0], p[1], q[0], q[1]) >= MIN_SEPARATION_M for q in avoid):
            return p
    raise RuntimeError("could not place a separated point")


def generate_world(n_tracts_side: int, n_devices: int, seed: int,
                   n_counties: int = 1) -> SyntheticWorld:
    """Square grid of tracts split into vertical county strips, plus commuters."""
    if n_tracts_side < 2:
        raise ValueError("n_tracts_side must be >= 2")
    if n_devices < 1:
        raise ValueError("n_devices must be >= 1")
    if not (1 <= n_counties <= n_tracts_side):
        raise ValueError("n_counties must be between 1 and n_tracts_side")
    n = n_tracts_side
    geoids, county_of = [], []
    for r in range(n):
        for c in range(n):
            county = f"{STATE_FIPS}{2 * (c * n_counties // n) + 1:03d}"
            county_of.append(county)
            geoids.append(f"{county}{r:03d}{c:03d}")

    rng = np.random.default_rng([seed, 0])
    stub = SyntheticWorld(n, n_counties, seed, geoids, county_of, *([np.empty(0)] * 7))
    probs = gravity_kernel(stub.centroids())
    cum = np.cumsum(probs, axis=1)
    cum[:, -1] = 1.0

    home = rng.integers(0, n * n, size=n_devices)
    work = np.array([int(np.searchsorted(cum[h], u, side="right"))
                     for h, u in zip(home, rng.random(n_devices))], dtype=np.int64)
    home_pt = np.empty((n_devices, 2))
    work_pt = np.empty((n_devices, 2))
    for k in range(n_devices):
        home_pt[k] = _point_in_tract(stub.tract_bounds, home[k], rng)
        work_pt[k] = _separated_point(stub.tract_bounds, work[k], rng, [home_pt[k]])
    depart_mean = rng.uniform(6.5, 9.0, size=n_devices) * 3600.0
    work_dwell = rng.uniform(6.0, 9.5, size=n_devices) * 3600.0
    leisure_p = rng.uniform(0.1, 0.5, size=n_devices)
    return SyntheticWorld(n, n_counties, seed, geoids, county_of, home.astype(np.int64), work,
                          home_pt, work_pt, depart_mean, work_dwell, leisure_p)


def _day_start(date: str) -> int:
    d = dt.date.fromisoformat(date)
    return int(dt.datetime(d.year, d.month, d.day, tzinfo=dt.timezone.utc).timestamp())


def _travel_s(p, q) -> int:
    d = float(haversine_array(p[0], p[1], q[0], q[1]))
    return int(round(120.0 + d / SPEED_MPS))


def device_day_schedule(world: SyntheticWorld, k: int, day_index: int, date: str,
                        _kernel_cum: Optional[np.ndarray] = None):
    """Stays of device ``k`` on one day as ``[(t_arrive, t_leave, (lat, lon), tract)]``.

    Times are unix seconds. The first stay starts at midnight and the last
    ends at the next midnight.
    """
    rng = np.random.default_rng([world.seed, 1, k, day_index])
    t0 = _day_start(date)
    weekend = dt.date.fromisoformat(date).weekday() >= 5
    home_pt = world.home_pt[k]
    stays = []
    cur_pt, cur_tract, cur_start = home_pt, int(world.home[k]), t0

    goes_to_work = (not weekend) or rng.random() < 0.3
    leisure = rng.random() < (min(0.9, world.leisure_p[k] * 2) if weekend else world.leisure_p[k])
    leave = t0 + int(np.clip(world.depart_mean_s[k] + rng.normal(0, 1800), 5 * 3600, 10 * 3600))

    if goes_to_work:
        stays.append((cur_start, leave, cur_pt, cur_tract))
        arrive = leave + _travel_s(cur_pt, world.work_pt[k])
        dwell = int(np.clip(world.work_dwell_s[k] + rng.normal(0, 1200), 2 * 3600, 10 * 3600))
        cur_pt, cur_tract, cur_start, leave = world.work_pt[k], int(world.work[k]), arrive, arrive + dwell
    if leisure:
        if _kernel_cum is None:
            _kernel_cum = np.cumsum(gravity_kernel(world.centroids()), axis=1)
        home_tract = int(world.home[k])
        dest = int(np.searchsorted(_kernel_cum[home_tract], rng.random() * _kernel_cum[home_tract, -1],
                                   side="right"))
        dest = min(dest, len(world.geoids) - 1)
        pt = _separated_point(world.tract_bounds, dest, rng, [home_pt, cur_pt])
        if not goes_to_work:
            leave = t0 + int(rng.uniform(10, 16) * 3600)
        stays.append((cur_start, leave, cur_pt, cur_tract))
        arrive = leave + _travel_s(cur_pt, pt)
        dwell = int(rng.uniform(30, 90) * 60)
        cur_pt, cur_tract, cur_start, leave = pt, dest, arrive, arrive + dwell
    if goes_to_work or leisure:
        stays.append((cur_start, leave, cur_pt, cur_tract))
        arrive = leave + _travel_s(cur_pt, home_pt)
        cur_pt, cur_tract, cur_start = home_pt, int(world.home[k]), arrive
    stays.append((cur_start, t0 + 86400, cur_pt, cur_tract))
    return stays


def _panel(world: SyntheticWorld, profile: ProviderProfile, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, profile.key, 0])
    return np.flatnonzero(rng.random(world.n_devices) < profile.penetration)


def observed_devices(world: SyntheticWorld, profile: ProviderProfile, seed: int) -> list[str]:
    return [world.device_id(k) for k in _panel(world, profile, seed)]


def _device_day_pings(stays, profile: ProviderProfile, rng: np.random.Generator):
    t0 = stays[0][0]
    t_end = stays[-1][1]
    mean = profile.ping_interval_s
    n_guess = int((t_end - t0) / mean * 1.3) + 16
    gaps = rng.exponential(mean, size=n_guess)
    times = t0 + np.cumsum(gaps)
    while times[-1] < t_end:
        times = np.concatenate([times, times[-1] + np.cumsum(rng.exponential(mean, size=n_guess))])
    times = np.floor(times[times < t_end])
    # one ping at each arrival and departure
    trans = np.array([s[0] for s in stays[1:]] + [s[1] for s in stays[:-1]], dtype=np.float64)
    times = np.sort(np.concatenate([times, trans]), kind="stable")

    kt = []
    klat = []
    klon = []
    for a, b, p, _ in stays:
        kt += [a, b]
        klat += [p[0], p[0]]
        klon += [p[1], p[1]]
    kt = np.array(kt, dtype=np.float64)
    lat = np.interp(times, kt, klat)
    lon = np.interp(times, kt, klon)

    keep = rng.random(times.shape[0]) >= profile.dropout_p
    if profile.noise_sigma_m > 0:
        noise = rng.normal(0.0, profile.noise_sigma_m, size=(times.shape[0], 2))
        lat = lat + noise[:, 0] / 111_194.93
        lon = lon + noise[:, 1] / (111_194.93 * np.cos(np.radians(lat)))
    return times[keep], lat[keep], lon[keep]


def truth_trips(world: SyntheticWorld, schedules: dict, date: str,
                devices: Optional[Sequence[int]] = None) -> pd.DataFrame:
    rows = []
    for k in (devices if devices is not None else sorted(schedules)):
        stays = schedules[k]
        for s, e in zip(stays, stays[1:]):
            rows.append((date, world.device_id(k), world.geoids[s[3]], world.geoids[e[3]],
                         int(s[1]), int(e[0])))
    return pd.DataFrame(rows, columns=TRUTH_COLUMNS)


def day_schedules(world: SyntheticWorld, date: str, day_index: int) -> dict:
    cum = np.cumsum(gravity_kernel(world.centroids()), axis=1)
    return {k: device_day_schedule(world, k, day_index, date, cum) for k in range(world.n_devices)}


def emit_day(world: SyntheticWorld, profile: ProviderProfile, date: str, day_index: int,
             seed: int, schedules: Optional[dict] = None) -> pd.DataFrame:
    """Pings of one provider for one day, sorted by device then time."""
    if schedules is None:
        schedules = day_schedules(world, date, day_index)
    ids, ts, lats, lons = [], [], [], []
    for k in _panel(world, profile, seed):
        rng = np.random.default_rng([seed, profile.key, 1, int(k), day_index])
        t, lat, lon = _device_day_pings(schedules[int(k)], profile, rng)
        ids.append(np.full(t.shape[0], world.device_id(int(k)), dtype=object))
        ts.append(t)
        lats.append(lat)
        lons.append(lon)
    if not ids:
        return pd.DataFrame({"device_id": pd.Series(dtype=object),
                             "timestamp": pd.Series(dtype=np.int64),
                             "lat": pd.Series(dtype=float), "lon": pd.Series(dtype=float)})
    return pd.DataFrame({"device_id": np.concatenate(ids),
                         "timestamp": np.concatenate(ts).astype(np.int64),
                         "lat": np.concatenate(lats), "lon": np.concatenate(lons)})


def write_pings(frame: pd.DataFrame, path: Path):
    """Write pings with 6-decimal coordinates (about 0.1 m)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = zip(frame["device_id"].tolist(), frame["timestamp"].tolist(),
               frame["lat"].tolist(), frame["lon"].tolist())
    text = "device_id,timestamp,lat,lon\n" + "".join(
        f"{d},{t},{a:.6f},{o:.6f}\n" for d, t, a, o in rows)
    data = text.encode("utf-8")
    if path.suffix == ".gz":
        data = gzip.compress(data, mtime=0)
    path.write_bytes(data)


def date_range(start: str, n_days: int) -> list[str]:
    d0 = dt.date.fromisoformat(start)
    return [(d0 + dt.timedelta(days=i)).isoformat() for i in range(n_days)]


def emit_pings(world: SyntheticWorld, profiles: Sequence[ProviderProfile], dates: Sequence[str],
               seed: int, out_dir, compress: bool = False) -> dict:
    """Write one ping file per provider per day plus ground-truth trips.

    Layout under ``out_dir``::

        world.json, tracts.geojson, tracts_<county>.geojson
        truth_trips.csv
        <provider>/<date>.csv[.gz], <provider>/devices.csv

    Returns a mapping of provider name to its ping directory.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "world.json").write_bytes(world.to_json())
    (out / "tracts.geojson").write_text(json.dumps(world.geojson(), sort_keys=True))
    for c in world.counties:
        (out / f"tracts_{c}.geojson").write_text(json.dumps(world.geojson(c), sort_keys=True))
    dirs = {}
    for p in profiles:
        d = out / p.name
        d.mkdir(parents=True, exist_ok=True)
        pd.DataFrame({"device_id": observed_devices(world, p, seed)}).to_csv(
            d / "devices.csv", index=False, lineterminator="\n")
        dirs[p.name] = d
    truth = []
    suffix = ".csv.gz" if compress else ".csv"
    for i, date in enumerate(dates):
        sched = day_schedules(world, date, i)
        truth.append(truth_trips(world, sched, date))
        for p in profiles:
            write_pings(emit_day(world, p, date, i, seed, sched), dirs[p.name] / f"{date}{suffix}")
    pd.concat(truth, ignore_index=True).to_csv(out / "truth_trips.csv", index=False,
                                               lineterminator="\n")
    return dirs
