"""Readers and writers for every delimited output file.

All writers emit ``\\n`` line endings, ``NA`` for undefined values and full
``repr`` float precision, so each file parses back to the frame it came
from.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable

import numpy as np
import pandas as pd

from .ingest import STOP_COLUMNS, TRIP_COLUMNS
from .micro import MICRO_COLUMNS

MOTIF_COLUMNS = ["date", "type", "count", "share", "share_ma7",
                 "median_avg_distance_m", "median_avg_volume"]
SERIES_COLUMNS = ["date", "value"]

_STR_COLS = {"date", "device_id", "geoid", "o_geoid", "d_geoid", "origin_geoid",
             "dest_geoid", "fips", "county", "metric", "pair", "source"}


def write_frame(frame: pd.DataFrame, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    frame.to_csv(tmp, index=False, na_rep="NA", lineterminator="\n")
    tmp.replace(path)
    return path


def read_frame(path, columns=None) -> pd.DataFrame:
    head = pd.read_csv(path, nrows=0)
    dtypes = {c: str for c in head.columns if c in _STR_COLS}
    frame = pd.read_csv(path, dtype=dtypes, na_values=["NA"], keep_default_na=False,
                        float_precision="round_trip")
    for c in dtypes:
        frame[c] = frame[c].astype(object).where(frame[c].notna(), None)
    if columns is not None:
        missing = [c for c in columns if c not in frame.columns]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        frame = frame[columns]
    return frame


def write_trips(trips: pd.DataFrame, path) -> Path:
    return write_frame(trips[TRIP_COLUMNS], path)


def read_trips(path) -> pd.DataFrame:
    return read_frame(path, TRIP_COLUMNS)


def write_stops(stops: pd.DataFrame, path) -> Path:
    cols = ["date"] + STOP_COLUMNS
    return write_frame(stops[cols], path)


def read_stops(path) -> pd.DataFrame:
    return read_frame(path, ["date"] + STOP_COLUMNS)


def write_json(obj, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def write_series(dates, values, path) -> Path:
    vals = [None if v is None or (isinstance(v, float) and np.isnan(v)) else v for v in values]
    return write_frame(pd.DataFrame({"date": list(dates), "value": pd.array(vals, dtype=object)}), path)


def read_series(path) -> pd.DataFrame:
    frame = read_frame(path, SERIES_COLUMNS)
    frame["value"] = frame["value"].astype(np.float64)
    return frame


def write_motifs(frame: pd.DataFrame, path) -> Path:
    return write_frame(frame[MOTIF_COLUMNS], path)


def read_motifs(path) -> pd.DataFrame:
    return read_frame(path, MOTIF_COLUMNS)


def write_micro(frame: pd.DataFrame, path) -> Path:
    return write_frame(frame[MICRO_COLUMNS], path)


def read_micro(path) -> pd.DataFrame:
    return read_frame(path, MICRO_COLUMNS)


def verdict_frame(verdicts: Iterable, county_names: dict, pair_keys: list[str]) -> pd.DataFrame:
    rows = []
    for v in verdicts:
        row = {"fips": v.county_fips, "county": county_names.get(v.county_fips, v.county_fips),
               "metric": v.metric_name, "pair": v.pair}
        for k in pair_keys:
            s = v.scores.get(k)
            row[f"score_{k}"] = None if s is None or (isinstance(s, float) and np.isnan(s)) else s
        row["tie_flag"] = int(bool(v.tie))
        rows.append(row)
    cols = ["fips", "county", "metric", "pair"] + [f"score_{k}" for k in pair_keys] + ["tie_flag"]
    return pd.DataFrame(rows, columns=cols)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, config_echo: dict) -> Path:
    """Digest every file under ``out_dir`` (except the manifest) into ``manifest.json``."""
    out_dir = Path(out_dir)
    files = {}
    for p in sorted(out_dir.rglob("*")):
        if p.is_file() and p.name != "manifest.json" and not p.name.endswith(".tmp"):
            files[p.relative_to(out_dir).as_posix()] = sha256_file(p)
    return write_json({"config": config_echo, "files": files}, out_dir / "manifest.json")
