"""End-to-end orchestration behind the command-line subcommands.

Output layout under ``config.output_dir``::

    trips/<source>/<fips>/<date>.csv        stops/<source>/<fips>/<date>.csv
    diagnostics/<source>/<fips>/<date>.json networks/<source>/<fips>.csv
    macro/<source>/<fips>/<metric>.csv      motifs/<source>/<fips>.csv
    micro/<source>/<fips>.csv               compare/*.csv, figures/*.csv
    report.md                               manifest.json

Work items fan out to a thread pool; every output file has exactly one
writer and results are gathered in a fixed order, so outputs do not depend
on the thread count.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable

import numba
import numpy as np
import pandas as pd

from . import io
from .config import ConfigError, RunConfig
from .geodata import GeodataError, TractIndex, load_tracts
from .ingest import assign_geoids, detect_stops_frame, extract_trips_frame, parse_pings, _dates
from .macro import MACRO_METRICS, TABLE_METRICS, macro_record
from .micro import MICRO_METRICS, micro_metrics, rank_tracts
from .motifs import N_TYPES, moving_average_7d, motif_attributes, motif_census, sample_census
from .network import MobilityNetwork, build_daily_network, network_size_summary, parse_networks, serialize_networks
from .similarity import (MissingSourceError, SimilarityError, SimilarityVerdict, closest_pair,
                         dtw, euclidean, mape, pair_labels, pearson)

logger = logging.getLogger(__name__)


class DataError(RuntimeError):
    pass


def _pmap(fn: Callable, items: list, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _set_threads(config: RunConfig):
    numba.set_num_threads(max(1, min(config.n_threads, numba.config.NUMBA_NUM_THREADS)))


def load_indexes(config: RunConfig) -> dict[str, TractIndex]:
    out = {}
    for c in config.counties:
        try:
            out[c.fips] = load_tracts(Path(c.tracts).read_bytes())
        except OSError as exc:
            raise DataError(f"county {c.fips}: cannot read tracts {c.tracts}: {exc}") from exc
        except (GeodataError, ValueError) as exc:
            raise DataError(f"county {c.fips}: invalid tracts {c.tracts}: {exc}") from exc
    return out


# ---------------------------------------------------------------- ingest

def _ingest_item(config: RunConfig, indexes, item) -> list[dict]:
    source, date, path, fips_list = item
    out = config.output_dir
    try:
        pings, report = parse_pings(path)
    except OSError as exc:
        raise DataError(f"source {source}, {date}: cannot read {path}: {exc}") from exc
    if report.accepted == 0:
        logger.warning("source %s %s: no accepted rows in %s", source, date, path)
    stops = detect_stops_frame(pings, config.stops["radius_m"], config.stops["min_dwell_s"])
    tz = config.stops["timezone"]
    results = []
    for fips in fips_list:
        st = assign_geoids(stops, indexes[fips])
        trips, dropped = extract_trips_frame(st, tz)
        st = st.assign(date=_dates(st["t_start"].to_numpy(dtype=np.float64), tz) if len(st) else [])
        io.write_trips(trips, out / "trips" / source / fips / f"{date}.csv")
        io.write_stops(st, out / "stops" / source / fips / f"{date}.csv")
        diag = {"source": source, "county": fips, "date": date, "path": str(path),
                "accepted": report.accepted, "rejected": report.rejected,
                "rejected_rows": [{"line": n, "reason": r} for n, r in report.errors[:100]],
                "stops": int(len(st)), "trips": int(len(trips)), "dropped_no_geoid": dropped}
        io.write_json(diag, out / "diagnostics" / source / fips / f"{date}.json")
        results.append(diag)
    return results


def cmd_ingest(config: RunConfig) -> dict:
    """Parse ping files, detect stops and write trip stores per (source, county, date)."""
    _set_threads(config)
    indexes = load_indexes(config)
    groups: dict[tuple, list[str]] = defaultdict(list)
    missing = []
    for c in config.counties:
        for source in c.pings:
            for date in config.dates:
                p = config.ping_path(c, source, date)
                if p is None:
                    missing.append({"source": source, "county": c.fips, "date": date})
                    continue
                groups[(source, date, str(p))].append(c.fips)
    items = [(s, d, Path(p), sorted(f)) for (s, d, p), f in sorted(groups.items())]
    results = _pmap(lambda it: _ingest_item(config, indexes, it), items, config.n_threads)
    for m in missing:
        logger.warning("no ping file for source %s county %s date %s", m["source"], m["county"], m["date"])
    summary = {"items": [d for r in results for d in r], "missing": missing}
    io.write_json({"missing": missing,
                   "accepted": sum(d["accepted"] for r in results for d in r),
                   "rejected": sum(d["rejected"] for r in results for d in r)},
                  config.output_dir / "diagnostics" / "summary.json")
    io.write_manifest(config.output_dir, config.echo())
    return summary


# ---------------------------------------------------------------- networks

def _load_store(out: Path, kind: str, source: str, fips: str) -> pd.DataFrame:
    d = out / kind / source / fips
    files = sorted(d.glob("*.csv")) if d.exists() else []
    reader = io.read_trips if kind == "trips" else io.read_stops
    frames = [reader(p) for p in files]
    frames = [f for f in frames if len(f)]
    if not frames:
        return reader_empty(kind)
    return pd.concat(frames, ignore_index=True)


def reader_empty(kind: str) -> pd.DataFrame:
    from .ingest import STOP_COLUMNS, TRIP_COLUMNS
    cols = TRIP_COLUMNS if kind == "trips" else ["date"] + STOP_COLUMNS
    return pd.DataFrame({c: pd.Series(dtype=object) for c in cols})


def _networks_for(config: RunConfig, index: TractIndex, source: str, fips: str) -> list[MobilityNetwork]:
    trips = _load_store(config.output_dir, "trips", source, fips)
    by_date = {d: g for d, g in trips.groupby("date", sort=True)} if len(trips) else {}
    empty = reader_empty("trips")
    return [build_daily_network(by_date.get(d, empty), fips, d, index) for d in config.dates]


def cmd_build_network(config: RunConfig) -> dict:
    _set_threads(config)
    indexes = load_indexes(config)
    items = [(s, c.fips) for c in config.counties for s in c.pings]

    def work(item):
        source, fips = item
        nets = _networks_for(config, indexes[fips], source, fips)
        path = config.output_dir / "networks" / source / f"{fips}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(serialize_networks(nets))
        return item, nets

    out = dict(_pmap(work, items, config.n_threads))
    io.write_manifest(config.output_dir, config.echo())
    return out


def _load_networks(config: RunConfig, indexes, source: str, fips: str) -> list[MobilityNetwork]:
    path = config.output_dir / "networks" / source / f"{fips}.csv"
    if path.exists():
        nets = {n.date: n for n in parse_networks(path.read_text(), fips, indexes[fips])}
        return [nets.get(d) or MobilityNetwork(fips, d, (), {}) for d in config.dates]
    return _networks_for(config, indexes[fips], source, fips)


# ---------------------------------------------------------------- analyze

def _motif_rows(config: RunConfig, net: MobilityNetwork) -> list[dict]:
    opts = config.motifs
    rows = []
    if net.n_nodes < 4:
        return [{"date": net.date, "type": t, "count": None, "share": None,
                 "median_avg_distance_m": None, "median_avg_volume": None} for t in range(N_TYPES)]
    if opts["mode"] == "sample":
        census = sample_census(net, int(opts["n_samples"]), int(opts["seed"]), volume=opts["volume"])
    else:
        census = motif_attributes(net, motif_census(net), int(opts["median_threshold"]), opts["volume"])
    for t in range(N_TYPES):
        d = census.median_avg_distance_m[t]
        v = census.median_avg_volume[t]
        rows.append({"date": net.date, "type": t, "count": int(census.counts[t]),
                     "share": float(census.shares[t]),
                     "median_avg_distance_m": None if np.isnan(d) else float(d),
                     "median_avg_volume": None if np.isnan(v) else float(v)})
    return rows


def _analyze_macro(config, indexes, source, fips):
    nets = _load_networks(config, indexes, source, fips)
    records = [macro_record(n) for n in nets]
    base = config.output_dir / "macro" / source / fips
    for metric in MACRO_METRICS:
        io.write_series(config.dates, [getattr(r, metric) for r in records], base / f"{metric}.csv")
    return records


def _analyze_motif(config, indexes, source, fips):
    nets = _load_networks(config, indexes, source, fips)
    rows = [r for n in nets for r in _motif_rows(config, n)]
    frame = pd.DataFrame(rows)
    frame["share_ma7"] = None
    for t in range(N_TYPES):
        sel = frame["type"] == t
        shares = frame.loc[sel, "share"].astype(np.float64).to_numpy()
        ma = moving_average_7d(shares)
        frame.loc[sel, "share_ma7"] = [None if np.isnan(x) else float(x) for x in ma]
    frame = frame.sort_values(["date", "type"], kind="stable").reset_index(drop=True)
    for c in ("count",):
        frame[c] = frame[c].astype(object)
    io.write_motifs(frame, config.output_dir / "motifs" / source / f"{fips}.csv")
    return frame


def _analyze_micro(config, indexes, source, fips):
    trips = _load_store(config.output_dir, "trips", source, fips)
    stops = _load_store(config.output_dir, "stops", source, fips)
    geoids = indexes[fips].geoids
    t_by = {d: g for d, g in trips.groupby("date", sort=True)} if len(trips) else {}
    s_by = {d: g for d, g in stops.groupby("date", sort=True)} if len(stops) else {}
    frames = []
    for d in config.dates:
        if d not in t_by:
            continue
        frames.append(micro_metrics(t_by[d], s_by.get(d, reader_empty("stops")), d, geoids))
    frames = [f for f in frames if len(f)]
    frame = pd.concat(frames, ignore_index=True) if frames else micro_metrics(reader_empty("trips"), reader_empty("stops"), "")
    io.write_micro(frame, config.output_dir / "micro" / source / f"{fips}.csv")
    return frame


_SCALES = {"macro": _analyze_macro, "motif": _analyze_motif, "micro": _analyze_micro}


def cmd_analyze(config: RunConfig, scale: str) -> dict:
    if scale not in _SCALES:
        raise ConfigError(f"scale must be one of {sorted(_SCALES)}")
    _set_threads(config)
    indexes = load_indexes(config)
    fn = _SCALES[scale]
    items = [(s, c.fips) for c in config.counties for s in c.pings]
    results = _pmap(lambda it: (it, fn(config, indexes, *it)), items, config.n_threads)
    io.write_manifest(config.output_dir, config.echo())
    return dict(results)


# ---------------------------------------------------------------- compare

def _safe_verdict(series: dict, method: str, fips: str, metric: str, **kw) -> SimilarityVerdict:
    try:
        return closest_pair(series, method, county_fips=fips, metric_name=metric, **kw)
    except MissingSourceError as exc:
        logger.warning("county %s metric %s: %s", fips, metric, exc)
        return SimilarityVerdict(fips, metric, "n/a", {a + b: None for a, b in pair_labels(list(series))},
                                 missing={exc.source: len(series[exc.source])})


def _pair_scores(series: dict, mape_mode: str) -> list[dict]:
    rows = []
    for a, b in pair_labels(list(series)):
        x, y = series[a], series[b]
        row = {"pair": a + b}
        for name, fn in (("dtw", dtw), ("euclidean", euclidean),
                         ("mape", lambda p, q: mape(p, q, mape_mode)), ("pearson", pearson)):
            try:
                row[name] = fn(x, y)
            except SimilarityError:
                row[name] = None
        row["missing_" + a] = int(np.isnan(x).sum())
        row["missing_" + b] = int(np.isnan(y).sum())
        rows.append(row)
    return rows


def cmd_compare(config: RunConfig) -> dict:
    """Cross-source verdict tables and figure data."""
    sources = config.sources
    if len(sources) < 2:
        raise ConfigError("compare needs at least two sources")
    indexes = load_indexes(config)
    out = config.output_dir
    names = {c.fips: c.name for c in config.counties}
    keys = [a + b for a, b in pair_labels(sources)]
    sim = config.similarity

    macro_v, detail = [], []
    motif_v, micro_v = [], []
    for c in config.counties:
        srcs = [s for s in sources if s in c.pings]
        # macro
        for metric in MACRO_METRICS:
            series = {}
            for s in srcs:
                p = out / "macro" / s / c.fips / f"{metric}.csv"
                if not p.exists():
                    raise DataError(f"missing macro output {p}; run analyze --scale macro")
                series[s] = io.read_series(p)["value"].to_numpy()
            macro_v.append(_safe_verdict(series, "dtw-min", c.fips, metric))
            for row in _pair_scores(series, sim["mape_mode"]):
                detail.append({"fips": c.fips, "metric": metric, **row})

        # motifs
        frames = {}
        for s in srcs:
            p = out / "motifs" / s / f"{c.fips}.csv"
            if not p.exists():
                raise DataError(f"missing motif output {p}; run analyze --scale motif")
            frames[s] = io.read_motifs(p)
        for t in range(1, N_TYPES):
            series = {s: f.loc[f["type"] == t, "share_ma7"].astype(np.float64).to_numpy()
                      for s, f in frames.items()}
            motif_v.append(_safe_verdict(series, "dtw-min", c.fips, f"motif{t}_share_ma7"))
        fig = pd.concat([f.assign(source=s) for s, f in frames.items()], ignore_index=True)
        fig = fig[["source", "date", "type", "share", "share_ma7",
                   "median_avg_distance_m", "median_avg_volume"]]
        fig = fig.sort_values(["source", "date", "type"], kind="stable")
        io.write_frame(fig[["source", "date", "type", "share", "share_ma7"]],
                       out / "figures" / f"motif_shares_{c.fips}.csv")
        io.write_frame(fig[["source", "date", "type", "median_avg_distance_m"]],
                       out / "figures" / f"motif_distance_{c.fips}.csv")
        io.write_frame(fig[["source", "date", "type", "median_avg_volume"]],
                       out / "figures" / f"motif_volume_{c.fips}.csv")

        # micro
        geoids = indexes[c.fips].geoids
        micro = {}
        for s in srcs:
            p = out / "micro" / s / f"{c.fips}.csv"
            if not p.exists():
                raise DataError(f"missing micro output {p}; run analyze --scale micro")
            micro[s] = io.read_micro(p)
        for metric in MICRO_METRICS:
            ranks = {}
            for s, f in micro.items():
                by_date = {d: g for d, g in f.groupby("date", sort=True)}
                rows = []
                for d in config.dates:
                    g = by_date.get(d)
                    if g is None or g.empty:
                        rows.append(np.full(len(geoids), np.nan))
                    else:
                        rows.append(rank_tracts(dict(zip(g["geoid"], g[metric].astype(float))), geoids))
                ranks[s] = np.vstack(rows)
            micro_v.append(_safe_verdict(ranks, "cosine-max", c.fips, metric,
                                         reduction=sim["cosine_reduction"]))

    table2 = io.verdict_frame([v for v in macro_v if v.metric_name in TABLE_METRICS], names, keys)
    io.write_frame(table2, out / "compare" / "macro_verdicts.csv")
    io.write_frame(io.verdict_frame(macro_v, names, keys), out / "compare" / "macro_verdicts_all.csv")
    io.write_frame(pd.DataFrame(detail), out / "compare" / "macro_pair_scores.csv")
    io.write_frame(io.verdict_frame(motif_v, names, keys), out / "compare" / "motif_verdicts.csv")
    io.write_frame(io.verdict_frame(micro_v, names, keys), out / "compare" / "micro_verdicts.csv")

    macro_fig = []
    for c in config.counties:
        for s in sources:
            if s not in c.pings:
                continue
            for metric in MACRO_METRICS:
                f = io.read_series(out / "macro" / s / c.fips / f"{metric}.csv")
                macro_fig.append(f.assign(fips=c.fips, source=s, metric=metric))
    io.write_frame(pd.concat(macro_fig, ignore_index=True)[["fips", "source", "metric", "date", "value"]],
                   out / "figures" / "macro_series.csv")
    io.write_manifest(out, config.echo())
    return {"macro": macro_v, "motif": motif_v, "micro": micro_v}


# ---------------------------------------------------------------- report

def cmd_report(config: RunConfig) -> Path:
    """Network-size table plus the verdict tables rendered as Markdown."""
    indexes = load_indexes(config)
    out = config.output_dir
    rows = []
    for c in config.counties:
        for s in c.pings:
            nets = _load_networks(config, indexes, s, c.fips)
            size = network_size_summary(nets)
            rows.append({"fips": c.fips, "county": c.name, "source": s,
                         "mean_nodes": f"{size.mean_nodes:.2f}", "mean_edges": f"{size.mean_edges:.2f}"})
    sizes = pd.DataFrame(rows)
    io.write_frame(sizes, out / "compare" / "network_size.csv")

    lines = ["# Mobility network comparison", "", "## Network size (mean over days)", ""]
    lines += _md_table(sizes)
    for title, name in (("Macroscopic verdicts (DTW, smallest wins)", "macro_verdicts.csv"),
                        ("Motif share verdicts (DTW on 7-day average)", "motif_verdicts.csv"),
                        ("Microscopic verdicts (cosine of tract ranks, largest wins)", "micro_verdicts.csv")):
        p = out / "compare" / name
        if p.exists():
            lines += ["", f"## {title}", ""]
            lines += _md_table(io.read_frame(p))
    path = out / "report.md"
    path.write_text("\n".join(lines) + "\n")
    io.write_manifest(out, config.echo())
    return path


def _md_table(frame: pd.DataFrame) -> list[str]:
    def fmt(x):
        if x is None or (isinstance(x, float) and math.isnan(x)):
            return "NA"
        if isinstance(x, float):
            return f"{x:.6g}"
        return str(x)

    head = "| " + " | ".join(frame.columns) + " |"
    sep = "|" + "|".join("---" for _ in frame.columns) + "|"
    body = ["| " + " | ".join(fmt(v) for v in row) + " |" for row in frame.itertuples(index=False)]
    return [head, sep] + body


def run_all(config: RunConfig) -> dict:
    cmd_ingest(config)
    cmd_build_network(config)
    for scale in ("macro", "motif", "micro"):
        cmd_analyze(config, scale)
    verdicts = cmd_compare(config) if len(config.sources) >= 2 else {}
    cmd_report(config)
    return verdicts
