"""Run configuration: one YAML (or JSON) document with explicit defaults."""

from __future__ import annotations

import copy
import datetime as dt
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

OUTPUT_ENV = "MOBNET_OUTPUT_DIR"

DEFAULTS = {
    "stops": {"radius_m": 100.0, "min_dwell_s": 300.0, "timezone": "UTC"},
    "motifs": {"mode": "exact", "n_samples": 100000, "seed": 7,
               "median_threshold": 10_000_000, "volume": "mean"},
    "similarity": {"mape_mode": "symmetric", "cosine_reduction": "mean"},
    "threads": 0,
    "output_dir": "mobnet-out",
}


class ConfigError(ValueError):
    pass


@dataclass
class County:
    fips: str
    name: str
    tracts: Path
    pings: dict[str, str]  # source label -> directory or "{date}" template


@dataclass
class RunConfig:
    counties: list[County]
    dates: list[str]
    stops: dict = field(default_factory=lambda: dict(DEFAULTS["stops"]))
    motifs: dict = field(default_factory=lambda: dict(DEFAULTS["motifs"]))
    similarity: dict = field(default_factory=lambda: dict(DEFAULTS["similarity"]))
    threads: int = 0
    output_dir: Path = Path(DEFAULTS["output_dir"])
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def sources(self) -> list[str]:
        seen = []
        for c in self.counties:
            for s in c.pings:
                if s not in seen:
                    seen.append(s)
        return seen

    @property
    def n_threads(self) -> int:
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)

    def county(self, fips: str) -> County:
        for c in self.counties:
            if c.fips == fips:
                return c
        raise KeyError(fips)

    def ping_path(self, county: County, source: str, date: str) -> Optional[Path]:
        spec = county.pings[source]
        if "{date}" in spec:
            p = Path(spec.format(date=date))
            return p if p.exists() else None
        for suffix in (".csv", ".csv.gz"):
            p = Path(spec) / f"{date}{suffix}"
            if p.exists():
                return p
        return None

    def echo(self) -> dict:
        """Effective configuration with defaults filled in, for the manifest."""
        return {
            "counties": [{"fips": c.fips, "name": c.name, "tracts": str(c.tracts),
                          "pings": dict(c.pings)} for c in self.counties],
            "dates": list(self.dates),
            "stops": dict(self.stops),
            "motifs": dict(self.motifs),
            "similarity": dict(self.similarity),
            "threads": self.threads,
        }


def _merge(defaults: dict, given: Optional[dict], section: str) -> dict:
    out = copy.deepcopy(defaults)
    for k, v in (given or {}).items():
        if k not in defaults:
            raise ConfigError(f"unknown key {section}.{k}")
        out[k] = v
    return out


def _dates(spec) -> list[str]:
    if isinstance(spec, list):
        dates = [str(d) for d in spec]
    elif isinstance(spec, dict) and "start" in spec and "end" in spec:
        start = dt.date.fromisoformat(str(spec["start"]))
        end = dt.date.fromisoformat(str(spec["end"]))
        dates = [(start + dt.timedelta(days=i)).isoformat() for i in range((end - start).days + 1)]
    else:
        raise ConfigError("dates must be a list or {start, end}")
    if not dates:
        raise ConfigError("date range is empty")
    for d in dates:
        try:
            dt.date.fromisoformat(d)
        except ValueError as exc:
            raise ConfigError(f"bad date {d!r}") from exc
    return sorted(set(dates))


def parse_config(doc: dict, base_dir: Path = Path(".")) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(doc) - {"counties", "dates", "stops", "motifs", "similarity", "threads", "output_dir"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    counties = []
    raw_counties = doc.get("counties") or {}
    if not raw_counties:
        raise ConfigError("at least one county is required")
    for fips, spec in raw_counties.items():
        fips = str(fips)
        if not isinstance(spec, dict) or "tracts" not in spec or "pings" not in spec:
            raise ConfigError(f"county {fips}: needs 'tracts' and 'pings'")
        pings = {str(k): str(base_dir / v) if not os.path.isabs(str(v)) else str(v)
                 for k, v in spec["pings"].items()}
        if not pings:
            raise ConfigError(f"county {fips}: no ping sources")
        tracts = Path(spec["tracts"])
        if not tracts.is_absolute():
            tracts = base_dir / tracts
        counties.append(County(fips, str(spec.get("name", fips)), tracts, pings))
    counties.sort(key=lambda c: c.fips)

    motifs = _merge(DEFAULTS["motifs"], doc.get("motifs"), "motifs")
    if motifs["mode"] not in ("exact", "sample"):
        raise ConfigError("motifs.mode must be 'exact' or 'sample'")
    if motifs["volume"] not in ("mean", "sum"):
        raise ConfigError("motifs.volume must be 'mean' or 'sum'")
    similarity = _merge(DEFAULTS["similarity"], doc.get("similarity"), "similarity")
    if similarity["mape_mode"] not in ("base-a", "symmetric"):
        raise ConfigError("similarity.mape_mode must be 'base-a' or 'symmetric'")
    if similarity["cosine_reduction"] not in ("mean", "median", "majority"):
        raise ConfigError("similarity.cosine_reduction must be mean, median or majority")

    out = os.environ.get(OUTPUT_ENV) or doc.get("output_dir") or DEFAULTS["output_dir"]
    out = Path(out)
    if not out.is_absolute() and not os.environ.get(OUTPUT_ENV):
        out = base_dir / out
    threads = int(doc.get("threads", 0))
    if threads < 0:
        raise ConfigError("threads must be >= 0")
    return RunConfig(
        counties=counties,
        dates=_dates(doc.get("dates")),
        stops=_merge(DEFAULTS["stops"], doc.get("stops"), "stops"),
        motifs=motifs,
        similarity=similarity,
        threads=threads,
        output_dir=out,
        raw=doc,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc
    return parse_config(doc, path.parent)
