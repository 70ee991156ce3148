"""Daily human-mobility networks from location pings, with cross-source comparison."""

import os

import numba

# the TBB layer shipped here is too old; omp tolerates concurrent callers
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "omp"

from .geodata import GeoPoint, TractIndex, haversine, load_tracts, locate  # noqa: E402
from .ingest import Ping, Stop, Trip, detect_stops, extract_trips, parse_pings  # noqa: E402
from .network import MobilityNetwork, build_daily_network, network_size_summary  # noqa: E402
from .macro import MacroRecord, macro_record  # noqa: E402
from .motifs import (MotifCensus, classify_quad, motif_attributes, motif_census,  # noqa: E402
                     moving_average_7d, sample_census)
from .micro import TractDayMetrics, radius_of_gyration, rank_tracts, tract_day_metrics  # noqa: E402
from .similarity import (MetricSeries, SimilarityVerdict, closest_pair, cosine, dtw,  # noqa: E402
                         euclidean, mape, pearson)

__version__ = "0.1.0"

__all__ = [
    "GeoPoint", "TractIndex", "haversine", "load_tracts", "locate",
    "Ping", "Stop", "Trip", "detect_stops", "extract_trips", "parse_pings",
    "MobilityNetwork", "build_daily_network", "network_size_summary",
    "MacroRecord", "macro_record",
    "MotifCensus", "classify_quad", "motif_attributes", "motif_census", "moving_average_7d",
    "sample_census",
    "TractDayMetrics", "radius_of_gyration", "rank_tracts", "tract_day_metrics",
    "MetricSeries", "SimilarityVerdict", "closest_pair", "cosine", "dtw", "euclidean", "mape",
    "pearson",
]
