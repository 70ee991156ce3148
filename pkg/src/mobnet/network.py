"""Daily undirected origin-destination networks between census tracts."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np
import pandas as pd

from .geodata import TractIndex, haversine_array


@dataclass
class MobilityNetwork:
    """One county-day OD graph.

    ``edges`` maps ``(a, b)`` with ``a < b`` to the trip count in either
    direction. ``nodes`` is sorted and contains every tract touched by a
    trip, including tracts that only saw intra-tract trips.
    """

    county_fips: str
    date: str
    nodes: tuple[str, ...]
    edges: dict[tuple[str, str], int]
    centroids: dict[str, tuple[float, float]] = field(default_factory=dict, repr=False)
    n_filtered: int = 0

    def __post_init__(self):
        self.nodes = tuple(sorted(self.nodes))
        self._pos = {g: i for i, g in enumerate(self.nodes)}
        for (a, b), w in self.edges.items():
            if a == b:
                raise ValueError(f"self-loop on {a}")
            if a > b:
                raise ValueError("edge keys must be ordered (a < b)")
            if a not in self._pos or b not in self._pos:
                raise ValueError(f"edge endpoint missing from nodes: {(a, b)}")
            if w < 1:
                raise ValueError(f"non-positive weight on {(a, b)}")
        self.edges = dict(sorted(self.edges.items()))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def index(self, geoid: str) -> int:
        return self._pos[geoid]

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(u, v, w)`` integer arrays with ``u < v`` in node-index space."""
        if not self.edges:
            e = np.empty(0, dtype=np.int64)
            return e, e.copy(), e.copy()
        u = np.fromiter((self._pos[a] for a, _ in self.edges), np.int64, len(self.edges))
        v = np.fromiter((self._pos[b] for _, b in self.edges), np.int64, len(self.edges))
        w = np.fromiter(self.edges.values(), np.int64, len(self.edges))
        return u, v, w

    def adjacency(self) -> np.ndarray:
        n = self.n_nodes
        a = np.zeros((n, n), dtype=np.bool_)
        u, v, _ = self.edge_arrays()
        a[u, v] = True
        a[v, u] = True
        return a

    def weight_matrix(self) -> np.ndarray:
        n = self.n_nodes
        m = np.zeros((n, n), dtype=np.int64)
        u, v, w = self.edge_arrays()
        m[u, v] = w
        m[v, u] = w
        return m

    def distance_matrix(self) -> np.ndarray:
        """Haversine distances between node centroids in meters."""
        missing = [g for g in self.nodes if g not in self.centroids]
        if missing:
            raise KeyError(f"no centroid for {missing[:3]}")
        lat = np.array([self.centroids[g][0] for g in self.nodes])
        lon = np.array([self.centroids[g][1] for g in self.nodes])
        return haversine_array(lat[:, None], lon[:, None], lat[None, :], lon[None, :])


def _trip_pairs(trips) -> tuple[Sequence, Sequence]:
    if isinstance(trips, pd.DataFrame):
        return trips["o_geoid"].tolist(), trips["d_geoid"].tolist()
    return [t.origin.geoid for t in trips], [t.dest.geoid for t in trips]


def build_daily_network(trips, county_fips: str, date: str,
                        tract_index: Optional[TractIndex] = None) -> MobilityNetwork:
    """Aggregate one day of trips into an undirected weighted network.

    ``trips`` is a trip frame or a sequence of :class:`~mobnet.ingest.Trip`.
    Trips with an endpoint outside the county (no geoid, a geoid of another
    county, or one unknown to ``tract_index``) are counted in
    ``n_filtered`` and ignored.
    """
    origins, dests = _trip_pairs(trips)

    def in_county(g):
        if g is None or not isinstance(g, str) or not g.startswith(county_fips):
            return False
        return tract_index is None or g in tract_index

    nodes = set()
    edges: dict[tuple[str, str], int] = {}
    filtered = 0
    for a, b in zip(origins, dests):
        if not (in_county(a) and in_county(b)):
            filtered += 1
            continue
        nodes.add(a)
        nodes.add(b)
        if a == b:
            continue
        key = (a, b) if a < b else (b, a)
        edges[key] = edges.get(key, 0) + 1

    centroids = {}
    if tract_index is not None:
        centroids = {g: tract_index.centroids[g] for g in nodes}
    return MobilityNetwork(county_fips, date, tuple(nodes), edges, centroids, filtered)


class NetworkSize(NamedTuple):
    mean_nodes: float
    mean_edges: float

    def __str__(self):
        return f"{self.mean_nodes:.2f} {self.mean_edges:.2f}"


def network_size_summary(networks: Sequence[MobilityNetwork]) -> NetworkSize:
    """Mean node and edge counts over days, rounded to two decimals."""
    if not networks:
        raise ValueError("need at least one network")
    n = np.mean([net.n_nodes for net in networks])
    e = np.mean([net.n_edges for net in networks])
    return NetworkSize(round(float(n), 2), round(float(e), 2))


def serialize_networks(networks: Iterable[MobilityNetwork]) -> str:
    """Render networks as ``date,origin_geoid,dest_geoid,weight`` rows.

    Active nodes without any inter-tract edge are written as
    ``date,geoid,,0`` so the node set survives a round trip.
    """
    buf = io.StringIO()
    buf.write("date,origin_geoid,dest_geoid,weight\n")
    for net in sorted(networks, key=lambda x: x.date):
        touched = set()
        for (a, b), w in net.edges.items():
            buf.write(f"{net.date},{a},{b},{w}\n")
            touched.update((a, b))
        for g in net.nodes:
            if g not in touched:
                buf.write(f"{net.date},{g},,0\n")
    return buf.getvalue()


def parse_networks(text: str, county_fips: str,
                   tract_index: Optional[TractIndex] = None) -> list[MobilityNetwork]:
    days: dict[str, tuple[set, dict]] = {}
    for line in text.splitlines()[1:]:
        if not line:
            continue
        date, a, b, w = line.split(",")
        nodes, edges = days.setdefault(date, (set(), {}))
        nodes.add(a)
        if b:
            nodes.add(b)
            edges[(a, b)] = int(w)
    out = []
    for date in sorted(days):
        nodes, edges = days[date]
        cents = {g: tract_index.centroids[g] for g in nodes} if tract_index is not None else {}
        out.append(MobilityNetwork(county_fips, date, tuple(nodes), edges, cents))
    return out
