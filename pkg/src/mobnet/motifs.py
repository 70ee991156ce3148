"""Four-node motif census with per-type distance and volume attributes.

Type numbering (by induced edge count, then degree sequence):

====  =====  ==============  =========
type  edges  degrees         shape
====  =====  ==============  =========
1     6      3,3,3,3         complete
2     5      2,2,3,3         diamond
3     4      2,2,2,2         4-cycle
4     4      1,2,2,3         paw
5     3      1,1,2,2         path
6     3      1,1,1,3         star
0     any    --              disconnected
====  =====  ==============  =========

Connected quads are enumerated with ESU (each connected 4-set is visited
exactly once from its smallest node); type 0 is ``C(n, 4)`` minus the rest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numba
import numpy as np
from numba import prange

from .network import MobilityNetwork

N_TYPES = 7
DEFAULT_MEDIAN_THRESHOLD = 10_000_000
DISTANCE_BIN_M = 50.0
VOLUME_BIN = 1.0


class MotifError(ValueError):
    pass


@dataclass
class MotifCensus:
    """Counts, shares and attribute medians of the seven motif types.

    For a sampled census ``counts`` holds sample frequencies and
    ``n_sampled`` the number of sampled quads; shares are then
    ``counts / n_sampled``. Attribute arrays are indexed by type (0..6),
    with ``nan`` for type 0 and for absent types.
    """

    counts: np.ndarray
    shares: np.ndarray
    n_quads_total: int
    median_avg_distance_m: np.ndarray = field(default_factory=lambda: np.full(N_TYPES, np.nan))
    median_avg_volume: np.ndarray = field(default_factory=lambda: np.full(N_TYPES, np.nan))
    n_sampled: Optional[int] = None
    approximate_medians: np.ndarray = field(default_factory=lambda: np.zeros(N_TYPES, dtype=bool))

    @property
    def sampled(self) -> bool:
        return self.n_sampled is not None


@numba.njit(cache=True, inline="always")
def _type_of(e, a01, a02, a03, a12, a13, a23):
    d0 = a01 + a02 + a03
    d1 = a01 + a12 + a13
    d2 = a02 + a12 + a23
    d3 = a03 + a13 + a23
    mx = max(max(d0, d1), max(d2, d3))
    mn = min(min(d0, d1), min(d2, d3))
    if e == 6:
        return 1
    if e == 5:
        return 2
    if e == 4:
        return 4 if mx == 3 else 3
    if e == 3:
        if mx == 3:
            return 6
        if mn == 0:
            return 0
        return 5
    return 0


@numba.njit(cache=True)
def _classify(adj, a, b, c, d):
    a01 = 1 if adj[a, b] else 0
    a02 = 1 if adj[a, c] else 0
    a03 = 1 if adj[a, d] else 0
    a12 = 1 if adj[b, c] else 0
    a13 = 1 if adj[b, d] else 0
    a23 = 1 if adj[c, d] else 0
    e = a01 + a02 + a03 + a12 + a13 + a23
    return _type_of(e, a01, a02, a03, a12, a13, a23)


def classify_quad(edges, nodes: Optional[Sequence] = None) -> int:
    """Motif type of an induced 4-node subgraph.

    ``edges`` is either a 4x4 adjacency matrix or an iterable of node
    pairs; with pairs, ``nodes`` lists the four nodes (inferred when
    every node is touched by an edge).
    """
    if isinstance(edges, np.ndarray) and edges.shape == (4, 4):
        adj = edges.astype(bool)
    else:
        pairs = [tuple(p) for p in edges]
        if nodes is None:
            nodes = sorted({x for p in pairs for x in p})
        nodes = list(nodes)
        if len(set(nodes)) != 4:
            raise MotifError("a quad needs exactly 4 distinct nodes")
        pos = {x: i for i, x in enumerate(nodes)}
        adj = np.zeros((4, 4), dtype=bool)
        for x, y in pairs:
            if x == y:
                continue
            adj[pos[x], pos[y]] = adj[pos[y], pos[x]] = True
    return int(_classify(adj, 0, 1, 2, 3))


@numba.njit(cache=True)
def _esu_root(v, indptr, indices, adj, ext2, ext3, out):
    """Visit every connected 4-set whose smallest node is ``v``.

    ``out`` receives per-type counts for this root. Writes into the
    caller-provided scratch buffers.
    """
    s1, e1 = indptr[v], indptr[v + 1]
    # neighbor lists are sorted; skip to the first neighbor > v
    p = s1
    while p < e1 and indices[p] <= v:
        p += 1
    for i1 in range(p, e1):
        w1 = indices[i1]
        n2 = 0
        for q in range(i1 + 1, e1):
            ext2[n2] = indices[q]
            n2 += 1
        for q in range(indptr[w1], indptr[w1 + 1]):
            u = indices[q]
            if u > v and not adj[v, u]:
                ext2[n2] = u
                n2 += 1
        for i2 in range(n2):
            w2 = ext2[i2]
            n3 = 0
            for q in range(i2 + 1, n2):
                ext3[n3] = ext2[q]
                n3 += 1
            for q in range(indptr[w2], indptr[w2 + 1]):
                u = indices[q]
                if u > v and u != w1 and not adj[v, u] and not adj[w1, u]:
                    ext3[n3] = u
                    n3 += 1
            for i3 in range(n3):
                out[_classify(adj, v, w1, w2, ext3[i3])] += 1


@numba.njit(cache=True, parallel=True)
def _esu_counts(indptr, indices, adj):
    n = adj.shape[0]
    per_root = np.zeros((n, N_TYPES), dtype=np.int64)
    for v in prange(n):
        ext2 = np.empty(n, dtype=np.int64)
        ext3 = np.empty(n, dtype=np.int64)
        _esu_root(v, indptr, indices, adj, ext2, ext3, per_root[v])
    return per_root


@numba.njit(cache=True)
def _quad_attrs(q, adj, dist, wts):
    # sum over induced edges in sorted-node pair order, then divide
    qs = np.sort(q)
    e = 0
    sd = 0.0
    sw = 0
    for x in range(4):
        for y in range(x + 1, 4):
            a, b = qs[x], qs[y]
            if adj[a, b]:
                e += 1
                sd += dist[a, b]
                sw += wts[a, b]
    return e, sd, sw


@numba.njit(cache=True, parallel=True)
def _esu_collect(indptr, indices, adj, dist, wts, use_sum, cursor0, keep, vals_d, vals_v):
    """Second ESU pass storing per-quad attribute means for kept types.

    ``cursor0[v, t]`` is the first output slot for root ``v`` and type ``t``.
    """
    n = adj.shape[0]
    for v in prange(n):
        ext2 = np.empty(n, dtype=np.int64)
        ext3 = np.empty(n, dtype=np.int64)
        cur = cursor0[v].copy()
        q = np.empty(4, dtype=np.int64)
        q[0] = v
        s1, e1 = indptr[v], indptr[v + 1]
        p = s1
        while p < e1 and indices[p] <= v:
            p += 1
        for i1 in range(p, e1):
            w1 = indices[i1]
            q[1] = w1
            n2 = 0
            for r in range(i1 + 1, e1):
                ext2[n2] = indices[r]
                n2 += 1
            for r in range(indptr[w1], indptr[w1 + 1]):
                u = indices[r]
                if u > v and not adj[v, u]:
                    ext2[n2] = u
                    n2 += 1
            for i2 in range(n2):
                w2 = ext2[i2]
                q[2] = w2
                n3 = 0
                for r in range(i2 + 1, n2):
                    ext3[n3] = ext2[r]
                    n3 += 1
                for r in range(indptr[w2], indptr[w2 + 1]):
                    u = indices[r]
                    if u > v and u != w1 and not adj[v, u] and not adj[w1, u]:
                        ext3[n3] = u
                        n3 += 1
                for i3 in range(n3):
                    q[3] = ext3[i3]
                    t = _classify(adj, v, w1, w2, ext3[i3])
                    if keep[t]:
                        e, sd, sw = _quad_attrs(q, adj, dist, wts)
                        vals_d[cur[t]] = sd / e
                        vals_v[cur[t]] = sw if use_sum else sw / e
                        cur[t] += 1


@numba.njit(cache=True)
def _esu_histogram(indptr, indices, adj, dist, wts, use_sum, keep, d_bin, v_bin, hist_d, hist_v):
    """Single-pass histogram of per-quad attribute means for kept types."""
    n = adj.shape[0]
    ext2 = np.empty(n, dtype=np.int64)
    ext3 = np.empty(n, dtype=np.int64)
    q = np.empty(4, dtype=np.int64)
    nd = hist_d.shape[1]
    nv = hist_v.shape[1]
    for v in range(n):
        q[0] = v
        s1, e1 = indptr[v], indptr[v + 1]
        p = s1
        while p < e1 and indices[p] <= v:
            p += 1
        for i1 in range(p, e1):
            w1 = indices[i1]
            q[1] = w1
            n2 = 0
            for r in range(i1 + 1, e1):
                ext2[n2] = indices[r]
                n2 += 1
            for r in range(indptr[w1], indptr[w1 + 1]):
                u = indices[r]
                if u > v and not adj[v, u]:
                    ext2[n2] = u
                    n2 += 1
            for i2 in range(n2):
                w2 = ext2[i2]
                q[2] = w2
                n3 = 0
                for r in range(i2 + 1, n2):
                    ext3[n3] = ext2[r]
                    n3 += 1
                for r in range(indptr[w2], indptr[w2 + 1]):
                    u = indices[r]
                    if u > v and u != w1 and not adj[v, u] and not adj[w1, u]:
                        ext3[n3] = u
                        n3 += 1
                for i3 in range(n3):
                    q[3] = ext3[i3]
                    t = _classify(adj, v, w1, w2, ext3[i3])
                    if keep[t]:
                        e, sd, sw = _quad_attrs(q, adj, dist, wts)
                        vol = sw if use_sum else sw / e
                        bd = min(int((sd / e) // d_bin), nd - 1)
                        bv = min(int(vol // v_bin), nv - 1)
                        hist_d[t, bd] += 1
                        hist_v[t, bv] += 1


def _csr(adj: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = adj.shape[0]
    rows, cols = np.nonzero(adj)  # row-major order keeps each row's columns sorted
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return indptr, cols.astype(np.int64)


def lower_median(values: np.ndarray) -> float:
    """Median with the lower element chosen for even lengths."""
    k = values.shape[0]
    if k == 0:
        return float("nan")
    return float(np.partition(values, (k - 1) // 2)[(k - 1) // 2])


def _hist_lower_median(hist: np.ndarray, width: float) -> float:
    k = int(hist.sum())
    if k == 0:
        return float("nan")
    target = (k - 1) // 2 + 1
    b = int(np.searchsorted(np.cumsum(hist), target))
    return (b + 0.5) * width


def _check_size(net: MobilityNetwork):
    if net.n_nodes < 4:
        raise MotifError("network too small")


def _census_from_counts(counts: np.ndarray, n: int) -> MotifCensus:
    total = math.comb(n, 4)
    counts = counts.astype(np.int64)
    counts[0] = total - int(counts[1:].sum())
    return MotifCensus(counts=counts, shares=counts / float(total), n_quads_total=total)


def motif_census(net: MobilityNetwork) -> MotifCensus:
    """Exhaustive counts and shares of the seven motif types."""
    _check_size(net)
    adj = net.adjacency()
    indptr, indices = _csr(adj)
    per_root = _esu_counts(indptr, indices, adj)
    return _census_from_counts(per_root.sum(axis=0), net.n_nodes)


def motif_attributes(net: MobilityNetwork, census: Optional[MotifCensus] = None,
                     median_threshold: int = DEFAULT_MEDIAN_THRESHOLD,
                     volume: str = "mean") -> MotifCensus:
    """Census plus per-type medians of quad-average link distance and volume.

    Per connected quad the induced edges' centroid distances (meters) and
    weights are averaged (``volume="sum"`` sums weights instead). Types with
    at most ``median_threshold`` quads get the exact lower median; larger
    types fall back to a histogram with 50 m / 1 trip bins whose reported
    median is the bin center.
    """
    if volume not in ("mean", "sum"):
        raise ValueError("volume must be 'mean' or 'sum'")
    _check_size(net)
    adj = net.adjacency()
    indptr, indices = _csr(adj)
    dist = net.distance_matrix()
    wts = net.weight_matrix()
    per_root = _esu_counts(indptr, indices, adj)
    if census is None:
        census = _census_from_counts(per_root.sum(axis=0), net.n_nodes)
    totals = per_root.sum(axis=0)
    use_sum = volume == "sum"

    keep = np.zeros(N_TYPES, dtype=np.bool_)
    keep[1:] = (totals[1:] > 0) & (totals[1:] <= median_threshold)
    med_d = np.full(N_TYPES, np.nan)
    med_v = np.full(N_TYPES, np.nan)
    if keep.any():
        kept_counts = np.where(keep, per_root, 0)
        base = np.concatenate([[0], np.cumsum(kept_counts.sum(axis=0))[:-1]])
        cursor0 = base[None, :] + np.cumsum(kept_counts, axis=0) - kept_counts
        size = int(kept_counts.sum())
        vals_d = np.empty(size, dtype=np.float64)
        vals_v = np.empty(size, dtype=np.float64)
        _esu_collect(indptr, indices, adj, dist, wts, use_sum, cursor0.astype(np.int64),
                     keep, vals_d, vals_v)
        for t in np.flatnonzero(keep):
            lo, hi = base[t], base[t] + totals[t]
            med_d[t] = lower_median(vals_d[lo:hi])
            med_v[t] = lower_median(vals_v[lo:hi])

    approx = np.zeros(N_TYPES, dtype=bool)
    big = np.zeros(N_TYPES, dtype=np.bool_)
    big[1:] = totals[1:] > median_threshold
    if big.any():
        nd = int(dist.max() // DISTANCE_BIN_M) + 2
        nv = int((wts.max() * (6 if use_sum else 1)) // VOLUME_BIN) + 2
        hist_d = np.zeros((N_TYPES, nd), dtype=np.int64)
        hist_v = np.zeros((N_TYPES, nv), dtype=np.int64)
        _esu_histogram(indptr, indices, adj, dist, wts, use_sum, big,
                       DISTANCE_BIN_M, VOLUME_BIN, hist_d, hist_v)
        for t in np.flatnonzero(big):
            med_d[t] = _hist_lower_median(hist_d[t], DISTANCE_BIN_M)
            med_v[t] = _hist_lower_median(hist_v[t], VOLUME_BIN)
            approx[t] = True

    census.median_avg_distance_m = med_d
    census.median_avg_volume = med_v
    census.approximate_medians = approx
    return census


@numba.njit(cache=True)
def _classify_many(adj, quads):
    out = np.empty(quads.shape[0], dtype=np.int64)
    for i in range(quads.shape[0]):
        out[i] = _classify(adj, quads[i, 0], quads[i, 1], quads[i, 2], quads[i, 3])
    return out


@numba.njit(cache=True)
def _attrs_many(adj, dist, wts, use_sum, quads):
    k = quads.shape[0]
    vd = np.empty(k, dtype=np.float64)
    vv = np.empty(k, dtype=np.float64)
    for i in range(k):
        e, sd, sw = _quad_attrs(quads[i], adj, dist, wts)
        if e == 0:
            vd[i] = np.nan
            vv[i] = np.nan
        else:
            vd[i] = sd / e
            vv[i] = sw if use_sum else sw / e
    return vd, vv


def _draw_quads(n: int, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    out = np.empty((0, 4), dtype=np.int64)
    while out.shape[0] < n_samples:
        need = n_samples - out.shape[0]
        q = rng.integers(0, n, size=(need + need // 4 + 16, 4))
        s = np.sort(q, axis=1)
        ok = np.all(s[:, 1:] != s[:, :-1], axis=1)
        out = np.vstack([out, q[ok]])
    return out[:n_samples]


def sample_census(net: MobilityNetwork, n_samples: int = 100_000, seed: int = 0,
                  attributes: bool = True, volume: str = "mean") -> MotifCensus:
    """Approximate census from uniformly sampled 4-node subsets.

    When ``C(n, 4) <= n_samples`` every subset is visited once and the
    result equals the exhaustive census. Otherwise ``n_samples`` subsets are
    drawn with replacement; attribute medians are taken over the sampled
    connected quads of each type.
    """
    if n_samples < 1:
        raise MotifError("n_samples must be >= 1")
    _check_size(net)
    n = net.n_nodes
    total = math.comb(n, 4)
    adj = net.adjacency()
    if total <= n_samples:
        quads = np.array(list(combinations(range(n), 4)), dtype=np.int64)
        exhaustive = True
    else:
        quads = _draw_quads(n, n_samples, np.random.default_rng(seed))
        exhaustive = False
    types = _classify_many(adj, quads)
    counts = np.bincount(types, minlength=N_TYPES).astype(np.int64)
    if exhaustive:
        census = MotifCensus(counts=counts, shares=counts / float(total), n_quads_total=total)
    else:
        census = MotifCensus(counts=counts, shares=counts / float(n_samples),
                             n_quads_total=total, n_sampled=int(n_samples))
    if attributes:
        vd, vv = _attrs_many(adj, net.distance_matrix(), net.weight_matrix(),
                             volume == "sum", quads)
        med_d = np.full(N_TYPES, np.nan)
        med_v = np.full(N_TYPES, np.nan)
        for t in range(1, N_TYPES):
            sel = types == t
            if sel.any():
                med_d[t] = lower_median(vd[sel])
                med_v[t] = lower_median(vv[sel])
        census.median_avg_distance_m = med_d
        census.median_avg_volume = med_v
    return census


def moving_average_7d(series: Sequence[float]) -> np.ndarray:
    """Trailing 7-day mean; the first six days average whatever prior days exist.

    ``nan`` entries are skipped within a window; a window with no finite
    value stays ``nan``.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] < 1:
        raise ValueError("series must be a nonempty 1-d sequence")
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        w = x[max(0, i - 6): i + 1]
        w = w[~np.isnan(w)]
        out[i] = w.mean() if w.shape[0] else np.nan
    return out
