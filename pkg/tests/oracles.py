"""Slow, obviously-correct reference implementations used as test oracles.

Nothing here imports the package under test, so a shared bug cannot hide.
"""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np

EARTH_R = 6_371_008.8


def haversine(lat1, lon1, lat2, lon2):
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_R * math.asin(min(1.0, math.sqrt(h)))


def random_graph(n, p, rng):
    """Edge set ``{(i, j): weight}`` of a G(n, p) graph with weights in 1..9."""
    return {(i, j): int(rng.integers(1, 10))
            for i, j in combinations(range(n), 2) if rng.random() < p}


def adjacency(n, edges):
    a = [[0] * n for _ in range(n)]
    for i, j in edges:
        a[i][j] = a[j][i] = 1
    return a


def quad_type(a, quad):
    """Motif type by counting edges and looking at the degree multiset."""
    pairs = list(combinations(quad, 2))
    e = sum(a[x][y] for x, y in pairs)
    deg = sorted(sum(a[x][y] for y in quad if y != x) for x in quad)
    # connectivity by flood fill
    seen = {quad[0]}
    stack = [quad[0]]
    while stack:
        x = stack.pop()
        for y in quad:
            if a[x][y] and y not in seen:
                seen.add(y)
                stack.append(y)
    if len(seen) < 4:
        return 0
    if e == 6:
        return 1
    if e == 5:
        return 2
    if e == 4:
        return 3 if deg == [2, 2, 2, 2] else 4
    return 6 if deg == [1, 1, 1, 3] else 5


def brute_census(n, edges):
    a = adjacency(n, edges)
    counts = [0] * 7
    for q in combinations(range(n), 4):
        counts[quad_type(a, q)] += 1
    return counts


def brute_attribute_medians(n, edges, coords):
    """Per-type lower medians of mean edge distance and mean edge weight."""
    a = adjacency(n, edges)
    dists = {t: [] for t in range(1, 7)}
    vols = {t: [] for t in range(1, 7)}
    for q in combinations(range(n), 4):
        t = quad_type(a, q)
        if t == 0:
            continue
        es = [(x, y) for x, y in combinations(q, 2) if a[x][y]]
        dists[t].append(sum(haversine(*coords[x], *coords[y]) for x, y in es) / len(es))
        vols[t].append(sum(edges[(x, y)] for x, y in es) / len(es))

    def low_median(v):
        if not v:
            return math.nan
        s = sorted(v)
        return s[(len(s) - 1) // 2]

    return ([low_median(dists[t]) for t in range(1, 7)],
            [low_median(vols[t]) for t in range(1, 7)])


def floyd_warshall(n, edges):
    inf = float("inf")
    d = [[0 if i == j else inf for j in range(n)] for i in range(n)]
    for i, j in edges:
        d[i][j] = d[j][i] = 1
    for k in range(n):
        dk = d[k]
        for i in range(n):
            dik = d[i][k]
            if dik == inf:
                continue
            di = d[i]
            for j in range(n):
                if dik + dk[j] < di[j]:
                    di[j] = dik + dk[j]
    return d


def components(n, edges):
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in edges:
        parent[find(i)] = find(j)
    groups = {}
    for x in range(n):
        groups.setdefault(find(x), []).append(x)
    return sorted(groups.values(), key=lambda g: (-len(g), g[0]))


def macro_metrics(n, edges):
    """Dict of brute-force global metrics; ``None`` where undefined."""
    a = adjacency(n, edges)
    deg = [sum(r) for r in a]
    out = {"avg_degree": sum(deg) / n}
    cc = []
    for v in range(n):
        nb = [u for u in range(n) if a[v][u]]
        if len(nb) < 2:
            cc.append(0.0)
            continue
        links = sum(a[x][y] for x, y in combinations(nb, 2))
        cc.append(links / (len(nb) * (len(nb) - 1) / 2))
    out["avg_clustering"] = sum(cc) / n
    giant = components(n, edges)[0]
    out["giant_component_size"] = len(giant)
    d = floyd_warshall(n, edges)
    if len(giant) >= 2:
        ds = [d[i][j] for i in giant for j in giant if i != j]
        out["avg_shortest_path"] = sum(ds) / len(ds)
        out["diameter"] = max(ds)
    else:
        out["avg_shortest_path"] = None
        out["diameter"] = 0 if n >= 2 else None
    out["density"] = 2 * len(edges) / (n * (n - 1)) if n >= 2 else None
    xs, ys = [], []
    for i, j in edges:
        xs += [deg[i], deg[j]]
        ys += [deg[j], deg[i]]
    out["assortativity"] = pearson(xs, ys) if xs else None
    return out


def pearson(x, y):
    k = len(x)
    mx, my = sum(x) / k, sum(y) / k
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    if sxx == 0 or syy == 0:
        return None
    return sxy / math.sqrt(sxx * syy)


def modularity(n, edges, partition):
    """Newman Q from the definition: sum over node pairs of (A_ij - k_i k_j / 2m)."""
    w = np.zeros((n, n))
    for (i, j), x in edges.items():
        w[i, j] = w[j, i] = x
    k = w.sum(axis=1)
    two_m = k.sum()
    label = {}
    for c, grp in enumerate(partition):
        for x in grp:
            label[x] = c
    q = 0.0
    for i in range(n):
        for j in range(n):
            if label[i] == label[j]:
                q += w[i, j] - k[i] * k[j] / two_m
    return q / two_m


def dtw(a, b):
    """Full (n+1)x(m+1) table with an infinite border."""
    n, m = len(a), len(b)
    inf = float("inf")
    D = [[inf] * (m + 1) for _ in range(n + 1)]
    D[0][0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            D[i][j] = abs(a[i - 1] - b[j - 1]) + min(D[i - 1][j], D[i][j - 1], D[i - 1][j - 1])
    return D[n][m]
