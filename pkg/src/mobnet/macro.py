"""Global (macroscopic) metrics of a mobility network.

Degenerate cases return ``None`` rather than a number; writers render it
as ``NA`` and the similarity code treats it as a missing day.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .network import MobilityNetwork

MACRO_METRICS = (
    "avg_degree", "avg_clustering", "avg_shortest_path", "assortativity",
    "modularity", "density", "diameter", "giant_component_size",
)
# the four columns reported in the cross-source table
TABLE_METRICS = ("avg_degree", "avg_clustering", "avg_shortest_path", "assortativity")


@dataclass(frozen=True)
class MacroRecord:
    date: str
    avg_degree: Optional[float]
    avg_clustering: Optional[float]
    avg_shortest_path: Optional[float]
    assortativity: Optional[float]
    modularity: Optional[float]
    density: Optional[float]
    diameter: Optional[int]
    giant_component_size: int

    def as_dict(self) -> dict:
        return asdict(self)


def average_degree(net: MobilityNetwork) -> Optional[float]:
    if net.n_nodes == 0:
        return None
    return 2.0 * net.n_edges / net.n_nodes


def average_clustering(net: MobilityNetwork) -> Optional[float]:
    n = net.n_nodes
    if n == 0:
        return None
    a = net.adjacency().astype(np.int64)
    deg = a.sum(axis=1)
    tri = np.einsum("ij,jk,ki->i", a, a, a) // 2
    denom = deg * (deg - 1)
    c = np.zeros(n, dtype=np.float64)
    ok = deg >= 2
    c[ok] = 2.0 * tri[ok] / denom[ok]
    return float(c.sum() / n)


def _largest_component(net: MobilityNetwork) -> np.ndarray:
    """Node indices of the largest component; ties go to the one holding the lowest index."""
    n = net.n_nodes
    if n == 0:
        return np.empty(0, dtype=np.int64)
    u, v, _ = net.edge_arrays()
    g = csr_matrix((np.ones(u.shape[0]), (u, v)), shape=(n, n))
    _, labels = connected_components(g, directed=False)
    sizes = np.bincount(labels)
    best = np.flatnonzero(sizes == sizes.max())
    first_idx = [np.flatnonzero(labels == b)[0] for b in best]
    comp = best[int(np.argmin(first_idx))]
    return np.flatnonzero(labels == comp)


def _component_distances(net: MobilityNetwork) -> Optional[np.ndarray]:
    nodes = _largest_component(net)
    if nodes.shape[0] < 2:
        return None
    a = net.adjacency()[np.ix_(nodes, nodes)]
    d = shortest_path(csr_matrix(a.astype(np.float64)), method="D", unweighted=True, directed=False)
    return d.astype(np.int64)


def average_shortest_path(net: MobilityNetwork) -> Optional[float]:
    d = _component_distances(net)
    if d is None:
        return None
    k = d.shape[0]
    return int(d.sum()) / (k * (k - 1))


def diameter(net: MobilityNetwork) -> Optional[int]:
    if net.n_nodes < 2:
        return None
    d = _component_distances(net)
    if d is None:
        return 0
    return int(d.max())


def giant_component_size(net: MobilityNetwork) -> int:
    return int(_largest_component(net).shape[0])


def density(net: MobilityNetwork) -> Optional[float]:
    n = net.n_nodes
    if n < 2:
        return None
    return 2.0 * net.n_edges / (n * (n - 1))


def assortativity(net: MobilityNetwork) -> Optional[float]:
    """Degree Pearson correlation over edges taken in both orientations."""
    if net.n_edges == 0:
        return None
    u, v, _ = net.edge_arrays()
    deg = np.bincount(np.concatenate([u, v]), minlength=net.n_nodes).astype(np.float64)
    x = np.concatenate([deg[u], deg[v]])
    y = np.concatenate([deg[v], deg[u]])
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx == 0.0 or syy == 0.0:
        return None
    r = float(xc @ yc) / np.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def partition_modularity(net: MobilityNetwork, partition) -> float:
    """Weighted Newman modularity of ``partition`` (iterable of geoid groups)."""
    u, v, w = net.edge_arrays()
    m = int(w.sum())
    if m == 0:
        raise ValueError("modularity undefined without edges")
    label = np.full(net.n_nodes, -1, dtype=np.int64)
    for ci, group in enumerate(partition):
        for g in group:
            label[net.index(g)] = ci
    if np.any(label < 0):
        raise ValueError("partition does not cover every node")
    k = int(label.max()) + 1
    strength = np.bincount(u, weights=w, minlength=net.n_nodes) + np.bincount(v, weights=w, minlength=net.n_nodes)
    a_c = [0] * k
    l_c = [0] * k
    for i, s in enumerate(strength.astype(np.int64).tolist()):
        a_c[label[i]] += s
    for a, b, ww in zip(u.tolist(), v.tolist(), w.tolist()):
        if label[a] == label[b]:
            l_c[label[a]] += ww
    num = sum(4 * m * l - a * a for l, a in zip(l_c, a_c))
    return float(Fraction(num, 4 * m * m))


def modularity(net: MobilityNetwork) -> tuple[Optional[list[list[str]]], Optional[float]]:
    """Deterministic greedy agglomerative modularity maximization.

    Starting from singletons, repeatedly merges the adjacent community pair
    with the largest modularity gain, ties going to the smallest id pair,
    until no merge improves Q. Gains are compared through the exact
    numerator ``2m*w_ij - a_i*a_j`` so ties are resolved without rounding.
    Returns ``(communities, Q)``; ``(None, None)`` for edgeless networks.
    """
    u, v, w = net.edge_arrays()
    m = int(w.sum())
    if m == 0:
        return None, None
    n = net.n_nodes
    strength = [0] * n
    between: dict[tuple[int, int], int] = {}
    for a, b, ww in zip(u.tolist(), v.tolist(), w.tolist()):
        strength[a] += ww
        strength[b] += ww
        between[(a, b)] = between.get((a, b), 0) + ww
    members = {i: [i] for i in range(n)}
    neigh: dict[int, set[int]] = {i: set() for i in range(n)}
    for a, b in between:
        neigh[a].add(b)
        neigh[b].add(a)

    while between:
        best_key = None
        best_score = 0
        for (i, j), wij in between.items():
            score = 2 * m * wij - strength[i] * strength[j]
            if score > best_score or (score == best_score and best_key is not None
                                      and score > 0 and (i, j) < best_key):
                best_score = score
                best_key = (i, j)
        if best_key is None:
            break
        i, j = best_key
        # fold j into i
        members[i].extend(members.pop(j))
        strength[i] += strength[j]
        strength[j] = 0
        del between[(i, j)]
        neigh[i].discard(j)
        neigh[j].discard(i)
        for k in neigh.pop(j):
            wjk = between.pop((min(j, k), max(j, k)))
            key = (min(i, k), max(i, k))
            between[key] = between.get(key, 0) + wjk
            neigh[k].discard(j)
            neigh[k].add(i)
            neigh[i].add(k)

    communities = sorted(sorted(net.nodes[x] for x in mem) for mem in members.values())
    return communities, partition_modularity(net, communities)


def macro_record(net: MobilityNetwork) -> MacroRecord:
    _, q = modularity(net)
    return MacroRecord(
        date=net.date,
        avg_degree=average_degree(net),
        avg_clustering=average_clustering(net),
        avg_shortest_path=average_shortest_path(net),
        assortativity=assortativity(net),
        modularity=q,
        density=density(net),
        diameter=diameter(net),
        giant_component_size=giant_component_size(net),
    )
