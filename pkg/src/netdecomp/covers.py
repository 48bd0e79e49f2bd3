"""Sparse neighborhood covers from separated decompositions, and the
cover-based exact MST with edge-classification rules A/B.

Per-cluster MSTs run centrally per cluster; the distributed algorithm uses
them only as a black box, and the verifiable claim here is that the A/B
classification reproduces the unique minimum spanning forest exactly.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .clustering import (
    Cluster,
    Decomposition,
    NeighborhoodCover,
    validate_decomposition,
)
from .graphs import Graph, GraphError, _bfs_idx


class CoverError(RuntimeError):
    pass


class MstError(RuntimeError):
    pass


def cover_from_decomposition(
    g: Graph, k: int, dec: Decomposition
) -> NeighborhoodCover:
    """Expand each cluster C of a 2k-separated decomposition to
    C' = C ∪ {nodes within k of C}, with a fresh strong spanning tree per
    expanded cluster.  Same-color expansions stay disjoint because the
    input keeps same-color clusters more than 2k hops apart."""
    if k < 1:
        raise CoverError("k must be >= 1")
    if dec.k < 2 * k:
        raise CoverError(
            f"decomposition separation parameter {dec.k} < 2k = {2 * k}"
        )
    rep = validate_decomposition(g, dec)
    if not rep.valid:
        raise CoverError(f"input decomposition invalid: {rep.failures[0]}")
    out = []
    for c in dec.clusters:
        dist = _bfs_idx(g, sorted(c.members), cap=k)
        expanded = frozenset(v for v in range(g.n) if dist[v] >= 0)
        out.append(
            Cluster(
                id=c.id,
                center=c.center,
                members=expanded,
                tree_edges=_strong_tree(g, c.center, expanded),
                color=c.color,
            )
        )
    return NeighborhoodCover(k=k, clusters=out)


def _strong_tree(
    g: Graph, center: int, members: frozenset[int]
) -> frozenset[tuple[int, int]]:
    """BFS spanning tree of G[members] rooted at the center."""
    parent = {center: None}
    frontier = [center]
    while frontier:
        nxt = []
        for u in frontier:
            for v in g.neighbors[u]:
                if v in members and v not in parent:
                    parent[v] = u
                    nxt.append(v)
        frontier = nxt
    missing = members - parent.keys()
    if missing:
        raise CoverError(
            f"expanded cluster around {center} is not connected "
            f"({len(missing)} unreachable members)"
        )
    return frozenset(
        (min(u, p), max(u, p)) for u, p in parent.items() if p is not None
    )


# -- MST oracles ---------------------------------------------------------


class _DSU:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[ra] = rb
        return True


def _require_weights(g: Graph) -> None:
    if g.weights is None:
        raise GraphError("weighted graph required")


def kruskal_oracle(g: Graph) -> frozenset[tuple[int, int]]:
    """The unique minimum spanning forest (distinct weights) by Kruskal."""
    _require_weights(g)
    dsu = _DSU(g.n)
    tree = set()
    for (a, b), _w in sorted(g.weights.items(), key=lambda kv: kv[1]):
        if dsu.union(a, b):
            tree.add((a, b))
    return frozenset(tree)


def prim_oracle(g: Graph) -> frozenset[tuple[int, int]]:
    """Independent second oracle: Prim from each unvisited node."""
    _require_weights(g)
    seen = [False] * g.n
    tree = set()
    for s in range(g.n):
        if seen[s]:
            continue
        seen[s] = True
        heap = [(g.weight_of(s, v), s, v) for v in g.neighbors[s]]
        heapq.heapify(heap)
        while heap:
            w, a, b = heapq.heappop(heap)
            if seen[b]:
                continue
            seen[b] = True
            tree.add((min(a, b), max(a, b)))
            for c in g.neighbors[b]:
                if not seen[c]:
                    heapq.heappush(heap, (g.weight_of(b, c), b, c))
    return frozenset(tree)


def mst_radius(g: Graph, cycle_cap: int = 1 << 20) -> Optional[int]:
    """μ(G, ω): over non-MST edges e={u,v}, the length of the shortest
    cycle through e in which e is heaviest, maximized.  None if some edge
    exceeds ``cycle_cap``.  Trees have μ = 0 by convention."""
    _require_weights(g)
    if not _connected(g):
        raise GraphError("mst_radius needs a connected graph")
    mst = kruskal_oracle(g)
    mu = 0
    for (a, b), w in g.weights.items():
        if (a, b) in mst:
            continue
        d = _lighter_distance(g, a, b, w)
        if d is None or d + 1 > cycle_cap:
            return None
        mu = max(mu, d + 1)
    return mu


def _lighter_distance(g: Graph, a: int, b: int, w: Fraction) -> Optional[int]:
    """Shortest a-b hop distance using only edges strictly lighter than w."""
    dist = {a: 0}
    frontier = [a]
    while frontier:
        nxt = []
        for u in frontier:
            for v in g.neighbors[u]:
                if v not in dist and g.weight_of(u, v) < w:
                    dist[v] = dist[u] + 1
                    if v == b:
                        return dist[v]
                    nxt.append(v)
        frontier = nxt
    return dist.get(b)


def _connected(g: Graph) -> bool:
    if g.n == 0:
        return True
    return all(d >= 0 for d in _bfs_idx(g, [0]))


def mst_radius_scipy(g: Graph, cycle_cap: int = 1 << 20) -> Optional[int]:
    """Independent second oracle for μ: per non-MST edge, hop distances in
    the lighter-edge subgraph via scipy's csgraph shortest paths."""
    import numpy as np
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import shortest_path

    _require_weights(g)
    if not _connected(g):
        raise GraphError("mst_radius needs a connected graph")
    mst = kruskal_oracle(g)
    ordered = sorted(g.weights.items(), key=lambda kv: kv[1])
    mu = 0
    rows, cols = [], []
    for i, ((a, b), w) in enumerate(ordered):
        if (a, b) in mst:
            rows.append(a)
            cols.append(b)
            continue
        m = csr_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(g.n, g.n)
        )
        d = shortest_path(m, method="D", directed=False, unweighted=True,
                          indices=a)[b]
        if not np.isfinite(d) or d + 1 > cycle_cap:
            return None
        mu = max(mu, int(d) + 1)
        rows.append(a)
        cols.append(b)
    return mu


def cycle_enumeration_mu(g: Graph, max_len: int = 12) -> int:
    """Brute-force second oracle for μ on small graphs: enumerate all
    simple cycles up to ``max_len`` through every non-MST edge (depth-first
    over simple paths of strictly lighter edges)."""
    _require_weights(g)
    mst = kruskal_oracle(g)
    mu = 0
    for (a, b), w in g.weights.items():
        if (a, b) in mst:
            continue
        best = None
        stack = [(a, {a}, 0)]
        while stack:
            u, visited, length = stack.pop()
            if best is not None and length + 1 >= best:
                continue
            for v in g.neighbors[u]:
                if g.weight_of(u, v) >= w or v in visited:
                    continue
                if v == b:
                    cycle_len = length + 2  # path edges + the edge e itself
                    if best is None or cycle_len < best:
                        best = cycle_len
                elif length + 1 < max_len - 1:
                    stack.append((v, visited | {v}, length + 1))
        if best is None:
            raise MstError(f"no cycle of length <= {max_len} for edge ({a},{b})")
        mu = max(mu, best)
    return mu


# -- cover-based MST -----------------------------------------------------

RULE_A_EXCLUDED = "rule_A_excluded"
RULE_B_INCLUDED = "rule_B_included"


@dataclass
class MstResult:
    tree_edges: frozenset[tuple[int, int]]
    classification: dict[tuple[int, int], str]
    mu: int
    cover_sparsity: int
    cluster_msts: dict[int, frozenset[tuple[int, int]]] = field(
        default_factory=dict
    )

    def to_json(self, g: Graph) -> dict:
        return {
            "mst_edges": sorted(
                [g.ids[a], g.ids[b]] for a, b in self.tree_edges
            ),
            "excluded_edges": sorted(
                [g.ids[a], g.ids[b]]
                for (a, b), r in self.classification.items()
                if r == RULE_A_EXCLUDED
            ),
            "mu": self.mu,
            "cover_stats": {"sparsity": self.cover_sparsity},
        }


def cover_mst(
    g: Graph, mu: Optional[int] = None, mode: str = "fast"
) -> MstResult:
    """Exact MST via a μ-neighborhood cover: every edge is classified by
    rule A (excluded: some containing cluster's MST omits it) or rule B
    (included: in the MST of every containing cluster)."""
    _require_weights(g)
    if not _connected(g):
        raise GraphError("cover_mst needs a connected graph")
    if mu is None:
        mu = mst_radius(g)
    true_mu = mst_radius(g)
    if true_mu is None or mu < true_mu:
        raise MstError(f"supplied mu={mu} below MST-radius {true_mu}")
    k = max(1, mu)
    from .decompose import decompose

    dec = decompose(g, 2 * k, mode=mode).decomposition
    cover = cover_from_decomposition(g, k, dec)

    cluster_msts: dict[int, frozenset[tuple[int, int]]] = {}
    classification: dict[tuple[int, int], str] = {}
    load = [0] * g.n
    for c in cover.clusters:
        for v in c.members:
            load[v] += 1
        sub_edges = {
            (a, b): g.weights[(a, b)]
            for (a, b) in g.weights
            if a in c.members and b in c.members
        }
        cluster_msts[c.id] = _forest_of(g.n, sub_edges)
    for (a, b) in g.weights:
        containing = [
            c.id
            for c in cover.clusters
            if a in c.members and b in c.members
        ]
        if not containing:
            raise MstError(f"edge ({a},{b}) contained in no cover cluster")
        if all((a, b) in cluster_msts[cid] for cid in containing):
            classification[(a, b)] = RULE_B_INCLUDED
        else:
            classification[(a, b)] = RULE_A_EXCLUDED
    tree = frozenset(
        e for e, r in classification.items() if r == RULE_B_INCLUDED
    )
    return MstResult(
        tree_edges=tree,
        classification=classification,
        mu=mu,
        cover_sparsity=max(load, default=0),
        cluster_msts=cluster_msts,
    )


def _forest_of(
    n: int, edges: dict[tuple[int, int], Fraction]
) -> frozenset[tuple[int, int]]:
    dsu = _DSU(n)
    tree = set()
    for (a, b), _w in sorted(edges.items(), key=lambda kv: kv[1]):
        if dsu.union(a, b):
            tree.add((a, b))
    return frozenset(tree)
