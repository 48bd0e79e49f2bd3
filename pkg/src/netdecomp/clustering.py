"""Cluster / decomposition / cover data model and the centralized validators
that certify separation, diameter, sparsity, independence and ruling-set
properties.  Validators are pure and report rather than raise.

All distances here are measured in the base graph G by BFS; a second
independent all-pairs backend is used in tests to cross-check verdicts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .graphs import Graph, _bfs_idx


@dataclass
class Cluster:
    """A cluster: center, member set, and a communication tree.

    Members and tree edges are stored as node *indices* into the host graph.
    ``tree_edges`` is a set of G-edges forming a tree that contains every
    member; for weak-diameter decompositions the tree may pass through
    non-member vertices, for strong-diameter covers it must not.
    """

    id: int
    center: int
    members: frozenset[int]
    tree_edges: frozenset[tuple[int, int]] = frozenset()
    color: Optional[int] = None

    def tree_nodes(self) -> frozenset[int]:
        if not self.tree_edges:
            return self.members
        return frozenset(v for e in self.tree_edges for v in e)


@dataclass
class Decomposition:
    k: int
    clusters: list[Cluster]

    @property
    def colors_used(self) -> int:
        return len({c.color for c in self.clusters})

    def color_classes(self) -> dict[int, list[Cluster]]:
        out: dict[int, list[Cluster]] = {}
        for c in self.clusters:
            out.setdefault(c.color, []).append(c)
        return out


@dataclass
class NeighborhoodCover:
    k: int
    clusters: list[Cluster]


@dataclass
class RulingSetResult:
    base: frozenset[int]
    chosen: frozenset[int]
    alpha: int
    beta: int


@dataclass
class Report:
    valid: bool
    failures: list[str] = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    def fail(self, msg: str) -> None:
        self.valid = False
        self.failures.append(msg)


# -- helpers -------------------------------------------------------------


def _check_tree(g: Graph, cluster: Cluster, rep: Report, strong: bool) -> Optional[dict[int, int]]:
    """Verify tree shape; return hop distance from center along the tree
    (over tree nodes) or None if broken."""
    cid = cluster.id
    if cluster.center not in cluster.members:
        rep.fail(f"cluster {cid}: center not a member")
        return None
    edges = set()
    for a, b in cluster.tree_edges:
        if b not in g.neighbors[a]:
            rep.fail(f"cluster {cid}: tree edge ({a},{b}) not a G-edge")
            return None
        edges.add((min(a, b), max(a, b)))
    if len(edges) != len(cluster.tree_edges):
        rep.fail(f"cluster {cid}: duplicate tree edge")
        return None
    nodes = cluster.tree_nodes() | {cluster.center}
    if strong and not nodes <= cluster.members:
        rep.fail(f"cluster {cid}: tree leaves member set (strong mode)")
        return None
    adj: dict[int, list[int]] = {v: [] for v in nodes}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    # connectivity + acyclicity from the center
    dist = {cluster.center: 0}
    stack = [cluster.center]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                stack.append(v)
    if len(dist) != len(nodes):
        rep.fail(f"cluster {cid}: tree not connected")
        return None
    if len(edges) != len(nodes) - 1:
        rep.fail(f"cluster {cid}: tree has a cycle")
        return None
    missing = cluster.members - nodes
    if missing:
        rep.fail(f"cluster {cid}: members {sorted(missing)[:3]} not on tree")
        return None
    return dist


def weak_diameter(g: Graph, members: Iterable[int]) -> int:
    """Max over member pairs of d_G, by BFS from each member (a compiled
    shortest-path backend takes over for large clusters)."""
    mem = sorted(members)
    if len(mem) > 64:
        from scipy.sparse.csgraph import shortest_path

        dm = shortest_path(
            g.adjacency_csr(), method="D", unweighted=True, indices=mem
        )[:, mem]
        if not (dm < float("inf")).all():
            return -1  # disconnected in G: treated as invalid upstream
        return int(dm.max())
    best = 0
    for s in mem:
        dist = _bfs_idx(g, [s])
        for t in mem:
            if dist[t] < 0:
                return -1  # disconnected in G: treated as invalid upstream
            best = max(best, dist[t])
    return best


# -- validators ----------------------------------------------------------


def validate_decomposition(
    g: Graph, dec: Decomposition, strong: bool = False, check_trees: bool = True
) -> Report:
    """Certify the partition, same-color separation (>= k+1 hops), per-color
    tree edge-disjointness, and measure the weak diameter."""
    rep = Report(valid=True)
    owner: dict[int, int] = {}
    for c in dec.clusters:
        for v in c.members:
            if v in owner:
                rep.fail(f"node {v} in clusters {owner[v]} and {c.id}")
            owner[v] = c.id
    if len(owner) != g.n:
        rep.fail(f"partition covers {len(owner)} of {g.n} nodes")
    if check_trees:
        for c in dec.clusters:
            _check_tree(g, c, rep, strong=strong)

    max_diam = 0
    for c in dec.clusters:
        wd = weak_diameter(g, c.members)
        if wd < 0:
            rep.fail(f"cluster {c.id}: members disconnected in G")
        max_diam = max(max_diam, wd)

    min_gap = None
    for color, group in dec.color_classes().items():
        for i, c in enumerate(group):
            dist = _bfs_idx(g, sorted(c.members), cap=dec.k)
            for c2 in group[i + 1 :]:
                hit = [v for v in c2.members if dist[v] >= 0]
                if hit:
                    gap = min(dist[v] for v in hit)
                    min_gap = gap if min_gap is None else min(min_gap, gap)
                    rep.fail(
                        f"color {color}: clusters {c.id},{c2.id} at distance "
                        f"{gap} <= k={dec.k}"
                    )
        usage: dict[tuple[int, int], int] = {}
        for c in group:
            for a, b in c.tree_edges:
                e = (min(a, b), max(a, b))
                usage[e] = usage.get(e, 0) + 1
        over = {e: n for e, n in usage.items() if n > 1}
        if over:
            rep.fail(f"color {color}: {len(over)} G-edges used by multiple trees")

    rep.stats = {
        "colors": dec.colors_used,
        "max_weak_diameter": max_diam,
        "min_same_color_gap": min_gap,
        "max_edge_overlap": _max_tree_overlap(dec.clusters),
    }
    return rep


def _max_tree_overlap(clusters: Iterable[Cluster]) -> int:
    usage: dict[tuple[int, int], int] = {}
    for c in clusters:
        for a, b in c.tree_edges:
            e = (min(a, b), max(a, b))
            usage[e] = usage.get(e, 0) + 1
    return max(usage.values(), default=0)


def validate_cover(g: Graph, cover: NeighborhoodCover) -> Report:
    """Definition-clause verdicts for a sparse neighborhood cover: strong
    spanning trees, k-ball containment, and per-node sparsity."""
    rep = Report(valid=True)
    max_depth = 0
    for c in cover.clusters:
        dist = _check_tree(g, c, rep, strong=True)
        if dist is not None:
            max_depth = max(max_depth, max(dist.values(), default=0))

    load = [0] * g.n
    for c in cover.clusters:
        for v in c.members:
            load[v] += 1
    sparsity = max(load, default=0)

    uncovered = []
    for v in range(g.n):
        dist = _bfs_idx(g, [v], cap=cover.k)
        ball = {u for u, d in enumerate(dist) if d >= 0}
        if not any(ball <= c.members for c in cover.clusters):
            uncovered.append(v)
    if uncovered:
        rep.fail(f"{len(uncovered)} nodes have an uncovered {cover.k}-ball")
    rep.stats = {
        "sparsity": sparsity,
        "diameter": 2 * max_depth,
        "tree_depth": max_depth,
        "uncovered_balls": uncovered,
    }
    return rep


def validate_mis(g: Graph, s: Iterable[int]) -> tuple[bool, Optional[str]]:
    """True iff ``s`` (node indices) is independent and dominating."""
    sset = set(s)
    for v in sset:
        for u in g.neighbors[v]:
            if u in sset:
                return False, f"adjacent pair ({v},{u}) both in set"
    for v in range(g.n):
        if v not in sset and not any(u in sset for u in g.neighbors[v]):
            return False, f"node {v} undominated"
    return True, None


def validate_ruling_set(g: Graph, r: RulingSetResult) -> tuple[bool, Optional[str]]:
    if not r.chosen <= r.base:
        return False, "chosen not a subset of base"
    chosen = sorted(r.chosen)
    for v in chosen:
        dist = _bfs_idx(g, [v], cap=r.alpha - 1)
        for u in chosen:
            if u != v and dist[u] >= 0:
                return False, f"chosen pair ({v},{u}) at distance {dist[u]} < {r.alpha}"
    if r.chosen:
        dist = _bfs_idx(g, chosen, cap=r.beta)
    else:
        dist = [-1] * g.n
    for b in r.base:
        if dist[b] < 0:
            return False, f"base node {b} beyond {r.beta} hops from chosen"
    return True, None


# -- JSON interchange ----------------------------------------------------


def decomposition_to_json(g: Graph, dec: Decomposition) -> dict:
    """Interchange form with node *ids* (not indices)."""
    return {
        "k": dec.k,
        "clusters": [
            {
                "id": c.id,
                "center": g.ids[c.center],
                **({"color": c.color} if c.color is not None else {}),
                "members": sorted(g.ids[v] for v in c.members),
                "tree_edges": sorted(
                    sorted((g.ids[a], g.ids[b])) for a, b in c.tree_edges
                ),
            }
            for c in sorted(dec.clusters, key=lambda c: c.id)
        ],
    }


def decomposition_from_json(g: Graph, data: dict) -> Decomposition:
    clusters = []
    for c in data["clusters"]:
        clusters.append(
            Cluster(
                id=c["id"],
                center=g.index_of(c["center"]),
                members=frozenset(g.index_of(v) for v in c["members"]),
                tree_edges=frozenset(
                    (g.index_of(a), g.index_of(b)) for a, b in c["tree_edges"]
                ),
                color=c.get("color"),
            )
        )
    return Decomposition(k=data["k"], clusters=clusters)


def save_decomposition(g: Graph, dec: Decomposition, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(decomposition_to_json(g, dec), fh, indent=1)


def load_decomposition(g: Graph, path: str) -> Decomposition:
    with open(path) as fh:
        return decomposition_from_json(g, json.load(fh))
